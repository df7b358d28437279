#include "litsim/nn.hpp"

#include <cmath>

namespace litsim::nn {

SliceId ParamSet::add(std::string name, std::size_t rows, std::size_t cols) {
  Slice s{std::move(name), size(), rows, cols};
  slices_.push_back(s);
  values_.conservativeResize(static_cast<Eigen::Index>(s.offset + s.size()));
  values_.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size())).setZero();
  return slices_.size() - 1;
}

const Slice* ParamSet::find(const std::string& name) const {
  for (const auto& s : slices_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

Eigen::Map<const Matrix> ParamSet::matrix(SliceId id) const {
  const auto& s = slices_[id];
  return {values_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
          static_cast<Eigen::Index>(s.cols)};
}

Eigen::Map<Matrix> ParamSet::matrix(SliceId id) {
  const auto& s = slices_[id];
  return {values_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
          static_cast<Eigen::Index>(s.cols)};
}

void ParamSet::init_uniform(std::mt19937_64& rng) {
  for (const auto& s : slices_) {
    auto block = values_.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size()));
    if (s.cols <= 1) {
      block.setZero();
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < block.size(); ++i) block(i) = dist(rng);
  }
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// ---------------------------------------------------------------------------

Var Tape::push(Vector value, std::function<void(Tape&, std::size_t)> back) {
  Node n;
  n.grad = Vector::Zero(value.size());
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Vector v) { return push(std::move(v)); }

Var Tape::scalar(double v) { return push(Vector::Constant(1, v)); }

Var Tape::param(SliceId id) {
  const auto& s = params_.slice(id);
  Vector v = params_.values().segment(static_cast<Eigen::Index>(s.offset),
                                      static_cast<Eigen::Index>(s.size()));
  return push(std::move(v), [offset = s.offset](Tape& t, std::size_t self) {
    t.param_grad_->segment(static_cast<Eigen::Index>(offset), t.nodes_[self].grad.size()) +=
        t.nodes_[self].grad;
  });
}

Var Tape::affine(SliceId weight, SliceId bias, Var x) {
  const auto w = params_.matrix(weight);
  const auto& bs = params_.slice(bias);
  Vector y = w * nodes_[x.id].value +
             params_.values().segment(static_cast<Eigen::Index>(bs.offset), w.rows());
  return push(std::move(y), [weight, boff = bs.offset, xi = x.id](Tape& t, std::size_t self) {
    const auto w = t.params_.matrix(weight);
    const auto& ws = t.params_.slice(weight);
    const Vector& g = t.nodes_[self].grad;
    Eigen::Map<Matrix> gw(t.param_grad_->data() + ws.offset, w.rows(), w.cols());
    gw.noalias() += g * t.nodes_[xi].value.transpose();
    t.param_grad_->segment(static_cast<Eigen::Index>(boff), g.size()) += g;
    t.grad(xi).noalias() += w.transpose() * g;
  });
}

Var Tape::matvec(SliceId weight, Var x) {
  const auto w = params_.matrix(weight);
  Vector y = w * nodes_[x.id].value;
  return push(std::move(y), [weight, xi = x.id](Tape& t, std::size_t self) {
    const auto w = t.params_.matrix(weight);
    const auto& ws = t.params_.slice(weight);
    const Vector& g = t.nodes_[self].grad;
    Eigen::Map<Matrix> gw(t.param_grad_->data() + ws.offset, w.rows(), w.cols());
    gw.noalias() += g * t.nodes_[xi].value.transpose();
    t.grad(xi).noalias() += w.transpose() * g;
  });
}

Var Tape::add(Var a, Var b) {
  return push(nodes_[a.id].value + nodes_[b.id].value, [a, b](Tape& t, std::size_t self) {
    t.grad(a.id) += t.nodes_[self].grad;
    t.grad(b.id) += t.nodes_[self].grad;
  });
}

Var Tape::sub(Var a, Var b) {
  return push(nodes_[a.id].value - nodes_[b.id].value, [a, b](Tape& t, std::size_t self) {
    t.grad(a.id) += t.nodes_[self].grad;
    t.grad(b.id) -= t.nodes_[self].grad;
  });
}

Var Tape::mul(Var a, Var b) {
  return push(nodes_[a.id].value.cwiseProduct(nodes_[b.id].value),
              [a, b](Tape& t, std::size_t self) {
                const Vector& g = t.nodes_[self].grad;
                t.grad(a.id) += g.cwiseProduct(t.nodes_[b.id].value);
                t.grad(b.id) += g.cwiseProduct(t.nodes_[a.id].value);
              });
}

Var Tape::scale(Var a, double s) {
  return push(nodes_[a.id].value * s,
              [a, s](Tape& t, std::size_t self) { t.grad(a.id) += t.nodes_[self].grad * s; });
}

Var Tape::add_scalar(Var a, double s) {
  return push(nodes_[a.id].value.array() + s,
              [a](Tape& t, std::size_t self) { t.grad(a.id) += t.nodes_[self].grad; });
}

Var Tape::broadcast(Var a, std::size_t n) {
  return push(Vector::Constant(static_cast<Eigen::Index>(n), nodes_[a.id].value(0)),
              [a](Tape& t, std::size_t self) { t.grad(a.id)(0) += t.nodes_[self].grad.sum(); });
}

Var Tape::sigmoid(Var a) {
  Vector y = nodes_[a.id].value.unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return push(std::move(y), [a](Tape& t, std::size_t self) {
    const Vector& y = t.nodes_[self].value;
    t.grad(a.id).array() += t.nodes_[self].grad.array() * y.array() * (1.0 - y.array());
  });
}

Var Tape::tanh(Var a) {
  return push(nodes_[a.id].value.array().tanh(), [a](Tape& t, std::size_t self) {
    const Vector& y = t.nodes_[self].value;
    t.grad(a.id).array() += t.nodes_[self].grad.array() * (1.0 - y.array().square());
  });
}

Var Tape::relu(Var a) {
  return push(nodes_[a.id].value.cwiseMax(0.0), [a](Tape& t, std::size_t self) {
    const Vector& x = t.nodes_[a.id].value;
    t.grad(a.id).array() += (x.array() > 0.0).select(t.nodes_[self].grad.array(), 0.0);
  });
}

Var Tape::softplus(Var a) {
  return push(nodes_[a.id].value.unaryExpr([](double x) { return nn::softplus(x); }),
              [a](Tape& t, std::size_t self) {
                const Vector& x = t.nodes_[a.id].value;
                const Vector sig = x.unaryExpr([](double v) {
                  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                });
                t.grad(a.id).array() += t.nodes_[self].grad.array() * sig.array();
              });
}

Var Tape::exp(Var a) {
  return push(nodes_[a.id].value.array().exp(), [a](Tape& t, std::size_t self) {
    t.grad(a.id).array() += t.nodes_[self].grad.array() * t.nodes_[self].value.array();
  });
}

Var Tape::log(Var a) {
  return push(nodes_[a.id].value.array().log(), [a](Tape& t, std::size_t self) {
    t.grad(a.id).array() += t.nodes_[self].grad.array() / t.nodes_[a.id].value.array();
  });
}

Var Tape::square(Var a) {
  return push(nodes_[a.id].value.array().square(), [a](Tape& t, std::size_t self) {
    t.grad(a.id).array() += 2.0 * t.nodes_[self].grad.array() * t.nodes_[a.id].value.array();
  });
}

Var Tape::one_minus(Var a) {
  return push(1.0 - nodes_[a.id].value.array(),
              [a](Tape& t, std::size_t self) { t.grad(a.id) -= t.nodes_[self].grad; });
}

Var Tape::concat(const std::vector<Var>& parts) {
  Eigen::Index n = 0;
  for (auto p : parts) n += nodes_[p.id].value.size();
  Vector y(n);
  Eigen::Index at = 0;
  for (auto p : parts) {
    const auto& v = nodes_[p.id].value;
    y.segment(at, v.size()) = v;
    at += v.size();
  }
  return push(std::move(y), [parts](Tape& t, std::size_t self) {
    Eigen::Index at = 0;
    for (auto p : parts) {
      const Eigen::Index len = t.nodes_[p.id].value.size();
      t.grad(p.id) += t.nodes_[self].grad.segment(at, len);
      at += len;
    }
  });
}

Var Tape::segment(Var a, std::size_t start, std::size_t len) {
  const auto s = static_cast<Eigen::Index>(start);
  const auto l = static_cast<Eigen::Index>(len);
  return push(nodes_[a.id].value.segment(s, l), [a, s, l](Tape& t, std::size_t self) {
    t.grad(a.id).segment(s, l) += t.nodes_[self].grad;
  });
}

Var Tape::sum(Var a) {
  return push(Vector::Constant(1, nodes_[a.id].value.sum()),
              [a](Tape& t, std::size_t self) { t.grad(a.id).array() += t.nodes_[self].grad(0); });
}

Var Tape::dot(Var a, Var b) {
  return push(Vector::Constant(1, nodes_[a.id].value.dot(nodes_[b.id].value)),
              [a, b](Tape& t, std::size_t self) {
                const double g = t.nodes_[self].grad(0);
                t.grad(a.id) += g * t.nodes_[b.id].value;
                t.grad(b.id) += g * t.nodes_[a.id].value;
              });
}

Var Tape::log_softmax(Var a) {
  const Vector& x = nodes_[a.id].value;
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  return push(x.array() - lse, [a](Tape& t, std::size_t self) {
    const Vector& g = t.nodes_[self].grad;
    const Vector p = t.nodes_[self].value.array().exp();
    t.grad(a.id) += g - p * g.sum();
  });
}

Var Tape::softmax(Var a) {
  const Vector& x = nodes_[a.id].value;
  Vector e = (x.array() - x.maxCoeff()).exp();
  e /= e.sum();
  return push(std::move(e), [a](Tape& t, std::size_t self) {
    const Vector& y = t.nodes_[self].value;
    const Vector& g = t.nodes_[self].grad;
    t.grad(a.id) += y.cwiseProduct(g) - y * y.dot(g);
  });
}

Var Tape::logsumexp(Var a) {
  const Vector& x = nodes_[a.id].value;
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  return push(Vector::Constant(1, lse), [a](Tape& t, std::size_t self) {
    const Vector& x = t.nodes_[a.id].value;
    const Vector p = (x.array() - t.nodes_[self].value(0)).exp();
    t.grad(a.id) += p * t.nodes_[self].grad(0);
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  return push(nodes_[a.id].value.cwiseMax(lo).cwiseMin(hi), [a, lo, hi](Tape& t, std::size_t self) {
    const Vector& x = t.nodes_[a.id].value;
    t.grad(a.id).array() +=
        (x.array() >= lo && x.array() <= hi).select(t.nodes_[self].grad.array(), 0.0);
  });
}

void Tape::backward(Var out, Vector& param_grad) {
  if (param_grad.size() != static_cast<Eigen::Index>(params_.size())) {
    param_grad = Vector::Zero(static_cast<Eigen::Index>(params_.size()));
  }
  param_grad_ = &param_grad;
  for (auto& n : nodes_) n.grad.setZero();
  nodes_[out.id].grad.setConstant(1.0);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].back && !nodes_[i].grad.isZero(0.0)) nodes_[i].back(*this, i);
  }
  param_grad_ = nullptr;
}

// ---------------------------------------------------------------------------

void Adam::step(Vector& params, const Vector& grad) {
  if (m_.size() != params.size()) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
    t_ = 0;
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace litsim::nn
