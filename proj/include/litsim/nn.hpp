#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace litsim::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A named, row-major-agnostic view into the flat parameter vector. Values are
/// stored column-major (Eigen default).
struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

using SliceId = std::size_t;

/// Flat parameter vector with named slices per layer.
class ParamSet {
 public:
  SliceId add(std::string name, std::size_t rows, std::size_t cols = 1);

  const Slice& slice(SliceId id) const { return slices_[id]; }
  const std::vector<Slice>& slices() const { return slices_; }
  const Slice* find(const std::string& name) const;
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  Eigen::Map<const Matrix> matrix(SliceId id) const;
  Eigen::Map<Matrix> matrix(SliceId id);

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for matrices, zero for vectors.
  void init_uniform(std::mt19937_64& rng);
  bool all_finite() const { return values_.allFinite(); }

 private:
  std::vector<Slice> slices_;
  Vector values_;
};

/// Handle to a node on the tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode automatic differentiation over vector-valued nodes. Matrices
/// appear only as parameters.
class Tape {
 public:
  explicit Tape(const ParamSet& params) : params_(params) {}

  Var constant(Vector v);
  Var scalar(double v);
  /// The whole slice as a column vector.
  Var param(SliceId id);

  Var affine(SliceId weight, SliceId bias, Var x);
  Var matvec(SliceId weight, Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  /// Broadcasts a size-1 node to length n.
  Var broadcast(Var a, std::size_t n);

  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var softplus(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  /// 1 - a, elementwise.
  Var one_minus(Var a);

  Var concat(const std::vector<Var>& parts);
  Var segment(Var a, std::size_t start, std::size_t len);
  Var sum(Var a);
  Var dot(Var a, Var b);
  Var log_softmax(Var a);
  Var softmax(Var a);
  Var logsumexp(Var a);
  /// Clamps values into [lo, hi]; gradient passes only inside the interval.
  Var clamp(Var a, double lo, double hi);

  const Vector& value(Var v) const { return nodes_[v.id].value; }
  double scalar_value(Var v) const { return nodes_[v.id].value(0); }
  std::size_t node_count() const { return nodes_.size(); }

  /// Back-propagates d(out)/d(params) into `param_grad` (accumulating) for a
  /// size-1 output node.
  void backward(Var out, Vector& param_grad);

 private:
  struct Node {
    Vector value;
    Vector grad;
    std::function<void(Tape&, std::size_t)> back;
  };

  Var push(Vector value, std::function<void(Tape&, std::size_t)> back = {});
  Vector& grad(std::size_t id) { return nodes_[id].grad; }

  const ParamSet& params_;
  std::vector<Node> nodes_;
  Vector* param_grad_ = nullptr;
};

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  void step(Vector& params, const Vector& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  Vector m_, v_;
  std::int64_t t_ = 0;
};

/// Numerically stable log(1 + exp(x)).
double softplus(double x);

}  // namespace litsim::nn
