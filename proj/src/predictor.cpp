#include "litsim/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "litsim/error.hpp"
#include "litsim/geometry.hpp"

namespace litsim {

std::size_t PredictedTrajectory::best_mode() const {
  if (mode_probs.empty()) return 0;
  return static_cast<std::size_t>(
      std::max_element(mode_probs.begin(), mode_probs.end()) - mode_probs.begin());
}

PredictedTrajectory make_single_mode(AgentId id, Tick t, const AgentState& origin,
                                     std::vector<PredictedStep> steps) {
  PredictedTrajectory p;
  p.agent_id = id;
  p.start_tick = t;
  p.origin = origin;
  p.modes.push_back(std::move(steps));
  p.mode_probs = {1.0};
  return p;
}

PredictedTrajectory predict_replay(const TrackHistory& track, Tick t, int horizon) {
  if (!track.covers(t)) {
    throw Error(ErrorCode::kInvalidArgument, "replay query outside the track");
  }
  std::vector<PredictedStep> steps;
  const Tick last = std::min(track.last_step(), t + horizon);
  for (Tick k = t + 1; k <= last; ++k) {
    const auto& s = track.at(k);
    steps.push_back({s.x, s.y, 0.1});
  }
  auto p = make_single_mode(track.id, t, track.at(t), std::move(steps));
  p.truncated = static_cast<int>(p.length()) < horizon;
  return p;
}

PredictedTrajectory predict_kinematic(const TrackHistory& track, Tick t, int horizon) {
  if (!track.covers(t) || !track.covers(t - 1)) {
    throw Error(ErrorCode::kInsufficientHistory, "kinematic prediction needs >= 2 history states");
  }
  int n = 0;
  double sum = 0.0;
  for (Tick k = t; k > t - 5 && track.covers(k - 1); --k) {
    sum += wrap_angle(track.at(k).yaw - track.at(k - 1).yaw);
    ++n;
  }
  const double yaw_rate = sum / n / kTickSeconds;
  const auto& s = track.at(t);
  std::vector<PredictedStep> steps;
  steps.reserve(static_cast<std::size_t>(horizon));
  for (int k = 1; k <= horizon; ++k) {
    const double tau = k * kTickSeconds;
    double x, y;
    if (std::abs(yaw_rate) < 1e-9) {
      x = s.x + s.speed * tau * std::cos(s.yaw);
      y = s.y + s.speed * tau * std::sin(s.yaw);
    } else {
      const double r = s.speed / yaw_rate;
      x = s.x + r * (std::sin(s.yaw + yaw_rate * tau) - std::sin(s.yaw));
      y = s.y - r * (std::cos(s.yaw + yaw_rate * tau) - std::cos(s.yaw));
    }
    steps.push_back({x, y, 0.2 * tau});
  }
  return make_single_mode(track.id, t, s, std::move(steps));
}

double nll_loss(const PredictedTrajectory& pred, const std::vector<Vec2>& truth) {
  for (const auto& mode : pred.modes) {
    if (mode.size() != truth.size()) {
      throw Error(ErrorCode::kLengthMismatch, "prediction and truth lengths differ");
    }
  }
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> terms;
  for (std::size_t k = 0; k < pred.modes.size(); ++k) {
    double ll = std::log(pred.mode_probs[k]);
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const auto& st = pred.modes[k][t];
      const double e2 = (truth[t] - Vec2{st.x, st.y}).squared_norm();
      ll += -log_2pi - 2.0 * std::log(st.sigma) - e2 / (2.0 * st.sigma * st.sigma);
    }
    terms.push_back(ll);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (double v : terms) acc += std::exp(v - m);
  return -(m + std::log(acc));
}

// ---------------------------------------------------------------------------
// Learned predictor

ModelParams::ModelParams(PredictorConfig cfg) : cfg_(cfg) {
  if (cfg_.history_steps < 1 || cfg_.horizon_steps < 1 || cfg_.modes < 1) {
    throw Error(ErrorCode::kInvalidArgument, "history, horizon and modes must be >= 1");
  }
  if (cfg_.interaction_width % cfg_.attention_heads != 0) {
    throw Error(ErrorCode::kInvalidArgument, "interaction width must divide by head count");
  }
  const auto H = static_cast<std::size_t>(cfg_.encoder_hidden);
  const auto D = static_cast<std::size_t>(cfg_.decoder_hidden);
  const auto L = static_cast<std::size_t>(cfg_.lane_width);
  const auto I = static_cast<std::size_t>(cfg_.interaction_width);
  const auto K = static_cast<std::size_t>(cfg_.modes);
  const std::size_t ctx = H + L + I;
  auto& p = params_;
  auto& l = layout_;
  l.enc_wx = p.add("history_encoder.w_input", 3 * H, 2);
  l.enc_bx = p.add("history_encoder.b_input", 3 * H);
  l.enc_wh = p.add("history_encoder.w_hidden", 3 * H, H);
  l.enc_bh = p.add("history_encoder.b_hidden", 3 * H);
  l.lane_w = p.add("lane_encoder.w", L, kLaneFeatures);
  l.lane_b = p.add("lane_encoder.b", L);
  l.emb_w = p.add("interaction.embed_w", I, kAgentFeatures);
  l.emb_b = p.add("interaction.embed_b", I);
  l.att_q = p.add("interaction.query", I, I);
  l.att_k = p.add("interaction.key", I, I);
  l.att_v = p.add("interaction.value", I, I);
  l.mode_w = p.add("mode_head.w", K, ctx);
  l.mode_b = p.add("mode_head.b", K);
  l.dec_init_w = p.add("decoder.init_w", D, ctx + K);
  l.dec_init_b = p.add("decoder.init_b", D);
  l.dec_wx = p.add("decoder.w_input", 3 * D, 2 + K);
  l.dec_bx = p.add("decoder.b_input", 3 * D);
  l.dec_wh = p.add("decoder.w_hidden", 3 * D, D);
  l.dec_bh = p.add("decoder.b_hidden", 3 * D);
  l.out_w = p.add("output_head.w", 3, D);
  l.out_b = p.add("output_head.b", 3);
  l.out_skip = p.add("output_head.skip", 2, 2);
}

void ModelParams::check_shapes() const {
  ModelParams fresh(cfg_);
  const auto& want = fresh.params_.slices();
  const auto& have = params_.slices();
  if (want.size() != have.size()) {
    throw Error(ErrorCode::kShapeMismatch, "slice count differs from the config layout");
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].name != have[i].name || want[i].rows != have[i].rows ||
        want[i].cols != have[i].cols || want[i].offset != have[i].offset) {
      throw Error(ErrorCode::kShapeMismatch, "slice '" + have[i].name + "' does not match config");
    }
  }
  if (params_.size() != fresh.params_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter count differs from the config layout");
  }
}

namespace {

Vec2 to_local(Vec2 v, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x + s * v.y, -s * v.x + c * v.y};
}

Vec2 to_world(Vec2 v, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

std::vector<double> agent_features(const AgentState& self, const AgentState& other) {
  const Vec2 rel = to_local(other.position() - self.position(), self.yaw);
  const Vec2 vrel = to_local(heading_vector(other.yaw) * other.speed -
                                 heading_vector(self.yaw) * self.speed,
                             self.yaw);
  const double dyaw = wrap_angle(other.yaw - self.yaw);
  return {rel.x / 10.0,        rel.y / 10.0,        vrel.x / 10.0,       vrel.y / 10.0,
          std::cos(dyaw),      std::sin(dyaw),      other.speed / 10.0};
}

std::vector<double> lane_features(const HDMap& map, const AgentState& s) {
  std::vector<double> f(kLaneFeatures, 0.0);
  if (map.empty()) return f;
  const auto proj = try_project_to_lane(map, s.position(), s.yaw);
  if (!proj) return f;
  const Lane* lane = map.find_lane(proj->frame.lane_id);
  for (int i = 0; i < kLaneSamples; ++i) {
    const double at = proj->frame.s + 5.0 * i;
    const Vec2 p = polyline_point_at(lane->centerline, at);
    const Vec2 local = to_local(p - s.position(), s.yaw);
    f[static_cast<std::size_t>(3 * i)] = local.y / 5.0;
    f[static_cast<std::size_t>(3 * i + 1)] =
        wrap_angle(polyline_heading_at(lane->centerline, at) - s.yaw);
    f[static_cast<std::size_t>(3 * i + 2)] = 10.0 * centerline_curvature(lane->centerline, at);
  }
  return f;
}

nn::Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const nn::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nn::Vector vec2(Vec2 v) {
  nn::Vector out(2);
  out << v.x, v.y;
  return out;
}

nn::Var gru_cell(nn::Tape& tape, nn::SliceId wx, nn::SliceId bx, nn::SliceId wh, nn::SliceId bh,
                 std::size_t width, nn::Var x, nn::Var h) {
  const auto gx = tape.affine(wx, bx, x);
  const auto gh = tape.affine(wh, bh, h);
  const auto z = tape.sigmoid(tape.add(tape.segment(gx, 0, width), tape.segment(gh, 0, width)));
  const auto r =
      tape.sigmoid(tape.add(tape.segment(gx, width, width), tape.segment(gh, width, width)));
  const auto n = tape.tanh(tape.add(tape.segment(gx, 2 * width, width),
                                    tape.mul(r, tape.segment(gh, 2 * width, width))));
  // h' = (1 - z) * n + z * h
  return tape.add(tape.mul(tape.one_minus(z), n), tape.mul(z, h));
}

struct ForwardResult {
  nn::Var log_probs;
  std::vector<std::vector<nn::Var>> means;   // [mode][step], target frame
  std::vector<std::vector<nn::Var>> sigmas;  // [mode][step]
  nn::Var loss;
  bool has_loss = false;
};

ForwardResult forward(nn::Tape& tape, const ModelParams& model, const PredictorInput& in,
                      bool teacher_forcing) {
  const auto& cfg = model.config();
  const auto& l = model.layout();
  const auto H = static_cast<std::size_t>(cfg.encoder_hidden);
  const auto D = static_cast<std::size_t>(cfg.decoder_hidden);
  const auto I = static_cast<std::size_t>(cfg.interaction_width);
  const auto K = static_cast<std::size_t>(cfg.modes);
  const std::size_t heads = static_cast<std::size_t>(cfg.attention_heads);
  const std::size_t head_dim = I / heads;

  // History encoder; padded steps are skipped entirely.
  auto h = tape.constant(nn::Vector::Zero(static_cast<Eigen::Index>(H)));
  Vec2 last_disp{};
  for (std::size_t k = 0; k < in.history.size(); ++k) {
    if (!in.history_valid[k]) continue;
    h = gru_cell(tape, l.enc_wx, l.enc_bx, l.enc_wh, l.enc_bh, H, tape.constant(vec2(in.history[k])),
                 h);
    last_disp = in.history[k];
  }

  const auto lane = tape.relu(tape.affine(l.lane_w, l.lane_b, tape.constant(to_vector(in.lane))));

  // Single-layer dot-product attention over current-tick agent embeddings.
  std::vector<nn::Var> keys, values;
  nn::Var query{};
  for (std::size_t i = 0; i < in.agents.size(); ++i) {
    const auto emb = tape.relu(tape.affine(l.emb_w, l.emb_b, tape.constant(to_vector(in.agents[i]))));
    if (i == 0) query = tape.matvec(l.att_q, emb);
    keys.push_back(tape.matvec(l.att_k, emb));
    values.push_back(tape.matvec(l.att_v, emb));
  }
  std::vector<nn::Var> head_out;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const auto q = tape.segment(query, hd * head_dim, head_dim);
    std::vector<nn::Var> scores;
    for (const auto& k : keys) scores.push_back(tape.dot(q, tape.segment(k, hd * head_dim, head_dim)));
    const auto att = tape.softmax(tape.scale(tape.concat(scores), inv_sqrt));
    nn::Var acc = tape.constant(nn::Vector::Zero(static_cast<Eigen::Index>(head_dim)));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto w = tape.broadcast(tape.segment(att, i, 1), head_dim);
      acc = tape.add(acc, tape.mul(w, tape.segment(values[i], hd * head_dim, head_dim)));
    }
    head_out.push_back(acc);
  }
  const auto interaction = tape.concat(head_out);
  const auto ctx = tape.concat({h, lane, interaction});

  ForwardResult out;
  out.log_probs = tape.log_softmax(tape.affine(l.mode_w, l.mode_b, ctx));

  const bool with_truth = in.future.size() == static_cast<std::size_t>(cfg.horizon_steps);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<nn::Var> mode_ll;
  out.means.resize(K);
  out.sigmas.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    nn::Vector onehot = nn::Vector::Zero(static_cast<Eigen::Index>(K));
    onehot(static_cast<Eigen::Index>(k)) = 1.0;
    const auto mode_in = tape.constant(onehot);
    auto hd = tape.tanh(tape.affine(l.dec_init_w, l.dec_init_b, tape.concat({ctx, mode_in})));
    auto prev = tape.constant(vec2(last_disp));
    auto pos = tape.constant(nn::Vector::Zero(2));
    nn::Var ll = tape.segment(out.log_probs, k, 1);
    for (int step = 0; step < cfg.horizon_steps; ++step) {
      hd = gru_cell(tape, l.dec_wx, l.dec_bx, l.dec_wh, l.dec_bh, D, tape.concat({prev, mode_in}), hd);
      const auto head = tape.affine(l.out_w, l.out_b, hd);
      const auto delta = tape.add(tape.segment(head, 0, 2), tape.matvec(l.out_skip, prev));
      const auto sigma = tape.add_scalar(tape.softplus(tape.segment(head, 2, 1)), 0.01);
      pos = tape.add(pos, delta);
      out.means[k].push_back(pos);
      out.sigmas[k].push_back(sigma);
      if (with_truth) {
        const auto truth = in.future[static_cast<std::size_t>(step)];
        const auto err = tape.sub(tape.constant(vec2(truth)), pos);
        const auto sq = tape.sum(tape.square(err));
        const auto log_sigma = tape.log(sigma);
        // log N = -log(2 pi) - 2 log sigma - |e|^2 / (2 sigma^2)
        const auto inv_var = tape.exp(tape.scale(log_sigma, -2.0));
        const auto term = tape.add_scalar(
            tape.sub(tape.scale(log_sigma, -2.0), tape.scale(tape.mul(sq, inv_var), 0.5)), -log_2pi);
        ll = tape.add(ll, term);
      }
      if (teacher_forcing && with_truth) {
        const Vec2 before = step == 0 ? Vec2{} : in.future[static_cast<std::size_t>(step - 1)];
        prev = tape.constant(vec2(in.future[static_cast<std::size_t>(step)] - before));
      } else {
        prev = delta;
      }
    }
    mode_ll.push_back(ll);
  }
  if (with_truth) {
    out.loss = tape.scale(tape.logsumexp(tape.concat(mode_ll)), -1.0);
    out.has_loss = true;
  }
  return out;
}

}  // namespace

PredictorInput make_predictor_input(const PredictorConfig& cfg,
                                    const std::map<AgentId, TrackHistory>& histories,
                                    const std::map<AgentId, AgentState>& current,
                                    const HDMap& map, AgentId target, Tick t) {
  auto cur = current.find(target);
  if (cur == current.end()) {
    throw Error(ErrorCode::kInvalidArgument, "target " + std::to_string(target) + " not in current");
  }
  PredictorInput in;
  in.target = target;
  in.tick = t;
  in.current = cur->second;
  const auto tau = static_cast<std::size_t>(cfg.history_steps);
  in.history.assign(tau, Vec2{});
  in.history_valid.assign(tau, false);
  if (auto hist = histories.find(target); hist != histories.end()) {
    const auto& track = hist->second;
    for (std::size_t k = 0; k < tau; ++k) {
      const Tick hi = t - static_cast<Tick>(tau) + 1 + static_cast<Tick>(k);
      if (track.covers(hi) && track.covers(hi - 1)) {
        in.history[k] = to_local(track.at(hi).position() - track.at(hi - 1).position(), in.current.yaw);
        in.history_valid[k] = true;
      }
    }
  }
  std::vector<std::vector<double>> neighbors;
  for (const auto& [id, s] : current) {
    if (id == target) continue;
    if (distance(s.position(), in.current.position()) > cfg.neighbor_radius) continue;
    neighbors.push_back(agent_features(in.current, s));
  }
  // Canonical order makes the attention sum independent of input order.
  std::sort(neighbors.begin(), neighbors.end());
  in.agents.push_back(agent_features(in.current, in.current));
  for (auto& n : neighbors) in.agents.push_back(std::move(n));
  in.lane = lane_features(map, in.current);
  return in;
}

PredictedTrajectory predict_learned(const ModelParams& params, const PredictorInput& input) {
  params.check_shapes();
  nn::Tape tape(params.params());
  PredictorInput inference = input;
  inference.future.clear();
  const auto fw = forward(tape, params, inference, false);
  PredictedTrajectory p;
  p.agent_id = input.target;
  p.start_tick = input.tick;
  p.origin = input.current;
  const auto& lp = tape.value(fw.log_probs);
  for (Eigen::Index k = 0; k < lp.size(); ++k) p.mode_probs.push_back(std::exp(lp(k)));
  const double total = std::accumulate(p.mode_probs.begin(), p.mode_probs.end(), 0.0);
  for (auto& v : p.mode_probs) v /= total;
  for (std::size_t k = 0; k < fw.means.size(); ++k) {
    std::vector<PredictedStep> steps;
    for (std::size_t t = 0; t < fw.means[k].size(); ++t) {
      const auto& m = tape.value(fw.means[k][t]);
      const Vec2 w = input.current.position() + to_world({m(0), m(1)}, input.current.yaw);
      steps.push_back({w.x, w.y, tape.scalar_value(fw.sigmas[k][t])});
    }
    p.modes.push_back(std::move(steps));
  }
  return p;
}

PredictedTrajectory predict_learned(const ModelParams& params,
                                    const std::map<AgentId, TrackHistory>& histories,
                                    const std::map<AgentId, AgentState>& current,
                                    const HDMap& map, AgentId target, Tick t) {
  return predict_learned(params,
                         make_predictor_input(params.config(), histories, current, map, target, t));
}

double learned_nll(const ModelParams& params, const PredictorInput& input, bool teacher_forcing,
                   nn::Vector* grad) {
  if (input.future.size() != static_cast<std::size_t>(params.config().horizon_steps)) {
    throw Error(ErrorCode::kLengthMismatch, "training target length differs from the horizon");
  }
  nn::Tape tape(params.params());
  const auto fw = forward(tape, params, input, teacher_forcing);
  if (grad != nullptr) {
    *grad = nn::Vector::Zero(static_cast<Eigen::Index>(params.params().size()));
    tape.backward(fw.loss, *grad);
  }
  return tape.scalar_value(fw.loss);
}

std::vector<PredictorInput> build_training_inputs(const std::vector<Segment>& data,
                                                  const PredictorConfig& cfg) {
  std::vector<PredictorInput> out;
  for (const auto& seg : data) {
    const auto& tracks = seg.log.tracks;
    for (Tick t = seg.sim_start() - 1; t + cfg.horizon_steps < seg.log.duration_steps;
         t += cfg.anchor_stride) {
      std::map<AgentId, AgentState> current;
      for (const auto& [id, track] : tracks) {
        if (track.covers(t)) current.emplace(id, track.at(t));
      }
      for (const auto& [id, track] : tracks) {
        if (!track.covers(t) || !track.covers(t - 1) || !track.covers(t + cfg.horizon_steps)) continue;
        auto in = make_predictor_input(cfg, tracks, current, seg.log.map, id, t);
        const Vec2 origin = track.at(t).position();
        for (int k = 1; k <= cfg.horizon_steps; ++k) {
          in.future.push_back(to_local(track.at(t + k).position() - origin, in.current.yaw));
        }
        out.push_back(std::move(in));
      }
    }
  }
  return out;
}

PredictorTraining train_predictor_on(const std::vector<PredictorInput>& inputs,
                                     const PredictorConfig& cfg, std::uint64_t seed) {
  if (inputs.empty()) throw Error(ErrorCode::kInvalidArgument, "no training samples");
  PredictorTraining result{ModelParams(cfg), seed, {}};
  auto& model = result.model;
  std::mt19937_64 rng(seed);
  model.params().init_uniform(rng);

  const double horizon = cfg.horizon_steps;
  auto check = [&](double loss, std::size_t sample, int epoch) {
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "loss " << loss << " at epoch " << epoch << ", sample " << sample << " (target "
          << inputs[sample].target << ", tick " << inputs[sample].tick << ")";
      throw Error(ErrorCode::kNonFiniteLoss, msg.str());
    }
  };

  double initial = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double l = learned_nll(model, inputs[i], cfg.teacher_forcing) / horizon;
    check(l, i, 0);
    initial += l;
  }
  result.loss_curve.push_back(initial / static_cast<double>(inputs.size()));

  nn::Adam adam(cfg.learning_rate);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  nn::Vector grad, acc;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const int decays = (epoch - 1) / std::max(1, cfg.lr_decay_every);
    adam.set_learning_rate(cfg.learning_rate * std::pow(cfg.lr_decay_factor, decays));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      acc = nn::Vector::Zero(static_cast<Eigen::Index>(model.params().size()));
      for (std::size_t b = start; b < end; ++b) {
        const double l = learned_nll(model, inputs[order[b]], cfg.teacher_forcing, &grad) / horizon;
        check(l, order[b], epoch);
        epoch_loss += l;
        acc += grad;
      }
      acc /= horizon * static_cast<double>(end - start);
      adam.step(model.params().values(), acc);
      if (!model.params().all_finite()) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "parameters became non-finite at epoch " + std::to_string(epoch));
      }
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(inputs.size()));
  }
  return result;
}

PredictorTraining train_predictor(const std::vector<Segment>& data, const PredictorConfig& cfg,
                                  std::uint64_t seed) {
  if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "no training segments");
  return train_predictor_on(build_training_inputs(data, cfg), cfg, seed);
}

double average_displacement(const PredictedTrajectory& pred, const PredictorInput& input) {
  const auto& steps = pred.point_estimate();
  const std::size_t n = std::min(steps.size(), input.future.size());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 local = to_local(Vec2{steps[k].x, steps[k].y} - input.current.position(),
                                input.current.yaw);
    total += distance(local, input.future[k]);
  }
  return total / static_cast<double>(n);
}

}  // namespace litsim
