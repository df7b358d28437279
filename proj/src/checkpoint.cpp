#include "litsim/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "litsim/error.hpp"

namespace litsim {

namespace {

constexpr std::string_view kFormat = "litsim-checkpoint";

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kCheckpointVersion;
  j["kind"] = c.kind;
  j["seed"] = c.seed;
  j["config"] = c.config;
  auto tensors = nlohmann::json::array();
  for (const auto& t : c.tensors) {
    for (double v : t.values) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFiniteLoss, "tensor '" + t.name + "' holds a non-finite value");
      }
    }
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"values", t.values}});
  }
  j["tensors"] = std::move(tensors);
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) {
      throw Error(ErrorCode::kParse, "not a litsim checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw Error(ErrorCode::kParse, "checkpoint version " + std::to_string(version) +
                                         " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    c.kind = j.at("kind").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config = j.at("config");
    for (const auto& t : j.at("tensors")) {
      NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      nt.rows = t.at("rows").get<std::size_t>();
      nt.cols = t.at("cols").get<std::size_t>();
      nt.values = t.at("values").get<std::vector<double>>();
      if (nt.values.size() != nt.rows * nt.cols) {
        throw Error(ErrorCode::kParse, "tensor '" + nt.name + "' has " +
                                           std::to_string(nt.values.size()) + " values for shape " +
                                           std::to_string(nt.rows) + "x" + std::to_string(nt.cols));
      }
      c.tensors.push_back(std::move(nt));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string text = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::kSinkFailure, "cannot write checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kParse, "cannot read checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

void export_params(const nn::ParamSet& params, const std::string& prefix, Checkpoint& c) {
  for (std::size_t i = 0; i < params.slices().size(); ++i) {
    const auto& s = params.slice(i);
    NamedTensor t{prefix + s.name, s.rows, s.cols, {}};
    const auto m = params.matrix(i);
    t.values.assign(m.data(), m.data() + m.size());
    c.tensors.push_back(std::move(t));
  }
}

void import_params(const Checkpoint& c, const std::string& prefix, nn::ParamSet& params) {
  for (std::size_t i = 0; i < params.slices().size(); ++i) {
    const auto& s = params.slice(i);
    const std::string name = prefix + s.name;
    const NamedTensor* found = nullptr;
    for (const auto& t : c.tensors) {
      if (t.name == name) found = &t;
    }
    if (!found) throw Error(ErrorCode::kShapeMismatch, "checkpoint lacks tensor '" + name + "'");
    if (found->rows != s.rows || found->cols != s.cols) {
      throw Error(ErrorCode::kShapeMismatch,
                  "tensor '" + name + "' is " + std::to_string(found->rows) + "x" +
                      std::to_string(found->cols) + ", model expects " + std::to_string(s.rows) +
                      "x" + std::to_string(s.cols));
    }
    auto m = params.matrix(i);
    std::copy(found->values.begin(), found->values.end(), m.data());
  }
}

nlohmann::json to_json(const PredictorConfig& cfg) {
  return {
      {"history_steps", cfg.history_steps},
      {"horizon_steps", cfg.horizon_steps},
      {"dt", cfg.dt},
      {"modes", cfg.modes},
      {"encoder_hidden", cfg.encoder_hidden},
      {"decoder_hidden", cfg.decoder_hidden},
      {"lane_width", cfg.lane_width},
      {"interaction_width", cfg.interaction_width},
      {"attention_heads", cfg.attention_heads},
      {"neighbor_radius", cfg.neighbor_radius},
      {"learning_rate", cfg.learning_rate},
      {"lr_decay_every", cfg.lr_decay_every},
      {"lr_decay_factor", cfg.lr_decay_factor},
      {"epochs", cfg.epochs},
      {"batch_size", cfg.batch_size},
      {"teacher_forcing", cfg.teacher_forcing},
      {"anchor_stride", cfg.anchor_stride},
  };
}

PredictorConfig predictor_config_from_json(const nlohmann::json& j) {
  PredictorConfig cfg;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  try {
    get("history_steps", cfg.history_steps);
    get("horizon_steps", cfg.horizon_steps);
    get("dt", cfg.dt);
    get("modes", cfg.modes);
    get("encoder_hidden", cfg.encoder_hidden);
    get("decoder_hidden", cfg.decoder_hidden);
    get("lane_width", cfg.lane_width);
    get("interaction_width", cfg.interaction_width);
    get("attention_heads", cfg.attention_heads);
    get("neighbor_radius", cfg.neighbor_radius);
    get("learning_rate", cfg.learning_rate);
    get("lr_decay_every", cfg.lr_decay_every);
    get("lr_decay_factor", cfg.lr_decay_factor);
    get("epochs", cfg.epochs);
    get("batch_size", cfg.batch_size);
    get("teacher_forcing", cfg.teacher_forcing);
    get("anchor_stride", cfg.anchor_stride);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("predictor config: ") + e.what());
  }
  return cfg;
}

Checkpoint predictor_checkpoint(const ModelParams& model, std::uint64_t seed) {
  Checkpoint c;
  c.kind = "predictor";
  c.seed = seed;
  c.config = to_json(model.config());
  export_params(model.params(), "", c);
  return c;
}

ModelParams load_predictor(const Checkpoint& c) {
  if (c.kind != "predictor") {
    throw Error(ErrorCode::kShapeMismatch, "checkpoint holds a " + c.kind + ", not a predictor");
  }
  ModelParams model(predictor_config_from_json(c.config));
  import_params(c, "", model.params());
  model.check_shapes();
  return model;
}

}  // namespace litsim
