#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "litsim/nn.hpp"
#include "litsim/predictor.hpp"

namespace litsim {

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // column-major
};

/// Versioned parameter container shared by predictor and policy models.
struct Checkpoint {
  std::string kind;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<NamedTensor> tensors;
};

/// Deterministic text form; doubles round-trip exactly.
std::string serialize_checkpoint(const Checkpoint& c);
/// Throws Error(kParse) on malformed documents or a version mismatch.
Checkpoint parse_checkpoint(const std::string& text);

void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

/// Appends every slice of `params` as a tensor named prefix + slice name.
void export_params(const nn::ParamSet& params, const std::string& prefix, Checkpoint& c);
/// Fills `params` from tensors named prefix + slice name. Throws
/// Error(kShapeMismatch) when a slice is missing or has other dimensions.
void import_params(const Checkpoint& c, const std::string& prefix, nn::ParamSet& params);

nlohmann::json to_json(const PredictorConfig& cfg);
PredictorConfig predictor_config_from_json(const nlohmann::json& j);

Checkpoint predictor_checkpoint(const ModelParams& model, std::uint64_t seed);
/// Throws Error(kShapeMismatch) when kind or shapes do not match.
ModelParams load_predictor(const Checkpoint& c);

}  // namespace litsim
