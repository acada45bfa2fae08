#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "mal/attacks.hpp"
#include "mal/dataset.hpp"
#include "mal/defense.hpp"
#include "mal/embedder.hpp"
#include "mal/transforms.hpp"

namespace mal {

/// Passive defense settings; the plan itself is built from the net input size.
struct ScalingConfig {
  std::string plan = "cs";
  bool jitter = false;
  double jitter_fraction = 0.1;

  ScalingPlan build(ImageSize input) const;
  friend bool operator==(const ScalingConfig&, const ScalingConfig&) = default;
};

/// Every knob of an experiment in one document. Defaults reproduce the toy
/// experiment.
struct RunConfig {
  DatasetConfig dataset;
  EmbedNetConfig net;
  TrainConfig train;
  DefenseSchedule defense;
  AttackConfig attack;
  std::uint64_t attack_seed = 5;
  ScalingConfig scaling;
  std::string output_dir = "runs/default";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Canonical JSON text (sorted keys, 2-space indent).
std::string to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys and bad types throw
/// ConfigError.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// 16 hex digits of FNV-1a 64 over the canonical JSON minus output_dir.
std::string config_hash(const RunConfig& cfg);

}  // namespace mal
