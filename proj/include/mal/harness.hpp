#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mal/attacks.hpp"
#include "mal/embedder.hpp"
#include "mal/image.hpp"
#include "mal/retrieval.hpp"
#include "mal/transforms.hpp"

namespace mal {

inline constexpr const char* kNoAttack = "no-attack";
inline constexpr const char* kDefenseNone = "none";
inline constexpr const char* kDefenseCs = "CS";
inline constexpr const char* kDefenseJad = "JAD";
inline constexpr const char* kDefenseJadCs = "JAD+CS";

struct ExperimentRow {
  std::string attack;
  std::string defense;
  RetrievalMetrics metrics;

  friend bool operator==(const ExperimentRow&, const ExperimentRow&) = default;
};

struct ExperimentReport {
  std::string config_hash;
  std::vector<ExperimentRow> rows;

  /// Throws std::out_of_range when the cell is missing.
  const RetrievalMetrics& at(std::string_view attack, std::string_view defense) const;
  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

/// Queries replaced by their adversarial versions; labels kept.
std::vector<LabeledImage> adversarial_queries(const FeatureFn& f, std::span<const LabeledImage> queries,
                                              AttackKind kind, const AttackConfig& cfg, std::uint64_t seed,
                                              unsigned threads = 1);

struct HarnessOptions {
  AttackConfig attack;
  std::uint64_t attack_seed = 5;
  ScalingPlan plan = ScalingPlan::circuitous({64, 32});
  std::vector<AttackKind> attacks{std::begin(kAllAttacks), std::end(kAllAttacks)};
  unsigned threads = 1;
};

/// Rows {no-attack, attacks...} x {none, CS} for the baseline model and, when
/// `jad` is given, {JAD, JAD+CS} for the JAD model. Every model is attacked
/// white-box on its own gradients; CS is applied after the attack, to queries
/// and gallery alike.
ExperimentReport run_harness(const EmbedNetParams& baseline, const EmbedNetParams* jad,
                             std::span<const LabeledImage> queries, std::span<const LabeledImage> gallery,
                             const HarnessOptions& opts, const std::string& config_hash = "");

/// {config_hash, rows: [{attack, defense, rank1, rank5, rank10, map, n_query, rk: null}]}
std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
/// Aligned columns, one line per row.
std::string report_to_text(const ExperimentReport& report);

/// 0.5 + (x_adv - x) / (2 eps), clamped to [0,1].
Image difference_image(const Image& x, const Image& x_adv, double epsilon);

}  // namespace mal
