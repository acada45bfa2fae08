#pragma once

#include <cstdint>
#include <span>

#include "mal/embedder.hpp"
#include "mal/image.hpp"
#include "mal/rng.hpp"
#include "mal/transforms.hpp"

namespace mal {

struct DefenseSchedule {
  double p_augment = 0.05;
  double p_grayscale = 0.05;
  double p_channel_fusion = 0.05;
  double p_lht = 0.10;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when a probability is outside [0,1].
  void validate() const;
  friend bool operator==(const DefenseSchedule&, const DefenseSchedule&) = default;
};

/// Keys used in TrainingLog::transform_counts.
inline constexpr const char* kCountSamples = "samples";
inline constexpr const char* kCountAugment = "augment";
inline constexpr const char* kCountGrayscale = "grayscale";
inline constexpr const char* kCountChannelFusion = "channel_fusion";
inline constexpr const char* kCountLht = "lht";

/// Independent Bernoulli draws in the order augment, grayscale, channel
/// fusion, LHT; each fired transform sees the output of the previous ones.
/// LHT picks its mode uniformly from {grayscale, sketch, fused}. Labels and
/// size never change. When `log` is given the fired transforms are counted.
LabeledImage proactive_sample(const LabeledImage& x, const DefenseSchedule& sched, Rng& rng,
                              TrainingLog* log = nullptr);

/// train_baseline with every batch image routed through proactive_sample.
/// sched.seed is mixed into the per-sample streams only when nonzero, so an
/// all-zero schedule reproduces train_baseline bitwise.
TrainResult train_jad(std::span<const LabeledImage> dataset, const DefenseSchedule& sched, const TrainConfig& tcfg,
                      const EmbedNetConfig& config);

/// Dispatches on tcfg.jad.
TrainResult train_model(std::span<const LabeledImage> dataset, const DefenseSchedule& sched, const TrainConfig& tcfg,
                        const EmbedNetConfig& config);

/// Circuitous scaling applied at evaluation time, to clean and adversarial
/// images alike. A jittered plan needs an rng.
Image passive_defend(const Image& x, const ScalingPlan& plan, Rng* rng = nullptr);

}  // namespace mal
