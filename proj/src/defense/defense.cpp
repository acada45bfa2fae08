#include "mal/defense.hpp"

#include <stdexcept>
#include <string>

namespace mal {

void DefenseSchedule::validate() const {
  for (double p : {p_augment, p_grayscale, p_channel_fusion, p_lht}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("DefenseSchedule: probability outside [0,1]");
  }
}

LabeledImage proactive_sample(const LabeledImage& x, const DefenseSchedule& sched, Rng& rng, TrainingLog* log) {
  auto count = [&](const std::string& key) {
    if (log) ++log->transform_counts[key];
  };
  count(kCountSamples);
  LabeledImage out = x;
  if (bernoulli(rng, sched.p_augment)) {
    out.image = random_augment(out.image, rng);
    count(kCountAugment);
  }
  if (bernoulli(rng, sched.p_grayscale)) {
    out.image = to_grayscale3(out.image);
    count(kCountGrayscale);
  }
  if (bernoulli(rng, sched.p_channel_fusion)) {
    out.image = channel_fusion(out.image, rng);
    count(kCountChannelFusion);
  }
  if (bernoulli(rng, sched.p_lht)) {
    constexpr HomogeneousKind kModes[] = {HomogeneousKind::kGrayscale, HomogeneousKind::kSketch,
                                          HomogeneousKind::kFused};
    constexpr const char* kModeNames[] = {"lht_grayscale", "lht_sketch", "lht_fused"};
    const int m = uniform_int(rng, 0, 2);
    out.image = local_homogeneous_transform(out.image, kModes[m], rng);
    count(kCountLht);
    count(kModeNames[m]);
  }
  return out;
}

TrainResult train_jad(std::span<const LabeledImage> dataset, const DefenseSchedule& sched, const TrainConfig& tcfg,
                      const EmbedNetConfig& config) {
  sched.validate();
  SampleTransform hook = [&sched](const LabeledImage& s, Rng& rng, TrainingLog& log) {
    if (sched.seed != 0) {
      Rng mixed = derive_rng(sched.seed, {rng()});
      return proactive_sample(s, sched, mixed, &log).image;
    }
    return proactive_sample(s, sched, rng, &log).image;
  };
  return train_baseline(dataset, tcfg, config, hook);
}

TrainResult train_model(std::span<const LabeledImage> dataset, const DefenseSchedule& sched, const TrainConfig& tcfg,
                        const EmbedNetConfig& config) {
  return tcfg.jad ? train_jad(dataset, sched, tcfg, config) : train_baseline(dataset, tcfg, config);
}

Image passive_defend(const Image& x, const ScalingPlan& plan, Rng* rng) { return circuitous_scale(x, plan, rng); }

}  // namespace mal
