#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mal/image.hpp"
#include "mal/rng.hpp"
#include "mal/tape.hpp"
#include "mal/tensor.hpp"

namespace mal {

struct EmbedNetConfig {
  int input_height = 64;
  int input_width = 32;
  /// Output channels of each conv3x3 -> relu -> maxpool2x2 block.
  std::vector<int> channels{8, 16, 32};
  int embedding_dim = 64;
  int num_classes = 50;

  /// Throws std::invalid_argument on a bad config.
  void validate() const;
  friend bool operator==(const EmbedNetConfig&, const EmbedNetConfig&) = default;
};

struct EmbedNetParams {
  EmbedNetConfig config;
  std::uint64_t seed = 0;
  std::vector<Tensor> conv_weight;
  std::vector<Tensor> conv_bias;
  Tensor embed_weight;
  Tensor embed_bias;
  Tensor head_weight;
  Tensor head_bias;

  /// Every tensor in declaration order. Handles share storage with this.
  std::vector<Tensor> tensors() const;
  /// Deep copy with requires_grad set on every tensor.
  EmbedNetParams trainable() const;
  /// Deep copy that never records gradients for the weights.
  EmbedNetParams frozen() const;
  /// Bitwise comparison of config, seed and all weights.
  bool same_as(const EmbedNetParams& other) const;
};

/// He-scaled normal init for conv and embedding layers, small head weights
/// so the first loss is close to ln(num_classes).
EmbedNetParams init_embed_net(const EmbedNetConfig& config, std::uint64_t seed);

struct NetOutput {
  Tensor features;  // [N, embedding_dim]
  Tensor logits;    // [N, num_classes]
};

/// images [N,3,H,W] matching the configured input size.
NetOutput forward_net(Tape& tape, const EmbedNetParams& params, const Tensor& images);
/// Features taken before the classification head.
Tensor embed_batch(Tape& tape, const EmbedNetParams& params, const Tensor& images);

/// Forward-only features, [N, embedding_dim]. Rows are optionally scaled to
/// unit L2 norm. Work is sharded across `threads` without changing results.
Tensor extract_features(const EmbedNetParams& params, std::span<const Image> images, bool normalize = false,
                        unsigned threads = 1);

/// Differentiable image batch -> feature rows. Attacks only see this.
using FeatureFn = std::function<Tensor(Tape&, const Tensor&)>;
/// Feature function over a frozen copy of `params`.
FeatureFn feature_fn(const EmbedNetParams& params);

struct TrainConfig {
  double learning_rate = 0.01;
  double lr_decay = 0.1;
  int decay_every = 20;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 1;
  /// Route every batch image through the proactive defense pipeline.
  bool jad = false;

  double lr_at(int epoch) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainingLog {
  double initial_loss = 0.0;
  std::vector<EpochLog> epochs;
  /// Filled by the defense pipeline: how often each transform fired.
  std::map<std::string, long> transform_counts;
};

/// Per-sample preprocessing hook applied before every batch is assembled.
/// The rng is derived from (train seed, epoch, position in epoch).
using SampleTransform = std::function<Image(const LabeledImage&, Rng&, TrainingLog&)>;

struct TrainResult {
  EmbedNetParams params;
  TrainingLog log;
};

/// SGD with momentum on the mean softmax cross entropy over identity labels.
/// Throws std::invalid_argument on an empty dataset or labels outside
/// [0, num_classes).
TrainResult train_baseline(std::span<const LabeledImage> dataset, const TrainConfig& tcfg,
                           const EmbedNetConfig& config, const SampleTransform& transform = nullptr);

/// Mean cross entropy and accuracy of the classification head.
std::pair<double, double> evaluate_classifier(const EmbedNetParams& params, std::span<const LabeledImage> dataset);

/// "MALNET1" file: magic, length-prefixed key=value config text, then
/// little-endian float32 tensors in declaration order.
void save_params(const EmbedNetParams& params, const std::filesystem::path& path);
EmbedNetParams load_params(const std::filesystem::path& path);

/// Weights rounded to float32, as they come back from save/load.
EmbedNetParams round_to_float(const EmbedNetParams& params);

}  // namespace mal
