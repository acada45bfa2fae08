#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mal/embedder.hpp"
#include "mal/image.hpp"
#include "mal/rng.hpp"
#include "mal/transforms.hpp"

namespace mal {

struct AttackConfig {
  double epsilon = 5.0 / 255.0;
  double alpha = 1.0 / 255.0;
  int iterations = 15;
  double theta = 1.0;
  /// Same-identity references averaged by M-IFGSM.
  int n_refs = 4;
  /// LTA*: draw the locally transformed reference once and reuse it.
  bool single_reference = false;
  /// SMA starts from uniform noise in the epsilon ball.
  bool random_init = true;

  /// Throws std::invalid_argument.
  void validate() const;
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

enum class AttackKind { kMifgsm, kSma, kLtaStar, kLta };
inline constexpr AttackKind kAllAttacks[] = {AttackKind::kMifgsm, AttackKind::kSma, AttackKind::kLtaStar,
                                             AttackKind::kLta};

/// "M-IFGSM", "SMA", "LTA*", "LTA".
std::string_view attack_name(AttackKind kind);
/// Accepts the display names and lower-case aliases (mifgsm, sma, lta, lta-star,
/// lta*). Throws std::invalid_argument otherwise.
AttackKind parse_attack(std::string_view name);

/// Raised when an adversarial image leaves the epsilon ball or [0,1].
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct AdvState {
  Image x;
  Image x_adv;
  std::vector<double> momentum;  // same layout as Image::pixels
  int iteration = 0;
  /// Steps whose pixel gradient was all zero (no momentum update).
  int skipped_steps = 0;

  static AdvState start(const Image& x, const Image& x_adv0);
};

/// Per-pixel clamp to [x - eps, x + eps] intersected with [0,1]. The bounds
/// are nudged so |result - x| <= eps holds in floating point.
Image clip_project(const Image& x_adv, const Image& x, double epsilon);

/// momentum = theta * momentum + delta / ||delta||_1. Returns false (and
/// only decays the buffer) when delta is all zero.
bool momentum_accumulate(AdvState& state, std::span<const double> delta, double theta);

/// Checks the epsilon-ball and pixel-range contracts; throws InvariantViolation.
void check_adv_invariants(const AdvState& state, double epsilon);

/// One step for a batch of states: ascend sum_i D(f(x_adv_i), ref_i) with
/// D the squared L2 distance, momentum, sign step, projection.
/// `references` is [B, feature_dim].
void attack_step(std::span<AdvState> states, const FeatureFn& f, const Tensor& references, const AttackConfig& cfg);
AdvState attack_step(const AdvState& state, const FeatureFn& f, const Tensor& reference, const AttackConfig& cfg);

/// LTA / LTA*: references are features of LGT(x) on the original image,
/// redrawn every iteration unless cfg.single_reference.
std::vector<AdvState> lta_attack(const FeatureFn& f, std::span<const Image> xs, const AttackConfig& cfg,
                                 std::span<Rng> rngs, RectSampler sampler = rand_rect);
AdvState lta_attack(const FeatureFn& f, const Image& x, const AttackConfig& cfg, Rng& rng,
                    RectSampler sampler = rand_rect);

/// SMA: noisy start, fixed reference f(x).
std::vector<AdvState> sma_attack(const FeatureFn& f, std::span<const Image> xs, const AttackConfig& cfg,
                                 std::span<Rng> rngs);
AdvState sma_attack(const FeatureFn& f, const Image& x, const AttackConfig& cfg, Rng& rng);

/// M-IFGSM: reference is the mean feature of same-identity images.
/// Throws std::invalid_argument when any reference list is empty.
std::vector<AdvState> mifgsm_attack(const FeatureFn& f, std::span<const Image> xs,
                                    std::span<const std::vector<Image>> refs, const AttackConfig& cfg);
AdvState mifgsm_attack(const FeatureFn& f, const Image& x, const std::vector<Image>& refs, const AttackConfig& cfg);

/// Attacks every query with per-image rng streams derived from (seed, index).
/// M-IFGSM references are up to cfg.n_refs other queries of the same
/// identity. Batches of images are spread over `threads` workers; results do
/// not depend on the thread count.
std::vector<AdvState> attack_query_set(const FeatureFn& f, std::span<const LabeledImage> queries, AttackKind kind,
                                       const AttackConfig& cfg, std::uint64_t seed, unsigned threads = 1);

}  // namespace mal
