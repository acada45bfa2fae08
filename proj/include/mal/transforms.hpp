#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mal/image.hpp"
#include "mal/rng.hpp"

namespace mal {

// Homogeneous transforms: images that keep the structure of the source but
// change its color modality.

/// Luma 0.299 R + 0.587 G + 0.114 B replicated to three planes.
Image to_grayscale3(const Image& x);

inline constexpr double kDefaultSketchSigma = 2.0;
inline constexpr double kSketchDodgeEps = 1e-3;

/// Pencil sketch: gray g, b = blur(1 - g), s = min(1, g / (1 - b + eps)).
Image to_sketch(const Image& x, double sigma = kDefaultSketchSigma);

/// Random rectangle covering 2%-40% of the image with aspect (h/w) in
/// [0.3, 3.33]. Falls back to the centered half-height, half-width rect
/// after 100 rejected draws. Requires h, w >= 8.
Rect rand_rect(Rng& rng, int h, int w);

using RectSampler = Rect (*)(Rng&, int, int);

/// Pixels inside `rect` come from `inside`, the rest from `outside`.
Image local_transform(const Image& outside, const Image& inside, const Rect& rect);

Image local_grayscale_transform(const Image& x, Rng& rng);
Image local_grayscale_transform(const Image& x, const Rect& rect);

enum class ChannelType { kR, kG, kB, kGray, kSketch };
using ChannelArrangement = std::array<ChannelType, 3>;

struct CfVariant {
  ChannelArrangement slots;
  /// One or two slots hold visible (R, G, B) planes.
  bool constrained = false;
};

/// All ordered 3-slot arrangements of the five channel types without repeats.
std::vector<CfVariant> enumerate_cf_variants();
/// Only the arrangements with one or two visible planes.
const std::vector<ChannelArrangement>& constrained_cf_arrangements();

Image fuse_channels(const Image& x, const ChannelArrangement& slots);
/// Fusion with an arrangement drawn uniformly from the constrained set.
Image channel_fusion(const Image& x, Rng& rng);

enum class AugmentKind { kPosterize, kEqualize, kSolarize, kContrast, kInvert };
inline constexpr std::array<AugmentKind, 5> kAllAugmentKinds = {
    AugmentKind::kPosterize, AugmentKind::kEqualize, AugmentKind::kSolarize,
    AugmentKind::kContrast, AugmentKind::kInvert};

std::string_view augment_name(AugmentKind kind);
/// Throws std::invalid_argument on an unknown name.
AugmentKind parse_augment_kind(std::string_view name);

/// Throws std::invalid_argument for an out-of-range kind value.
Image apply_augment(const Image& x, AugmentKind kind);
Image random_augment(const Image& x, Rng& rng);

enum class HomogeneousKind { kGrayscale, kSketch, kFused, kAugmented };

/// Builds the homogeneous image for `mode`, then pastes a random rectangle of
/// it over the input.
Image local_homogeneous_transform(const Image& x, HomogeneousKind mode, Rng& rng);

// Scaling.

struct ImageSize {
  int height = 0;
  int width = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Bilinear sampling with half-pixel centers; no antialiasing.
Image bilinear_resize(const Image& x, int out_h, int out_w);

/// Resize chain followed by a final resize to the network input size.
struct ScalingPlan {
  std::vector<ImageSize> chain;
  ImageSize output;
  /// Scale every chain size by an independent factor in [1 - f, 1 + f].
  bool jitter = false;
  double jitter_fraction = 0.1;

  /// P1 -> P2 -> P1 with P1 = input * (110/256, 50/128), P2 = 2 * P1.
  static ScalingPlan circuitous(ImageSize input);
  /// Only the first down-scale, then back to input size.
  static ScalingPlan single_resize(ImageSize input);
  static ScalingPlan named(std::string_view name, ImageSize input);

  friend bool operator==(const ScalingPlan&, const ScalingPlan&) = default;
};

/// Throws std::invalid_argument when any plan size is non-positive, or when
/// jitter is on and no rng is given.
Image circuitous_scale(const Image& x, const ScalingPlan& plan, Rng* rng = nullptr);

}  // namespace mal
