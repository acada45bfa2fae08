#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mal/image.hpp"
#include "mal/rng.hpp"

namespace mal {

using Rgb = std::array<double, 3>;

inline constexpr int kRenderHeight = 64;
inline constexpr int kRenderWidth = 32;

/// The 125 colors with every channel in {0.18, 0.34, 0.5, 0.66, 0.82}.
const std::vector<Rgb>& identity_palette();
double rgb_distance(const Rgb& a, const Rgb& b);

/// Clothing texture. Stripes and checks alternate the base and accent colors
/// every half period.
enum class Pattern { kSolid, kHStripes, kVStripes, kChecks };

struct IdentitySpec {
  int id = 0;
  Rgb top{};
  Rgb bottom{};
  Pattern top_pattern = Pattern::kSolid;
  Rgb top_accent{};
  Pattern bottom_pattern = Pattern::kSolid;
  Rgb bottom_accent{};
  int pattern_period = 8;
  bool bag = false;
  Rgb bag_color{};
  /// Fixed fine-grained fabric texture on the clothing, keyed by this seed.
  std::uint64_t texture_seed = 0;
  double texture_amplitude = 0.0;
  int head_height = 8;
  int torso_height = 22;
  int torso_width = 18;

  friend bool operator==(const IdentitySpec&, const IdentitySpec&) = default;
};

struct CameraModel {
  int id = 0;
  Rgb gain{1.0, 1.0, 1.0};
  Rgb bias{0.0, 0.0, 0.0};
  double noise_std = 0.0;
  bool blur = false;
  Rgb background{0.5, 0.5, 0.5};

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

struct DatasetConfig;

IdentitySpec generate_identity(Rng& rng, int id, double texture_amplitude = 0.0);
/// Gains in [1 - gain_spread, 1 + gain_spread], biases in +-bias_spread.
CameraModel generate_camera(Rng& rng, int id, const DatasetConfig& cfg);

/// Renders a 64x32 pedestrian. The rng only drives the sensor noise.
LabeledImage render_sample(const IdentitySpec& spec, const CameraModel& cam, Rng& rng);

struct DatasetConfig {
  std::uint64_t seed = 7;
  int n_train_ids = 50;
  int n_test_ids = 20;
  int n_cams = 4;
  int per_id_per_cam = 4;
  double gain_spread = 0.3;
  double bias_spread = 0.03;
  double noise_std = 0.01;
  double texture_amplitude = 0.04;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct Dataset {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> query;
  std::vector<LabeledImage> gallery;
  std::vector<IdentitySpec> identities;  // train ids first, then test ids
  std::vector<CameraModel> cameras;
};

/// Train identities get labels [0, n_train_ids), test identities follow.
/// Throws std::invalid_argument for invalid counts. `threads` does not change
/// the output.
Dataset generate_dataset(const DatasetConfig& cfg, unsigned threads = 1);

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit PNG, or binary PPM (P6) when the extension is .ppm.
void save_image(const Image& x, const std::filesystem::path& path);
Image load_image(const std::filesystem::path& path);

/// Quantization applied by save_image.
Image quantize8(const Image& x);

struct ManifestRow {
  std::string file;
  int identity = 0;
  int camera = 0;
};

/// Writes every image plus manifest.jsonl under `dir` (created if missing).
void save_split(const std::vector<LabeledImage>& split, const std::filesystem::path& dir,
                const std::string& extension = ".png");
std::vector<ManifestRow> read_manifest(const std::filesystem::path& dir);
std::vector<LabeledImage> load_split(const std::filesystem::path& dir);

}  // namespace mal
