#include "mal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "mal/parallel.hpp"

namespace mal {
namespace {

constexpr std::uint64_t kIdentityTag = 0x1d;
constexpr std::uint64_t kCameraTag = 0xca;
constexpr std::uint64_t kRenderTag = 0x7e;

constexpr double kPaletteLevels[] = {0.18, 0.34, 0.5, 0.66, 0.82};
constexpr Rgb kSkin{0.85, 0.65, 0.5};
constexpr int kHeadTop = 3;
constexpr int kHeadWidth = 8;
constexpr int kLegBottom = 61;
constexpr int kLegWidth = 6;
constexpr int kLegGap = 2;

Rgb pick_color(Rng& rng) {
  const auto& palette = identity_palette();
  return palette[uniform_int(rng, 0, static_cast<int>(palette.size()) - 1)];
}

Rgb pick_color_except(Rng& rng, const Rgb& avoid) {
  Rgb c;
  do {
    c = pick_color(rng);
  } while (c == avoid);
  return c;
}

// Deterministic value in [-1, 1] for a texture cell.
double texture_value(std::uint64_t seed, int y, int x, int c) {
  std::uint64_t z = seed ^ (static_cast<std::uint64_t>(y) << 40) ^ (static_cast<std::uint64_t>(x) << 20) ^
                    static_cast<std::uint64_t>(c);
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) / static_cast<double>(1ull << 52) - 1.0;
}

void add_texture(Image& img, int top, int left, int h, int w, std::uint64_t seed, double amplitude) {
  if (amplitude == 0.0) return;
  for (int c = 0; c < 3; ++c) {
    for (int y = std::max(0, top); y < std::min(img.height, top + h); ++y) {
      for (int x = std::max(0, left); x < std::min(img.width, left + w); ++x) {
        img.at(c, y, x) += amplitude * texture_value(seed, y - top, x - left, c);
      }
    }
  }
}

void fill_pattern(Image& img, int top, int left, int h, int w, const Rgb& base, Pattern pattern, const Rgb& accent,
                  int period) {
  const int half = period / 2;
  for (int y = std::max(0, top); y < std::min(img.height, top + h); ++y) {
    for (int x = std::max(0, left); x < std::min(img.width, left + w); ++x) {
      const int ry = (y - top) / half, rx = (x - left) / half;
      bool alt = false;
      switch (pattern) {
        case Pattern::kSolid: break;
        case Pattern::kHStripes: alt = ry % 2; break;
        case Pattern::kVStripes: alt = rx % 2; break;
        case Pattern::kChecks: alt = (ry + rx) % 2; break;
      }
      const Rgb& color = alt ? accent : base;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
    }
  }
}

void fill_rect(Image& img, int top, int left, int h, int w, const Rgb& color) {
  for (int c = 0; c < 3; ++c) {
    for (int y = std::max(0, top); y < std::min(img.height, top + h); ++y) {
      for (int x = std::max(0, left); x < std::min(img.width, left + w); ++x) img.at(c, y, x) = color[c];
    }
  }
}

Image box_blur3(const Image& x) {
  Image out(x.height, x.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < x.height; ++y) {
      for (int col = 0; col < x.width; ++col) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            acc += x.at(c, std::clamp(y + dy, 0, x.height - 1), std::clamp(col + dx, 0, x.width - 1));
          }
        }
        out.at(c, y, col) = acc / 9.0;
      }
    }
  }
  return out;
}

}  // namespace

const std::vector<Rgb>& identity_palette() {
  static const std::vector<Rgb> palette = [] {
    std::vector<Rgb> p;
    for (double r : kPaletteLevels) {
      for (double g : kPaletteLevels) {
        for (double b : kPaletteLevels) p.push_back({r, g, b});
      }
    }
    return p;
  }();
  return palette;
}

double rgb_distance(const Rgb& a, const Rgb& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

IdentitySpec generate_identity(Rng& rng, int id, double texture_amplitude) {
  IdentitySpec s;
  s.id = id;
  s.top = pick_color(rng);
  s.bottom = pick_color_except(rng, s.top);
  s.top_pattern = static_cast<Pattern>(uniform_int(rng, 0, 3));
  s.top_accent = pick_color_except(rng, s.top);
  s.bottom_pattern = bernoulli(rng, 0.5) ? Pattern::kSolid : static_cast<Pattern>(uniform_int(rng, 1, 3));
  s.bottom_accent = pick_color_except(rng, s.bottom);
  s.pattern_period = 2 * uniform_int(rng, 3, 4);
  s.bag = bernoulli(rng, 0.4);
  s.bag_color = pick_color_except(rng, s.top);
  s.texture_seed = rng();
  s.texture_amplitude = texture_amplitude;
  s.head_height = uniform_int(rng, 7, 9);
  s.torso_height = uniform_int(rng, 20, 24);
  s.torso_width = uniform_int(rng, 16, 20);
  return s;
}

CameraModel generate_camera(Rng& rng, int id, const DatasetConfig& cfg) {
  CameraModel cam;
  cam.id = id;
  for (int c = 0; c < 3; ++c) {
    cam.gain[c] = uniform(rng, 1.0 - cfg.gain_spread, 1.0 + cfg.gain_spread);
    cam.bias[c] = uniform(rng, -cfg.bias_spread, cfg.bias_spread);
    cam.background[c] = uniform(rng, 0.35, 0.5);
  }
  cam.noise_std = cfg.noise_std;
  cam.blur = id % 4 == 3;
  return cam;
}

LabeledImage render_sample(const IdentitySpec& spec, const CameraModel& cam, Rng& rng) {
  Image img(kRenderHeight, kRenderWidth);
  fill_rect(img, 0, 0, kRenderHeight, kRenderWidth, cam.background);

  const int head_left = (kRenderWidth - kHeadWidth) / 2;
  fill_rect(img, kHeadTop, head_left, spec.head_height, kHeadWidth, kSkin);

  const int torso_top = kHeadTop + spec.head_height;
  const int torso_left = (kRenderWidth - spec.torso_width) / 2;
  fill_pattern(img, torso_top, torso_left, spec.torso_height, spec.torso_width, spec.top, spec.top_pattern,
               spec.top_accent, spec.pattern_period);
  add_texture(img, torso_top, torso_left, spec.torso_height, spec.torso_width, spec.texture_seed,
              spec.texture_amplitude);

  const int leg_top = torso_top + spec.torso_height;
  const int legs_left = (kRenderWidth - (2 * kLegWidth + kLegGap)) / 2;
  for (int leg = 0; leg < 2; ++leg) {
    fill_pattern(img, leg_top, legs_left + leg * (kLegWidth + kLegGap), kLegBottom - leg_top, kLegWidth, spec.bottom,
                 spec.bottom_pattern, spec.bottom_accent, spec.pattern_period);
  }
  add_texture(img, leg_top, legs_left, kLegBottom - leg_top, 2 * kLegWidth + kLegGap, spec.texture_seed + 1,
              spec.texture_amplitude);

  if (spec.bag) fill_rect(img, torso_top + 6, torso_left + spec.torso_width - 2, 10, 6, spec.bag_color);

  if (cam.blur) img = box_blur3(img);
  for (int c = 0; c < 3; ++c) {
    for (double& v : img.plane(c)) {
      v = cam.gain[c] * v + cam.bias[c];
      if (cam.noise_std > 0.0) v += normal(rng, 0.0, cam.noise_std);
      v = std::clamp(v, 0.0, 1.0);
    }
  }
  return LabeledImage{std::move(img), spec.id, cam.id};
}

Dataset generate_dataset(const DatasetConfig& cfg, unsigned threads) {
  if (cfg.n_train_ids < 1 || cfg.n_test_ids < 1) throw std::invalid_argument("generate_dataset: need train and test ids");
  if (cfg.n_cams < 2) throw std::invalid_argument("generate_dataset: n_cams must be at least 2");
  if (cfg.per_id_per_cam < 2) throw std::invalid_argument("generate_dataset: per_id_per_cam must be at least 2");
  const int n_ids = cfg.n_train_ids + cfg.n_test_ids;
  const int n_palette = static_cast<int>(identity_palette().size());
  if (n_ids > n_palette * (n_palette - 1)) throw std::invalid_argument("generate_dataset: too many identities");

  Dataset ds;
  // Top/bottom pairs stay unique so identities are separable by color alone.
  std::set<std::pair<Rgb, Rgb>> used;
  for (int id = 0; id < n_ids; ++id) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng = derive_rng(cfg.seed, {kIdentityTag, static_cast<std::uint64_t>(id), attempt});
      IdentitySpec spec = generate_identity(rng, id, cfg.texture_amplitude);
      if (used.insert({spec.top, spec.bottom}).second) {
        ds.identities.push_back(spec);
        break;
      }
    }
  }
  for (int c = 0; c < cfg.n_cams; ++c) {
    Rng rng = derive_rng(cfg.seed, {kCameraTag, static_cast<std::uint64_t>(c)});
    ds.cameras.push_back(generate_camera(rng, c, cfg));
  }

  const std::size_t per_id = static_cast<std::size_t>(cfg.n_cams) * cfg.per_id_per_cam;
  std::vector<LabeledImage> all(static_cast<std::size_t>(n_ids) * per_id);
  parallel_for(all.size(), threads, [&](std::size_t i) {
    const int id = static_cast<int>(i / per_id);
    const int cam = static_cast<int>((i % per_id) / cfg.per_id_per_cam);
    const int k = static_cast<int>(i % cfg.per_id_per_cam);
    Rng rng = derive_rng(cfg.seed, {kRenderTag, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(cam),
                                    static_cast<std::uint64_t>(k)});
    all[i] = render_sample(ds.identities[id], ds.cameras[cam], rng);
  });

  for (std::size_t i = 0; i < all.size(); ++i) {
    const int id = static_cast<int>(i / per_id);
    const int k = static_cast<int>(i % cfg.per_id_per_cam);
    if (id < cfg.n_train_ids) {
      ds.train.push_back(std::move(all[i]));
    } else if (k == 0) {
      ds.gallery.push_back(std::move(all[i]));
    } else {
      ds.query.push_back(std::move(all[i]));
    }
  }
  return ds;
}

}  // namespace mal
