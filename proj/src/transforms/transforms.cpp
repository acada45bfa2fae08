#include "mal/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mal {
namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Luma plane of x.
std::vector<double> luma(const Image& x) {
  std::vector<double> g(x.plane_size());
  auto r = x.plane(0);
  auto gr = x.plane(1);
  auto b = x.plane(2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    // Gray pixels map to themselves exactly.
    g[i] = (r[i] == gr[i] && gr[i] == b[i]) ? r[i] : clamp01(0.299 * r[i] + 0.587 * gr[i] + 0.114 * b[i]);
  }
  return g;
}

Image replicate(const std::vector<double>& plane, int h, int w) {
  Image out(h, w);
  for (int c = 0; c < 3; ++c) std::copy(plane.begin(), plane.end(), out.plane(c).begin());
  return out;
}

// Separable Gaussian blur with replicated borders.
std::vector<double> gaussian_blur(const std::vector<double>& src, int h, int w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = acc;
    }
  }
  return out;
}

std::vector<double> sketch_plane(const std::vector<double>& gray, int h, int w, double sigma) {
  std::vector<double> inv(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) inv[i] = 1.0 - gray[i];
  std::vector<double> blurred = gaussian_blur(inv, h, w, sigma);
  std::vector<double> s(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    s[i] = clamp01(gray[i] / (1.0 - blurred[i] + kSketchDodgeEps));
  }
  return s;
}

bool is_visible(ChannelType t) { return t == ChannelType::kR || t == ChannelType::kG || t == ChannelType::kB; }

}  // namespace

Image to_grayscale3(const Image& x) { return replicate(luma(x), x.height, x.width); }

Image to_sketch(const Image& x, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("to_sketch: sigma must be positive");
  return replicate(sketch_plane(luma(x), x.height, x.width, sigma), x.height, x.width);
}

Rect rand_rect(Rng& rng, int h, int w) {
  if (h < 8 || w < 8) throw std::invalid_argument("rand_rect: image must be at least 8x8");
  const double total = static_cast<double>(h) * w;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double target = uniform(rng, 0.02, 0.4) * total;
    const double aspect = uniform(rng, 0.3, 3.33);
    const int rh = static_cast<int>(std::lround(std::sqrt(target * aspect)));
    const int rw = static_cast<int>(std::lround(std::sqrt(target / aspect)));
    if (rh < 1 || rw < 1 || rh > h || rw > w) continue;
    const double realized = static_cast<double>(rh) * rw / total;
    if (realized < 0.02 || realized > 0.4) continue;
    const int top = uniform_int(rng, 0, h - rh);
    const int left = uniform_int(rng, 0, w - rw);
    return Rect{top, left, rh, rw};
  }
  const int rh = h / 2, rw = w / 2;
  return Rect{(h - rh) / 2, (w - rw) / 2, rh, rw};
}

Image local_transform(const Image& outside, const Image& inside, const Rect& rect) {
  if (!outside.same_size(inside)) throw std::invalid_argument("local_transform: size mismatch");
  if (!rect.inside(outside.height, outside.width)) throw std::invalid_argument("local_transform: rect out of bounds");
  Image out = outside;
  for (int c = 0; c < 3; ++c) {
    for (int y = rect.top; y < rect.top + rect.height; ++y) {
      for (int x = rect.left; x < rect.left + rect.width; ++x) out.at(c, y, x) = inside.at(c, y, x);
    }
  }
  return out;
}

Image local_grayscale_transform(const Image& x, Rng& rng) {
  return local_grayscale_transform(x, rand_rect(rng, x.height, x.width));
}

Image local_grayscale_transform(const Image& x, const Rect& rect) {
  return local_transform(x, to_grayscale3(x), rect);
}

std::vector<CfVariant> enumerate_cf_variants() {
  constexpr std::array<ChannelType, 5> types = {ChannelType::kR, ChannelType::kG, ChannelType::kB,
                                                ChannelType::kGray, ChannelType::kSketch};
  std::vector<CfVariant> out;
  for (ChannelType a : types) {
    for (ChannelType b : types) {
      if (b == a) continue;
      for (ChannelType c : types) {
        if (c == a || c == b) continue;
        const int visible = is_visible(a) + is_visible(b) + is_visible(c);
        out.push_back(CfVariant{{a, b, c}, visible == 1 || visible == 2});
      }
    }
  }
  return out;
}

const std::vector<ChannelArrangement>& constrained_cf_arrangements() {
  static const std::vector<ChannelArrangement> arrangements = [] {
    std::vector<ChannelArrangement> v;
    for (const CfVariant& var : enumerate_cf_variants()) {
      if (var.constrained) v.push_back(var.slots);
    }
    return v;
  }();
  return arrangements;
}

Image fuse_channels(const Image& x, const ChannelArrangement& slots) {
  std::vector<double> gray, sketch;
  const bool need_gray = std::count(slots.begin(), slots.end(), ChannelType::kGray) > 0;
  const bool need_sketch = std::count(slots.begin(), slots.end(), ChannelType::kSketch) > 0;
  if (need_gray || need_sketch) gray = luma(x);
  if (need_sketch) sketch = sketch_plane(gray, x.height, x.width, kDefaultSketchSigma);

  Image out(x.height, x.width);
  for (int slot = 0; slot < 3; ++slot) {
    auto dst = out.plane(slot);
    switch (slots[slot]) {
      case ChannelType::kR: std::ranges::copy(x.plane(0), dst.begin()); break;
      case ChannelType::kG: std::ranges::copy(x.plane(1), dst.begin()); break;
      case ChannelType::kB: std::ranges::copy(x.plane(2), dst.begin()); break;
      case ChannelType::kGray: std::ranges::copy(gray, dst.begin()); break;
      case ChannelType::kSketch: std::ranges::copy(sketch, dst.begin()); break;
    }
  }
  return out;
}

Image channel_fusion(const Image& x, Rng& rng) {
  const auto& options = constrained_cf_arrangements();
  const int pick = uniform_int(rng, 0, static_cast<int>(options.size()) - 1);
  return fuse_channels(x, options[pick]);
}

std::string_view augment_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::kPosterize: return "posterize";
    case AugmentKind::kEqualize: return "equalize";
    case AugmentKind::kSolarize: return "solarize";
    case AugmentKind::kContrast: return "contrast";
    case AugmentKind::kInvert: return "invert";
  }
  return "unknown";
}

AugmentKind parse_augment_kind(std::string_view name) {
  for (AugmentKind k : kAllAugmentKinds) {
    if (augment_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown augment kind: " + std::string(name));
}

namespace {

int to_byte(double v) { return static_cast<int>(std::lround(clamp01(v) * 255.0)); }

// Histogram equalization of one plane on 256 bins.
void equalize_plane(std::span<double> plane) {
  std::array<long, 256> hist{};
  for (double v : plane) ++hist[to_byte(v)];
  long total = 0, last = 0, nonzero = 0;
  for (long c : hist) {
    if (c) {
      total += c;
      last = c;
      ++nonzero;
    }
  }
  if (nonzero <= 1) return;
  const long step = (total - last) / 255;
  if (step == 0) return;
  std::array<double, 256> lut{};
  long n = step / 2;
  for (int i = 0; i < 256; ++i) {
    lut[i] = static_cast<double>(std::min<long>(255, n / step)) / 255.0;
    n += hist[i];
  }
  for (double& v : plane) v = lut[to_byte(v)];
}

}  // namespace

Image apply_augment(const Image& x, AugmentKind kind) {
  Image out = x;
  switch (kind) {
    case AugmentKind::kPosterize:
      for (double& v : out.pixels) v = static_cast<double>(to_byte(v) & 0xF0) / 255.0;
      return out;
    case AugmentKind::kEqualize:
      for (int c = 0; c < 3; ++c) equalize_plane(out.plane(c));
      return out;
    case AugmentKind::kSolarize:
      for (double& v : out.pixels) v = v >= 0.5 ? 1.0 - v : v;
      return out;
    case AugmentKind::kContrast: {
      std::vector<double> g = luma(x);
      double mean = 0.0;
      for (double v : g) mean += v;
      mean /= static_cast<double>(g.size());
      for (double& v : out.pixels) v = clamp01(mean + 1.5 * (v - mean));
      return out;
    }
    case AugmentKind::kInvert:
      for (double& v : out.pixels) v = 1.0 - v;
      return out;
  }
  throw std::invalid_argument("apply_augment: unknown kind " + std::to_string(static_cast<int>(kind)));
}

Image random_augment(const Image& x, Rng& rng) {
  return apply_augment(x, kAllAugmentKinds[uniform_int(rng, 0, static_cast<int>(kAllAugmentKinds.size()) - 1)]);
}

Image local_homogeneous_transform(const Image& x, HomogeneousKind mode, Rng& rng) {
  Image homogeneous;
  switch (mode) {
    case HomogeneousKind::kGrayscale: homogeneous = to_grayscale3(x); break;
    case HomogeneousKind::kSketch: homogeneous = to_sketch(x); break;
    case HomogeneousKind::kFused: homogeneous = channel_fusion(x, rng); break;
    case HomogeneousKind::kAugmented: homogeneous = random_augment(x, rng); break;
  }
  return local_transform(x, homogeneous, rand_rect(rng, x.height, x.width));
}

Image bilinear_resize(const Image& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: output size must be positive");
  if (x.height < 1 || x.width < 1) throw std::invalid_argument("bilinear_resize: empty input");
  if (out_h == x.height && out_w == x.width) return x;

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      const double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(src));
      t[i] = Tap{lo, std::min(lo + 1, in - 1), src - lo};
    }
    return t;
  };
  const std::vector<Tap> ys = taps(x.height, out_h);
  const std::vector<Tap> xs = taps(x.width, out_w);

  Image out(out_h, out_w);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) {
        const double a = x.at(c, ys[i].lo, xs[j].lo);
        const double b = x.at(c, ys[i].lo, xs[j].hi);
        const double d = x.at(c, ys[i].hi, xs[j].lo);
        const double e = x.at(c, ys[i].hi, xs[j].hi);
        // Lerp form keeps equal neighbours exact.
        const double top = a + xs[j].frac * (b - a);
        const double bottom = d + xs[j].frac * (e - d);
        out.at(c, i, j) = clamp01(top + ys[i].frac * (bottom - top));
      }
    }
  }
  return out;
}

ScalingPlan ScalingPlan::circuitous(ImageSize input) {
  const ImageSize p1{static_cast<int>(std::lround(input.height * 110.0 / 256.0)),
                     static_cast<int>(std::lround(input.width * 50.0 / 128.0))};
  const ImageSize p2{2 * p1.height, 2 * p1.width};
  return ScalingPlan{{p1, p2, p1}, input};
}

ScalingPlan ScalingPlan::single_resize(ImageSize input) {
  ScalingPlan plan = circuitous(input);
  plan.chain.resize(1);
  return plan;
}

ScalingPlan ScalingPlan::named(std::string_view name, ImageSize input) {
  ScalingPlan cs = circuitous(input);
  const ImageSize p1 = cs.chain[0], p2 = cs.chain[1];
  if (name == "cs" || name == "p1p2p1") return cs;
  if (name == "p1") return ScalingPlan{{p1}, input};
  if (name == "p2") return ScalingPlan{{p2}, input};
  if (name == "p1p2") return ScalingPlan{{p1, p2}, input};
  throw std::invalid_argument("unknown scaling plan: " + std::string(name));
}

Image circuitous_scale(const Image& x, const ScalingPlan& plan, Rng* rng) {
  if (plan.output.height < 1 || plan.output.width < 1) {
    throw std::invalid_argument("circuitous_scale: output size must be positive");
  }
  if (plan.jitter && !rng) throw std::invalid_argument("circuitous_scale: jitter needs an rng");
  Image cur = x;
  for (ImageSize s : plan.chain) {
    if (s.height < 1 || s.width < 1) throw std::invalid_argument("circuitous_scale: plan sizes must be positive");
    if (plan.jitter) {
      const double f = plan.jitter_fraction;
      s.height = std::max(1, static_cast<int>(std::lround(s.height * uniform(*rng, 1.0 - f, 1.0 + f))));
      s.width = std::max(1, static_cast<int>(std::lround(s.width * uniform(*rng, 1.0 - f, 1.0 + f))));
    }
    cur = bilinear_resize(cur, s.height, s.width);
  }
  return bilinear_resize(cur, plan.output.height, plan.output.width);
}

}  // namespace mal
