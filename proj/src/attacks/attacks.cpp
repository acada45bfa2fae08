#include "mal/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mal/ops.hpp"
#include "mal/parallel.hpp"

namespace mal {
namespace {

constexpr std::uint64_t kAttackTag = 0xa7;
constexpr std::uint64_t kRefTag = 0xaf;
constexpr std::size_t kAttackChunk = 16;

// Produces the [B, D] reference features for a given iteration.
using ReferenceFn = std::function<Tensor(int iteration)>;

Tensor features_of(const FeatureFn& f, std::span<const Image> imgs) {
  Tape tape(false);
  return f(tape, images_to_tensor(imgs)).detached();
}

std::vector<AdvState> run_attack(const FeatureFn& f, std::span<const Image> xs, std::vector<Image> starts,
                                 const AttackConfig& cfg, const ReferenceFn& references) {
  std::vector<AdvState> states;
  states.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    states.push_back(AdvState::start(xs[i], starts[i]));
    check_adv_invariants(states.back(), cfg.epsilon);
  }
  for (int n = 0; n < cfg.iterations; ++n) attack_step(states, f, references(n), cfg);
  return states;
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("AttackConfig: epsilon must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("AttackConfig: alpha must be positive");
  if (iterations < 0) throw std::invalid_argument("AttackConfig: iterations must be non-negative");
  if (!(theta >= 0.0)) throw std::invalid_argument("AttackConfig: theta must be non-negative");
  if (n_refs < 1) throw std::invalid_argument("AttackConfig: n_refs must be at least 1");
}

std::string_view attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kMifgsm: return "M-IFGSM";
    case AttackKind::kSma: return "SMA";
    case AttackKind::kLtaStar: return "LTA*";
    case AttackKind::kLta: return "LTA";
  }
  return "unknown";
}

AttackKind parse_attack(std::string_view name) {
  for (AttackKind k : kAllAttacks) {
    if (attack_name(k) == name) return k;
  }
  if (name == "mifgsm" || name == "m-ifgsm") return AttackKind::kMifgsm;
  if (name == "sma") return AttackKind::kSma;
  if (name == "lta") return AttackKind::kLta;
  if (name == "lta*" || name == "lta-star" || name == "ltastar") return AttackKind::kLtaStar;
  throw std::invalid_argument("unknown attack '" + std::string(name) + "' (expected M-IFGSM, SMA, LTA*, LTA)");
}

AdvState AdvState::start(const Image& x, const Image& x_adv0) {
  if (!x.same_size(x_adv0)) throw std::invalid_argument("AdvState: size mismatch");
  AdvState s;
  s.x = x;
  s.x_adv = x_adv0;
  s.momentum.assign(x.pixels.size(), 0.0);
  return s;
}

Image clip_project(const Image& x_adv, const Image& x, double epsilon) {
  if (!x_adv.same_size(x)) throw std::invalid_argument("clip_project: size mismatch");
  Image out = x_adv;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double xi = x.pixels[i];
    double lo = std::max(0.0, xi - epsilon);
    double hi = std::min(1.0, xi + epsilon);
    while (xi - lo > epsilon) lo = std::nextafter(lo, xi);
    while (hi - xi > epsilon) hi = std::nextafter(hi, xi);
    out.pixels[i] = std::clamp(out.pixels[i], lo, hi);
  }
  return out;
}

bool momentum_accumulate(AdvState& state, std::span<const double> delta, double theta) {
  if (delta.size() != state.momentum.size()) throw ShapeError("momentum_accumulate: delta size mismatch");
  double norm = 0.0;
  for (double d : delta) norm += std::abs(d);
  for (double& m : state.momentum) m *= theta;
  if (norm == 0.0) return false;
  for (std::size_t i = 0; i < delta.size(); ++i) state.momentum[i] += delta[i] / norm;
  return true;
}

void check_adv_invariants(const AdvState& state, double epsilon) {
  for (std::size_t i = 0; i < state.x.pixels.size(); ++i) {
    const double a = state.x_adv.pixels[i];
    if (!(a >= 0.0 && a <= 1.0) || std::abs(a - state.x.pixels[i]) > epsilon) {
      throw InvariantViolation("adversarial pixel " + std::to_string(i) + " = " + std::to_string(a) +
                               " leaves the epsilon ball or [0,1] at iteration " + std::to_string(state.iteration));
    }
  }
}

void attack_step(std::span<AdvState> states, const FeatureFn& f, const Tensor& references, const AttackConfig& cfg) {
  if (states.empty()) return;
  std::vector<Image> current;
  current.reserve(states.size());
  for (const AdvState& s : states) current.push_back(s.x_adv);
  Tensor x = images_to_tensor(current);
  x.set_requires_grad(true);

  Tape tape;
  Tensor feats = f(tape, x);
  if (feats.shape() != references.shape()) {
    throw ShapeError("attack_step: features " + shape_str(feats.shape()) + " vs references " +
                     shape_str(references.shape()));
  }
  Tensor d = squared_l2_distance(tape, feats, references.detached());
  tape.backward(d);

  const std::size_t per = current.front().pixels.size();
  std::span<const double> grad = x.grad();
  for (std::size_t b = 0; b < states.size(); ++b) {
    AdvState& s = states[b];
    std::span<const double> delta = grad.empty() ? std::span<const double>() : grad.subspan(b * per, per);
    const bool moved = !delta.empty() && momentum_accumulate(s, delta, cfg.theta);
    if (!moved) {
      if (delta.empty()) {
        for (double& m : s.momentum) m *= cfg.theta;
      }
      ++s.skipped_steps;
    }
    Image stepped = s.x_adv;
    for (std::size_t i = 0; i < per; ++i) {
      const double m = s.momentum[i];
      stepped.pixels[i] += cfg.alpha * static_cast<double>((m > 0.0) - (m < 0.0));
    }
    s.x_adv = clip_project(stepped, s.x, cfg.epsilon);
    ++s.iteration;
    check_adv_invariants(s, cfg.epsilon);
  }
}

AdvState attack_step(const AdvState& state, const FeatureFn& f, const Tensor& reference, const AttackConfig& cfg) {
  AdvState s = state;
  Tensor ref = reference.rank() == 1 ? Tensor({1, reference.dim(0)}, std::vector<double>(reference.data().begin(),
                                                                                          reference.data().end()))
                                     : reference;
  attack_step(std::span<AdvState>(&s, 1), f, ref, cfg);
  return s;
}

std::vector<AdvState> lta_attack(const FeatureFn& f, std::span<const Image> xs, const AttackConfig& cfg,
                                 std::span<Rng> rngs, RectSampler sampler) {
  cfg.validate();
  if (rngs.size() != xs.size()) throw std::invalid_argument("lta_attack: one rng per image required");
  if (xs.empty()) return {};
  Tensor cached;
  ReferenceFn refs = [&](int n) {
    if (cfg.single_reference && n > 0) return cached;
    std::vector<Image> lgt;
    lgt.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      lgt.push_back(local_grayscale_transform(xs[i], sampler(rngs[i], xs[i].height, xs[i].width)));
    }
    cached = features_of(f, lgt);
    return cached;
  };
  return run_attack(f, xs, std::vector<Image>(xs.begin(), xs.end()), cfg, refs);
}

AdvState lta_attack(const FeatureFn& f, const Image& x, const AttackConfig& cfg, Rng& rng, RectSampler sampler) {
  return lta_attack(f, std::span<const Image>(&x, 1), cfg, std::span<Rng>(&rng, 1), sampler).front();
}

std::vector<AdvState> sma_attack(const FeatureFn& f, std::span<const Image> xs, const AttackConfig& cfg,
                                 std::span<Rng> rngs) {
  cfg.validate();
  if (rngs.size() != xs.size()) throw std::invalid_argument("sma_attack: one rng per image required");
  if (xs.empty()) return {};
  std::vector<Image> starts;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Image noisy = xs[i];
    if (cfg.random_init) {
      for (double& v : noisy.pixels) v += uniform(rngs[i], -cfg.epsilon, cfg.epsilon);
    }
    starts.push_back(clip_project(noisy, xs[i], cfg.epsilon));
  }
  const Tensor clean = features_of(f, xs);
  return run_attack(f, xs, std::move(starts), cfg, [&](int) { return clean; });
}

AdvState sma_attack(const FeatureFn& f, const Image& x, const AttackConfig& cfg, Rng& rng) {
  return sma_attack(f, std::span<const Image>(&x, 1), cfg, std::span<Rng>(&rng, 1)).front();
}

std::vector<AdvState> mifgsm_attack(const FeatureFn& f, std::span<const Image> xs,
                                    std::span<const std::vector<Image>> refs, const AttackConfig& cfg) {
  cfg.validate();
  if (refs.size() != xs.size()) throw std::invalid_argument("mifgsm_attack: one reference list per image required");
  if (xs.empty()) return {};
  Tensor mean;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (refs[i].empty()) throw std::invalid_argument("mifgsm_attack: empty reference list for image " + std::to_string(i));
    Tensor fr = features_of(f, refs[i]);
    const std::size_t dim = fr.dim(1);
    if (i == 0) mean = Tensor({xs.size(), dim});
    for (std::size_t r = 0; r < refs[i].size(); ++r) {
      for (std::size_t k = 0; k < dim; ++k) mean[i * dim + k] += fr[r * dim + k];
    }
    for (std::size_t k = 0; k < dim; ++k) mean[i * dim + k] /= static_cast<double>(refs[i].size());
  }
  return run_attack(f, xs, std::vector<Image>(xs.begin(), xs.end()), cfg, [&](int) { return mean; });
}

AdvState mifgsm_attack(const FeatureFn& f, const Image& x, const std::vector<Image>& refs, const AttackConfig& cfg) {
  return mifgsm_attack(f, std::span<const Image>(&x, 1), std::span<const std::vector<Image>>(&refs, 1), cfg).front();
}

std::vector<AdvState> attack_query_set(const FeatureFn& f, std::span<const LabeledImage> queries, AttackKind kind,
                                       const AttackConfig& cfg, std::uint64_t seed, unsigned threads) {
  AttackConfig run_cfg = cfg;
  if (kind == AttackKind::kLtaStar) run_cfg.single_reference = true;
  if (kind == AttackKind::kLta) run_cfg.single_reference = false;
  run_cfg.validate();

  const std::size_t n = queries.size();
  std::vector<Image> xs;
  std::vector<Rng> rngs;
  for (std::size_t i = 0; i < n; ++i) {
    xs.push_back(queries[i].image);
    rngs.push_back(derive_rng(seed, {kAttackTag, i}));
  }

  std::vector<std::vector<Image>> refs;
  if (kind == AttackKind::kMifgsm) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> same;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && queries[j].identity == queries[i].identity) same.push_back(j);
      }
      Rng pick = derive_rng(seed, {kRefTag, i});
      std::shuffle(same.begin(), same.end(), pick);
      same.resize(std::min<std::size_t>(same.size(), static_cast<std::size_t>(run_cfg.n_refs)));
      std::ranges::sort(same);
      std::vector<Image> r;
      for (std::size_t j : same) r.push_back(queries[j].image);
      refs.push_back(std::move(r));
    }
  }

  std::vector<AdvState> out(n);
  const std::size_t chunks = (n + kAttackChunk - 1) / kAttackChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kAttackChunk;
    const std::size_t len = std::min(n, lo + kAttackChunk) - lo;
    std::span<const Image> x = std::span<const Image>(xs).subspan(lo, len);
    std::span<Rng> r = std::span<Rng>(rngs).subspan(lo, len);
    std::vector<AdvState> part;
    switch (kind) {
      case AttackKind::kMifgsm:
        part = mifgsm_attack(f, x, std::span<const std::vector<Image>>(refs).subspan(lo, len), run_cfg);
        break;
      case AttackKind::kSma: part = sma_attack(f, x, run_cfg, r); break;
      case AttackKind::kLtaStar:
      case AttackKind::kLta: part = lta_attack(f, x, run_cfg, r); break;
    }
    std::move(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
  });
  return out;
}

}  // namespace mal
