// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Pass --quick to shrink the trained-model criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mal/attacks.hpp"
#include "mal/dataset.hpp"
#include "mal/defense.hpp"
#include "mal/gradcheck.hpp"
#include "mal/harness.hpp"
#include "mal/ops.hpp"
#include "mal/retrieval.hpp"
#include "mal/transforms.hpp"

using namespace mal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::vector<std::pair<int, Outcome>> g_results;

void report(int id, const char* title, const Outcome& o) {
  std::printf("criterion %d %-28s %s  %s\n", id, title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  g_results.emplace_back(id, o);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                     double min_abs = 0.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) {
    do {
      v = dist(rng);
    } while (std::abs(v) < min_abs);
  }
  return t;
}

// Pool inputs keep window entries apart by more than the step.
Tensor distinct_tensor(const Shape& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  std::vector<double> vals(t.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = -1.0 + 0.02 * static_cast<double>(i);
  std::shuffle(vals.begin(), vals.end(), rng);
  std::copy(vals.begin(), vals.end(), t.data().begin());
  return t;
}

Image random_image(Rng& rng, int h, int w) {
  Image img(h, w);
  for (double& v : img.pixels) v = uniform(rng, 0.0, 1.0);
  return img;
}

Outcome gradient_checks() {
  double worst = 0.0;
  int checks = 0, failed = 0;
  auto run = [&](const ScalarFunction& f, const Tensor& x, GradientCheckOptions opts = {}) {
    GradientReport r = check_gradient(f, x, opts);
    worst = std::max(worst, r.max_rel_error);
    ++checks;
    failed += !(r.passed && r.max_rel_error < 1e-3);
  };

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor w = random_tensor({3, 4}, rng), other = random_tensor({2, 3}, rng), vec = random_tensor({2, 3}, rng);
    Tensor proj = random_tensor({2, 3}, rng), proj24 = random_tensor({2, 4}, rng);
    auto project = [proj](Tape& t, const Tensor& v) { return sum(t, mul(t, v, proj)); };
    run([&](Tape& t, const Tensor& v) { return project(t, add(t, v, other)); }, vec);
    run([&](Tape& t, const Tensor& v) { return project(t, sub(t, other, v)); }, vec);
    run([&](Tape& t, const Tensor& v) { return project(t, mul(t, v, v)); }, vec);
    run([&](Tape& t, const Tensor& v) { return sum(t, mul(t, matmul(t, v, w), proj24)); }, vec);
    run([&](Tape& t, const Tensor& v) { return sum(t, mul(t, matmul(t, vec, v), proj24)); }, w);

    Tensor lw = random_tensor({4, 3}, rng), lb = random_tensor({4}, rng);
    run([&](Tape& t, const Tensor& v) { return sum(t, mul(t, linear(t, v, lw, lb), proj24)); }, vec);
    run([&](Tape& t, const Tensor& v) { return sum(t, mul(t, linear(t, vec, v, lb), proj24)); }, lw);
    run([&](Tape& t, const Tensor& v) { return sum(t, mul(t, linear(t, vec, lw, v), proj24)); }, lb);

    Tensor img = random_tensor({2, 2, 5, 4}, rng), kern = random_tensor({3, 2, 3, 3}, rng);
    Tensor kb = random_tensor({3}, rng), cproj = random_tensor({2, 3, 5, 4}, rng);
    auto conv_loss = [&](Tape& t, const Tensor& x, const Tensor& k, const Tensor& b) {
      return sum(t, mul(t, conv2d(t, x, k, b, 1), cproj));
    };
    run([&](Tape& t, const Tensor& v) { return conv_loss(t, v, kern, kb); }, img);
    run([&](Tape& t, const Tensor& v) { return conv_loss(t, img, v, kb); }, kern);
    run([&](Tape& t, const Tensor& v) { return conv_loss(t, img, kern, v); }, kb);

    run([&](Tape& t, const Tensor& v) { return project(t, relu(t, v)); }, random_tensor({2, 3}, rng, -1, 1, 0.05));
    Tensor pproj = random_tensor({1, 2, 2, 2}, rng);
    run([&](Tape& t, const Tensor& v) { return sum(t, mul(t, max_pool2x2(t, v), pproj)); },
        distinct_tensor({1, 2, 4, 4}, rng));
    Tensor fproj = random_tensor({2, 6}, rng);
    run([&](Tape& t, const Tensor& v) { return sum(t, mul(t, flatten(t, v), fproj)); }, random_tensor({2, 2, 3}, rng));
    Tensor mproj = random_tensor({3}, rng);
    run([&](Tape& t, const Tensor& v) { return sum(t, mul(t, batch_mean(t, v), mproj)); }, vec);
    std::vector<int> targets{2, 0};
    run([&](Tape& t, const Tensor& v) { return batch_mean(t, softmax_cross_entropy(t, v, targets)); },
        random_tensor({2, 4}, rng, -2, 2));
    run([&](Tape& t, const Tensor& v) { return squared_l2_distance(t, v, other); }, vec);
    run([&](Tape& t, const Tensor& v) { return squared_l2_distance(t, other, v); }, vec);
  }

  // Composed network: every pixel and weight of a small net, and a sampled
  // subset of pixels of the full-size net.
  EmbedNetConfig small;
  small.input_height = 16;
  small.input_width = 8;
  small.channels = {3, 4};
  small.embedding_dim = 5;
  small.num_classes = 3;
  GradientCheckOptions net_opts;
  net_opts.step = 1e-6;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const EmbedNetConfig& cfg : {small, EmbedNetConfig{}}) {
      const bool full = cfg.input_height == 64;
      EmbedNetParams p = init_embed_net(cfg, seed);
      Rng rng = derive_rng(100 + seed, {});
      // Biases start at zero, which puts units fed only by dead inputs exactly
      // on the ReLU kink. Check at a generic point instead.
      for (Tensor& b : p.conv_bias)
        for (double& v : b.data()) v = uniform(rng, -0.1, 0.1);
      Image a = random_image(rng, cfg.input_height, cfg.input_width);
      Image b = random_image(rng, cfg.input_height, cfg.input_width);
      Tensor ref = extract_features(p, std::span<const Image>(&b, 1));
      FeatureFn f = feature_fn(p);
      GradientCheckOptions opts = net_opts;
      if (full) {
        opts.max_coords = 150;
        opts.seed = seed;
      }
      run([&](Tape& t, const Tensor& x) { return sum(t, squared_l2_distance(t, f(t, x), ref)); }, image_to_tensor(a),
          opts);
      if (full) continue;

      const Tensor batch = images_to_tensor(std::vector<Image>{a, b, random_image(rng, 16, 8)});
      const std::vector<int> labels{0, 1, 2};
      const std::size_t n = p.tensors().size();
      for (std::size_t which = 0; which < n; ++which) {
        run(
            [&](Tape& t, const Tensor& w) {
              EmbedNetParams q = p.frozen();
              if (which < 2 * q.conv_weight.size()) {
                (which % 2 == 0 ? q.conv_weight : q.conv_bias)[which / 2] = w;
              } else {
                Tensor* rest[] = {&q.embed_weight, &q.embed_bias, &q.head_weight, &q.head_bias};
                *rest[which - 2 * q.conv_weight.size()] = w;
              }
              return batch_mean(t, softmax_cross_entropy(t, forward_net(t, q, batch).logits, labels));
            },
            p.tensors()[which].clone(), net_opts);
      }
    }
  }
  return {failed == 0, fmt("%d checks over 5 seeds, %d failed, max rel err %.2e (< 1e-3)", checks, failed, worst)};
}

// ---------------------------------------------------------------- 3

std::optional<double> ap_bruteforce_oracle(std::span<const double> row, std::span<const int> gid,
                                           std::span<const int> gcam, int qid, int qcam) {
  std::vector<std::pair<double, int>> entries;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (gid[j] == qid && gcam[j] == qcam) continue;
    entries.emplace_back(row[j], static_cast<int>(j));
  }
  std::sort(entries.begin(), entries.end());
  double sum = 0.0;
  int positives = 0;
  for (std::size_t pos = 0; pos < entries.size(); ++pos) {
    if (gid[entries[pos].second] != qid) continue;
    int hits = 0;
    for (std::size_t k = 0; k <= pos; ++k) hits += gid[entries[k].second] == qid;
    sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
    ++positives;
  }
  if (positives == 0) return std::nullopt;
  return sum / positives;
}

Outcome metric_oracle() {
  Rng rng = derive_rng(3, {});
  int disagreements = 0, non_monotone = 0;
  for (int t = 0; t < 100; ++t) {
    const int nq = uniform_int(rng, 1, 6), ng = uniform_int(rng, 1, 20), ids = uniform_int(rng, 1, 4);
    Tensor d({static_cast<std::size_t>(nq), static_cast<std::size_t>(ng)});
    for (double& v : d.data()) v = uniform_int(rng, 0, 6);
    std::vector<int> qid, qcam, gid, gcam;
    for (int i = 0; i < nq; ++i) {
      qid.push_back(uniform_int(rng, 0, ids - 1));
      qcam.push_back(uniform_int(rng, 0, 2));
    }
    for (int j = 0; j < ng; ++j) {
      gid.push_back(uniform_int(rng, 0, ids - 1));
      gcam.push_back(uniform_int(rng, 0, 2));
    }
    const RetrievalLabels labels{qid, gid, qcam, gcam};
    double sum = 0.0;
    int valid = 0;
    for (int q = 0; q < nq; ++q) {
      auto ap = ap_bruteforce_oracle(d.data().subspan(static_cast<std::size_t>(q * ng), ng), gid, gcam, qid[q], qcam[q]);
      if (!ap) continue;
      sum += *ap;
      ++valid;
    }
    disagreements += mean_average_precision(d, labels) != (valid ? sum / valid : 0.0);
    double prev = 0.0;
    for (int k = 1; k <= ng + 1; ++k) {
      const double r = rank_k_accuracy(d, labels, k);
      non_monotone += r < prev || r > 1.0;
      prev = r;
    }
  }
  return {disagreements == 0 && non_monotone == 0,
          fmt("100 instances: %d mAP disagreements, %d rank-k monotonicity violations", disagreements, non_monotone)};
}

// ---------------------------------------------------------------- 4

Outcome cf_combinatorics() {
  const std::vector<CfVariant> all = enumerate_cf_variants();
  std::size_t constrained = 0;
  std::vector<ChannelArrangement> seen;
  for (const CfVariant& v : all) {
    constrained += v.constrained;
    seen.push_back(v.slots);
  }
  std::sort(seen.begin(), seen.end());
  const bool unique = std::adjacent_find(seen.begin(), seen.end()) == seen.end();
  const bool no_repeats = std::ranges::all_of(all, [](const CfVariant& v) {
    return v.slots[0] != v.slots[1] && v.slots[0] != v.slots[2] && v.slots[1] != v.slots[2];
  });
  const bool ok = all.size() == 60 && constrained == 54 && constrained_cf_arrangements().size() == 54 && unique &&
                  no_repeats;
  return {ok, fmt("%zu arrangements (60), %zu constrained (54), distinct %s", all.size(), constrained,
                  unique && no_repeats ? "yes" : "no")};
}

// ---------------------------------------------------------------- 9

bool in_unit_range(const Image& img) {
  return std::ranges::all_of(img.pixels, [](double v) { return v >= 0.0 && v <= 1.0; });
}

bool outside_unchanged(const Image& before, const Image& after, const Rect& r) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < before.height; ++y)
      for (int x = 0; x < before.width; ++x)
        if (!r.contains(y, x) && before.at(c, y, x) != after.at(c, y, x)) return false;
  return true;
}

// Changed pixels must fit in one rectangle no larger than rand_rect allows.
bool changes_fit_in_rect(const Image& before, const Image& after) {
  int y0 = before.height, y1 = -1, x0 = before.width, x1 = -1;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < before.height; ++y)
      for (int x = 0; x < before.width; ++x)
        if (before.at(c, y, x) != after.at(c, y, x)) {
          y0 = std::min(y0, y), y1 = std::max(y1, y), x0 = std::min(x0, x), x1 = std::max(x1, x);
        }
  if (y1 < 0) return true;
  return (y1 - y0 + 1) * (x1 - x0 + 1) <= 0.4 * before.height * before.width + 1e-9;
}

Outcome transform_invariants() {
  int complement = 0, idempotence = 0, closure = 0, fixed_point = 0;
  const int n = 1000;
  const HomogeneousKind modes[] = {HomogeneousKind::kGrayscale, HomogeneousKind::kSketch, HomogeneousKind::kFused,
                                   HomogeneousKind::kAugmented};
  for (int i = 0; i < n; ++i) {
    Rng rng = derive_rng(9, {static_cast<std::uint64_t>(i)});
    const int h = 2 * uniform_int(rng, 4, 40), w = 2 * uniform_int(rng, 4, 20);
    const Image x = random_image(rng, h, w);

    // LGT with an explicit rectangle, LHT with the rectangle replayed.
    Rng replay = rng;
    const Image lgt = local_grayscale_transform(x, rng);
    const Rect r = rand_rect(replay, h, w);
    const HomogeneousKind mode = modes[i % 4];
    Rng lht_rng = derive_rng(10, {static_cast<std::uint64_t>(i)});
    Rng lht_replay = lht_rng;
    const Image lht = local_homogeneous_transform(x, mode, lht_rng);
    bool ok = outside_unchanged(x, lgt, r) && changes_fit_in_rect(x, lht);
    if (mode == HomogeneousKind::kGrayscale || mode == HomogeneousKind::kSketch) {
      ok = ok && outside_unchanged(x, lht, rand_rect(lht_replay, h, w));
    }
    complement += ok;

    const Image g = to_grayscale3(x);
    idempotence += to_grayscale3(g) == g;

    const Image cf = channel_fusion(x, rng);
    const Image aug = random_augment(x, rng);
    const Image resized = bilinear_resize(x, uniform_int(rng, 1, 90), uniform_int(rng, 1, 50));
    const Image cs = circuitous_scale(x, ScalingPlan::circuitous({h, w}));
    closure += in_unit_range(lgt) && in_unit_range(lht) && in_unit_range(g) && in_unit_range(to_sketch(x)) &&
               in_unit_range(cf) && in_unit_range(aug) && in_unit_range(resized) && in_unit_range(cs);

    Image flat(h, w);
    for (int c = 0; c < 3; ++c) std::ranges::fill(flat.plane(c), uniform(rng, 0.0, 1.0));
    const int oh = uniform_int(rng, 1, 128), ow = uniform_int(rng, 1, 64);
    const Image fr = bilinear_resize(flat, oh, ow);
    bool fixed = fr.height == oh && fr.width == ow;
    for (int c = 0; c < 3 && fixed; ++c) {
      fixed = std::ranges::all_of(fr.plane(c), [&](double v) { return std::abs(v - flat.at(c, 0, 0)) <= 1e-12; });
    }
    fixed_point += fixed;
  }
  const bool ok = complement == n && idempotence == n && closure == n && fixed_point == n;
  return {ok, fmt("complement %d/%d, gray idempotent %d/%d, [0,1] closure %d/%d, constant resize %d/%d", complement, n,
                  idempotence, n, closure, n, fixed_point, n)};
}

// ---------------------------------------------------------------- 2, 5, 6, 7

struct Cell {
  double sum = 0.0;
  int n = 0;
  void add(double v) { sum += v, ++n; }
  double mean() const { return n ? sum / n : 0.0; }
};

// mean rank-1 keyed by (model, attack, defense plan)
using Table = std::map<std::tuple<std::string, std::string, std::string>, Cell>;

struct EpsilonTally {
  long checked = 0, violations = 0;
  double worst = 0.0;
};

void score_model(Table& table, const std::string& model_name, const EmbedNetParams& params, const Dataset& ds,
                 std::uint64_t attack_seed, EpsilonTally* tally) {
  const AttackConfig cfg;
  const ImageSize in{params.config.input_height, params.config.input_width};
  const ScalingPlan cs = ScalingPlan::circuitous(in), p1 = ScalingPlan::single_resize(in);
  auto score = [&](std::span<const LabeledImage> q, const std::string& attack) {
    table[{model_name, attack, "none"}].add(evaluate_retrieval(params, q, ds.gallery).rank1);
    table[{model_name, attack, "CS"}].add(evaluate_retrieval(params, q, ds.gallery, &cs).rank1);
    table[{model_name, attack, "P1"}].add(evaluate_retrieval(params, q, ds.gallery, &p1).rank1);
  };
  score(ds.query, kNoAttack);
  const FeatureFn f = feature_fn(params);
  for (AttackKind k : kAllAttacks) {
    const std::vector<AdvState> states = attack_query_set(f, ds.query, k, cfg, attack_seed);
    std::vector<LabeledImage> adv = ds.query;
    for (std::size_t i = 0; i < adv.size(); ++i) {
      adv[i].image = states[i].x_adv;
      if (tally && i < 200 && k != AttackKind::kLtaStar) {
        const double d = linf_distance(states[i].x_adv, states[i].x);
        tally->worst = std::max(tally->worst, d);
        ++tally->checked;
        tally->violations += !(d <= cfg.epsilon) || !in_unit_range(states[i].x_adv);
      }
    }
    score(adv, std::string(attack_name(k)));
  }
}

// ---------------------------------------------------------------- 8

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_files(const fs::path& a, const fs::path& b) {
  std::vector<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.push_back(e.path().filename().string());
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) return false;
  return std::ranges::all_of(na, [&](const std::string& f) { return slurp(a / f) == slurp(b / f); });
}

bool same_split(const std::vector<LabeledImage>& a, const std::vector<LabeledImage>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].image == b[i].image) || a[i].identity != b[i].identity || a[i].camera != b[i].camera) return false;
  }
  return true;
}

Outcome determinism(const Dataset& ds, const EmbedNetParams& trained) {
  std::vector<std::string> broken;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) broken.emplace_back(what);
  };

  const Dataset d4 = generate_dataset(DatasetConfig{}, 4);
  expect(same_split(ds.train, d4.train) && same_split(ds.query, d4.query) && same_split(ds.gallery, d4.gallery),
         "dataset");

  const fs::path root = fs::temp_directory_path() / "mal_acceptance_determinism";
  fs::remove_all(root);
  save_split(ds.query, root / "a");
  save_split(d4.query, root / "b");
  expect(same_files(root / "a", root / "b"), "written split");

  DatasetConfig small_data;
  small_data.n_train_ids = 6;
  small_data.n_test_ids = 2;
  const Dataset sd = generate_dataset(small_data);
  EmbedNetConfig net;
  net.num_classes = 6;
  TrainConfig tc;
  tc.epochs = 2;
  for (bool jad : {false, true}) {
    tc.jad = jad;
    const TrainResult r1 = train_model(sd.train, DefenseSchedule{}, tc, net);
    const TrainResult r2 = train_model(sd.train, DefenseSchedule{}, tc, net);
    expect(r1.params.same_as(r2.params) && r1.log.transform_counts == r2.log.transform_counts &&
               r1.log.epochs.back().loss == r2.log.epochs.back().loss,
           jad ? "JAD training" : "baseline training");
    save_params(r1.params, root / "m1.bin");
    save_params(r2.params, root / "m2.bin");
    expect(slurp(root / "m1.bin") == slurp(root / "m2.bin"), "model file");
  }

  const std::vector<LabeledImage> subset(ds.query.begin(), ds.query.begin() + 24);
  const FeatureFn f = feature_fn(trained);
  for (AttackKind k : kAllAttacks) {
    const auto a = attack_query_set(f, subset, k, AttackConfig{}, 5, 1);
    const auto b = attack_query_set(f, subset, k, AttackConfig{}, 5, 4);
    const auto c = attack_query_set(f, subset, k, AttackConfig{}, 5, 1);
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i].x_adv == b[i].x_adv && a[i].x_adv == c[i].x_adv;
    expect(same, "attack");
    std::vector<LabeledImage> adv_a = subset, adv_b = subset;
    for (std::size_t i = 0; i < subset.size(); ++i) adv_a[i].image = a[i].x_adv, adv_b[i].image = b[i].x_adv;
    save_split(adv_a, root / "adv_a");
    save_split(adv_b, root / "adv_b");
    expect(same_files(root / "adv_a", root / "adv_b"), "adversarial manifest");
  }

  const ScalingPlan cs = ScalingPlan::circuitous({64, 32});
  expect(evaluate_retrieval(trained, ds.query, ds.gallery, &cs, 1) ==
             evaluate_retrieval(trained, ds.query, ds.gallery, &cs, 4),
         "metrics");

  HarnessOptions h1;
  h1.attack.iterations = 3;
  HarnessOptions h3 = h1;
  h3.threads = 3;
  expect(report_to_json(run_harness(trained, &trained, subset, ds.gallery, h1, "x")) ==
             report_to_json(run_harness(trained, &trained, subset, ds.gallery, h3, "x")),
         "report");
  fs::remove_all(root);

  std::string detail = "dataset, written splits, training (baseline, JAD), model files, 4 attacks, metrics, report";
  if (!broken.empty()) {
    detail = "differs:";
    for (const std::string& b : broken) detail += " " + b;
  }
  return {broken.empty(), detail + "; threads 1 vs 3/4"};
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  const auto t0 = std::chrono::steady_clock::now();

  report(1, "gradient correctness", gradient_checks());
  report(3, "metric oracle", metric_oracle());
  report(4, "CF combinatorics", cf_combinatorics());
  report(9, "transform invariants", transform_invariants());

  const Dataset ds = generate_dataset(DatasetConfig{});
  const std::vector<std::uint64_t> seeds = quick ? std::vector<std::uint64_t>{1} : std::vector<std::uint64_t>{1, 2, 3};
  TrainConfig tc;
  if (quick) tc.epochs = 6;
  Table table;
  EpsilonTally tally;
  EmbedNetParams first_baseline;
  for (std::uint64_t seed : seeds) {
    tc.seed = seed;
    tc.jad = false;
    const EmbedNetParams base = train_model(ds.train, DefenseSchedule{}, tc, EmbedNetConfig{}).params;
    tc.jad = true;
    const EmbedNetParams jad = train_model(ds.train, DefenseSchedule{}, tc, EmbedNetConfig{}).params;
    score_model(table, "baseline", base, ds, 4 + seed, seed == seeds.front() ? &tally : nullptr);
    score_model(table, "JAD", jad, ds, 4 + seed, nullptr);
    if (seed == seeds.front()) first_baseline = base;
    std::printf("  seed %llu trained and attacked (%.0f s elapsed)\n", static_cast<unsigned long long>(seed),
                seconds_since(t0));
    std::fflush(stdout);
  }
  auto r1 = [&](const char* model, const char* attack, const char* plan) {
    return 100.0 * table.at({model, attack, plan}).mean();
  };

  report(2, "epsilon-ball invariant",
         {tally.violations == 0 && tally.checked == 3 * 200,
          fmt("%ld adversarial images (3 attacks x 200), %ld violations, max L-inf %.3f/255", tally.checked,
              tally.violations, tally.worst * 255.0)});

  std::printf("  mean Rank-1 over %zu seed(s):\n  %-8s %-8s %7s %7s %7s\n", seeds.size(), "model", "attack", "none",
              "CS", "P1");
  for (const char* model : {"baseline", "JAD"}) {
    for (const char* attack : {kNoAttack, "M-IFGSM", "SMA", "LTA*", "LTA"}) {
      std::printf("  %-8s %-9s %6.2f %7.2f %7.2f\n", model, attack, r1(model, attack, "none"), r1(model, attack, "CS"),
                  r1(model, attack, "P1"));
    }
  }

  {
    const double clean = r1("baseline", kNoAttack, "none");
    bool ok = clean >= 90.0;
    std::string drops;
    for (const char* a : {"M-IFGSM", "SMA", "LTA*", "LTA"}) {
      const double rel = 1.0 - r1("baseline", a, "none") / clean;
      ok = ok && rel >= 0.5;
      drops += fmt(" %s %.0f%%", a, 100.0 * rel);
    }
    const double lta = r1("baseline", "LTA", "none"), star = r1("baseline", "LTA*", "none"),
                 sma = r1("baseline", "SMA", "none");
    ok = ok && lta <= star + 2.0 && lta <= sma + 5.0;
    report(5, "attack efficacy",
           {ok, fmt("clean %.2f (>= 90); relative drops (>= 50%%):%s; LTA %.2f vs LTA*+2 %.2f, SMA+5 %.2f", clean,
                    drops.c_str(), lta, star + 2.0, sma + 5.0)});
  }
  {
    const double cost = r1("baseline", kNoAttack, "none") - r1("baseline", kNoAttack, "CS");
    const double gain = r1("baseline", "LTA", "CS") - r1("baseline", "LTA", "none");
    const double p1_gain = r1("baseline", "LTA", "P1") - r1("baseline", "LTA", "none");
    report(6, "passive defense (CS)",
           {cost < 2.0 && gain >= 8.0 && gain >= p1_gain,
            fmt("clean cost %.2f (< 2); LTA gain %.2f (>= 8); chain gain %.2f >= single-P1 gain %.2f", cost, gain,
                gain, p1_gain)});
  }
  {
    const double loss = r1("baseline", kNoAttack, "none") - r1("JAD", kNoAttack, "none");
    const double gain = r1("JAD", "SMA", "none") - r1("baseline", "SMA", "none");
    bool cs_ok = true;
    std::string cs_detail;
    for (const char* a : {"M-IFGSM", "SMA", "LTA*", "LTA"}) {
      cs_ok = cs_ok && r1("JAD", a, "CS") >= r1("JAD", a, "none");
      cs_detail += fmt(" %s %.2f/%.2f", a, r1("JAD", a, "CS"), r1("JAD", a, "none"));
    }
    report(7, "proactive defense (JAD)",
           {loss < 3.0 && gain >= 10.0 && cs_ok,
            fmt("clean loss %.2f (< 3); SMA gain %.2f (>= 10); JAD+CS/JAD:%s", loss, gain, cs_detail.c_str())});
  }

  report(8, "determinism", determinism(ds, first_baseline));

  std::sort(g_results.begin(), g_results.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  int failed = 0;
  std::printf("summary:");
  for (const auto& [id, o] : g_results) {
    std::printf(" %d:%s", id, o.pass ? "PASS" : "FAIL");
    failed += !o.pass;
  }
  std::printf("  (%d failed, %.0f s)\n", failed, seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
