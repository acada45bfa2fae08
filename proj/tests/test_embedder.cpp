#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mal/dataset.hpp"
#include "mal/embedder.hpp"
#include "mal/gradcheck.hpp"
#include "mal/ops.hpp"

using namespace mal;
namespace fs = std::filesystem;

namespace {

EmbedNetConfig small_config() {
  EmbedNetConfig c;
  c.input_height = 16;
  c.input_width = 8;
  c.channels = {3, 4};
  c.embedding_dim = 5;
  c.num_classes = 3;
  return c;
}

Image random_image(int h, int w, Rng& rng) {
  Image x(h, w);
  for (double& v : x.pixels) v = uniform(rng, 0.0, 1.0);
  return x;
}

std::vector<Image> random_images(int n, int h, int w, std::uint64_t seed) {
  Rng rng = derive_rng(seed, {});
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(random_image(h, w, rng));
  return out;
}

bool rows_equal(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  const std::size_t d = a.dim(1);
  for (std::size_t k = 0; k < d; ++k) {
    if (a[ra * d + k] != b[rb * d + k]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  EmbedNetConfig c;
  CHECK_NOTHROW(c.validate());
  c.embedding_dim = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = EmbedNetConfig{};
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("init is deterministic per seed") {
  EmbedNetConfig c;
  CHECK(init_embed_net(c, 3).same_as(init_embed_net(c, 3)));
  CHECK_FALSE(init_embed_net(c, 3).same_as(init_embed_net(c, 4)));
}

TEST_CASE("fresh net gives finite logits of the right shape") {
  EmbedNetParams p = init_embed_net(EmbedNetConfig{}, 1);
  auto imgs = random_images(4, 64, 32, 2);
  Tape tape;
  NetOutput out = forward_net(tape, p, images_to_tensor(imgs));
  CHECK(out.features.shape() == Shape{4, 64});
  CHECK(out.logits.shape() == Shape{4, 50});
  for (double v : out.logits.data()) CHECK(std::isfinite(v));
}

TEST_CASE("embed_batch rejects the wrong input size") {
  EmbedNetParams p = init_embed_net(EmbedNetConfig{}, 1);
  auto imgs = random_images(1, 32, 32, 2);
  Tape tape;
  CHECK_THROWS(embed_batch(tape, p, images_to_tensor(imgs)));
}

TEST_CASE("a feature row does not depend on the rest of the batch") {
  EmbedNetParams p = init_embed_net(EmbedNetConfig{}, 5);
  auto imgs = random_images(8, 64, 32, 6);
  Tensor batch = extract_features(p, imgs);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    Tensor single = extract_features(p, std::span<const Image>(&imgs[i], 1));
    CHECK(rows_equal(single, 0, batch, i));
  }
}

TEST_CASE("extract_features: normalization, permutation, duplicates, threads") {
  EmbedNetParams p = init_embed_net(EmbedNetConfig{}, 7);
  auto imgs = random_images(40, 64, 32, 8);
  imgs[5] = imgs[2];

  Tensor n = extract_features(p, imgs, true);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 64; ++k) s += n[i * 64 + k] * n[i * 64 + k];
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-5));
  }

  Tensor f = extract_features(p, imgs);
  CHECK(rows_equal(f, 2, f, 5));
  std::vector<Image> rev(imgs.rbegin(), imgs.rend());
  Tensor r = extract_features(p, rev);
  for (std::size_t i = 0; i < imgs.size(); ++i) CHECK(rows_equal(f, i, r, imgs.size() - 1 - i));

  Tensor t = extract_features(p, imgs, false, 4);
  CHECK(t.data().size() == f.data().size());
  CHECK(std::equal(t.data().begin(), t.data().end(), f.data().begin()));
}

TEST_CASE("pixel gradient of the feature distance matches central differences over 5 seeds") {
  const EmbedNetConfig c = small_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EmbedNetParams p = init_embed_net(c, seed);
    auto imgs = random_images(2, c.input_height, c.input_width, 100 + seed);
    Tensor ref = extract_features(p, std::span<const Image>(&imgs[1], 1));
    FeatureFn f = feature_fn(p);
    ScalarFunction d = [&](Tape& tape, const Tensor& x) { return sum(tape, squared_l2_distance(tape, f(tape, x), ref)); };
    GradientCheckOptions opts;
    opts.step = 1e-5;
    GradientReport r = check_gradient(d, image_to_tensor(imgs[0]), opts);
    INFO("seed " << seed << " rel " << r.max_rel_error);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("weight gradients of the classification loss match central differences over 5 seeds") {
  const EmbedNetConfig c = small_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EmbedNetParams base = init_embed_net(c, seed);
    auto imgs = random_images(3, c.input_height, c.input_width, 200 + seed);
    const Tensor batch = images_to_tensor(imgs);
    const std::vector<int> labels{0, 1, 2};
    const std::size_t n_tensors = base.tensors().size();
    for (std::size_t which = 0; which < n_tensors; ++which) {
      ScalarFunction loss = [&](Tape& tape, const Tensor& w) {
        EmbedNetParams p = base.frozen();
        // Swap the checked tensor for the probe handle.
        // tensors() interleaves conv weight and bias per block.
        if (which < 2 * p.conv_weight.size()) {
          (which % 2 == 0 ? p.conv_weight : p.conv_bias)[which / 2] = w;
        } else {
          Tensor* rest[] = {&p.embed_weight, &p.embed_bias, &p.head_weight, &p.head_bias};
          *rest[which - 2 * p.conv_weight.size()] = w;
        }
        return batch_mean(tape, softmax_cross_entropy(tape, forward_net(tape, p, batch).logits, labels));
      };
      GradientCheckOptions opts;
      opts.step = 1e-5;
      GradientReport r = check_gradient(loss, base.tensors()[which].clone(), opts);
      INFO("seed " << seed << " tensor " << which << " rel " << r.max_rel_error);
      CHECK(r.passed);
    }
  }
}

TEST_CASE("learning rate schedule") {
  TrainConfig t;
  t.learning_rate = 0.1;
  t.decay_every = 20;
  CHECK(t.lr_at(0) == 0.1);
  CHECK(t.lr_at(19) == 0.1);
  CHECK(t.lr_at(20) == doctest::Approx(0.01));
  CHECK(t.lr_at(40) == doctest::Approx(0.001));
}

TEST_CASE("training input validation") {
  std::vector<LabeledImage> empty;
  CHECK_THROWS_AS(train_baseline(empty, TrainConfig{}, EmbedNetConfig{}), std::invalid_argument);
  Rng rng = derive_rng(1, {});
  std::vector<LabeledImage> bad{LabeledImage{random_image(64, 32, rng), 50, 0}};
  CHECK_THROWS_AS(train_baseline(bad, TrainConfig{}, EmbedNetConfig{}), std::invalid_argument);
}

TEST_CASE("toy training: initial loss near ln C, deterministic, reaches 95% train accuracy") {
  Dataset ds = generate_dataset(DatasetConfig{});
  TrainConfig t;
  EmbedNetConfig c;
  TrainResult r = train_baseline(ds.train, t, c);
  CHECK(r.log.initial_loss == doctest::Approx(std::log(50.0)).epsilon(0.2));
  REQUIRE(r.log.epochs.size() == 30);
  CHECK(r.log.epochs[0].lr == t.learning_rate);
  CHECK(r.log.epochs[25].lr == doctest::Approx(t.learning_rate * t.lr_decay));
  INFO("final accuracy " << r.log.epochs.back().accuracy);
  CHECK(r.log.epochs.back().accuracy >= 0.95);
  CHECK(evaluate_classifier(r.params, ds.train).second >= 0.95);

  t.epochs = 2;
  TrainResult a = train_baseline(std::span(ds.train).first(200), t, c);
  TrainResult b = train_baseline(std::span(ds.train).first(200), t, c);
  CHECK(a.params.same_as(b.params));
  CHECK(std::abs(a.log.epochs.back().loss - b.log.epochs.back().loss) <= 1e-6);
}

TEST_CASE("save and load round trip through float32") {
  EmbedNetParams p = init_embed_net(EmbedNetConfig{}, 9);
  fs::path dir = fs::temp_directory_path() / "mal_test_embedder";
  fs::create_directories(dir);
  save_params(p, dir / "m.bin");
  EmbedNetParams q = load_params(dir / "m.bin");
  CHECK(q.same_as(round_to_float(p)));
  CHECK(q.config == p.config);

  std::ifstream in(dir / "m.bin", std::ios::binary);
  std::string magic(7, '\0');
  in.read(magic.data(), 7);
  CHECK(magic == "MALNET1");

  { std::ofstream(dir / "bad.bin") << "MALNET0 nope"; }
  CHECK_THROWS(load_params(dir / "bad.bin"));
  CHECK_THROWS(load_params(dir / "missing.bin"));
  fs::resize_file(dir / "m.bin", fs::file_size(dir / "m.bin") - 4);
  CHECK_THROWS(load_params(dir / "m.bin"));
  fs::remove_all(dir);
}
