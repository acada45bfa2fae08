#include "mal/embedder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mal/ops.hpp"
#include "mal/optim.hpp"
#include "mal/parallel.hpp"

namespace mal {
namespace {

constexpr std::uint64_t kInitTag = 0x11;
constexpr std::uint64_t kShuffleTag = 0x5f;
constexpr std::uint64_t kSampleTag = 0x5a;
constexpr std::size_t kFeatureChunk = 32;

struct LayerShapes {
  std::vector<Shape> conv_weight, conv_bias;
  Shape embed_weight, embed_bias, head_weight, head_bias;
  std::size_t flat_dim = 0;
};

LayerShapes layer_shapes(const EmbedNetConfig& cfg) {
  LayerShapes s;
  std::size_t in_c = 3, h = cfg.input_height, w = cfg.input_width;
  for (int c : cfg.channels) {
    s.conv_weight.push_back({static_cast<std::size_t>(c), in_c, 3, 3});
    s.conv_bias.push_back({static_cast<std::size_t>(c)});
    in_c = c;
    h /= 2;
    w /= 2;
  }
  s.flat_dim = in_c * h * w;
  const auto emb = static_cast<std::size_t>(cfg.embedding_dim);
  const auto classes = static_cast<std::size_t>(cfg.num_classes);
  s.embed_weight = {emb, s.flat_dim};
  s.embed_bias = {emb};
  s.head_weight = {classes, emb};
  s.head_bias = {classes};
  return s;
}

Tensor normal_tensor(const Shape& shape, double stddev, std::uint64_t seed, std::uint64_t layer) {
  Rng rng = derive_rng(seed, {kInitTag, layer});
  Tensor t(shape);
  for (double& v : t.data()) v = normal(rng, 0.0, stddev);
  return t;
}

EmbedNetParams map_tensors(const EmbedNetParams& p, const std::function<Tensor(const Tensor&)>& fn) {
  EmbedNetParams out;
  out.config = p.config;
  out.seed = p.seed;
  for (const Tensor& t : p.conv_weight) out.conv_weight.push_back(fn(t));
  for (const Tensor& t : p.conv_bias) out.conv_bias.push_back(fn(t));
  out.embed_weight = fn(p.embed_weight);
  out.embed_bias = fn(p.embed_bias);
  out.head_weight = fn(p.head_weight);
  out.head_bias = fn(p.head_bias);
  return out;
}

void check_input(const EmbedNetParams& params, const Tensor& images) {
  const Shape& s = images.shape();
  const auto h = static_cast<std::size_t>(params.config.input_height);
  const auto w = static_cast<std::size_t>(params.config.input_width);
  if (s.size() != 4 || s[1] != 3 || s[2] != h || s[3] != w) {
    throw ShapeError("embed_batch: expected [N,3," + std::to_string(h) + "," + std::to_string(w) + "], got " +
                     shape_str(s));
  }
}

}  // namespace

void EmbedNetConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("EmbedNetConfig: need at least one conv block");
  if (embedding_dim <= 0) throw std::invalid_argument("EmbedNetConfig: embedding_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("EmbedNetConfig: num_classes must be at least 2");
  for (int c : channels) {
    if (c <= 0) throw std::invalid_argument("EmbedNetConfig: channel widths must be positive");
  }
  const int div = 1 << channels.size();
  if (input_height <= 0 || input_width <= 0 || input_height % div || input_width % div) {
    throw std::invalid_argument("EmbedNetConfig: input size must be a positive multiple of " + std::to_string(div));
  }
}

std::vector<Tensor> EmbedNetParams::tensors() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < conv_weight.size(); ++i) {
    out.push_back(conv_weight[i]);
    out.push_back(conv_bias[i]);
  }
  out.insert(out.end(), {embed_weight, embed_bias, head_weight, head_bias});
  return out;
}

EmbedNetParams EmbedNetParams::trainable() const {
  return map_tensors(*this, [](const Tensor& t) {
    Tensor c = t.detached();
    c.set_requires_grad(true);
    return c;
  });
}

EmbedNetParams EmbedNetParams::frozen() const {
  return map_tensors(*this, [](const Tensor& t) { return t.detached(); });
}

bool EmbedNetParams::same_as(const EmbedNetParams& other) const {
  if (!(config == other.config) || seed != other.seed) return false;
  auto a = tensors();
  auto b = other.tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape() || !std::ranges::equal(a[i].data(), b[i].data())) return false;
  }
  return true;
}

EmbedNetParams init_embed_net(const EmbedNetConfig& config, std::uint64_t seed) {
  config.validate();
  const LayerShapes s = layer_shapes(config);
  EmbedNetParams p;
  p.config = config;
  p.seed = seed;
  std::uint64_t layer = 0;
  for (std::size_t i = 0; i < s.conv_weight.size(); ++i) {
    const double fan_in = static_cast<double>(s.conv_weight[i][1] * 9);
    p.conv_weight.push_back(normal_tensor(s.conv_weight[i], std::sqrt(2.0 / fan_in), seed, layer++));
    p.conv_bias.emplace_back(s.conv_bias[i]);
  }
  p.embed_weight = normal_tensor(s.embed_weight, std::sqrt(1.0 / static_cast<double>(s.flat_dim)), seed, layer++);
  p.embed_bias = Tensor(s.embed_bias);
  p.head_weight = normal_tensor(s.head_weight, 0.01, seed, layer++);
  p.head_bias = Tensor(s.head_bias);
  return p;
}

NetOutput forward_net(Tape& tape, const EmbedNetParams& params, const Tensor& images) {
  Tensor features = embed_batch(tape, params, images);
  Tensor logits = linear(tape, features, params.head_weight, params.head_bias);
  return {features, logits};
}

Tensor embed_batch(Tape& tape, const EmbedNetParams& params, const Tensor& images) {
  check_input(params, images);
  Tensor h = images;
  for (std::size_t i = 0; i < params.conv_weight.size(); ++i) {
    h = conv2d(tape, h, params.conv_weight[i], params.conv_bias[i], 1);
    h = relu(tape, h);
    h = max_pool2x2(tape, h);
  }
  return linear(tape, flatten(tape, h), params.embed_weight, params.embed_bias);
}

Tensor extract_features(const EmbedNetParams& params, std::span<const Image> images, bool normalize,
                        unsigned threads) {
  const auto dim = static_cast<std::size_t>(params.config.embedding_dim);
  Tensor out({images.size(), dim});
  const std::size_t chunks = (images.size() + kFeatureChunk - 1) / kFeatureChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kFeatureChunk;
    const std::size_t hi = std::min(images.size(), lo + kFeatureChunk);
    Tape tape(false);
    Tensor f = embed_batch(tape, params, images_to_tensor(images.subspan(lo, hi - lo)));
    std::copy(f.data().begin(), f.data().end(), out.data().begin() + lo * dim);
  });
  if (normalize) {
    for (std::size_t r = 0; r < images.size(); ++r) {
      auto row = out.data().subspan(r * dim, dim);
      double n = 0.0;
      for (double v : row) n += v * v;
      n = std::sqrt(n);
      if (n > 0.0) {
        for (double& v : row) v /= n;
      }
    }
  }
  return out;
}

FeatureFn feature_fn(const EmbedNetParams& params) {
  return [p = params.frozen()](Tape& tape, const Tensor& images) { return embed_batch(tape, p, images); };
}

double TrainConfig::lr_at(int epoch) const {
  if (decay_every <= 0) return learning_rate;
  return learning_rate * std::pow(lr_decay, epoch / decay_every);
}

std::pair<double, double> evaluate_classifier(const EmbedNetParams& params, std::span<const LabeledImage> dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_classifier: empty dataset");
  double loss = 0.0;
  long correct = 0;
  for (std::size_t lo = 0; lo < dataset.size(); lo += kFeatureChunk) {
    const std::size_t hi = std::min(dataset.size(), lo + kFeatureChunk);
    std::vector<Image> imgs;
    std::vector<int> labels;
    for (std::size_t i = lo; i < hi; ++i) {
      imgs.push_back(dataset[i].image);
      labels.push_back(dataset[i].identity);
    }
    Tape tape(false);
    NetOutput out = forward_net(tape, params, images_to_tensor(imgs));
    Tensor ce = softmax_cross_entropy(tape, out.logits, labels);
    const std::size_t classes = out.logits.dim(1);
    for (std::size_t r = 0; r < labels.size(); ++r) {
      loss += ce[r];
      auto row = out.logits.data().subspan(r * classes, classes);
      correct += std::ranges::max_element(row) - row.begin() == labels[r];
    }
  }
  const auto n = static_cast<double>(dataset.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train_baseline(std::span<const LabeledImage> dataset, const TrainConfig& tcfg,
                           const EmbedNetConfig& config, const SampleTransform& transform) {
  if (dataset.empty()) throw std::invalid_argument("train_baseline: empty dataset");
  if (tcfg.batch_size < 1 || tcfg.epochs < 0) throw std::invalid_argument("train_baseline: bad batch size or epochs");
  for (const LabeledImage& s : dataset) {
    if (s.identity < 0 || s.identity >= config.num_classes) {
      throw std::invalid_argument("train_baseline: label " + std::to_string(s.identity) + " outside [0, " +
                                  std::to_string(config.num_classes) + ")");
    }
  }

  TrainResult result;
  EmbedNetParams params = init_embed_net(config, tcfg.seed).trainable();
  result.log.initial_loss = evaluate_classifier(params, dataset).first;

  std::vector<Tensor> weights = params.tensors();
  std::vector<Tensor> buffers;
  for (const Tensor& w : weights) buffers.emplace_back(w.shape());

  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_rng(tcfg.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const double lr = tcfg.lr_at(epoch);
    double loss_sum = 0.0;
    long correct = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += tcfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(tcfg.batch_size));
      std::vector<Image> imgs;
      std::vector<int> labels;
      for (std::size_t pos = lo; pos < hi; ++pos) {
        const LabeledImage& s = dataset[order[pos]];
        if (transform) {
          Rng rng = derive_rng(tcfg.seed, {kSampleTag, static_cast<std::uint64_t>(epoch), pos});
          imgs.push_back(transform(s, rng, result.log));
        } else {
          imgs.push_back(s.image);
        }
        labels.push_back(s.identity);
      }

      Tape tape;
      NetOutput out = forward_net(tape, params, images_to_tensor(imgs));
      Tensor loss = batch_mean(tape, softmax_cross_entropy(tape, out.logits, labels));
      for (Tensor& w : weights) w.zero_grad();
      tape.backward(loss);

      std::vector<Tensor> grads;
      for (const Tensor& w : weights) grads.emplace_back(w.shape(), std::vector<double>(w.grad().begin(), w.grad().end()));
      sgd_momentum_step(weights, grads, lr, tcfg.momentum, buffers);

      loss_sum += loss.item() * static_cast<double>(labels.size());
      const std::size_t classes = out.logits.dim(1);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        auto row = out.logits.data().subspan(r * classes, classes);
        correct += std::ranges::max_element(row) - row.begin() == labels[r];
      }
    }
    const auto n = static_cast<double>(dataset.size());
    result.log.epochs.push_back(EpochLog{epoch, lr, loss_sum / n, static_cast<double>(correct) / n});
  }
  result.params = params.frozen();
  return result;
}

namespace {

static_assert(std::endian::native == std::endian::little, "MALNET1 payloads assume a little-endian host");

constexpr char kMagic[] = "MALNET1";

std::string config_text(const EmbedNetParams& p) {
  std::ostringstream os;
  os << "input_height=" << p.config.input_height << "\n";
  os << "input_width=" << p.config.input_width << "\n";
  os << "channels=";
  for (std::size_t i = 0; i < p.config.channels.size(); ++i) os << (i ? "," : "") << p.config.channels[i];
  os << "\n";
  os << "embedding_dim=" << p.config.embedding_dim << "\n";
  os << "num_classes=" << p.config.num_classes << "\n";
  os << "seed=" << p.seed << "\n";
  return os.str();
}

}  // namespace

EmbedNetParams round_to_float(const EmbedNetParams& params) {
  return map_tensors(params, [](const Tensor& t) {
    Tensor c = t.detached();
    for (double& v : c.data()) v = static_cast<double>(static_cast<float>(v));
    return c;
  });
}

void save_params(const EmbedNetParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model " + path.string());
  out.write(kMagic, 7);
  const std::string text = config_text(params);
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor& t : params.tensors()) {
    std::vector<float> buf(t.data().begin(), t.data().end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("cannot write model " + path.string());
}

EmbedNetParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  auto fail = [&](const std::string& why) { return std::runtime_error("bad model file " + path.string() + ": " + why); };

  char magic[7];
  in.read(magic, 7);
  if (!in || std::memcmp(magic, kMagic, 7) != 0) throw fail("missing MALNET1 header");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 20)) throw fail("bad config length");
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw fail("truncated config");

  EmbedNetParams p;
  std::map<std::string, std::string> kv;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("bad config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  try {
    p.config.input_height = std::stoi(kv.at("input_height"));
    p.config.input_width = std::stoi(kv.at("input_width"));
    p.config.embedding_dim = std::stoi(kv.at("embedding_dim"));
    p.config.num_classes = std::stoi(kv.at("num_classes"));
    p.seed = std::stoull(kv.at("seed"));
    p.config.channels.clear();
    std::istringstream ch(kv.at("channels"));
    for (std::string tok; std::getline(ch, tok, ',');) p.config.channels.push_back(std::stoi(tok));
    p.config.validate();
  } catch (const std::exception& e) {
    throw fail(std::string("bad config: ") + e.what());
  }

  EmbedNetParams shaped = init_embed_net(p.config, 0);
  shaped.seed = p.seed;
  for (Tensor& t : shaped.tensors()) {
    std::vector<float> buf(t.numel());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw fail("truncated weights");
    std::copy(buf.begin(), buf.end(), t.data().begin());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw fail("trailing bytes");
  return shaped;
}

}  // namespace mal
