#include "mal/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mal {
namespace {

using nlohmann::json;

// Reads known keys of one section, rejecting anything else.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    obj_ = &root.at(name);
    if (!obj_->is_object()) throw ConfigError("config: '" + name + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      field = obj_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for " + name_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    if (!obj_) return;
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key " + name_ + "." + it.key());
    }
  }

 private:
  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

json to_json_value(const RunConfig& c) {
  json j;
  const DatasetConfig& d = c.dataset;
  j["dataset"] = {{"seed", d.seed},
                  {"n_train_ids", d.n_train_ids},
                  {"n_test_ids", d.n_test_ids},
                  {"n_cams", d.n_cams},
                  {"per_id_per_cam", d.per_id_per_cam},
                  {"gain_spread", d.gain_spread},
                  {"bias_spread", d.bias_spread},
                  {"noise_std", d.noise_std},
                  {"texture_amplitude", d.texture_amplitude}};
  const EmbedNetConfig& n = c.net;
  j["net"] = {{"input_height", n.input_height},
              {"input_width", n.input_width},
              {"channels", n.channels},
              {"embedding_dim", n.embedding_dim},
              {"num_classes", n.num_classes}};
  const TrainConfig& t = c.train;
  j["train"] = {{"learning_rate", t.learning_rate}, {"lr_decay", t.lr_decay}, {"decay_every", t.decay_every},
                {"momentum", t.momentum},           {"epochs", t.epochs},     {"batch_size", t.batch_size},
                {"seed", t.seed},                   {"jad", t.jad}};
  const DefenseSchedule& s = c.defense;
  j["defense"] = {{"p_augment", s.p_augment},
                  {"p_grayscale", s.p_grayscale},
                  {"p_channel_fusion", s.p_channel_fusion},
                  {"p_lht", s.p_lht},
                  {"seed", s.seed}};
  const AttackConfig& a = c.attack;
  j["attack"] = {{"epsilon", a.epsilon},         {"alpha", a.alpha},   {"iterations", a.iterations},
                 {"theta", a.theta},             {"n_refs", a.n_refs}, {"single_reference", a.single_reference},
                 {"random_init", a.random_init}, {"seed", c.attack_seed}};
  j["scaling"] = {{"plan", c.scaling.plan}, {"jitter", c.scaling.jitter}, {"jitter_fraction", c.scaling.jitter_fraction}};
  j["output_dir"] = c.output_dir;
  return j;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

ScalingPlan ScalingConfig::build(ImageSize input) const {
  ScalingPlan p = ScalingPlan::named(plan, input);
  p.jitter = jitter;
  p.jitter_fraction = jitter_fraction;
  return p;
}

std::string to_json(const RunConfig& cfg) { return to_json_value(cfg).dump(2); }

RunConfig run_config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  for (auto it = root.begin(); it != root.end(); ++it) {
    static const std::set<std::string> known{"dataset", "net", "train", "defense", "attack", "scaling", "output_dir"};
    if (!known.count(it.key())) throw ConfigError("config: unknown key " + it.key());
  }

  RunConfig c;
  Section d(root, "dataset");
  d.get("seed", c.dataset.seed);
  d.get("n_train_ids", c.dataset.n_train_ids);
  d.get("n_test_ids", c.dataset.n_test_ids);
  d.get("n_cams", c.dataset.n_cams);
  d.get("per_id_per_cam", c.dataset.per_id_per_cam);
  d.get("gain_spread", c.dataset.gain_spread);
  d.get("bias_spread", c.dataset.bias_spread);
  d.get("noise_std", c.dataset.noise_std);
  d.get("texture_amplitude", c.dataset.texture_amplitude);
  d.finish();

  Section n(root, "net");
  n.get("input_height", c.net.input_height);
  n.get("input_width", c.net.input_width);
  n.get("channels", c.net.channels);
  n.get("embedding_dim", c.net.embedding_dim);
  n.get("num_classes", c.net.num_classes);
  n.finish();

  Section t(root, "train");
  t.get("learning_rate", c.train.learning_rate);
  t.get("lr_decay", c.train.lr_decay);
  t.get("decay_every", c.train.decay_every);
  t.get("momentum", c.train.momentum);
  t.get("epochs", c.train.epochs);
  t.get("batch_size", c.train.batch_size);
  t.get("seed", c.train.seed);
  t.get("jad", c.train.jad);
  t.finish();

  Section s(root, "defense");
  s.get("p_augment", c.defense.p_augment);
  s.get("p_grayscale", c.defense.p_grayscale);
  s.get("p_channel_fusion", c.defense.p_channel_fusion);
  s.get("p_lht", c.defense.p_lht);
  s.get("seed", c.defense.seed);
  s.finish();

  Section a(root, "attack");
  a.get("epsilon", c.attack.epsilon);
  a.get("alpha", c.attack.alpha);
  a.get("iterations", c.attack.iterations);
  a.get("theta", c.attack.theta);
  a.get("n_refs", c.attack.n_refs);
  a.get("single_reference", c.attack.single_reference);
  a.get("random_init", c.attack.random_init);
  a.get("seed", c.attack_seed);
  a.finish();

  Section sc(root, "scaling");
  sc.get("plan", c.scaling.plan);
  sc.get("jitter", c.scaling.jitter);
  sc.get("jitter_fraction", c.scaling.jitter_fraction);
  sc.finish();

  if (root.contains("output_dir")) {
    if (!root["output_dir"].is_string()) throw ConfigError("config: output_dir must be a string");
    c.output_dir = root["output_dir"].get<std::string>();
  }

  if (c.net.num_classes != c.dataset.n_train_ids) {
    throw ConfigError("config: net.num_classes must equal dataset.n_train_ids");
  }
  try {
    c.net.validate();
    c.attack.validate();
    c.defense.validate();
    c.scaling.build({c.net.input_height, c.net.input_width});
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write " + path.string());
  out << to_json(cfg) << "\n";
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json_value(cfg);
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

}  // namespace mal
