#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mal/dataset.hpp"
#include "mal/harness.hpp"
#include "mal/run_config.hpp"

namespace mal::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kConfigEnv = "MAL_CONFIG";

struct Common {
  std::string config_path;
  unsigned threads = 1;
  std::vector<std::string> overrides;
};

// Parses "a.b=value" where value is JSON, or a bare string.
void apply_override(json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + spec + "'");
  const std::string path = spec.substr(0, eq), text = spec.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  const auto dot = path.find('.');
  if (dot == std::string::npos) {
    j[path] = value;
  } else {
    j[path.substr(0, dot)][path.substr(dot + 1)] = value;
  }
}

RunConfig resolve_config(const Common& c) {
  std::string path = c.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnv)) path = env;
  }
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (c.overrides.empty()) return cfg;
  json j = json::parse(to_json(cfg));
  for (const std::string& o : c.overrides) apply_override(j, o);
  return run_config_from_json(j.dump());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw ImageIoError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ImageIoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_gen_data(const Common& common, const std::string& out_arg, std::ostream& out) {
  const RunConfig cfg = resolve_config(common);
  const fs::path root = out_arg.empty() ? fs::path(cfg.output_dir) / "data" : fs::path(out_arg);
  const Dataset ds = generate_dataset(cfg.dataset, common.threads);
  save_split(ds.train, root / "train");
  save_split(ds.query, root / "query");
  save_split(ds.gallery, root / "gallery");
  save_run_config(cfg, root / "config.json");
  write_text(root / "config_hash.txt", config_hash(cfg) + "\n");
  out << "wrote " << ds.train.size() << " train, " << ds.query.size() << " query, " << ds.gallery.size()
      << " gallery images to " << root.string() << " (config " << config_hash(cfg) << ")\n";
  return kOk;
}

int cmd_train(const Common& common, const std::string& data, const std::string& mode, const std::string& out_arg,
              const std::string& log_arg, std::ostream& out) {
  RunConfig cfg = resolve_config(common);
  cfg.train.jad = mode == "jad";
  const std::string hash = config_hash(cfg);
  const fs::path model = out_arg.empty() ? fs::path(cfg.output_dir) / ("model_" + mode + ".bin") : fs::path(out_arg);
  const fs::path log_path = log_arg.empty() ? fs::path(model.string() + ".log.jsonl") : fs::path(log_arg);

  const std::vector<LabeledImage> train = load_split(fs::path(data) / "train");
  const TrainResult r = train_model(train, cfg.defense, cfg.train, cfg.net);
  if (model.has_parent_path()) fs::create_directories(model.parent_path());
  save_params(r.params, model);

  std::ostringstream log;
  log << json{{"type", "config"}, {"config_hash", hash}, {"mode", mode}, {"initial_loss", r.log.initial_loss}}.dump()
      << "\n";
  for (const EpochLog& e : r.log.epochs) {
    log << json{{"type", "epoch"}, {"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"accuracy", e.accuracy}}.dump()
        << "\n";
  }
  if (cfg.train.jad) log << json{{"type", "transform_counts"}, {"counts", r.log.transform_counts}}.dump() << "\n";

  const fs::path qdir = fs::path(data) / "query", gdir = fs::path(data) / "gallery";
  if (fs::exists(qdir / "manifest.jsonl") && fs::exists(gdir / "manifest.jsonl")) {
    const RetrievalMetrics m = evaluate_retrieval(r.params, load_split(qdir), load_split(gdir), nullptr, common.threads);
    log << json{{"type", "eval"}, {"rank1", m.rank1}, {"rank5", m.rank5}, {"rank10", m.rank10}, {"map", m.map},
                {"n_query", m.n_query}}
               .dump()
        << "\n";
    out << "clean rank-1 " << m.rank1 << " mAP " << m.map << "\n";
  }
  write_text(log_path, log.str());
  out << "trained " << mode << " model: final loss " << r.log.epochs.back().loss << ", train accuracy "
      << r.log.epochs.back().accuracy << " -> " << model.string() << "\n";
  return kOk;
}

int cmd_attack(const Common& common, const std::string& model_path, const std::string& query_dir,
               std::string attack, bool lta_star, const std::string& out_arg, std::ostream& out) {
  const RunConfig cfg = resolve_config(common);
  AttackKind kind = parse_attack(attack);
  if (lta_star) {
    if (kind != AttackKind::kLta && kind != AttackKind::kLtaStar) {
      throw std::invalid_argument("--lta-star only applies to the LTA attack");
    }
    kind = AttackKind::kLtaStar;
  }
  const std::string hash = config_hash(cfg);
  const std::string name(attack_name(kind));
  const fs::path dir = out_arg.empty() ? fs::path(cfg.output_dir) / ("attack_" + name) : fs::path(out_arg);

  const EmbedNetParams params = load_params(model_path);
  const fs::path qdir = fs::absolute(query_dir);
  const std::vector<ManifestRow> rows = read_manifest(qdir);
  const std::vector<LabeledImage> queries = load_split(qdir);
  const std::vector<AdvState> states =
      attack_query_set(feature_fn(params), queries, kind, cfg.attack, cfg.attack_seed, common.threads);

  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl");
  double worst = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    save_image(states[i].x_adv, dir / rows[i].file);
    // Check what is on disk, after 8-bit quantization.
    // Both sides are 8-bit, so count whole levels.
    const double linf = std::round(linf_distance(load_image(dir / rows[i].file), queries[i].image) * 255.0) / 255.0;
    worst = std::max(worst, linf);
    manifest << json{{"file", rows[i].file},
                     {"original", (qdir / rows[i].file).string()},
                     {"identity", rows[i].identity},
                     {"camera", rows[i].camera},
                     {"attack", name},
                     {"epsilon", cfg.attack.epsilon},
                     {"linf", linf},
                     {"config_hash", hash}}
                    .dump()
             << "\n";
    if (linf > cfg.attack.epsilon + 1e-12) {
      throw InvariantViolation("adversarial image " + rows[i].file + " has L-inf " + std::to_string(linf) +
                               " > epsilon " + std::to_string(cfg.attack.epsilon));
    }
  }
  if (!manifest) throw ImageIoError("cannot write " + (dir / "manifest.jsonl").string());
  json meta = json::parse(to_json(cfg))["attack"];
  write_text(dir / "attack.json",
             json{{"attack", name}, {"config_hash", hash}, {"config", meta}, {"query_dir", qdir.string()}}.dump(2) +
                 "\n");
  out << name << ": " << states.size() << " adversarial queries, max L-inf " << worst * 255.0 << "/255 -> "
      << dir.string() << "\n";
  return kOk;
}

int cmd_eval(const Common& common, const std::string& model_path, const std::string& query_dir,
             const std::string& gallery_dir, bool cs, bool jad_model, std::string attack_label,
             const std::string& out_arg, std::ostream& out) {
  const RunConfig cfg = resolve_config(common);
  const EmbedNetParams params = load_params(model_path);
  if (attack_label.empty()) {
    const fs::path meta = fs::path(query_dir) / "attack.json";
    attack_label = fs::exists(meta) ? json::parse(read_text(meta)).at("attack").get<std::string>() : kNoAttack;
  }
  const ScalingPlan plan = cfg.scaling.build({cfg.net.input_height, cfg.net.input_width});
  const RetrievalMetrics m =
      evaluate_retrieval(params, load_split(query_dir), load_split(gallery_dir), cs ? &plan : nullptr, common.threads);
  std::string defense = jad_model ? (cs ? kDefenseJadCs : kDefenseJad) : (cs ? kDefenseCs : kDefenseNone);
  ExperimentReport report{config_hash(cfg), {ExperimentRow{attack_label, defense, m}}};
  const std::string j = report_to_json(report);
  if (!out_arg.empty()) write_text(out_arg, j + "\n");
  out << j << "\n" << report_to_text(report);
  return kOk;
}

int cmd_report(const std::vector<std::string>& evals, const std::vector<std::string>& attack_dirs,
               const std::string& out_arg, std::ostream& out) {
  const fs::path dir = out_arg.empty() ? fs::path("report") : fs::path(out_arg);
  ExperimentReport merged;
  for (const std::string& e : evals) {
    ExperimentReport r = report_from_json(read_text(e));
    if (merged.config_hash.empty()) merged.config_hash = r.config_hash;
    if (r.config_hash != merged.config_hash) {
      throw std::invalid_argument("report: " + e + " has config " + r.config_hash + ", expected " +
                                  merged.config_hash);
    }
    merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
  }
  write_text(dir / "report.json", report_to_json(merged) + "\n");
  write_text(dir / "report.txt", report_to_text(merged));
  out << report_to_text(merged);

  for (const std::string& a : attack_dirs) {
    const json meta = json::parse(read_text(fs::path(a) / "attack.json"));
    const double eps = meta.at("config").at("epsilon").get<double>();
    std::string name = meta.at("attack").get<std::string>();
    std::replace(name.begin(), name.end(), '*', 's');
    const fs::path diff_dir = dir / "diff" / name;
    fs::create_directories(diff_dir);
    std::ifstream manifest(fs::path(a) / "manifest.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(manifest, line)) {
      if (line.empty()) continue;
      const json row = json::parse(line);
      const std::string file = row.at("file").get<std::string>();
      const Image adv = load_image(fs::path(a) / file);
      const Image orig = load_image(row.at("original").get<std::string>());
      save_image(difference_image(orig, adv, eps), diff_dir / file);
      ++n;
    }
    out << "wrote " << n << " difference images to " << diff_dir.string() << "\n";
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Metric attacks and defenses on a toy re-identification task"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "Run config JSON (default: $MAL_CONFIG, else built-in defaults)");
  app.add_option("--threads", common.threads, "Worker threads; never changes results")->check(CLI::PositiveNumber);
  app.add_option("--set", common.overrides, "Override a config field, e.g. --set train.epochs=5");

  std::string out_path, data, mode = "baseline", log_path, model, query, gallery, attack, attack_label;
  bool lta_star = false, cs = false, jad_model = false;
  std::vector<std::string> evals, attack_dirs;

  auto* gen = app.add_subcommand("gen-data", "Render the toy dataset to disk");
  gen->add_option("--out", out_path, "Dataset root (default: <output_dir>/data)");

  auto* train = app.add_subcommand("train", "Train a baseline or JAD model");
  train->add_option("--data", data, "Dataset root")->required();
  train->add_option("--mode", mode, "baseline or jad")->check(CLI::IsMember({"baseline", "jad"}));
  train->add_option("--out", out_path, "Model file");
  train->add_option("--log", log_path, "Training log (JSON lines)");

  auto* atk = app.add_subcommand("attack", "Attack every query image");
  atk->add_option("--model", model, "Model file")->required();
  atk->add_option("--query", query, "Query split directory")->required();
  atk->add_option("--attack", attack, "M-IFGSM, SMA, LTA*, LTA")->required();
  atk->add_flag("--lta-star", lta_star, "Single reference image (LTA*)");
  atk->add_option("--out", out_path, "Output directory");

  auto* ev = app.add_subcommand("eval", "Evaluate retrieval");
  ev->add_option("--model", model, "Model file")->required();
  ev->add_option("--query", query, "Query directory (clean or adversarial)")->required();
  ev->add_option("--gallery", gallery, "Gallery directory")->required();
  ev->add_flag("--cs", cs, "Apply circuitous scaling to queries and gallery");
  ev->add_flag("--jad-model", jad_model, "Label the rows as a JAD-trained model");
  ev->add_option("--attack-label", attack_label, "Row label (default: from attack.json, else no-attack)");
  ev->add_option("--out", out_path, "Metrics JSON file");

  auto* rep = app.add_subcommand("report", "Merge eval outputs and dump difference images");
  rep->add_option("--eval", evals, "Eval JSON files")->required();
  rep->add_option("--attack-dir", attack_dirs, "Attack output directories");
  rep->add_option("--out", out_path, "Report directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, out_path, out);
    if (train->parsed()) return cmd_train(common, data, mode, out_path, log_path, out);
    if (atk->parsed()) return cmd_attack(common, model, query, attack, lta_star, out_path, out);
    if (ev->parsed()) return cmd_eval(common, model, query, gallery, cs, jad_model, attack_label, out_path, out);
    if (rep->parsed()) return cmd_report(evals, attack_dirs, out_path, out);
  } catch (const InvariantViolation& e) {
    err << "invariant violation: " << e.what() << "\n";
    return kInvariant;
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}

}  // namespace mal::cli
