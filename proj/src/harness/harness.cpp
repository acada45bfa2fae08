#include "mal/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mal {

const RetrievalMetrics& ExperimentReport::at(std::string_view attack, std::string_view defense) const {
  for (const ExperimentRow& r : rows) {
    if (r.attack == attack && r.defense == defense) return r.metrics;
  }
  throw std::out_of_range("report has no cell " + std::string(attack) + " / " + std::string(defense));
}

std::vector<LabeledImage> adversarial_queries(const FeatureFn& f, std::span<const LabeledImage> queries,
                                              AttackKind kind, const AttackConfig& cfg, std::uint64_t seed,
                                              unsigned threads) {
  std::vector<AdvState> states = attack_query_set(f, queries, kind, cfg, seed, threads);
  std::vector<LabeledImage> out(queries.begin(), queries.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].image = std::move(states[i].x_adv);
  return out;
}

ExperimentReport run_harness(const EmbedNetParams& baseline, const EmbedNetParams* jad,
                             std::span<const LabeledImage> queries, std::span<const LabeledImage> gallery,
                             const HarnessOptions& opts, const std::string& config_hash) {
  ExperimentReport report;
  report.config_hash = config_hash;

  struct Column {
    const EmbedNetParams* model;
    const char* plain;
    const char* defended;
  };
  std::vector<Column> columns{{&baseline, kDefenseNone, kDefenseCs}};
  if (jad) columns.push_back({jad, kDefenseJad, kDefenseJadCs});

  // Rows grouped by attack, then defense, in the table's order.
  std::vector<std::string> attack_names{kNoAttack};
  for (AttackKind k : opts.attacks) attack_names.emplace_back(attack_name(k));
  std::vector<std::vector<ExperimentRow>> by_column(columns.size());

  for (std::size_t c = 0; c < columns.size(); ++c) {
    const EmbedNetParams& model = *columns[c].model;
    auto evaluate = [&](std::span<const LabeledImage> q, const std::string& attack) {
      by_column[c].push_back({attack, columns[c].plain, evaluate_retrieval(model, q, gallery, nullptr, opts.threads)});
      by_column[c].push_back(
          {attack, columns[c].defended, evaluate_retrieval(model, q, gallery, &opts.plan, opts.threads)});
    };
    evaluate(queries, kNoAttack);
    const FeatureFn f = feature_fn(model);
    for (AttackKind k : opts.attacks) {
      evaluate(adversarial_queries(f, queries, k, opts.attack, opts.attack_seed, opts.threads),
               std::string(attack_name(k)));
    }
  }
  for (const std::string& a : attack_names) {
    for (const auto& col : by_column) {
      for (const ExperimentRow& r : col) {
        if (r.attack == a) report.rows.push_back(r);
      }
    }
  }
  return report;
}

std::string report_to_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ExperimentRow& r : report.rows) {
    rows.push_back({{"attack", r.attack},
                    {"defense", r.defense},
                    {"rank1", r.metrics.rank1},
                    {"rank5", r.metrics.rank5},
                    {"rank10", r.metrics.rank10},
                    {"map", r.metrics.map},
                    {"n_query", r.metrics.n_query},
                    {"n_excluded", r.metrics.n_excluded},
                    {"rk", nullptr}});
  }
  nlohmann::json j{{"config_hash", report.config_hash}, {"rows", rows}};
  return j.dump(2);
}

ExperimentReport report_from_json(const std::string& text) {
  ExperimentReport report;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    report.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& r : j.at("rows")) {
      ExperimentRow row;
      row.attack = r.at("attack").get<std::string>();
      row.defense = r.at("defense").get<std::string>();
      row.metrics.rank1 = r.at("rank1").get<double>();
      row.metrics.rank5 = r.at("rank5").get<double>();
      row.metrics.rank10 = r.at("rank10").get<double>();
      row.metrics.map = r.at("map").get<double>();
      row.metrics.n_query = r.at("n_query").get<int>();
      row.metrics.n_excluded = r.value("n_excluded", 0);
      report.rows.push_back(row);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("report: ") + e.what());
  }
  return report;
}

std::string report_to_text(const ExperimentReport& report) {
  std::size_t wa = 6, wd = 7;
  for (const ExperimentRow& r : report.rows) {
    wa = std::max(wa, r.attack.size());
    wd = std::max(wd, r.defense.size());
  }
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-*s  %7s  %7s  %7s  %7s  %7s\n", static_cast<int>(wa), "attack",
                static_cast<int>(wd), "defense", "rank1", "rank5", "rank10", "mAP", "queries");
  os << "config " << report.config_hash << "\n" << buf;
  for (const ExperimentRow& r : report.rows) {
    const RetrievalMetrics& m = r.metrics;
    std::snprintf(buf, sizeof buf, "%-*s  %-*s  %7.2f  %7.2f  %7.2f  %7.2f  %7d\n", static_cast<int>(wa),
                  r.attack.c_str(), static_cast<int>(wd), r.defense.c_str(), 100 * m.rank1, 100 * m.rank5,
                  100 * m.rank10, 100 * m.map, m.n_query);
    os << buf;
  }
  return os.str();
}

Image difference_image(const Image& x, const Image& x_adv, double epsilon) {
  if (!x.same_size(x_adv)) throw std::invalid_argument("difference_image: size mismatch");
  if (!(epsilon > 0.0)) throw std::invalid_argument("difference_image: epsilon must be positive");
  Image out = x;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = std::clamp(0.5 + (x_adv.pixels[i] - x.pixels[i]) / (2.0 * epsilon), 0.0, 1.0);
  }
  return out;
}

}  // namespace mal
