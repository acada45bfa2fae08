#include "mal/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mal {
namespace {

constexpr std::uint64_t kDefenseSeed = 0xc5;

void check_labels(const Tensor& distmat, const RetrievalLabels& labels) {
  if (distmat.rank() != 2) throw ShapeError("retrieval: distance matrix must be 2-D, got " + shape_str(distmat.shape()));
  const std::size_t nq = distmat.dim(0), ng = distmat.dim(1);
  if (labels.query_ids.size() != nq || labels.query_cams.size() != nq || labels.gallery_ids.size() != ng ||
      labels.gallery_cams.size() != ng) {
    throw ShapeError("retrieval: label arrays do not match distance matrix " + shape_str(distmat.shape()));
  }
}

struct QueryScore {
  bool valid = false;
  int first_hit = 0;  // 0-based position of the first true match
  double ap = 0.0;
};

QueryScore score_query(const Tensor& distmat, const RetrievalLabels& labels, std::size_t q) {
  const std::vector<int> ranking = ranked_gallery(distmat, labels, q);
  QueryScore s;
  int hits = 0;
  double precision_sum = 0.0;
  for (std::size_t pos = 0; pos < ranking.size(); ++pos) {
    if (labels.gallery_ids[ranking[pos]] != labels.query_ids[q]) continue;
    if (hits == 0) s.first_hit = static_cast<int>(pos);
    ++hits;
    precision_sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
  }
  s.valid = hits > 0;
  if (s.valid) s.ap = precision_sum / hits;
  return s;
}

std::vector<QueryScore> score_all(const Tensor& distmat, const RetrievalLabels& labels) {
  check_labels(distmat, labels);
  std::vector<QueryScore> scores(distmat.dim(0));
  for (std::size_t q = 0; q < scores.size(); ++q) scores[q] = score_query(distmat, labels, q);
  return scores;
}

}  // namespace

Tensor pairwise_distances(const Tensor& queries, const Tensor& gallery) {
  if (queries.rank() != 2 || gallery.rank() != 2 || queries.dim(1) != gallery.dim(1)) {
    throw ShapeError("pairwise_distances: feature dims differ, query " + shape_str(queries.shape()) + " vs gallery " +
                     shape_str(gallery.shape()));
  }
  const std::size_t nq = queries.dim(0), ng = gallery.dim(0), d = queries.dim(1);
  Tensor out({nq, ng});
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = queries[i * d + k] - gallery[j * d + k];
        acc += diff * diff;
      }
      out[i * ng + j] = acc;
    }
  }
  return out;
}

std::vector<int> ranked_gallery(const Tensor& distmat, const RetrievalLabels& labels, std::size_t query) {
  check_labels(distmat, labels);
  const std::size_t ng = distmat.dim(1);
  auto row = distmat.data().subspan(query * ng, ng);
  std::vector<int> order;
  order.reserve(ng);
  for (std::size_t j = 0; j < ng; ++j) {
    const bool junk = labels.gallery_ids[j] == labels.query_ids[query] && labels.gallery_cams[j] == labels.query_cams[query];
    if (!junk) order.push_back(static_cast<int>(j));
  }
  std::ranges::stable_sort(order, [&](int a, int b) { return row[a] < row[b]; });
  return order;
}

double rank_k_accuracy(const Tensor& distmat, const RetrievalLabels& labels, int k) {
  if (k < 1) throw std::invalid_argument("rank_k_accuracy: k must be at least 1");
  int valid = 0, hits = 0;
  for (const QueryScore& s : score_all(distmat, labels)) {
    if (!s.valid) continue;
    ++valid;
    hits += s.first_hit < k;
  }
  return valid ? static_cast<double>(hits) / valid : 0.0;
}

double mean_average_precision(const Tensor& distmat, const RetrievalLabels& labels) {
  return compute_metrics(distmat, labels).map;
}

RetrievalMetrics compute_metrics(const Tensor& distmat, const RetrievalLabels& labels) {
  RetrievalMetrics m;
  double ap_sum = 0.0;
  int r1 = 0, r5 = 0, r10 = 0;
  for (const QueryScore& s : score_all(distmat, labels)) {
    if (!s.valid) {
      ++m.n_excluded;
      continue;
    }
    ++m.n_query;
    r1 += s.first_hit < 1;
    r5 += s.first_hit < 5;
    r10 += s.first_hit < 10;
    ap_sum += s.ap;
  }
  if (m.n_query > 0) {
    const auto n = static_cast<double>(m.n_query);
    m.rank1 = r1 / n;
    m.rank5 = r5 / n;
    m.rank10 = r10 / n;
    m.map = ap_sum / n;
  }
  return m;
}

RetrievalMetrics evaluate_retrieval(const EmbedNetParams& params, std::span<const LabeledImage> queries,
                                    std::span<const LabeledImage> gallery, const ScalingPlan* defense,
                                    unsigned threads) {
  if (queries.empty() || gallery.empty()) throw std::invalid_argument("evaluate_retrieval: empty query or gallery set");
  auto prepare = [&](std::span<const LabeledImage> set, std::uint64_t tag, std::vector<int>& ids,
                     std::vector<int>& cams) {
    std::vector<Image> imgs;
    imgs.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (defense) {
        // Jittered plans draw from a per-image stream.
        Rng rng = derive_rng(kDefenseSeed, {tag, i});
        imgs.push_back(circuitous_scale(set[i].image, *defense, &rng));
      } else {
        imgs.push_back(set[i].image);
      }
      ids.push_back(set[i].identity);
      cams.push_back(set[i].camera);
    }
    return extract_features(params, imgs, false, threads);
  };
  std::vector<int> qid, qcam, gid, gcam;
  Tensor qf = prepare(queries, 0, qid, qcam);
  Tensor gf = prepare(gallery, 1, gid, gcam);
  return compute_metrics(pairwise_distances(qf, gf), RetrievalLabels{qid, gid, qcam, gcam});
}

}  // namespace mal
