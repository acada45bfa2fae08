#pragma once

#include <span>
#include <vector>

#include "mal/embedder.hpp"
#include "mal/image.hpp"
#include "mal/tensor.hpp"
#include "mal/transforms.hpp"

namespace mal {

struct RetrievalMetrics {
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double map = 0.0;
  /// Queries that entered the averages.
  int n_query = 0;
  /// Queries dropped for having no positive after exclusion.
  int n_excluded = 0;

  friend bool operator==(const RetrievalMetrics&, const RetrievalMetrics&) = default;
};

/// Identity and camera ids for the rows (queries) and columns (gallery) of a
/// distance matrix.
struct RetrievalLabels {
  std::span<const int> query_ids;
  std::span<const int> gallery_ids;
  std::span<const int> query_cams;
  std::span<const int> gallery_cams;
};

/// Squared L2 distances, [n_query, n_gallery].
Tensor pairwise_distances(const Tensor& queries, const Tensor& gallery);

/// Gallery indices for one query, ascending distance, ties by index, with
/// same-identity same-camera entries removed.
std::vector<int> ranked_gallery(const Tensor& distmat, const RetrievalLabels& labels, std::size_t query);

/// Fraction of valid queries with a true match among the top k.
double rank_k_accuracy(const Tensor& distmat, const RetrievalLabels& labels, int k);
double mean_average_precision(const Tensor& distmat, const RetrievalLabels& labels);
RetrievalMetrics compute_metrics(const Tensor& distmat, const RetrievalLabels& labels);

/// Extracts features (after the optional passive defense) and scores the
/// query set against the gallery. Throws std::invalid_argument on empty sets.
RetrievalMetrics evaluate_retrieval(const EmbedNetParams& params, std::span<const LabeledImage> queries,
                                    std::span<const LabeledImage> gallery, const ScalingPlan* defense = nullptr,
                                    unsigned threads = 1);

}  // namespace mal
