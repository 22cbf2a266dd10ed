#pragma once

// Average-linkage agglomerative clustering over a precomputed similarity
// matrix. Used to produce an under-clustered starting point for VBx.

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

#include "vbdiar/error.hpp"
#include "vbdiar/plda.hpp"

namespace vbdiar {

enum class SimilarityMetric { plda_llr, cosine };

inline SimilarityMetric parse_similarity_metric(std::string_view name) {
  if (name == "plda_llr" || name == "plda") return SimilarityMetric::plda_llr;
  if (name == "cosine") return SimilarityMetric::cosine;
  throw UsageError("unknown similarity metric '" + std::string(name) + "' (expected plda_llr or cosine)");
}

inline const char* to_string(SimilarityMetric m) { return m == SimilarityMetric::plda_llr ? "plda_llr" : "cosine"; }

struct AhcMerge {
  int a;  // surviving cluster (smaller representative index)
  int b;  // absorbed cluster
  double similarity;
};

struct AhcResult {
  std::vector<int> labels;  // contiguous 0..K-1, numbered by first member
  std::vector<AhcMerge> merge_trace;
  int num_clusters = 0;
};

// Rows of `x` are transformed embeddings.
inline MatrixXd pairwise_similarity(const MatrixXd& x, SimilarityMetric metric, const VectorXd& phi = {}) {
  const Eigen::Index n = x.rows();
  if (n < 1) throw DataError("pairwise similarity needs at least one vector");
  MatrixXd s(n, n);
  if (metric == SimilarityMetric::cosine) {
    MatrixXd unit = x;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = unit.row(i).norm();
      if (norm > 0) unit.row(i) /= norm;
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) s(i, j) = s(j, i) = unit.row(i).dot(unit.row(j));
  } else {
    if (phi.size() != x.cols()) throw DataError("phi dimension does not match the embeddings");
    for (Eigen::Index i = 0; i < n; ++i) {
      const VectorXd xi = x.row(i).transpose();
      for (Eigen::Index j = i; j < n; ++j) s(i, j) = s(j, i) = llr_score(xi, x.row(j).transpose(), phi);
    }
  }
  return s;
}

// Repeatedly merges the pair of clusters with the highest average pairwise
// similarity while it exceeds `threshold`. With `max_clusters` > 0, merging
// continues below the threshold until at most that many clusters remain.
// Ties go to the smallest (i, j) pair of cluster representatives.
inline AhcResult ahc_cluster(const MatrixXd& similarity, double threshold, int max_clusters = 0) {
  const auto n = static_cast<int>(similarity.rows());
  if (n == 0) throw DataError("AHC needs at least one item");
  if (similarity.cols() != n) throw DataError("similarity matrix must be square");

  MatrixXd s = similarity;  // linkage between current clusters, indexed by representative
  std::vector<int> size(n, 1), parent(n);
  std::vector<char> active(n, 1);
  std::vector<int> best(n, -1);
  std::vector<double> best_val(n, 0.0);
  for (int i = 0; i < n; ++i) parent[i] = i;

  auto rescan = [&](int i) {
    best[i] = -1;
    for (int k = i + 1; k < n; ++k) {
      if (!active[k]) continue;
      if (best[i] < 0 || s(i, k) > best_val[i]) {
        best[i] = k;
        best_val[i] = s(i, k);
      }
    }
  };
  for (int i = 0; i < n; ++i) rescan(i);

  AhcResult result;
  int clusters = n;
  while (clusters > 1) {
    int bi = -1;
    for (int i = 0; i < n; ++i)
      if (active[i] && best[i] >= 0 && (bi < 0 || best_val[i] > best_val[bi])) bi = i;
    if (bi < 0) break;
    const double value = best_val[bi];
    const bool forced = max_clusters > 0 && clusters > max_clusters;
    if (!(value > threshold) && !forced) break;

    const int i = bi, j = best[bi];
    const double wi = size[i], wj = size[j];
    for (int k = 0; k < n; ++k) {
      if (!active[k] || k == i || k == j) continue;
      const double v = (wi * s(k, i) + wj * s(k, j)) / (wi + wj);
      s(k, i) = s(i, k) = v;
    }
    active[j] = 0;
    size[i] += size[j];
    parent[j] = i;
    --clusters;
    result.merge_trace.push_back({i, j, value});

    rescan(i);
    for (int k = 0; k < j; ++k) {
      if (!active[k] || k == i) continue;
      if (best[k] == i || best[k] == j) {
        rescan(k);
      } else if (k < i && (best[k] < 0 || s(k, i) > best_val[k] || (s(k, i) == best_val[k] && i < best[k]))) {
        best[k] = i;
        best_val[k] = s(k, i);
      }
    }
  }

  auto root = [&](int x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };
  std::vector<int> id(n, -1);
  result.labels.resize(n);
  int next = 0;
  for (int t = 0; t < n; ++t) {
    const int r = root(t);
    if (id[r] < 0) id[r] = next++;
    result.labels[t] = id[r];
  }
  result.num_clusters = next;
  return result;
}

}  // namespace vbdiar
