#include <gtest/gtest.h>

#include <map>

#include "vbdiar/ahc.hpp"
#include "vbdiar/rng.hpp"

using namespace vbdiar;

namespace {

MatrixXd random_symmetric(Rng& rng, int n) {
  MatrixXd s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) s(i, j) = s(j, i) = rng.uniform(-1.0, 1.0);
  return s;
}

// Relabels a partition by order of first appearance.
std::vector<int> canonical(const std::vector<int>& labels) {
  std::map<int, int> id;
  std::vector<int> out;
  for (int l : labels) {
    auto it = id.try_emplace(l, static_cast<int>(id.size())).first;
    out.push_back(it->second);
  }
  return out;
}

// Recomputes every average linkage from the original matrix at each step.
std::vector<int> brute_force_ahc(const MatrixXd& s, double threshold) {
  const int n = static_cast<int>(s.rows());
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < n; ++i) clusters.push_back({i});
  while (clusters.size() > 1) {
    double best = -1e300;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double sum = 0;
        for (int x : clusters[a])
          for (int y : clusters[b]) sum += s(x, y);
        const double avg = sum / (clusters[a].size() * clusters[b].size());
        if (avg > best) {
          best = avg;
          ba = a;
          bb = b;
        }
      }
    if (!(best > threshold)) break;
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<long>(bb));
  }
  std::vector<int> labels(n);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (int x : clusters[c]) labels[x] = static_cast<int>(c);
  return canonical(labels);
}

}  // namespace

TEST(Ahc, HighThresholdKeepsSingletons) {
  Rng rng(1);
  const auto s = random_symmetric(rng, 7);
  const auto r = ahc_cluster(s, 2.0);
  EXPECT_EQ(r.num_clusters, 7);
  EXPECT_TRUE(r.merge_trace.empty());
  for (int i = 0; i < 7; ++i) EXPECT_EQ(r.labels[i], i);
}

TEST(Ahc, TwoBlocks) {
  MatrixXd s = MatrixXd::Zero(6, 6);
  const std::vector<int> block{0, 1, 0, 1, 1, 0};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) s(i, j) = block[i] == block[j] ? 1.0 : 0.0;
  const auto r = ahc_cluster(s, 0.5);
  EXPECT_EQ(r.num_clusters, 2);
  EXPECT_EQ(r.labels, block);
}

TEST(Ahc, EmptyInputIsAnError) { EXPECT_THROW(ahc_cluster(MatrixXd(0, 0), 0.0), DataError); }

TEST(Ahc, MatchesBruteForceRecompute) {
  Rng rng(2024);
  for (int seed = 0; seed < 200; ++seed) {
    const auto s = random_symmetric(rng, 6);
    const double threshold = rng.uniform(-0.5, 0.5);
    const auto r = ahc_cluster(s, threshold);
    EXPECT_EQ(canonical(r.labels), brute_force_ahc(s, threshold)) << "seed " << seed;
  }
}

TEST(Ahc, MergeTraceNonIncreasing) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = ahc_cluster(random_symmetric(rng, 30), -2.0);
    EXPECT_EQ(r.num_clusters, 1);
    for (std::size_t k = 1; k < r.merge_trace.size(); ++k)
      EXPECT_LE(r.merge_trace[k].similarity, r.merge_trace[k - 1].similarity + 1e-12);
  }
}

TEST(Ahc, LowerThresholdNeverAddsClusters) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_symmetric(rng, 25);
    int prev = 1 << 30;
    for (double th = 1.0; th >= -1.0; th -= 0.1) {
      const int k = ahc_cluster(s, th).num_clusters;
      EXPECT_LE(k, prev);
      prev = k;
    }
  }
}

TEST(Ahc, InvariantToInputOrder) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 12;
    const auto s = random_symmetric(rng, n);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(std::span<int>(perm));
    MatrixXd p(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) p(i, j) = s(perm[i], perm[j]);
    const auto a = ahc_cluster(s, 0.0).labels;
    const auto b = ahc_cluster(p, 0.0).labels;
    std::vector<int> back(n);
    for (int i = 0; i < n; ++i) back[perm[i]] = b[i];
    EXPECT_EQ(canonical(a), canonical(back));
  }
}

TEST(Ahc, MaxClustersForcesMerges) {
  Rng rng(6);
  const auto s = random_symmetric(rng, 20);
  const auto r = ahc_cluster(s, 5.0, 4);
  EXPECT_EQ(r.num_clusters, 4);
}

TEST(Similarity, ShapesAndValues) {
  MatrixXd one(1, 3);
  one << 1, 2, 3;
  EXPECT_EQ(pairwise_similarity(one, SimilarityMetric::cosine).rows(), 1);
  EXPECT_NEAR(pairwise_similarity(one, SimilarityMetric::cosine)(0, 0), 1.0, 1e-15);

  Rng rng(7);
  MatrixXd x(15, 4);
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 4; ++j) x(i, j) = rng.normal();
  const VectorXd phi = VectorXd::Constant(4, 2.0);
  for (auto metric : {SimilarityMetric::cosine, SimilarityMetric::plda_llr}) {
    const auto s = pairwise_similarity(x, metric, phi);
    EXPECT_LT((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_NEAR(pairwise_similarity(x, SimilarityMetric::plda_llr, phi)(2, 5),
              llr_score(x.row(2).transpose(), x.row(5).transpose(), phi), 1e-15);
  EXPECT_THROW(pairwise_similarity(MatrixXd(0, 3), SimilarityMetric::cosine), DataError);
  EXPECT_THROW(parse_similarity_metric("euclid"), UsageError);
}
