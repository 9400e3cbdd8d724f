#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "sxgeo/error.hpp"
#include "sxgeo/simnet.hpp"
#include "test_util.hpp"

using namespace sxgeo;

namespace {

SimilarityNetwork graph(Index n, std::vector<SimilarityNetwork::Edge> e) {
  return SimilarityNetwork::from_edges(n, std::move(e));
}

SimilarityNetwork two_triangles() { return graph(6, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}}); }

SimilarityNetwork random_graph(Index n, double density, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SimilarityNetwork::Edge> e;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (u(gen) < density) e.push_back({i, j, 0.05 + 0.95 * u(gen)});
  if (e.empty()) e.push_back({0, 1, 1.0});
  return graph(n, e);
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  return compact_labels(a) == compact_labels(b);
}

}  // namespace

TEST_CASE("pairwise distances and kernel") {
  RowMatrix pts(3, 2);
  pts << 0, 0, 3, 0, 0, 4;
  const Eigen::MatrixXd d = pairwise_distances(pts);
  CHECK(d(0, 1) == 3.0);
  CHECK(d(1, 2) == 5.0);
  CHECK(d(2, 0) == 4.0);
  CHECK(d(1, 1) == 0.0);
  // median positive distance is 4
  const SimilarityNetwork s = distance_to_similarity(d);
  CHECK(s.weight(0, 2) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(s.weight(0, 1) == doctest::Approx(std::exp(-9.0 / 32.0)).epsilon(1e-15));
  CHECK(s.weight(1, 1) == 0.0);
  CHECK(s.edge_count() == 3);
}

TEST_CASE("network structure") {
  const SimilarityNetwork g = two_triangles();
  CHECK(g.total_weight() == 6.0);
  CHECK(g.degree(0) == 2.0);
  CHECK(g.to_dense() == g.to_dense().transpose());
  CHECK(g.edges().size() == 6);
  CHECK(graph(3, {{0, 0, 1.0}, {0, 1, 1.0}}).edge_count() == 1);
  CHECK_THROWS_AS(graph(3, {{0, 1, 1.5}}), DataError);
  CHECK_THROWS(graph(3, {{0, 1, -1.0}}));
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a(0, 1) = a(1, 0) = 0.25;
  CHECK(SimilarityNetwork::from_dense(a).weight(1, 0) == 0.25);
}

TEST_CASE("consensus is the Hadamard product, then top-k per node") {
  const SimilarityNetwork g1 = graph(4, {{0, 1, 0.5}, {0, 2, 0.9}, {0, 3, 0.2}, {1, 2, 1.0}, {2, 3, 0.8}});
  const SimilarityNetwork g2 = graph(4, {{0, 1, 0.5}, {0, 2, 0.5}, {1, 3, 1.0}, {1, 2, 0.1}, {2, 3, 0.5}});
  const SimilarityNetwork full = consensus(g1, g2, 0);
  CHECK(full.weight(0, 1) == doctest::Approx(0.25));
  CHECK(full.weight(0, 2) == doctest::Approx(0.45));
  CHECK(full.weight(0, 3) == 0.0);
  CHECK(full.weight(1, 3) == 0.0);
  CHECK(full.weight(1, 2) == doctest::Approx(0.1));
  CHECK(full.weight(2, 3) == doctest::Approx(0.4));
  // with k = 1: 0 keeps (0,2); 1 keeps (0,1); 2 keeps (0,2); 3 keeps (2,3)
  const SimilarityNetwork top = consensus(g1, g2, 1);
  CHECK(top.edge_count() == 3);
  CHECK(top.weight(1, 2) == 0.0);
  CHECK(top.weight(0, 1) == doctest::Approx(0.25));
  CHECK(top.weight(2, 3) == doctest::Approx(0.4));
  CHECK_THROWS(consensus(g1, graph(5, {{0, 1, 1.0}}), 0));
}

TEST_CASE("modularity fixtures") {
  const SimilarityNetwork g = two_triangles();
  const std::vector<int> split{0, 0, 0, 1, 1, 1};
  const std::vector<int> one(6, 0);
  const std::vector<int> singles{0, 1, 2, 3, 4, 5};
  CHECK(modularity_score(g, split, 1.0) == doctest::Approx(0.5));
  CHECK(modularity_score(g, one, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(modularity_score(g, singles, 0.0) == 0.0);
  const CommunityPartition best = maximize_modularity(g, 1.0, 3);
  CHECK(same_partition(best.labels, split));
  CHECK(best.count() == 2);
  CHECK(best.q == doctest::Approx(0.5));
}

TEST_CASE("two cliques joined by a bridge") {
  std::vector<SimilarityNetwork::Edge> e;
  for (Index i = 0; i < 5; ++i)
    for (Index j = i + 1; j < 5; ++j) {
      e.push_back({i, j, 1.0});
      e.push_back({i + 5, j + 5, 1.0});
    }
  e.push_back({4, 5, 1.0});
  const SimilarityNetwork g = graph(10, e);
  const CommunityPartition p = maximize_modularity(g, 1.0, 1);
  CHECK(same_partition(p.labels, {0, 0, 0, 0, 0, 1, 1, 1, 1, 1}));
  CHECK(p.q == doctest::Approx(oracle::modularity(g.to_dense(), p.labels, 1.0)).epsilon(1e-12));
}

TEST_CASE("complete graph stays one community") {
  std::vector<SimilarityNetwork::Edge> e;
  for (Index i = 0; i < 7; ++i)
    for (Index j = i + 1; j < 7; ++j) e.push_back({i, j, 1.0});
  const CommunityPartition p = maximize_modularity(graph(7, e), 1.0, 5);
  CHECK(p.count() == 1);
  CHECK(p.q == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("score matches the dense definition") {
  std::mt19937_64 gen(2);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SimilarityNetwork g = random_graph(15, 0.3, seed);
    std::vector<int> labels(15);
    for (auto& l : labels) l = static_cast<int>(gen() % 4);
    for (double gamma : {0.5, 1.0, 2.0}) {
      CHECK(std::abs(modularity_score(g, labels, gamma) - oracle::modularity(g.to_dense(), labels, gamma)) < 1e-12);
    }
  }
}

TEST_CASE("small graphs reach the exhaustive optimum") {
  int hits = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SimilarityNetwork g = random_graph(6, 0.5, seed);
    const double best = oracle::best_modularity(g.to_dense(), 1.0);
    const CommunityPartition p = maximize_modularity(g, 1.0, seed);
    CHECK(p.q <= best + 1e-12);
    CHECK(p.q >= best - 0.05);
    hits += p.q >= best - 1e-12 ? 1 : 0;
    ++total;
  }
  CHECK(hits >= total - 2);
}

TEST_CASE("result is locally optimal and consistent") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const SimilarityNetwork g = random_graph(30, 0.15, seed);
    const CommunityPartition p = maximize_modularity(g, 1.0, seed);
    CHECK(p.q == doctest::Approx(modularity_score(g, p.labels, 1.0)).epsilon(1e-12));
    CHECK(p.labels == compact_labels(p.labels));
    std::vector<int> labels = p.labels;
    const int k = p.count();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int orig = labels[i];
      for (int c = 0; c <= k; ++c) {
        labels[i] = c;
        CHECK(modularity_score(g, labels, 1.0) <= p.q + 1e-12);
      }
      labels[i] = orig;
    }
    // determinism
    CHECK(maximize_modularity(g, 1.0, seed).labels == p.labels);
  }
}

TEST_CASE("invariance under relabeling and weight scaling") {
  const SimilarityNetwork g = random_graph(20, 0.25, 4);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  std::vector<int> permuted(20);
  for (int i = 0; i < 20; ++i) permuted[static_cast<std::size_t>(i)] = (labels[static_cast<std::size_t>(i)] + 2) % 3 + 10;
  const double q = modularity_score(g, labels, 1.0);
  CHECK(modularity_score(g, permuted, 1.0) == doctest::Approx(q).epsilon(1e-14));
  std::vector<SimilarityNetwork::Edge> half = g.edges();
  for (auto& e : half) e.w *= 0.5;
  CHECK(modularity_score(graph(20, half), labels, 1.0) == doctest::Approx(q).epsilon(1e-12));
  CHECK(compact_labels(std::vector<int>{7, 7, 3, 9, 3}) == std::vector<int>{0, 0, 1, 2, 1});
}

TEST_CASE("CSV export") {
  const auto dir = testutil::scratch_dir("simnet");
  const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
  write_network_csv(two_triangles(), ids, dir / "g.csv");
  const std::string text = testutil::read_file(dir / "g.csv");
  CHECK(text.rfind("i,j,w\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  write_partition_csv(std::vector<int>{0, 0, 0, 1, 1, 1}, ids, dir / "p.csv");
  CHECK(testutil::read_file(dir / "p.csv").rfind("id,community\na,0\n", 0) == 0);
}
