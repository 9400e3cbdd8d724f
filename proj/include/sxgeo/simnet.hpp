#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sxgeo/dataset.hpp"

namespace sxgeo {

// Undirected weighted graph over samples, stored as symmetric CSR rows sorted
// by neighbour index. Weights lie in (0, 1]; there are no self loops.
class SimilarityNetwork {
 public:
  struct Edge {
    Index i;
    Index j;
    double w;
  };

  SimilarityNetwork() = default;

  // Keeps the positive off-diagonal entries of a symmetric matrix.
  static SimilarityNetwork from_dense(const Eigen::MatrixXd& adjacency);
  // Undirected edges, each pair listed once (either orientation).
  static SimilarityNetwork from_edges(Index n, std::vector<Edge> edges);

  Index n() const { return n_; }
  std::size_t edge_count() const { return cols_.size() / 2; }

  std::span<const Index> neighbors(Index i) const {
    return {cols_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const double> weights(Index i) const {
    return {vals_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  double degree(Index i) const;
  // m: the sum of all undirected edge weights.
  double total_weight() const { return total_; }

  double weight(Index i, Index j) const;
  std::vector<Edge> edges() const;  // i < j
  Eigen::MatrixXd to_dense() const;

 private:
  void build(Index n, std::vector<Edge> directed);

  Index n_ = 0;
  double total_ = 0.0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Index> cols_;
  std::vector<double> vals_;
};

struct CommunityPartition {
  std::vector<int> labels;  // dense ids 0..count-1
  double q = 0.0;
  double gamma = 1.0;

  int count() const;
};

Eigen::MatrixXd pairwise_distances(const RowMatrix& rows);

// Gaussian kernel exp(-d^2 / (2 sigma^2)) with sigma = median positive distance.
SimilarityNetwork distance_to_similarity(const Eigen::MatrixXd& distances);

// Hadamard product, then each node keeps its `sparsify_k` strongest incident
// edges (an edge survives if either endpoint keeps it). sparsify_k == 0 keeps
// the full product.
SimilarityNetwork consensus(const SimilarityNetwork& g1, const SimilarityNetwork& g2, Index sparsify_k);

// Q = (1/2m) sum_ij (A_ij - gamma k_i k_j / 2m) delta(c_i, c_j).
double modularity_score(const SimilarityNetwork& g, std::span<const int> labels, double gamma);

inline constexpr std::uint64_t kLouvainRestarts = 4;

// Multilevel (Louvain) greedy maximization with seed-derived node orders,
// finished by single-node moves on the original graph until none improves Q.
// Runs kLouvainRestarts passes and keeps the highest Q; the single-community
// partition is returned unless some pass beats it.
CommunityPartition maximize_modularity(const SimilarityNetwork& g, double gamma, std::uint64_t seed);

// Renumbers labels densely in order of first appearance.
std::vector<int> compact_labels(std::span<const int> labels);

// Edge list "i,j,w" with i < j, using `ids` for node names.
void write_network_csv(const SimilarityNetwork& g, std::span<const std::string> ids, const std::filesystem::path& path);

// "id,community".
void write_partition_csv(std::span<const int> labels, std::span<const std::string> ids,
                         const std::filesystem::path& path);

}  // namespace sxgeo
