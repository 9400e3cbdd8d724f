#include "sxgeo/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "sxgeo/csv.hpp"
#include "sxgeo/error.hpp"
#include "sxgeo/random.hpp"

namespace sxgeo {

void SimilarityNetwork::build(Index n, std::vector<Edge> directed) {
  std::sort(directed.begin(), directed.end(),
            [](const Edge& a, const Edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  n_ = n;
  row_ptr_.assign(n + 1, 0);
  cols_.clear();
  vals_.clear();
  cols_.reserve(directed.size());
  vals_.reserve(directed.size());
  double sum = 0.0;
  for (const Edge& e : directed) {
    row_ptr_[e.i + 1]++;
    cols_.push_back(e.j);
    vals_.push_back(e.w);
    sum += e.w;
  }
  for (Index i = 0; i < n; ++i) row_ptr_[i + 1] += row_ptr_[i];
  total_ = 0.5 * sum;
}

SimilarityNetwork SimilarityNetwork::from_dense(const Eigen::MatrixXd& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw ShapeError("adjacency matrix must be square");
  const auto n = static_cast<Index>(adjacency.rows());
  std::vector<Edge> directed;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double w = adjacency(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (!std::isfinite(w) || w < 0.0 || w > 1.0) throw DataError("similarity weights must lie in [0, 1]");
      if (w != adjacency(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))) {
        throw DataError("similarity matrix is not symmetric");
      }
      if (i != j && w > 0.0) directed.push_back({i, j, w});
    }
  }
  SimilarityNetwork g;
  g.build(n, std::move(directed));
  return g;
}

SimilarityNetwork SimilarityNetwork::from_edges(Index n, std::vector<Edge> edges) {
  std::vector<Edge> directed;
  directed.reserve(2 * edges.size());
  for (const Edge& e : edges) {
    if (e.i >= n || e.j >= n) throw ShapeError("edge endpoint out of range");
    if (!std::isfinite(e.w) || e.w < 0.0 || e.w > 1.0) throw DataError("similarity weights must lie in [0, 1]");
    if (e.i == e.j || e.w == 0.0) continue;
    directed.push_back({e.i, e.j, e.w});
    directed.push_back({e.j, e.i, e.w});
  }
  std::sort(directed.begin(), directed.end(),
            [](const Edge& a, const Edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  for (std::size_t k = 1; k < directed.size(); ++k) {
    if (directed[k].i == directed[k - 1].i && directed[k].j == directed[k - 1].j) {
      throw DataError("duplicate edge in similarity network");
    }
  }
  SimilarityNetwork g;
  g.build(n, std::move(directed));
  return g;
}

double SimilarityNetwork::degree(Index i) const {
  double d = 0.0;
  for (double w : weights(i)) d += w;
  return d;
}

double SimilarityNetwork::weight(Index i, Index j) const {
  const auto nb = neighbors(i);
  const auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return 0.0;
  return weights(i)[static_cast<std::size_t>(it - nb.begin())];
}

std::vector<SimilarityNetwork::Edge> SimilarityNetwork::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count());
  for (Index i = 0; i < n_; ++i) {
    const auto nb = neighbors(i);
    const auto wt = weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      if (nb[k] > i) out.push_back({i, nb[k], wt[k]});
    }
  }
  return out;
}

Eigen::MatrixXd SimilarityNetwork::to_dense() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  for (Index i = 0; i < n_; ++i) {
    const auto nb = neighbors(i);
    const auto wt = weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(nb[k])) = wt[k];
  }
  return a;
}

int CommunityPartition::count() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

Eigen::MatrixXd pairwise_distances(const RowMatrix& rows) {
  if (!rows.allFinite()) throw DataError("pairwise distances: non-finite row entry");
  const auto n = rows.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (rows.row(i) - rows.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

SimilarityNetwork distance_to_similarity(const Eigen::MatrixXd& distances) {
  if (distances.rows() != distances.cols()) throw ShapeError("distance matrix must be square");
  const auto n = distances.rows();
  std::vector<double> positive;
  positive.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (distances(i, i) != 0.0) throw DataError("distance matrix must have a zero diagonal");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = distances(i, j);
      if (!std::isfinite(d) || d < 0.0 || d != distances(j, i)) {
        throw DataError("distance matrix must be symmetric, finite and nonnegative");
      }
      if (d > 0.0) positive.push_back(d);
    }
  }
  if (positive.empty()) throw DegenerateGeometryError("all pairwise distances are zero");
  const auto mid = positive.begin() + static_cast<std::ptrdiff_t>(positive.size() / 2);
  std::nth_element(positive.begin(), mid, positive.end());
  double sigma = *mid;
  if (positive.size() % 2 == 0) sigma = 0.5 * (sigma + *std::max_element(positive.begin(), mid));

  const double denom = 2.0 * sigma * sigma;
  std::vector<SimilarityNetwork::Edge> edges;
  edges.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = distances(i, j);
      const double s = std::exp(-d * d / denom);
      if (s > 0.0) edges.push_back({static_cast<Index>(i), static_cast<Index>(j), s});
    }
  }
  return SimilarityNetwork::from_edges(static_cast<Index>(n), std::move(edges));
}

SimilarityNetwork consensus(const SimilarityNetwork& g1, const SimilarityNetwork& g2, Index sparsify_k) {
  if (g1.n() != g2.n()) throw ShapeError("consensus needs networks over the same nodes");
  const Index n = g1.n();
  // Hadamard product by merging sorted rows.
  std::vector<std::vector<std::pair<Index, double>>> rows(n);
  bool any = false;
  for (Index i = 0; i < n; ++i) {
    const auto a = g1.neighbors(i);
    const auto aw = g1.weights(i);
    const auto b = g2.neighbors(i);
    const auto bw = g2.weights(i);
    std::size_t x = 0;
    std::size_t y = 0;
    while (x < a.size() && y < b.size()) {
      if (a[x] < b[y]) {
        ++x;
      } else if (b[y] < a[x]) {
        ++y;
      } else {
        const double w = aw[x] * bw[y];
        if (w > 0.0) {
          rows[i].emplace_back(a[x], w);
          any = true;
        }
        ++x;
        ++y;
      }
    }
  }
  if (!any) throw DegenerateGeometryError("consensus network has no positive entries");

  std::vector<SimilarityNetwork::Edge> edges;
  if (sparsify_k == 0) {
    for (Index i = 0; i < n; ++i) {
      for (const auto& [j, w] : rows[i]) {
        if (j > i) edges.push_back({i, j, w});
      }
    }
  } else {
    // Strongest first; equal weights resolved by lower neighbour index.
    std::vector<std::pair<Index, Index>> kept;
    for (Index i = 0; i < n; ++i) {
      auto& r = rows[i];
      const std::size_t take = std::min<std::size_t>(sparsify_k, r.size());
      std::vector<std::pair<Index, double>> top = r;
      std::partial_sort(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(take), top.end(),
                        [](const auto& u, const auto& v) { return u.second != v.second ? u.second > v.second : u.first < v.first; });
      for (std::size_t k = 0; k < take; ++k) kept.emplace_back(std::min(i, top[k].first), std::max(i, top[k].first));
    }
    std::sort(kept.begin(), kept.end());
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    edges.reserve(kept.size());
    for (auto [i, j] : kept) {
      const auto& r = rows[i];
      const auto it = std::lower_bound(r.begin(), r.end(), j, [](const auto& e, Index v) { return e.first < v; });
      edges.push_back({i, j, it->second});
    }
  }
  return SimilarityNetwork::from_edges(n, std::move(edges));
}

double modularity_score(const SimilarityNetwork& g, std::span<const int> labels, double gamma) {
  if (labels.size() != g.n()) throw ShapeError("partition length does not match the network");
  const double m = g.total_weight();
  if (!(m > 0.0)) throw DegenerateGeometryError("network has zero total weight");
  std::unordered_map<int, std::pair<double, double>> per_comm;  // label -> (internal, degree total)
  for (Index i = 0; i < g.n(); ++i) {
    auto& entry = per_comm[labels[i]];
    const auto nb = g.neighbors(i);
    const auto wt = g.weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      entry.second += wt[k];
      if (labels[nb[k]] == labels[i]) entry.first += wt[k];
    }
  }
  // Sum in label order so the result does not depend on hash iteration order.
  std::vector<std::pair<int, std::pair<double, double>>> ordered(per_comm.begin(), per_comm.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const double two_m = 2.0 * m;
  double q = 0.0;
  for (const auto& [label, v] : ordered) {
    const double frac = v.second / two_m;
    q += v.first / two_m - gamma * frac * frac;
  }
  return q;
}

std::vector<int> compact_labels(std::span<const int> labels) {
  std::unordered_map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

namespace {

// Graph used inside Louvain; aggregated nodes carry self-loop weight equal to
// the (double-counted) internal weight of the community they replace.
struct LevelGraph {
  Index n = 0;
  std::vector<std::size_t> ptr{0};
  std::vector<Index> adj;
  std::vector<double> w;
  std::vector<double> self;
  std::vector<double> degree;
};

LevelGraph from_network(const SimilarityNetwork& g) {
  LevelGraph lg;
  lg.n = g.n();
  lg.ptr.assign(lg.n + 1, 0);
  lg.self.assign(lg.n, 0.0);
  lg.degree.assign(lg.n, 0.0);
  for (Index i = 0; i < lg.n; ++i) {
    const auto nb = g.neighbors(i);
    const auto wt = g.weights(i);
    lg.adj.insert(lg.adj.end(), nb.begin(), nb.end());
    lg.w.insert(lg.w.end(), wt.begin(), wt.end());
    lg.ptr[i + 1] = lg.adj.size();
    lg.degree[i] = g.degree(i);
  }
  return lg;
}

// One round of local moving; returns true when any node changed community.
bool local_moving(const LevelGraph& g, std::vector<int>& comm, double gamma, double two_m, std::uint64_t seed) {
  std::vector<double> tot(g.n, 0.0);
  for (Index i = 0; i < g.n; ++i) tot[static_cast<std::size_t>(comm[i])] += g.degree[i];

  std::vector<Index> order(g.n);
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(std::span<Index>(order));

  std::vector<double> link(g.n, 0.0);
  std::vector<int> touched;
  bool moved_any = false;
  const double tol = 1e-12 * two_m;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    bool moved = false;
    for (Index i : order) {
      const int own = comm[i];
      touched.clear();
      for (std::size_t k = g.ptr[i]; k < g.ptr[i + 1]; ++k) {
        const int c = comm[g.adj[k]];
        if (link[static_cast<std::size_t>(c)] == 0.0) touched.push_back(c);
        link[static_cast<std::size_t>(c)] += g.w[k];
      }
      const double ki = g.degree[i];
      tot[static_cast<std::size_t>(own)] -= ki;
      // Gain of joining c (node isolated first): link_c - gamma * tot_c * k_i / 2m.
      double best_gain = link[static_cast<std::size_t>(own)] - gamma * tot[static_cast<std::size_t>(own)] * ki / two_m;
      int best = own;
      for (int c : touched) {
        if (c == own) continue;
        const double gain = link[static_cast<std::size_t>(c)] - gamma * tot[static_cast<std::size_t>(c)] * ki / two_m;
        if (gain > best_gain + tol) {
          best_gain = gain;
          best = c;
        }
      }
      tot[static_cast<std::size_t>(best)] += ki;
      if (best != own) {
        comm[i] = best;
        moved = true;
        moved_any = true;
      }
      for (int c : touched) link[static_cast<std::size_t>(c)] = 0.0;
      link[static_cast<std::size_t>(own)] = 0.0;
    }
    if (!moved) break;
  }
  return moved_any;
}

LevelGraph aggregate(const LevelGraph& g, const std::vector<int>& comm, Index n_comm) {
  std::vector<std::unordered_map<Index, double>> acc(n_comm);
  LevelGraph out;
  out.n = n_comm;
  out.self.assign(n_comm, 0.0);
  out.degree.assign(n_comm, 0.0);
  for (Index i = 0; i < g.n; ++i) {
    const auto ci = static_cast<Index>(comm[i]);
    out.self[ci] += g.self[i];
    out.degree[ci] += g.degree[i];
    for (std::size_t k = g.ptr[i]; k < g.ptr[i + 1]; ++k) {
      const auto cj = static_cast<Index>(comm[g.adj[k]]);
      if (cj == ci) out.self[ci] += g.w[k];
      else acc[ci][cj] += g.w[k];
    }
  }
  out.ptr.assign(n_comm + 1, 0);
  for (Index c = 0; c < n_comm; ++c) {
    std::vector<std::pair<Index, double>> row(acc[c].begin(), acc[c].end());
    std::sort(row.begin(), row.end());
    for (const auto& [d, w] : row) {
      out.adj.push_back(d);
      out.w.push_back(w);
    }
    out.ptr[c + 1] = out.adj.size();
  }
  return out;
}

}  // namespace

namespace {

std::vector<int> louvain_pass(const SimilarityNetwork& g, double gamma, double two_m, std::uint64_t seed) {
  const Index n = g.n();
  std::vector<int> labels(n);
  std::iota(labels.begin(), labels.end(), 0);
  LevelGraph level = from_network(g);
  for (int depth = 0; depth < 64; ++depth) {
    std::vector<int> comm(level.n);
    std::iota(comm.begin(), comm.end(), 0);
    const bool moved = local_moving(level, comm, gamma, two_m, derive_seed(seed, static_cast<std::uint64_t>(depth)));
    if (!moved) break;
    comm = compact_labels(comm);
    const auto n_comm = static_cast<Index>(*std::max_element(comm.begin(), comm.end()) + 1);
    for (Index i = 0; i < n; ++i) labels[i] = comm[static_cast<std::size_t>(labels[i])];
    if (n_comm == level.n) break;
    level = aggregate(level, comm, n_comm);
  }

  // Polish on the original graph so that no single-node move improves Q.
  LevelGraph base = from_network(g);
  labels = compact_labels(labels);
  local_moving(base, labels, gamma, two_m, derive_seed(seed, 0x706f6c697368ULL));
  return compact_labels(labels);
}

}  // namespace

CommunityPartition maximize_modularity(const SimilarityNetwork& g, double gamma, std::uint64_t seed) {
  const double m = g.total_weight();
  if (!(m > 0.0)) throw DegenerateGeometryError("cannot partition a network with zero total weight");
  const double two_m = 2.0 * m;
  const Index n = g.n();

  CommunityPartition out;
  out.gamma = gamma;
  out.labels.assign(n, 0);
  out.q = modularity_score(g, out.labels, gamma);
  // Independent passes with different node orders; the first best Q wins.
  for (std::uint64_t r = 0; r < kLouvainRestarts; ++r) {
    std::vector<int> labels = louvain_pass(g, gamma, two_m, derive_seed(seed, r));
    const double q = modularity_score(g, labels, gamma);
    if (q > out.q) {
      out.labels = std::move(labels);
      out.q = q;
    }
  }
  return out;
}

void write_network_csv(const SimilarityNetwork& g, std::span<const std::string> ids, const std::filesystem::path& path) {
  if (ids.size() != g.n()) throw ShapeError("network has " + std::to_string(g.n()) + " nodes but " +
                                            std::to_string(ids.size()) + " ids were given");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "i,j,w\n";
  for (const auto& e : g.edges()) {
    out << csv::quote(ids[e.i]) << ',' << csv::quote(ids[e.j]) << ',' << csv::format_double(e.w) << '\n';
  }
}

void write_partition_csv(std::span<const int> labels, std::span<const std::string> ids,
                         const std::filesystem::path& path) {
  if (ids.size() != labels.size()) throw ShapeError("labels and ids differ in length");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,community\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << csv::quote(ids[i]) << ',' << labels[i] << '\n';
}

}  // namespace sxgeo
