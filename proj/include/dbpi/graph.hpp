#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dbpi/linalg.hpp"
#include "dbpi/types.hpp"

namespace dbpi {

/// Undirected connected communication topology. Agents are 0-based here;
/// external formats (config files, reports) use 1-based indices.
class CommGraph {
 public:
  using Edge = std::pair<Index, Index>;

  /// Validates and normalizes the edge list (s < t, sorted, duplicates merged).
  static CommGraph from_edges(Index n_agents, std::vector<Edge> edges)
  {
    if (n_agents < 1) throw Error(ErrorKind::InvalidEdge, "graph needs at least one agent");
    for (auto& [s, t] : edges) {
      if (s < 0 || t < 0 || s >= n_agents || t >= n_agents) {
        throw Error(ErrorKind::InvalidEdge, "endpoint out of range in edge (" +
                                                std::to_string(s + 1) + "," +
                                                std::to_string(t + 1) + ")");
      }
      if (s == t) {
        throw Error(ErrorKind::InvalidEdge, "self-loop at agent " + std::to_string(s + 1));
      }
      if (s > t) std::swap(s, t);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    CommGraph g(n_agents, std::move(edges));
    if (!g.connected()) {
      throw Error(ErrorKind::DisconnectedGraph,
                  "graph on " + std::to_string(n_agents) + " agents is not connected");
    }
    return g;
  }

  Index size() const noexcept { return n_agents_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<Index>& neighbors(Index s) const { return adjacency_.at(s); }
  Index degree(Index s) const { return static_cast<Index>(adjacency_.at(s).size()); }

  bool adjacent(Index s, Index t) const
  {
    if (s > t) std::swap(s, t);
    return std::binary_search(edges_.begin(), edges_.end(), Edge{s, t});
  }

  friend bool operator==(const CommGraph& a, const CommGraph& b)
  {
    return a.n_agents_ == b.n_agents_ && a.edges_ == b.edges_;
  }

 private:
  CommGraph(Index n_agents, std::vector<Edge> edges)
      : n_agents_(n_agents), edges_(std::move(edges)), adjacency_(n_agents)
  {
    for (const auto& [s, t] : edges_) {
      adjacency_[s].push_back(t);
      adjacency_[t].push_back(s);
    }
  }

  bool connected() const
  {
    std::vector<bool> seen(n_agents_, false);
    std::queue<Index> frontier;
    frontier.push(0);
    seen[0] = true;
    Index reached = 1;
    while (!frontier.empty()) {
      const Index s = frontier.front();
      frontier.pop();
      for (Index t : adjacency_[s]) {
        if (!seen[t]) {
          seen[t] = true;
          ++reached;
          frontier.push(t);
        }
      }
    }
    return reached == n_agents_;
  }

  Index n_agents_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Index>> adjacency_;
};

inline CommGraph path_graph(Index n)
{
  std::vector<CommGraph::Edge> edges;
  for (Index s = 0; s + 1 < n; ++s) edges.emplace_back(s, s + 1);
  return CommGraph::from_edges(n, std::move(edges));
}

inline CommGraph cycle_graph(Index n)
{
  std::vector<CommGraph::Edge> edges;
  for (Index s = 0; s + 1 < n; ++s) edges.emplace_back(s, s + 1);
  if (n > 2) edges.emplace_back(n - 1, 0);
  return CommGraph::from_edges(n, std::move(edges));
}

inline CommGraph complete_graph(Index n)
{
  std::vector<CommGraph::Edge> edges;
  for (Index s = 0; s < n; ++s)
    for (Index t = s + 1; t < n; ++t) edges.emplace_back(s, t);
  return CommGraph::from_edges(n, std::move(edges));
}

/// Agent 0 is the hub.
inline CommGraph star_graph(Index n)
{
  std::vector<CommGraph::Edge> edges;
  for (Index t = 1; t < n; ++t) edges.emplace_back(0, t);
  return CommGraph::from_edges(n, std::move(edges));
}

/// G(n, p) with a seeded mt19937_64; throws DisconnectedGraph when the draw is
/// not connected. Deterministic for a fixed seed on a given platform.
inline CommGraph erdos_renyi_graph(Index n, double p, std::uint64_t seed)
{
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidEdge, "edge probability outside [0,1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<CommGraph::Edge> edges;
  for (Index s = 0; s < n; ++s)
    for (Index t = s + 1; t < n; ++t)
      if (coin(rng) < p) edges.emplace_back(s, t);
  return CommGraph::from_edges(n, std::move(edges));
}

enum class GraphFamily { path, cycle, complete, star, erdos_renyi };

struct NamedGraph {
  GraphFamily family = GraphFamily::path;
  Index n = 1;
  double p = 0.5;
  std::uint64_t seed = 0;
};

struct EdgeListGraph {
  Index n = 1;
  std::vector<CommGraph::Edge> edges;  // 0-based
};

using GraphDescriptor = std::variant<NamedGraph, EdgeListGraph>;

inline CommGraph build_graph(const GraphDescriptor& spec)
{
  if (const auto* list = std::get_if<EdgeListGraph>(&spec)) {
    return CommGraph::from_edges(list->n, list->edges);
  }
  const auto& named = std::get<NamedGraph>(spec);
  switch (named.family) {
    case GraphFamily::path: return path_graph(named.n);
    case GraphFamily::cycle: return cycle_graph(named.n);
    case GraphFamily::complete: return complete_graph(named.n);
    case GraphFamily::star: return star_graph(named.n);
    case GraphFamily::erdos_renyi: return erdos_renyi_graph(named.n, named.p, named.seed);
  }
  throw Error(ErrorKind::InvalidEdge, "unknown graph family");
}

/// Consensus weights W~ (N x N) together with the block dimension d of W = W~ (x) I_d.
template <typename Scalar>
class WeightMatrix {
 public:
  WeightMatrix(Matrix<Scalar> w_tilde, Index d) : w_tilde_(std::move(w_tilde)), d_(d)
  {
    require_dimension(w_tilde_.cols(), w_tilde_.rows(), "weight matrix columns");
    if (d_ < 1) throw Error(ErrorKind::DimensionMismatch, "block dimension must be positive");
  }

  const Matrix<Scalar>& w_tilde() const noexcept { return w_tilde_; }
  Index dim() const noexcept { return d_; }
  Index agents() const noexcept { return w_tilde_.rows(); }
  Matrix<Scalar> lifted() const { return kron_identity(w_tilde_, d_); }
  Vector<Scalar> apply(const Vector<Scalar>& z) const { return kron_apply(w_tilde_, d_, z); }

 private:
  Matrix<Scalar> w_tilde_;
  Index d_;
};

/// W~_st = 1/(1 + max(deg_s, deg_t)) on edges, W~_ss = 1 - sum_{t != s} W~_st.
template <typename Scalar = double>
WeightMatrix<Scalar> metropolis_weights(const CommGraph& g, Index d = 1)
{
  const Index n = g.size();
  Matrix<Scalar> w = Matrix<Scalar>::Zero(n, n);
  for (const auto& [s, t] : g.edges()) {
    const Scalar weight = Scalar(1) / Scalar(1 + std::max(g.degree(s), g.degree(t)));
    w(s, t) = weight;
    w(t, s) = weight;
  }
  for (Index s = 0; s < n; ++s) {
    Scalar off = 0;
    for (Index t : g.neighbors(s)) off += w(s, t);
    w(s, s) = Scalar(1) - off;
  }
  return WeightMatrix<Scalar>(std::move(w), d);
}

/// Matrix L = L~ (x) I_d satisfying the four structural assumptions
/// (a: symmetric PSD, b: rho(L) < 2, c: ker L = consensus subspace,
/// d: graph-compatible sparsity), with all spectral factors precomputed on L~.
template <typename Scalar>
class GaugeMatrix {
 public:
  static constexpr double rank_tolerance = 1e-10;
  static constexpr double radius_margin = 1e-12;
  static constexpr double symmetry_tolerance = 1e-12;

  /// Runs the assumption checks in order a, b, c, d and throws on the first failure.
  GaugeMatrix(Matrix<Scalar> l_tilde, const CommGraph& g, Index d)
      : l_tilde_(std::move(l_tilde)), d_(d)
  {
    const Index n = g.size();
    require_dimension(l_tilde_.rows(), n, "gauge rows");
    require_dimension(l_tilde_.cols(), n, "gauge columns");
    if (d_ < 1) throw Error(ErrorKind::DimensionMismatch, "block dimension must be positive");

    const Scalar scale = std::max<Scalar>(Scalar(1), max_abs(l_tilde_));
    if (max_abs(Matrix<Scalar>(l_tilde_ - l_tilde_.transpose())) > symmetry_tolerance * scale) {
      throw AssumptionViolated('a', "L is not symmetric");
    }
    l_tilde_ = (l_tilde_ + l_tilde_.transpose()) / Scalar(2);

    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(l_tilde_);
    eigvals_tilde_ = eig.eigenvalues();
    eigvecs_tilde_ = eig.eigenvectors();
    if (eigvals_tilde_(0) < -Scalar(rank_tolerance)) {
      throw AssumptionViolated('a', "L has negative eigenvalue " + std::to_string(double(eigvals_tilde_(0))));
    }
    if (!(eigvals_tilde_(n - 1) < Scalar(2) - Scalar(radius_margin))) {
      throw AssumptionViolated('b', "spectral radius " + std::to_string(double(eigvals_tilde_(n - 1))) +
                                        " is not below 2");
    }
    Index kernel_dim = 0;
    for (Index i = 0; i < n; ++i) kernel_dim += std::abs(eigvals_tilde_(i)) <= Scalar(rank_tolerance);
    const Scalar ones_residual = max_abs(Vector<Scalar>(l_tilde_ * Vector<Scalar>::Ones(n)));
    if (kernel_dim != 1 || ones_residual > Scalar(rank_tolerance)) {
      throw AssumptionViolated('c', "kernel of L is not the consensus subspace (kernel dimension " +
                                        std::to_string(kernel_dim) + ")");
    }
    for (Index s = 0; s < n; ++s) {
      for (Index t = 0; t < n; ++t) {
        if (s != t && l_tilde_(s, t) != Scalar(0) && !g.adjacent(s, t)) {
          throw AssumptionViolated('d', "nonzero entry between non-neighbors " + std::to_string(s + 1) +
                                            " and " + std::to_string(t + 1));
        }
      }
    }
    factorize();
  }

  Index dim() const noexcept { return d_; }
  Index agents() const noexcept { return l_tilde_.rows(); }
  Index size() const noexcept { return d_ * agents(); }
  /// Number of columns of the range basis U~, d (N - 1) under assumption c.
  Index range_dim() const noexcept { return d_ * range_tilde_.cols(); }

  const Matrix<Scalar>& l_tilde() const noexcept { return l_tilde_; }
  const Vector<Scalar>& eigenvalues_tilde() const noexcept { return eigvals_tilde_; }
  const Matrix<Scalar>& eigenvectors_tilde() const noexcept { return eigvecs_tilde_; }
  const Matrix<Scalar>& sqrt_tilde() const noexcept { return sqrt_tilde_; }
  const Matrix<Scalar>& sqrt_pinv_tilde() const noexcept { return sqrt_pinv_tilde_; }
  const Matrix<Scalar>& range_tilde() const noexcept { return range_tilde_; }

  /// Eigenvalues of L: each eigenvalue of L~ repeated d times.
  Vector<Scalar> eigenvalues() const { return eigvals_tilde_.replicate(1, d_).transpose().reshaped(); }
  Matrix<Scalar> eigenvectors() const { return kron_identity(eigvecs_tilde_, d_); }
  Matrix<Scalar> matrix() const { return kron_identity(l_tilde_, d_); }
  Matrix<Scalar> sqrt() const { return kron_identity(sqrt_tilde_, d_); }
  Matrix<Scalar> sqrt_pinv() const { return kron_identity(sqrt_pinv_tilde_, d_); }
  Matrix<Scalar> range_basis() const { return kron_identity(range_tilde_, d_); }

  /// (1/sqrt(N)) (1_N (x) I_d).
  Matrix<Scalar> kernel_basis() const
  {
    Matrix<Scalar> ones = Matrix<Scalar>::Constant(agents(), 1, Scalar(1) / std::sqrt(Scalar(agents())));
    return kron_identity(ones, d_);
  }

  Vector<Scalar> apply(const Vector<Scalar>& z) const { return kron_apply(l_tilde_, d_, z); }
  Vector<Scalar> apply_sqrt(const Vector<Scalar>& z) const { return kron_apply(sqrt_tilde_, d_, z); }
  Vector<Scalar> apply_sqrt_pinv(const Vector<Scalar>& z) const { return kron_apply(sqrt_pinv_tilde_, d_, z); }
  /// U~ w~ for w~ in R^{range_dim()}.
  Vector<Scalar> lift_range(const Vector<Scalar>& w_tilde) const { return kron_apply(range_tilde_, d_, w_tilde); }
  /// U~^T z.
  Vector<Scalar> project_range(const Vector<Scalar>& z) const
  {
    return kron_apply(Matrix<Scalar>(range_tilde_.transpose()), d_, z);
  }

 private:
  void factorize()
  {
    const Index n = agents();
    Vector<Scalar> root(n), inv_root(n);
    std::vector<Index> nonzero;
    for (Index i = 0; i < n; ++i) {
      if (eigvals_tilde_(i) <= Scalar(rank_tolerance)) {
        eigvals_tilde_(i) = 0;
        root(i) = 0;
        inv_root(i) = 0;
      } else {
        root(i) = std::sqrt(eigvals_tilde_(i));
        inv_root(i) = Scalar(1) / root(i);
        nonzero.push_back(i);
      }
    }
    sqrt_tilde_ = eigvecs_tilde_ * root.asDiagonal() * eigvecs_tilde_.transpose();
    sqrt_pinv_tilde_ = eigvecs_tilde_ * inv_root.asDiagonal() * eigvecs_tilde_.transpose();
    range_tilde_.resize(n, static_cast<Index>(nonzero.size()));
    for (std::size_t j = 0; j < nonzero.size(); ++j) range_tilde_.col(j) = eigvecs_tilde_.col(nonzero[j]);
  }

  Matrix<Scalar> l_tilde_;
  Index d_;
  Vector<Scalar> eigvals_tilde_;
  Matrix<Scalar> eigvecs_tilde_;
  Matrix<Scalar> sqrt_tilde_;
  Matrix<Scalar> sqrt_pinv_tilde_;
  Matrix<Scalar> range_tilde_;
};

template <typename Scalar>
GaugeMatrix<Scalar> gauge_from_custom(const Matrix<Scalar>& l_tilde, const CommGraph& g, Index d)
{
  return GaugeMatrix<Scalar>(l_tilde, g, d);
}

/// L~ = I - W~. The graph is recovered from the weight sparsity pattern.
template <typename Scalar>
GaugeMatrix<Scalar> gauge_from_weights(const WeightMatrix<Scalar>& w)
{
  const Index n = w.agents();
  std::vector<CommGraph::Edge> edges;
  for (Index s = 0; s < n; ++s)
    for (Index t = s + 1; t < n; ++t)
      if (w.w_tilde()(s, t) != Scalar(0) || w.w_tilde()(t, s) != Scalar(0)) edges.emplace_back(s, t);
  const CommGraph g = CommGraph::from_edges(n, std::move(edges));
  Matrix<Scalar> l_tilde = Matrix<Scalar>::Identity(n, n) - w.w_tilde();
  return GaugeMatrix<Scalar>(std::move(l_tilde), g, w.dim());
}

/// U^ U^T = (1/N)(1 1^T (x) I_d), the orthogonal projector onto ker(L).
template <typename Scalar>
Matrix<Scalar> kernel_projector(const GaugeMatrix<Scalar>& gauge)
{
  const Index n = gauge.agents();
  return kron_identity(Matrix<Scalar>(Matrix<Scalar>::Constant(n, n, Scalar(1) / Scalar(n))), gauge.dim());
}

}  // namespace dbpi
