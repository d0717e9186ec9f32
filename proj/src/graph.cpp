#include "minigcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <utility>

namespace minigcn {

namespace {

double rbf_weight(double squared_distance, double sigma) {
  const double w = std::exp(-squared_distance / (sigma * sigma));
  return std::max(w, std::numeric_limits<double>::min());
}

DenseVector row_sums(const SparseSymMatrix& s) { return s.matrix() * DenseVector::Ones(s.dim()); }

}  // namespace

Graph build_knn_rbf_graph(const DenseMatrix& features, Index k, double sigma) {
  const Index n = features.rows();
  if (n < 2) throw ContractError("build_knn_rbf_graph: need at least 2 vertices, got " + std::to_string(n));
  if (k < 1 || k >= n) {
    throw ContractError("build_knn_rbf_graph: k must satisfy 1 <= k < N (k=" + std::to_string(k) +
                        ", N=" + std::to_string(n) + ")");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ContractError("build_knn_rbf_graph: sigma must be positive");
  if (!features.allFinite()) throw ContractError("build_knn_rbf_graph: non-finite features");

  std::map<std::pair<Index, Index>, double> edges;
  std::vector<std::pair<double, Index>> candidates(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      candidates[c++] = {(features.row(i) - features.row(j)).squaredNorm(), j};
    }
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
    for (Index r = 0; r < k; ++r) {
      const auto [d2, j] = candidates[static_cast<std::size_t>(r)];
      edges.emplace(std::minmax(i, j), rbf_weight(d2, sigma));
    }
  }

  std::vector<SymEntry<double>> entries;
  entries.reserve(edges.size());
  for (const auto& [key, w] : edges) entries.push_back({key.first, key.second, w});
  return graph_from_adjacency(SparseSymMatrix(n, entries), k, sigma);
}

Graph graph_from_adjacency(const SparseSymMatrix& adjacency, Index knn_k, double rbf_sigma) {
  for (const auto& e : adjacency.entries()) {
    if (e.row == e.col) {
      throw ContractError("graph_from_adjacency: self-edge at vertex " + std::to_string(e.row));
    }
    if (e.weight < 0.0) {
      throw ContractError("graph_from_adjacency: negative weight on edge (" + std::to_string(e.row) + ", " +
                          std::to_string(e.col) + ")");
    }
  }
  Graph g;
  g.n = adjacency.dim();
  g.adjacency = adjacency;
  g.degree = row_sums(adjacency);
  g.knn_k = knn_k;
  g.rbf_sigma = rbf_sigma;
  g.prop = renormalized_propagation(adjacency);
  return g;
}

SparseSymMatrix laplacian(const Graph& g) {
  std::vector<SymEntry<double>> entries;
  for (Index i = 0; i < g.n; ++i) {
    if (g.degree(i) != 0.0) entries.push_back({i, i, g.degree(i)});
  }
  for (const auto& e : g.adjacency.entries()) entries.push_back({e.row, e.col, -e.weight});
  return SparseSymMatrix(g.n, entries);
}

SparseSymMatrix sym_normalized_laplacian(const Graph& g) {
  for (Index i = 0; i < g.n; ++i) {
    if (!(g.degree(i) > 0.0)) {
      throw ContractError("sym_normalized_laplacian: vertex " + std::to_string(i) + " has zero degree");
    }
  }
  std::vector<SymEntry<double>> entries;
  for (Index i = 0; i < g.n; ++i) entries.push_back({i, i, 1.0});
  for (const auto& e : g.adjacency.entries()) {
    entries.push_back({e.row, e.col, -e.weight / std::sqrt(g.degree(e.row) * g.degree(e.col))});
  }
  return SparseSymMatrix(g.n, entries);
}

SparseSymMatrix renormalized_propagation(const SparseSymMatrix& adjacency) {
  const Index n = adjacency.dim();
  const DenseVector deg = row_sums(adjacency).array() + 1.0;
  std::vector<SymEntry<double>> entries;
  for (Index i = 0; i < n; ++i) entries.push_back({i, i, 1.0 / deg(i)});
  for (const auto& e : adjacency.entries()) {
    if (e.row == e.col) throw ContractError("renormalized_propagation: adjacency has a self-edge");
    entries.push_back({e.row, e.col, e.weight / std::sqrt(deg(e.row) * deg(e.col))});
  }
  return SparseSymMatrix(n, entries);
}

SparseSymMatrix renormalized_propagation(const Graph& g) { return renormalized_propagation(g.adjacency); }

SparseSymMatrix chebyshev_scaled(const SparseSymMatrix& l_sym, double lambda_max) {
  if (!(lambda_max > 0.0)) throw ContractError("chebyshev_scaled: lambda_max must be positive");
  const double scale = 2.0 / lambda_max;
  std::map<std::pair<Index, Index>, double> acc;
  for (Index i = 0; i < l_sym.dim(); ++i) acc[{i, i}] = -1.0;
  for (const auto& e : l_sym.entries()) acc[{e.row, e.col}] += scale * e.weight;
  std::vector<SymEntry<double>> entries;
  for (const auto& [key, w] : acc) {
    if (w != 0.0) entries.push_back({key.first, key.second, w});
  }
  return SparseSymMatrix(l_sym.dim(), entries);
}

void write_edges(std::ostream& os, const Graph& g) {
  const auto precision = os.precision(17);
  for (const auto& e : g.adjacency.entries()) os << e.row << ' ' << e.col << ' ' << e.weight << '\n';
  os.precision(precision);
}

}  // namespace minigcn
