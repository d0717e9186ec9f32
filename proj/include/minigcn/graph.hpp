#pragma once

#include <iosfwd>

#include "minigcn/linalg.hpp"

namespace minigcn {

/// Undirected weighted graph over N vertices with its renormalized
/// propagation matrix D~^{-1/2} (A + I) D~^{-1/2} cached in `prop`.
struct Graph {
  Index n = 0;
  SparseSymMatrix adjacency;
  DenseVector degree;
  Index knn_k = 0;
  double rbf_sigma = 1.0;
  SparseSymMatrix prop;
};

/// K-nearest-neighbour graph with RBF weights exp(-|xi - xj|^2 / sigma^2).
///
/// Each vertex selects its k nearest vertices (ties broken by lower index),
/// and the edge set is the union of all selections. Weights that would
/// underflow to zero are clamped to the smallest normal double so every
/// selected edge stays present.
Graph build_knn_rbf_graph(const DenseMatrix& features, Index k, double sigma);

/// Wraps an explicit adjacency (zero diagonal, non-negative weights).
Graph graph_from_adjacency(const SparseSymMatrix& adjacency, Index knn_k = 0, double rbf_sigma = 1.0);

/// L = D - A.
SparseSymMatrix laplacian(const Graph& g);

/// L_sym = I - D^{-1/2} A D^{-1/2}. Throws ContractError on a zero-degree vertex.
SparseSymMatrix sym_normalized_laplacian(const Graph& g);

/// D~^{-1/2} A~ D~^{-1/2} with A~ = A + I.
SparseSymMatrix renormalized_propagation(const SparseSymMatrix& adjacency);
SparseSymMatrix renormalized_propagation(const Graph& g);

/// (2 / lambda_max) L_sym - I.
SparseSymMatrix chebyshev_scaled(const SparseSymMatrix& l_sym, double lambda_max);

/// Debug dump, one "i j w" line per undirected edge (i < j).
void write_edges(std::ostream& os, const Graph& g);

}  // namespace minigcn
