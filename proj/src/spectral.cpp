#include "minigcn/spectral.hpp"

#include <cmath>
#include <ostream>

namespace minigcn {

DenseMatrix graph_fourier(const DenseMatrix& f, const EigenPair& basis) {
  if (basis.vectors.rows() != f.rows()) {
    throw ShapeError("graph_fourier: basis " + shape_string(basis.vectors) + " vs signal " + shape_string(f));
  }
  return basis.vectors.transpose() * f;
}

DenseMatrix inverse_graph_fourier(const DenseMatrix& f_hat, const EigenPair& basis) {
  if (basis.vectors.cols() != f_hat.rows()) {
    throw ShapeError("inverse_graph_fourier: basis " + shape_string(basis.vectors) + " vs spectrum " +
                     shape_string(f_hat));
  }
  return basis.vectors * f_hat;
}

DenseMatrix spectral_filter(const DenseMatrix& f, const SpectralFilter& filt, const EigenPair& basis) {
  if (filt.kind != FilterKind::exact_diagonal) throw ContractError("spectral_filter: filter must be exact-diagonal");
  if (filt.theta.size() != basis.values.size()) {
    throw ShapeError("spectral_filter: " + std::to_string(filt.theta.size()) + " coefficients for " +
                     std::to_string(basis.values.size()) + " eigenvalues");
  }
  DenseMatrix f_hat = graph_fourier(f, basis);
  f_hat = filt.theta.asDiagonal() * f_hat;
  return inverse_graph_fourier(f_hat, basis);
}

DenseMatrix spectral_filter(const DenseMatrix& f, const SpectralFilter& filt, const SparseSymMatrix& l) {
  if (l.dim() != f.rows()) {
    throw ShapeError("spectral_filter: operator " + shape_string(l.matrix()) + " vs signal " + shape_string(f));
  }
  return spectral_filter(f, filt, symmetric_eigendecomposition(l));
}

DenseMatrix chebyshev_filter(const DenseMatrix& f, const SpectralFilter& filt, const SparseSymMatrix& l_tilde,
                             std::ostream* warn) {
  if (filt.kind != FilterKind::chebyshev) throw ContractError("chebyshev_filter: filter must be chebyshev");
  if (filt.theta.size() == 0) throw ContractError("chebyshev_filter: empty coefficient vector");
  if (!filt.theta.allFinite()) throw ContractError("chebyshev_filter: non-finite coefficients");
  if (l_tilde.dim() != f.rows()) {
    throw ShapeError("chebyshev_filter: operator " + shape_string(l_tilde.matrix()) + " vs signal " +
                     shape_string(f));
  }
  if (warn != nullptr) {
    const auto values = symmetric_eigendecomposition(l_tilde).values;
    if (values.size() > 0 && (values.minCoeff() < -1.0 - 1e-6 || values.maxCoeff() > 1.0 + 1e-6)) {
      *warn << "chebyshev_filter: spectrum [" << values.minCoeff() << ", " << values.maxCoeff()
            << "] leaves [-1, 1]\n";
    }
  }

  const auto& op = l_tilde.matrix();
  DenseMatrix t_prev = f;
  DenseMatrix out = filt.theta(0) * t_prev;
  if (filt.theta.size() == 1) return out;
  DenseMatrix t_curr = op * f;
  out += filt.theta(1) * t_curr;
  for (Index k = 2; k < filt.theta.size(); ++k) {
    DenseMatrix t_next = 2.0 * (op * t_curr) - t_prev;
    out += filt.theta(k) * t_next;
    t_prev = std::move(t_curr);
    t_curr = std::move(t_next);
  }
  return out;
}

DenseMatrix first_order_filter(const DenseMatrix& f, double theta, const Graph& g) {
  if (g.n != f.rows()) {
    throw ShapeError("first_order_filter: graph has " + std::to_string(g.n) + " vertices, signal is " +
                     shape_string(f));
  }
  DenseVector inv_sqrt(g.n);
  for (Index i = 0; i < g.n; ++i) inv_sqrt(i) = g.degree(i) > 0.0 ? 1.0 / std::sqrt(g.degree(i)) : 0.0;
  const DenseMatrix spread = inv_sqrt.asDiagonal() * (g.adjacency.matrix() * (inv_sqrt.asDiagonal() * f));
  return theta * (f + spread);
}

}  // namespace minigcn
