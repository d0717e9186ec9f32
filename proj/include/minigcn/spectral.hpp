#pragma once

#include <iosfwd>

#include "minigcn/graph.hpp"
#include "minigcn/linalg.hpp"

namespace minigcn {

enum class FilterKind { exact_diagonal, chebyshev, first_order };

/// Filter coefficients. For `exact_diagonal`, theta holds g(lambda_i) for the
/// eigenvalues in ascending order; for `chebyshev`, theta holds the K+1
/// coefficients of T_0..T_K.
struct SpectralFilter {
  DenseVector theta;
  FilterKind kind = FilterKind::exact_diagonal;
};

/// U^T f.
DenseMatrix graph_fourier(const DenseMatrix& f, const EigenPair& basis);
/// U f_hat.
DenseMatrix inverse_graph_fourier(const DenseMatrix& f_hat, const EigenPair& basis);

/// U diag(theta) U^T f, with U from an eigendecomposition of `l` (dim <= 2048).
DenseMatrix spectral_filter(const DenseMatrix& f, const SpectralFilter& filt, const SparseSymMatrix& l);
DenseMatrix spectral_filter(const DenseMatrix& f, const SpectralFilter& filt, const EigenPair& basis);

/// sum_k theta_k T_k(L~) f via the three-term recurrence.
///
/// When `warn` is given, the spectrum of `l_tilde` is checked (eigensolve,
/// dim <= 2048) and a line is written if it leaves [-1 - 1e-6, 1 + 1e-6].
DenseMatrix chebyshev_filter(const DenseMatrix& f, const SpectralFilter& filt, const SparseSymMatrix& l_tilde,
                             std::ostream* warn = nullptr);

/// theta (I + D^{-1/2} A D^{-1/2}) f, the K = 1 truncation before renormalization.
DenseMatrix first_order_filter(const DenseMatrix& f, double theta, const Graph& g);

}  // namespace minigcn
