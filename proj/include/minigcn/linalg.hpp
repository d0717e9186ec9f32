#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "minigcn/errors.hpp"

namespace minigcn {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using DenseMatrix = Matrix<double>;
using DenseVector = Vector<double>;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// One stored coefficient of a symmetric sparse matrix (row <= col).
template <typename Scalar>
struct SymEntry {
  Index row;
  Index col;
  Scalar weight;
};

/// Symmetric sparse matrix. Each off-diagonal pair is declared once and
/// mirrored on construction, so the full storage is exactly symmetric.
template <typename Scalar>
class SymmetricSparse {
public:
  using Storage = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

  SymmetricSparse() = default;

  SymmetricSparse(Index dim, const std::vector<SymEntry<Scalar>>& entries) : full_(dim, dim) {
    if (dim < 0) throw ContractError("SymmetricSparse: negative dimension");
    std::vector<Eigen::Triplet<Scalar>> triplets;
    triplets.reserve(2 * entries.size());
    std::vector<std::pair<Index, Index>> seen;
    seen.reserve(entries.size());
    for (const auto& e : entries) {
      Index r = std::min(e.row, e.col);
      Index c = std::max(e.row, e.col);
      if (r < 0 || c >= dim) {
        throw ContractError("SymmetricSparse: entry (" + std::to_string(e.row) + ", " +
                            std::to_string(e.col) + ") outside dimension " + std::to_string(dim));
      }
      if (!std::isfinite(e.weight)) throw ContractError("SymmetricSparse: non-finite weight");
      seen.emplace_back(r, c);
      triplets.emplace_back(r, c, e.weight);
      if (r != c) triplets.emplace_back(c, r, e.weight);
    }
    std::sort(seen.begin(), seen.end());
    auto dup = std::adjacent_find(seen.begin(), seen.end());
    if (dup != seen.end()) {
      throw ContractError("SymmetricSparse: duplicate entry (" + std::to_string(dup->first) + ", " +
                          std::to_string(dup->second) + ")");
    }
    full_.setFromTriplets(triplets.begin(), triplets.end());
    full_.makeCompressed();
  }

  static SymmetricSparse identity(Index dim) {
    std::vector<SymEntry<Scalar>> e;
    e.reserve(static_cast<std::size_t>(dim));
    for (Index i = 0; i < dim; ++i) e.push_back({i, i, Scalar(1)});
    return SymmetricSparse(dim, e);
  }

  /// Builds from a dense matrix, dropping exact zeros. Requires symmetry within `tol`.
  static SymmetricSparse from_dense(const Matrix<Scalar>& m, Scalar tol = Scalar(0)) {
    if (m.rows() != m.cols()) throw ShapeError("from_dense: matrix is " + shape_string(m) + ", not square");
    std::vector<SymEntry<Scalar>> e;
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = i; j < m.cols(); ++j) {
        if (std::abs(m(i, j) - m(j, i)) > tol) {
          throw ContractError("from_dense: asymmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
        }
        if (m(i, j) != Scalar(0)) e.push_back({i, j, m(i, j)});
      }
    }
    return SymmetricSparse(m.rows(), e);
  }

  Index dim() const { return full_.rows(); }

  /// Upper-triangle entries in row-major order.
  std::vector<SymEntry<Scalar>> entries() const {
    std::vector<SymEntry<Scalar>> out;
    for (Index r = 0; r < full_.outerSize(); ++r) {
      for (typename Storage::InnerIterator it(full_, r); it; ++it) {
        if (it.col() >= r) out.push_back({r, it.col(), it.value()});
      }
    }
    return out;
  }

  Scalar coeff(Index r, Index c) const { return full_.coeff(r, c); }

  /// Full (both triangles) storage, for products and row iteration.
  const Storage& matrix() const { return full_; }

  Matrix<Scalar> to_dense() const { return Matrix<Scalar>(full_); }

  bool operator==(const SymmetricSparse& other) const {
    if (dim() != other.dim() || full_.nonZeros() != other.full_.nonZeros()) return false;
    for (Index r = 0; r < full_.outerSize(); ++r) {
      typename Storage::InnerIterator a(full_, r);
      typename Storage::InnerIterator b(other.full_, r);
      for (; a && b; ++a, ++b) {
        if (a.col() != b.col() || a.value() != b.value()) return false;
      }
      if (a || b) return false;
    }
    return true;
  }

private:
  Storage full_;
};

using SparseSymMatrix = SymmetricSparse<double>;

template <typename Scalar>
Matrix<Scalar> multiply(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("multiply: inner dimensions disagree (" + shape_string(a) + " * " + shape_string(b) + ")");
  }
  return a * b;
}

template <typename Scalar>
Matrix<Scalar> multiply(const SymmetricSparse<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.dim() != b.rows()) {
    throw ShapeError("multiply: inner dimensions disagree (" + shape_string(a.matrix()) + " * " +
                     shape_string(b) + ")");
  }
  return a.matrix() * b;
}

/// Eigenvectors as columns of `vectors`, eigenvalues ascending.
template <typename Scalar>
struct EigenPairT {
  Matrix<Scalar> vectors;
  Vector<Scalar> values;
};

using EigenPair = EigenPairT<double>;

struct EigenOptions {
  Index max_dim = 2048;
  int max_sweeps = 100;
  double symmetry_tol = 1e-10;
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Output is deterministic: eigenvalues ascending (ties keep column order
/// of the converged rotation), and each eigenvector is flipped so its first
/// component with magnitude above 1e-12 is positive.
template <typename Scalar>
EigenPairT<Scalar> symmetric_eigendecomposition(const Matrix<Scalar>& input, const EigenOptions& opt = {}) {
  if (input.rows() != input.cols()) {
    throw ShapeError("symmetric_eigendecomposition: matrix is " + shape_string(input) + ", not square");
  }
  const Index n = input.rows();
  if (n > opt.max_dim) {
    throw ContractError("symmetric_eigendecomposition: dimension " + std::to_string(n) + " exceeds cap " +
                        std::to_string(opt.max_dim));
  }
  const Scalar scale = std::max<Scalar>(Scalar(1), n > 0 ? input.cwiseAbs().maxCoeff() : Scalar(0));
  if (n > 0 && (input - input.transpose()).cwiseAbs().maxCoeff() > opt.symmetry_tol * scale) {
    throw ContractError("symmetric_eigendecomposition: input is not symmetric");
  }
  if (!input.allFinite()) throw ContractError("symmetric_eigendecomposition: non-finite input");

  Matrix<Scalar> a = (input + input.transpose()) / Scalar(2);
  Matrix<Scalar> v = Matrix<Scalar>::Identity(n, n);

  auto off_norm = [&] {
    Scalar s = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(Scalar(2) * s);
  };
  const Scalar target = std::numeric_limits<Scalar>::epsilon() * static_cast<Scalar>(std::max<Index>(n, 1)) *
                        std::max<Scalar>(a.norm(), std::numeric_limits<Scalar>::min());

  bool converged = n <= 1;
  for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
    if (off_norm() <= target) {
      converged = true;
      break;
    }
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar app = a(p, p);
        const Scalar aqq = a(q, q);
        const Scalar theta = (aqq - app) / (Scalar(2) * apq);
        Scalar t = Scalar(1) / (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        if (theta < 0) t = -t;
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Index k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = a(p, k) = c * akp - s * akq;
          a(k, q) = a(q, k) = s * akp + c * akq;
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = Scalar(0);
        for (Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p);
          const Scalar vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged && off_norm() > target) {
    std::ostringstream os;
    os << "symmetric_eigendecomposition: no convergence after " << opt.max_sweeps
       << " sweeps, off-diagonal residual " << off_norm();
    throw NumericError(os.str());
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) < a(j, j); });

  EigenPairT<Scalar> out{Matrix<Scalar>(n, n), Vector<Scalar>(n)};
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    Vector<Scalar> col = v.col(src);
    for (Index i = 0; i < n; ++i) {
      if (std::abs(col(i)) > Scalar(1e-12)) {
        if (col(i) < 0) col = -col;
        break;
      }
    }
    out.vectors.col(k) = col;
  }
  return out;
}

template <typename Scalar>
EigenPairT<Scalar> symmetric_eigendecomposition(const SymmetricSparse<Scalar>& s, const EigenOptions& opt = {}) {
  if (s.dim() > opt.max_dim) {
    throw ContractError("symmetric_eigendecomposition: dimension " + std::to_string(s.dim()) + " exceeds cap " +
                        std::to_string(opt.max_dim));
  }
  return symmetric_eigendecomposition<Scalar>(s.to_dense(), opt);
}

/// U * diag(values) * U^T.
template <typename Scalar>
Matrix<Scalar> reconstruct(const EigenPairT<Scalar>& e) {
  return e.vectors * e.values.asDiagonal() * e.vectors.transpose();
}

}  // namespace minigcn
