#include "doctest.h"

#include <Eigen/Eigenvalues>

#include "minigcn/graph.hpp"
#include "minigcn/linalg.hpp"
#include "test_support.hpp"

using namespace minigcn;
using minigcn::testing::max_abs;

TEST_CASE("multiply: identity and hand-computed products") {
  std::mt19937_64 rng(1);
  const DenseMatrix m = testing::random_matrix(3, 3, rng);
  CHECK(multiply<double>(DenseMatrix::Identity(3, 3), m) == m);

  DenseMatrix a(2, 2), b(2, 1), expected(2, 1);
  a << 1, 2, 3, 4;
  b << 1, 1;
  expected << 3, 7;
  CHECK(multiply(a, b) == expected);

  const SparseSymMatrix edge(2, {{0, 1, 1.0}});
  DenseMatrix f(2, 1), want(2, 1);
  f << 1, 0;
  want << 0, 1;
  CHECK(multiply(edge, f) == want);
}

TEST_CASE("multiply: dimension mismatch names both shapes") {
  const DenseMatrix a = DenseMatrix::Zero(2, 3);
  const DenseMatrix b = DenseMatrix::Zero(2, 1);
  try {
    multiply(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("2x3") != std::string::npos);
    CHECK(what.find("2x1") != std::string::npos);
  }
  CHECK_THROWS_AS(multiply(SparseSymMatrix::identity(3), b), ShapeError);
}

TEST_CASE("multiply is associative on random compatible triples") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<Index> dim(1, 6);
  for (int t = 0; t < 200; ++t) {
    const Index p = dim(rng), q = dim(rng), r = dim(rng), s = dim(rng);
    const DenseMatrix a = testing::random_matrix(p, q, rng);
    const DenseMatrix b = testing::random_matrix(q, r, rng);
    const DenseMatrix c = testing::random_matrix(r, s, rng);
    CHECK(max_abs(multiply(multiply(a, b), c) - multiply(a, multiply(b, c))) <= 1e-9);
  }
}

TEST_CASE("SymmetricSparse mirrors entries and rejects duplicates") {
  const SparseSymMatrix s(3, {{0, 1, 2.0}, {2, 2, 5.0}});
  CHECK(s.coeff(1, 0) == 2.0);
  CHECK(s.coeff(0, 1) == 2.0);
  CHECK(s.to_dense() == s.to_dense().transpose());
  CHECK(s.entries().size() == 2);
  CHECK_THROWS_AS(SparseSymMatrix(3, {{0, 1, 1.0}, {1, 0, 1.0}}), ContractError);
  CHECK_THROWS_AS(SparseSymMatrix(2, {{0, 2, 1.0}}), ContractError);
}

TEST_CASE("eigendecomposition: hand examples") {
  const auto id = symmetric_eigendecomposition<double>(DenseMatrix::Identity(2, 2));
  CHECK(id.values(0) == 1.0);
  CHECK(id.values(1) == 1.0);
  CHECK(id.vectors == DenseMatrix::Identity(2, 2));

  DenseMatrix m(2, 2);
  m << 2, 1, 1, 2;
  const auto e = symmetric_eigendecomposition(m);
  CHECK(e.values(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(e.values(1) == doctest::Approx(3.0).epsilon(1e-14));

  const Graph path = graph_from_adjacency(SparseSymMatrix(3, {{0, 1, 1.0}, {1, 2, 1.0}}));
  const auto lp = symmetric_eigendecomposition(laplacian(path));
  CHECK(std::abs(lp.values(0)) <= 1e-12);
  // Null vector is constant; sign convention makes it positive.
  CHECK(lp.vectors.col(0).minCoeff() > 0.0);
}

TEST_CASE("eigendecomposition: contract and cap errors") {
  DenseMatrix asym(2, 2);
  asym << 1, 2, 3, 4;
  CHECK_THROWS_AS(symmetric_eigendecomposition(asym), ContractError);
  EigenOptions tiny;
  tiny.max_dim = 2;
  CHECK_THROWS_AS(symmetric_eigendecomposition<double>(DenseMatrix::Identity(3, 3), tiny), ContractError);
  EigenOptions no_sweeps;
  no_sweeps.max_sweeps = 0;
  DenseMatrix m(2, 2);
  m << 2, 1, 1, 2;
  CHECK_THROWS_AS(symmetric_eigendecomposition(m, no_sweeps), NumericError);
}

TEST_CASE("eigendecomposition: reconstruction, orthonormality, agreement with Eigen") {
  std::mt19937_64 rng(11);
  for (Index n = 1; n <= 32; ++n) {
    const DenseMatrix s = testing::random_symmetric(n, rng);
    const auto e = symmetric_eigendecomposition(s);
    CHECK(max_abs(reconstruct(e) - s) <= 1e-8);
    CHECK(max_abs(e.vectors.transpose() * e.vectors - DenseMatrix::Identity(n, n)) <= 1e-8);
    for (Index k = 1; k < n; ++k) CHECK(e.values(k - 1) <= e.values(k));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> reference(s);
    CHECK(max_abs(DenseMatrix(e.values - reference.eigenvalues())) <= 1e-10);
  }
}

TEST_CASE("eigendecomposition is deterministic and sign-normalized") {
  std::mt19937_64 rng(5);
  const DenseMatrix s = testing::random_symmetric(12, rng);
  const auto a = symmetric_eigendecomposition(s);
  const auto b = symmetric_eigendecomposition(s);
  CHECK(a.vectors == b.vectors);
  CHECK(a.values == b.values);
  for (Index k = 0; k < 12; ++k) {
    for (Index i = 0; i < 12; ++i) {
      if (std::abs(a.vectors(i, k)) > 1e-12) {
        CHECK(a.vectors(i, k) > 0.0);
        break;
      }
    }
  }
}

TEST_CASE("Laplacian spectra are non-negative with a zero eigenvalue") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Graph g = testing::random_graph(4 + t, 0.3, rng);
    const auto e = symmetric_eigendecomposition(laplacian(g));
    CHECK(e.values.minCoeff() >= -1e-10);
    CHECK(std::abs(e.values(0)) <= 1e-10);
  }
}
