#include "doctest.h"

#include <set>
#include <sstream>

#include "minigcn/sampler.hpp"
#include "sampler_oracle.hpp"
#include "test_support.hpp"

using namespace minigcn;
using minigcn::testing::max_abs;

namespace {

Graph path3() { return graph_from_adjacency(SparseSymMatrix(3, {{0, 1, 1.0}, {1, 2, 1.0}})); }
Graph k3() { return graph_from_adjacency(SparseSymMatrix(3, {{0, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}})); }

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("partition_epoch examples and invariants") {
  const auto whole = partition_epoch(10, 10, 1);
  REQUIRE(whole.batches.size() == 1);
  CHECK(std::set<Index>(whole.batches[0].begin(), whole.batches[0].end()).size() == 10);

  const auto part = partition_epoch(10, 3, 2);
  REQUIRE(part.batches.size() == 4);
  std::multiset<std::size_t> sizes;
  std::set<Index> seen;
  for (const auto& b : part.batches) {
    sizes.insert(b.size());
    for (const Index v : b) CHECK(seen.insert(v).second);
  }
  CHECK(sizes == std::multiset<std::size_t>{1, 3, 3, 3});
  CHECK(seen.size() == 10);

  CHECK(partition_epoch(37, 5, 99).batches == partition_epoch(37, 5, 99).batches);
  CHECK(partition_epoch(37, 5, 99).batches != partition_epoch(37, 5, 100).batches);
  CHECK_THROWS_AS(partition_epoch(5, 0, 1), ContractError);
  CHECK_THROWS_AS(partition_epoch(5, 6, 1), ContractError);
}

TEST_CASE("pair co-occurrence frequency matches the enumerated probability") {
  const Index n = 6, m = 2, trials = 100000;
  const DenseMatrix exact = testing::enumerated_cooccurrence(n, m);
  DenseMatrix hits = DenseMatrix::Zero(n, n);
  for (Index t = 0; t < trials; ++t) {
    for (const auto& b : partition_epoch(n, m, stream_seed(5, static_cast<std::uint64_t>(t))).batches) {
      for (const Index u : b)
        for (const Index v : b)
          if (u != v) hits(u, v) += 1;
    }
  }
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v) {
      const double p = exact(u, v);
      const double se = std::sqrt(p * (1 - p) / trials);
      CHECK(std::abs(hits(u, v) / trials - p) <= 3 * se);
    }
  CHECK(exact(0, 1) == doctest::Approx(0.2));
}

TEST_CASE("induce_subgraph") {
  std::mt19937_64 rng(3);
  const Graph g = testing::random_graph(9, 0.3, rng);
  std::vector<Index> all(9);
  std::iota(all.begin(), all.end(), 0);
  CHECK(induce_subgraph(g, all).prop == g.prop);

  CHECK(induce_subgraph(g, {4}).prop.to_dense() == DenseMatrix::Ones(1, 1));

  const double w = 0.37;
  const Graph two = graph_from_adjacency(SparseSymMatrix(4, {{1, 3, w}, {0, 1, 0.5}}));
  const SubgraphBatch s = induce_subgraph(two, {3, 1});
  CHECK(s.prop.coeff(0, 1) == doctest::Approx(w / (1 + w)).epsilon(1e-15));
  CHECK(s.prop.coeff(0, 0) == doctest::Approx(1 / (1 + w)).epsilon(1e-15));

  CHECK_THROWS_AS(induce_subgraph(g, {1, 2, 1}), ContractError);
  CHECK_THROWS_AS(induce_subgraph(g, {9}), ContractError);

  // Permuting node_ids permutes prop_s conjugately (up to degree summation order).
  std::vector<Index> ids{7, 2, 5, 0, 8};
  const DenseMatrix base = induce_subgraph(g, ids).prop.to_dense();
  for (int t = 0; t < 5; ++t) {
    std::vector<Index> order{0, 1, 2, 3, 4};
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Index> shuffled;
    for (const Index i : order) shuffled.push_back(ids[static_cast<std::size_t>(i)]);
    const DenseMatrix permuted = induce_subgraph(g, shuffled).prop.to_dense();
    for (Index a = 0; a < 5; ++a)
      for (Index b = 0; b < 5; ++b) 
        CHECK(std::abs(permuted(a, b) - base(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)])) <=
              1e-15);
  }
}

TEST_CASE("node_estimate") {
  std::mt19937_64 rng(4);
  const Graph g = testing::random_graph(7, 0.4, rng);
  LayerParams p = make_graph_conv(3, 2, rng);
  p.bias = testing::random_matrix(2, 1, rng);
  const DenseMatrix h = testing::random_matrix(7, 3, rng);
  std::vector<Index> all(7);
  std::iota(all.begin(), all.end(), 0);
  const DenseMatrix full = graph_conv_forward(h, g.prop, p, Mode::eval).first;
  for (Index v = 0; v < 7; ++v) {
    CHECK(max_abs(node_estimate(v, all, g.prop, h, p).transpose() - full.row(v)) <= 1e-12);
  }

  const DenseVector single = node_estimate(3, {3}, g.prop, h, p);
  const DenseVector want = g.prop.coeff(3, 3) * p.weights.transpose() * h.row(3).transpose() + p.bias;
  CHECK(max_abs(single - want) <= 1e-14);

  DenseMatrix e = DenseMatrix::Ones(7, 7);
  CHECK(max_abs(node_estimate(2, all, g.prop, h, p, e) - node_estimate(2, all, g.prop, h, p)) == 0.0);
  e(0, 1) = 0.0;
  e(1, 0) = 0.0;
  if (g.prop.coeff(0, 1) != 0.0) CHECK_THROWS_AS(node_estimate(1, all, g.prop, h, p, e), ContractError);
  CHECK_THROWS_AS(node_estimate(1, {0, 2}, g.prop, h, p), ContractError);
}

TEST_CASE("bias diagnostic: a single full batch has exactly zero bias") {
  std::mt19937_64 rng(6);
  const Graph g = testing::random_graph(8, 0.4, rng);
  const BiasDiagnostic d = estimator_bias_diagnostic(g, 8, 50, 11);
  for (const auto* report : {&d.unit, &d.cooccurrence}) {
    REQUIRE(report->rows.size() == 8);
    for (const auto& r : report->rows) {
      CHECK(r.bias == 0.0);
      CHECK(r.std_error == 0.0);
    }
  }
}

TEST_CASE("bias diagnostic agrees with exhaustive enumeration on K3 and the 3-path") {
  for (const Graph& g : {k3(), path3()}) {
    const BiasDiagnostic d = estimator_bias_diagnostic(g, 2, 100000, 17);
    const DenseMatrix p = testing::enumerated_cooccurrence(3, 2);
    const DenseVector unit_expect = testing::enumerated_expectation(g, 2, d.signal, DenseMatrix::Ones(3, 3));
    const DenseVector cooc_expect = testing::enumerated_expectation(g, 2, d.signal, p);
    for (Index v = 0; v < 3; ++v) {
      const auto& u = d.unit.rows[static_cast<std::size_t>(v)];
      const auto& c = d.cooccurrence.rows[static_cast<std::size_t>(v)];
      CHECK(std::abs(u.mc_mean - unit_expect(v)) <= 4 * u.std_error);
      CHECK(std::abs(c.mc_mean - cooc_expect(v)) <= 4 * c.std_error + 1e-12);
      // The e = C_uv / C_v estimator targets the full-batch aggregation.
      CHECK(cooc_expect(v) == doctest::Approx(c.target).epsilon(1e-12));
    }
  }
}

TEST_CASE("bias diagnostic standard error shrinks like one over root trials") {
  std::mt19937_64 rng(7);
  const Graph g = testing::random_graph(6, 0.5, rng);
  std::vector<double> log_t, log_se;
  for (const Index trials : {1000, 10000, 100000}) {
    const BiasDiagnostic d = estimator_bias_diagnostic(g, 2, trials, 23);
    double se = 0;
    for (const auto& r : d.unit.rows) se += r.std_error;
    log_t.push_back(std::log(static_cast<double>(trials)));
    log_se.push_back(std::log(se));
  }
  CHECK(slope(log_t, log_se) == doctest::Approx(-0.5).epsilon(0.2));
  CHECK(std::abs(slope(log_t, log_se) + 0.5) <= 0.1);
}

TEST_CASE("bias diagnostic is deterministic and its CSV round-trips") {
  const BiasDiagnostic a = estimator_bias_diagnostic(k3(), 2, 500, 3);
  const BiasDiagnostic b = estimator_bias_diagnostic(k3(), 2, 500, 3);
  std::ostringstream sa, sb;
  write_bias_csv(sa, a.unit);
  write_bias_csv(sb, b.unit);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("vertex_id,target,mc_mean,bias,stderr\n", 0) == 0);

  std::istringstream in(sa.str());
  const BiasReport back = read_bias_csv(in);
  REQUIRE(back.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.rows[i].mc_mean == a.unit.rows[i].mc_mean);
    CHECK(back.rows[i].std_error == a.unit.rows[i].std_error);
  }
}
