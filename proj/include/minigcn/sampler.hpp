#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "minigcn/graph.hpp"
#include "minigcn/nn.hpp"

namespace minigcn {

/// Independent, well-mixed seed for stream `stream` of a base seed
/// (splitmix64 finalizer). Used for per-epoch and per-trial generators.
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t stream);

/// One epoch's disjoint cover of 0..n-1 by ceil(n / budget) batches.
struct EpochPartition {
  std::vector<std::vector<Index>> batches;
  Index budget = 0;
  std::uint64_t seed = 0;
};

/// Uniform random permutation of 0..n-1 cut into consecutive chunks of
/// `m`; the last chunk holds the remainder.
EpochPartition partition_epoch(Index n, Index m, std::uint64_t seed);

struct SubgraphBatch {
  std::vector<Index> node_ids;
  SparseSymMatrix prop;
  DenseMatrix features;
  DenseMatrix labels;
};

/// Induced subgraph on `node_ids` (local index i = node_ids[i]) with its own
/// renormalized propagation D~_s^{-1/2} (A_s + I) D~_s^{-1/2}. Only `node_ids`
/// and `prop` are filled.
SubgraphBatch induce_subgraph(const Graph& g, const std::vector<Index>& node_ids);

/// Sampled aggregation for vertex v:
///   sum over u in node_ids of full_prop(v, u) / e(u, v) * h_prev.row(u) * W + b.
/// An empty `e` means e == 1. h_prev is indexed by global vertex id.
DenseVector node_estimate(Index v, const std::vector<Index>& node_ids, const SparseSymMatrix& full_prop,
                          const DenseMatrix& h_prev, const LayerParams& p, const DenseMatrix& e = {});

struct BiasRow {
  Index vertex = 0;
  double target = 0.0;
  double mc_mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
};

struct BiasReport {
  std::vector<BiasRow> rows;
};

/// Monte-Carlo comparison of the sampled aggregation against the full-batch
/// value on a scalar signal (W = [[1]], b = 0). `unit` uses e == 1;
/// `cooccurrence` uses e(u, v) = C_uv / C_v counted over the same trials.
struct BiasDiagnostic {
  DenseVector signal;
  BiasReport unit;
  BiasReport cooccurrence;
};

BiasDiagnostic estimator_bias_diagnostic(const Graph& g, Index m, Index trials, std::uint64_t seed);

/// CSV with header vertex_id,target,mc_mean,bias,stderr.
void write_bias_csv(std::ostream& os, const BiasReport& report);
BiasReport read_bias_csv(std::istream& is);

}  // namespace minigcn
