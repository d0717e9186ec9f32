#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "minigcn/linalg.hpp"

namespace minigcn {

enum class BenchMode { full_gcn, full_gcn_sparse, minigcn };

BenchMode parse_bench_mode(const std::string& name);
const char* to_string(BenchMode mode);

struct ScalingOptions {
  std::vector<Index> n_grid{256, 512, 1024, 2048};
  Index d = 128;
  Index p = 16;
  Index m = 32;
  Index repeats = 3;
  Index passes = 5;  // consecutive passes per timed sample
  Index degree = 10;
  std::uint64_t seed = 0;
};

struct ScalingPoint {
  Index n = 0;
  std::vector<double> seconds;  // per-pass time for each repeat, in run order
  double median = 0.0;
};

struct ScalingReport {
  BenchMode mode = BenchMode::full_gcn;
  Index d = 0;
  Index p = 0;
  Index m = 0;
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  std::string machine;
};

double median(std::vector<double> values);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Times forward+backward graph-conv passes (d -> p) at each N on a random
/// graph of the given mean degree. full_gcn propagates with a dense N x N
/// matrix, full_gcn_sparse with the sparse one, and a minigcn pass is one
/// partitioned epoch with budget m and dense M x M batch propagation. Each
/// repeat times `passes` consecutive passes and records the mean.
/// Single-threaded. Throws ContractError if a median sample is under 1 ms
/// (the grid needs larger N).
ScalingReport run_scaling(BenchMode mode, const ScalingOptions& opts);

/// CSV with header mode,n,d,p,m,repeat,seconds; one row per timed repeat.
void write_scaling_csv(std::ostream& os, const std::vector<ScalingReport>& reports);

}  // namespace minigcn
