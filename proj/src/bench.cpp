#include "minigcn/bench.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "minigcn/errors.hpp"
#include "minigcn/graph.hpp"
#include "minigcn/nn.hpp"
#include "minigcn/sampler.hpp"

namespace minigcn {

namespace {

Graph random_graph(Index n, Index degree, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  std::set<std::pair<Index, Index>> edges;
  // each vertex proposes degree/2 partners so the mean degree is about `degree`
  const Index per_vertex = std::max<Index>(degree / 2, 1);
  for (Index v = 0; v < n; ++v) {
    for (Index j = 0; j < per_vertex; ++j) {
      const Index u = pick(rng);
      if (u != v) edges.emplace(std::min(u, v), std::max(u, v));
    }
  }
  std::vector<SymEntry<double>> entries;
  entries.reserve(edges.size());
  for (const auto& [a, b] : edges) entries.push_back({a, b, weight(rng)});
  return graph_from_adjacency(SparseSymMatrix(n, entries));
}

DenseMatrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Returns a checksum so the optimizer cannot drop the work.
double dense_pass(const Eigen::MatrixXd& prop, const DenseMatrix& h, const DenseMatrix& w, const DenseMatrix& grad_out) {
  const DenseMatrix aggregated = prop * h;
  const DenseMatrix out = aggregated * w;
  const DenseMatrix grad_w = aggregated.transpose() * grad_out;
  const DenseMatrix grad_h = prop * (grad_out * w.transpose());
  return out(0, 0) + grad_w(0, 0) + grad_h(0, 0);
}

double sparse_pass(const SparseSymMatrix& prop, const DenseMatrix& h, const LayerParams& layer,
                   const DenseMatrix& grad_out) {
  LayerGrads grads = zero_grads(layer);
  auto [out, tape] = graph_conv_forward(h, prop, layer, Mode::train);
  const DenseMatrix grad_h = graph_conv_backward(grad_out.topRows(out.rows()), tape, layer, grads);
  return out(0, 0) + grads.weights(0, 0) + grad_h(0, 0);
}

double minigcn_epoch(const Graph& g, const DenseMatrix& h, const LayerParams& layer, const DenseMatrix& grad_out,
                     Index m, std::uint64_t seed) {
  double sum = 0.0;
  const EpochPartition part = partition_epoch(g.n, m, seed);
  for (const auto& ids : part.batches) {
    const SubgraphBatch sub = induce_subgraph(g, ids);
    DenseMatrix x(static_cast<Index>(ids.size()), h.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) x.row(static_cast<Index>(i)) = h.row(ids[i]);
    const Eigen::MatrixXd dense(sub.prop.matrix());
    sum += dense_pass(dense, x, layer.weights, grad_out.topRows(x.rows()));
  }
  return sum;
}

std::string machine_info() {
  std::string s = "threads=1 hardware_concurrency=" + std::to_string(std::thread::hardware_concurrency());
  s += " eigen=" + std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
       std::to_string(EIGEN_MINOR_VERSION);
#if defined(__VERSION__)
  s += " compiler=\"" + std::string(__VERSION__) + "\"";
#endif
  return s;
}

}  // namespace

BenchMode parse_bench_mode(const std::string& name) {
  if (name == "full-gcn") return BenchMode::full_gcn;
  if (name == "full-gcn-sparse") return BenchMode::full_gcn_sparse;
  if (name == "minigcn") return BenchMode::minigcn;
  throw ConfigError("unknown bench mode '" + name + "' (expected full-gcn, full-gcn-sparse or minigcn)");
}

const char* to_string(BenchMode mode) {
  switch (mode) {
    case BenchMode::full_gcn: return "full-gcn";
    case BenchMode::full_gcn_sparse: return "full-gcn-sparse";
    case BenchMode::minigcn: return "minigcn";
  }
  return "?";
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("loglog_slope: need two or more paired points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ContractError("loglog_slope: values must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) throw ContractError("loglog_slope: x values are all equal");
  return sxy / sxx;
}

ScalingReport run_scaling(BenchMode mode, const ScalingOptions& opts) {
  if (opts.n_grid.size() < 3) throw ContractError("run_scaling: n_grid needs at least 3 points");
  if (opts.repeats < 1 || opts.passes < 1) throw ContractError("run_scaling: repeats and passes must be >= 1");
  if (opts.d < 1 || opts.p < 1 || opts.m < 1) throw ContractError("run_scaling: d, p and m must be positive");
  for (std::size_t i = 0; i < opts.n_grid.size(); ++i) {
    if (opts.n_grid[i] < 2 || (i > 0 && opts.n_grid[i] <= opts.n_grid[i - 1])) {
      throw ContractError("run_scaling: n_grid must be strictly increasing and >= 2");
    }
  }
  if (mode == BenchMode::minigcn && opts.m > opts.n_grid.front()) {
    throw ContractError("run_scaling: m=" + std::to_string(opts.m) + " exceeds the smallest N");
  }

  ScalingReport report{mode, opts.d, opts.p, opts.m, {}, 0.0, machine_info()};
  std::mt19937_64 rng(opts.seed);
  std::mt19937_64 init_rng(stream_seed(opts.seed, 1));
  const LayerParams layer = make_graph_conv(opts.d, opts.p, init_rng);
  volatile double sink = 0.0;

  for (const Index n : opts.n_grid) {
    const Graph g = random_graph(n, opts.degree, rng);
    const DenseMatrix h = random_matrix(n, opts.d, rng);
    const DenseMatrix grad_out = random_matrix(n, opts.p, rng);
    Eigen::MatrixXd dense;
    if (mode == BenchMode::full_gcn) dense = Eigen::MatrixXd(g.prop.matrix());

    ScalingPoint point{n, {}, 0.0};
    for (Index r = 0; r < opts.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      for (Index pass = 0; pass < opts.passes; ++pass) {
        const auto epoch_seed = stream_seed(opts.seed, 2 + static_cast<std::uint64_t>(r * opts.passes + pass));
        switch (mode) {
          case BenchMode::full_gcn: sink = sink + dense_pass(dense, h, layer.weights, grad_out); break;
          case BenchMode::full_gcn_sparse: sink = sink + sparse_pass(g.prop, h, layer, grad_out); break;
          case BenchMode::minigcn: sink = sink + minigcn_epoch(g, h, layer, grad_out, opts.m, epoch_seed); break;
        }
      }
      point.seconds.push_back(seconds_since(t0) / static_cast<double>(opts.passes));
    }
    point.median = median(point.seconds);
    if (point.median * static_cast<double>(opts.passes) < 1e-3) {
      throw ContractError(std::string("run_scaling: ") + to_string(mode) + " at N=" + std::to_string(n) +
                          " timed under 1 ms per sample; widen the N grid");
    }
    report.points.push_back(std::move(point));
  }

  std::vector<double> xs, ys;
  for (const auto& pt : report.points) {
    xs.push_back(static_cast<double>(pt.n));
    ys.push_back(pt.median);
  }
  report.slope = loglog_slope(xs, ys);
  return report;
}

void write_scaling_csv(std::ostream& os, const std::vector<ScalingReport>& reports) {
  const auto precision = os.precision(17);
  os << "mode,n,d,p,m,repeat,seconds\n";
  for (const auto& r : reports) {
    for (const auto& pt : r.points) {
      for (std::size_t i = 0; i < pt.seconds.size(); ++i) {
        os << to_string(r.mode) << ',' << pt.n << ',' << r.d << ',' << r.p << ',' << r.m << ',' << i << ','
           << pt.seconds[i] << '\n';
      }
    }
  }
  os.precision(precision);
}

}  // namespace minigcn
