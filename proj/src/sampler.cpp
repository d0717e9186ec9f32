#include "minigcn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>

namespace minigcn {

namespace {

// Running sums of deviations from the first sample; with identical samples
// the mean is exactly that sample.
struct ShiftedMoments {
  bool started = false;
  double shift = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;
  Index count = 0;

  void add(double x) {
    if (!started) {
      shift = x;
      started = true;
    }
    const double d = x - shift;
    sum += d;
    sum_sq += d * d;
    ++count;
  }

  double mean() const { return shift + sum / static_cast<double>(count); }

  double variance() const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    return std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
  }
};

// Iterates row v of the full propagation in ascending column order and keeps
// members of the current batch, so an all-vertex batch reproduces the exact
// summation order of the full-batch aggregation.
template <typename Member, typename Scale>
double scalar_aggregate(const SparseSymMatrix& prop, Index v, const DenseVector& h, Member member, Scale inv_e) {
  double s = 0.0;
  for (SparseSymMatrix::Storage::InnerIterator it(prop.matrix(), v); it; ++it) {
    const Index u = it.col();
    if (member(u)) s += it.value() * inv_e(u) * h(u);
  }
  return s;
}

BiasReport make_report(const DenseVector& target, const std::vector<ShiftedMoments>& moments) {
  BiasReport report;
  for (Index v = 0; v < target.size(); ++v) {
    const auto& mom = moments[static_cast<std::size_t>(v)];
    BiasRow row;
    row.vertex = v;
    row.target = target(v);
    row.mc_mean = mom.mean();
    row.bias = row.mc_mean - row.target;
    row.variance = mom.variance();
    row.std_error = std::sqrt(row.variance / static_cast<double>(mom.count));
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

EpochPartition partition_epoch(Index n, Index m, std::uint64_t seed) {
  if (m < 1 || m > n) {
    throw ContractError("partition_epoch: budget must satisfy 1 <= m <= n (m=" + std::to_string(m) +
                        ", n=" + std::to_string(n) + ")");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  EpochPartition part;
  part.budget = m;
  part.seed = seed;
  for (Index start = 0; start < n; start += m) {
    const Index end = std::min(n, start + m);
    part.batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return part;
}

SubgraphBatch induce_subgraph(const Graph& g, const std::vector<Index>& node_ids) {
  std::unordered_map<Index, Index> local;
  local.reserve(node_ids.size());
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    const Index id = node_ids[i];
    if (id < 0 || id >= g.n) {
      throw ContractError("induce_subgraph: vertex " + std::to_string(id) + " out of range");
    }
    if (!local.emplace(id, static_cast<Index>(i)).second) {
      throw ContractError("induce_subgraph: duplicate vertex " + std::to_string(id));
    }
  }
  std::vector<SymEntry<double>> entries;
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    const Index u = node_ids[i];
    for (SparseSymMatrix::Storage::InnerIterator it(g.adjacency.matrix(), u); it; ++it) {
      if (it.col() <= u) continue;
      const auto found = local.find(it.col());
      if (found == local.end()) continue;
      const Index a = static_cast<Index>(i), b = found->second;
      entries.push_back({std::min(a, b), std::max(a, b), it.value()});
    }
  }
  SubgraphBatch batch;
  batch.node_ids = node_ids;
  batch.prop = renormalized_propagation(SparseSymMatrix(static_cast<Index>(node_ids.size()), entries));
  return batch;
}

DenseVector node_estimate(Index v, const std::vector<Index>& node_ids, const SparseSymMatrix& full_prop,
                          const DenseMatrix& h_prev, const LayerParams& p, const DenseMatrix& e) {
  const Index n = full_prop.dim();
  if (h_prev.rows() != n) {
    throw ShapeError("node_estimate: features " + shape_string(h_prev) + " vs propagation " +
                     shape_string(full_prop.matrix()));
  }
  if (p.weights.rows() != h_prev.cols()) {
    throw ShapeError("node_estimate: features " + shape_string(h_prev) + " vs weights " + shape_string(p.weights));
  }
  if (e.size() != 0 && (e.rows() != n || e.cols() != n)) {
    throw ShapeError("node_estimate: normalization " + shape_string(e) + " for " + std::to_string(n) + " vertices");
  }
  std::vector<char> member(static_cast<std::size_t>(n), 0);
  for (const Index id : node_ids) {
    if (id < 0 || id >= n) throw ContractError("node_estimate: vertex " + std::to_string(id) + " out of range");
    member[static_cast<std::size_t>(id)] = 1;
  }
  if (v < 0 || v >= n || !member[static_cast<std::size_t>(v)]) {
    throw ContractError("node_estimate: vertex " + std::to_string(v) + " is not in the batch");
  }

  DenseVector aggregated = DenseVector::Zero(h_prev.cols());
  for (SparseSymMatrix::Storage::InnerIterator it(full_prop.matrix(), v); it; ++it) {
    const Index u = it.col();
    if (!member[static_cast<std::size_t>(u)]) continue;
    double scale = it.value();
    if (e.size() != 0) {
      if (!(e(u, v) > 0.0)) {
        throw ContractError("node_estimate: zero normalization constant for edge (" + std::to_string(u) + ", " +
                            std::to_string(v) + ")");
      }
      scale /= e(u, v);
    }
    aggregated += scale * h_prev.row(u).transpose();
  }
  return p.weights.transpose() * aggregated + p.bias;
}

BiasDiagnostic estimator_bias_diagnostic(const Graph& g, Index m, Index trials, std::uint64_t seed) {
  if (trials < 1) throw ContractError("estimator_bias_diagnostic: trials must be >= 1");
  const Index n = g.n;
  BiasDiagnostic out;
  std::mt19937_64 signal_rng(stream_seed(seed, 0));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  out.signal.resize(n);
  for (Index i = 0; i < n; ++i) out.signal(i) = dist(signal_rng);

  const auto everyone = [](Index) { return true; };
  const auto unit = [](Index) { return 1.0; };
  DenseVector target(n);
  for (Index v = 0; v < n; ++v) target(v) = scalar_aggregate(g.prop, v, out.signal, everyone, unit);

  // Trial t draws its partition from stream t + 1 of the base seed; both
  // passes replay the same partitions.
  const auto trial_partition = [&](Index t) {
    return partition_epoch(n, m, stream_seed(seed, static_cast<std::uint64_t>(t) + 1));
  };
  std::vector<Index> batch_of(static_cast<std::size_t>(n));
  const auto assign = [&](const EpochPartition& part) {
    for (std::size_t b = 0; b < part.batches.size(); ++b)
      for (const Index v : part.batches[b]) batch_of[static_cast<std::size_t>(v)] = static_cast<Index>(b);
  };

  // Pass 1: co-occurrence counts C_uv over propagation edges. Every vertex is
  // sampled once per trial, so C_v = trials.
  DenseMatrix counts = DenseMatrix::Zero(n, n);
  for (Index t = 0; t < trials; ++t) {
    assign(trial_partition(t));
    for (Index v = 0; v < n; ++v) {
      for (SparseSymMatrix::Storage::InnerIterator it(g.prop.matrix(), v); it; ++it) {
        if (batch_of[static_cast<std::size_t>(it.col())] == batch_of[static_cast<std::size_t>(v)]) {
          counts(it.col(), v) += 1.0;
        }
      }
    }
  }
  const double c_v = static_cast<double>(trials);

  // Pass 2: both estimators on the replayed partitions.
  std::vector<ShiftedMoments> unit_moments(static_cast<std::size_t>(n));
  std::vector<ShiftedMoments> cooc_moments(static_cast<std::size_t>(n));
  for (Index t = 0; t < trials; ++t) {
    assign(trial_partition(t));
    for (Index v = 0; v < n; ++v) {
      const Index home = batch_of[static_cast<std::size_t>(v)];
      const auto same_batch = [&](Index u) { return batch_of[static_cast<std::size_t>(u)] == home; };
      const auto inv_e = [&](Index u) { return c_v / counts(u, v); };
      unit_moments[static_cast<std::size_t>(v)].add(scalar_aggregate(g.prop, v, out.signal, same_batch, unit));
      cooc_moments[static_cast<std::size_t>(v)].add(scalar_aggregate(g.prop, v, out.signal, same_batch, inv_e));
    }
  }
  out.unit = make_report(target, unit_moments);
  out.cooccurrence = make_report(target, cooc_moments);
  return out;
}

void write_bias_csv(std::ostream& os, const BiasReport& report) {
  const auto precision = os.precision(17);
  os << "vertex_id,target,mc_mean,bias,stderr\n";
  for (const auto& r : report.rows) {
    os << r.vertex << ',' << r.target << ',' << r.mc_mean << ',' << r.bias << ',' << r.std_error << '\n';
  }
  os.precision(precision);
}

BiasReport read_bias_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "vertex_id,target,mc_mean,bias,stderr") {
    throw FormatError("read_bias_csv: unexpected header", 0);
  }
  BiasReport report;
  std::uint64_t offset = line.size() + 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    BiasRow r;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    if (!(fields >> r.vertex >> c1 >> r.target >> c2 >> r.mc_mean >> c3 >> r.bias >> c4 >> r.std_error) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',') {
      throw FormatError("read_bias_csv: malformed row", offset);
    }
    report.rows.push_back(r);
    offset += line.size() + 1;
  }
  return report;
}

}  // namespace minigcn
