#include "minigcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "minigcn/optim.hpp"

namespace minigcn {

namespace {

std::vector<Index> argmax_rows(const DenseMatrix& m) {
  std::vector<Index> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) m.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<Index> gather(const std::vector<Index>& values, const std::vector<Index>& positions) {
  std::vector<Index> out;
  out.reserve(positions.size());
  for (const Index p : positions) out.push_back(values[static_cast<std::size_t>(p)]);
  return out;
}

Graph knn_graph(const DenseMatrix& features, const TrainOptions& opts) {
  const Index n = features.rows();
  if (n < 2) return graph_from_adjacency(SparseSymMatrix(n, {}), 0, opts.graph_sigma);
  return build_knn_rbf_graph(features, std::min(opts.graph_k, n - 1), opts.graph_sigma);
}

void fold_singleton(EpochPartition& part) {
  if (part.batches.size() > 1 && part.batches.back().size() == 1) {
    part.batches[part.batches.size() - 2].push_back(part.batches.back()[0]);
    part.batches.pop_back();
  }
}

}  // namespace

Dataset make_dataset(const SpectralCube& raw, const LabelGrid& labels, const SplitSpec& split) {
  if (raw.height != labels.height || raw.width != labels.width) {
    throw ConfigError("dataset: cube is " + std::to_string(raw.height) + "x" + std::to_string(raw.width) +
                      " but labels are " + std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  validate_split(split, labels);
  Dataset d{normalize_bands(raw), labels, split, 0};
  for (const auto v : labels.labels) d.classes = std::max<Index>(d.classes, v);
  if (d.classes < 1) throw ConfigError("dataset: no labeled pixels");
  return d;
}

LabeledPixels labeled_pixels(const std::map<int, std::vector<Index>>& side) {
  LabeledPixels out;
  for (const auto& [cls, ids] : side) {
    for (const Index id : ids) {
      out.pixels.push_back(id);
      out.targets.push_back(cls - 1);
    }
  }
  return out;
}

DenseMatrix one_hot(const std::vector<Index>& targets, Index classes) {
  DenseMatrix y = DenseMatrix::Zero(static_cast<Index>(targets.size()), classes);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= classes) {
      throw ContractError("one_hot: class index " + std::to_string(targets[i]) + " outside 0.." +
                          std::to_string(classes - 1));
    }
    y(static_cast<Index>(i), targets[i]) = 1.0;
  }
  return y;
}

ModelBatch make_batch(const Model& model, const Dataset& data, const std::vector<Index>& pixels,
                      SparseSymMatrix prop) {
  ModelBatch b;
  b.prop = std::move(prop);
  b.pixels = pixels;
  b.features = pixel_features(data.cube, pixels);
  if (has_cnn_branch(model.config.architecture)) {
    b.patches = extract_patches(data.cube, pixels, model.config.patch_size);
    b.patch_pixels = pixels;
  }
  return b;
}

DenseMatrix minibatch_forward(Model& model, const Dataset& data, const std::vector<Index>& pixels, const Graph& graph,
                              const EpochPartition& partition, Mode mode) {
  if (graph.n != static_cast<Index>(pixels.size())) {
    throw ContractError("minibatch_forward: graph has " + std::to_string(graph.n) + " vertices for " +
                        std::to_string(pixels.size()) + " pixels");
  }
  DenseMatrix out(graph.n, model.config.classes);
  for (const auto& ids : partition.batches) {
    const SubgraphBatch sub = induce_subgraph(graph, ids);
    const ModelBatch batch = make_batch(model, data, gather(pixels, ids), sub.prop);
    const DenseMatrix logits = forward(model, batch, mode).logits;
    for (std::size_t i = 0; i < ids.size(); ++i) out.row(ids[i]) = logits.row(static_cast<Index>(i));
  }
  return out;
}

TrainResult train(const ModelConfig& cfg, const TrainOptions& opts, const Dataset& data,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (opts.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (opts.batch < 2) throw ConfigError("train: batch must be >= 2 (batch norm needs two rows)");
  if (cfg.classes != data.classes) {
    throw ConfigError("train: model has " + std::to_string(cfg.classes) + " classes, dataset has " +
                      std::to_string(data.classes));
  }
  if (cfg.input_bands != data.cube.bands) {
    throw ConfigError("train: model expects " + std::to_string(cfg.input_bands) + " bands, cube has " +
                      std::to_string(data.cube.bands));
  }
  const LabeledPixels train_set = labeled_pixels(data.split.train);
  const Index n = static_cast<Index>(train_set.pixels.size());
  if (n < 2) throw ContractError("train: need at least 2 training pixels");

  TrainResult result;
  result.model = build_model(cfg, stream_seed(opts.seed, 0));
  result.model.bn_momentum = opts.bn_momentum;
  Model& model = result.model;
  const bool full_batch = cfg.architecture == Architecture::gcn;
  const bool needs_graph = has_gcn_branch(cfg.architecture);
  const Graph graph = needs_graph ? knn_graph(pixel_features(data.cube, train_set.pixels), opts)
                                  : graph_from_adjacency(SparseSymMatrix(n, {}));
  const DenseMatrix targets = one_hot(train_set.targets, cfg.classes);
  const std::uint64_t partition_stream = stream_seed(opts.seed, 1);
  const LrPolicy policy{opts.base_lr, std::max<Index>(opts.epochs, 1), 50};
  AdamState adam = make_adam_state(model.layers);

  for (Index epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr = schedule_lr(policy, epoch);
    EpochPartition part;
    if (full_batch) {
      part.batches.emplace_back(static_cast<std::size_t>(n));
      std::iota(part.batches[0].begin(), part.batches[0].end(), Index{0});
    } else {
      part = partition_epoch(n, std::min(opts.batch, n), stream_seed(partition_stream, static_cast<std::uint64_t>(epoch)));
    }
    fold_singleton(part);

    double loss_sum = 0.0;
    double objective_sum = 0.0;
    std::vector<Index> predicted(static_cast<std::size_t>(n));
    for (const auto& ids : part.batches) {
      SparseSymMatrix prop = full_batch ? graph.prop
                                        : (needs_graph ? induce_subgraph(graph, ids).prop
                                                       : SparseSymMatrix::identity(static_cast<Index>(ids.size())));
      const ModelBatch batch = make_batch(model, data, gather(train_set.pixels, ids), std::move(prop));
      DenseMatrix y(static_cast<Index>(ids.size()), cfg.classes);
      for (std::size_t i = 0; i < ids.size(); ++i) y.row(static_cast<Index>(i)) = targets.row(ids[i]);

      const ForwardResult fwd = forward(model, batch, Mode::train);
      const LossAndGrads lg = loss_and_grads(model, fwd, y, opts.l2);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      adam_step(model.layers, lg.grads, adam, lr);
      loss_sum += lg.cross_entropy * static_cast<double>(ids.size());
      objective_sum += lg.loss * static_cast<double>(ids.size());
      const auto pred = argmax_rows(fwd.logits);
      for (std::size_t i = 0; i < ids.size(); ++i) predicted[static_cast<std::size_t>(ids[i])] = pred[i];
    }
    const ConfusionMatrix cm = accumulate(cfg.classes, train_set.targets, predicted);
    const EpochLog entry{epoch, lr, loss_sum / static_cast<double>(n), objective_sum / static_cast<double>(n),
                         overall_accuracy(cm)};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

std::vector<Index> predict(Model& model, const Dataset& data, const std::vector<Index>& pixels,
                           const TrainOptions& opts) {
  const Index chunk = std::max<Index>(opts.batch, 2);
  const bool needs_graph = has_gcn_branch(model.config.architecture);
  std::vector<Index> out;
  out.reserve(pixels.size());
  for (std::size_t start = 0; start < pixels.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(pixels.size(), start + static_cast<std::size_t>(chunk));
    const std::vector<Index> ids(pixels.begin() + static_cast<std::ptrdiff_t>(start),
                                 pixels.begin() + static_cast<std::ptrdiff_t>(end));
    ModelBatch batch = make_batch(model, data, ids, SparseSymMatrix::identity(static_cast<Index>(ids.size())));
    if (needs_graph) batch.prop = knn_graph(batch.features, opts).prop;
    const auto pred = argmax_rows(forward(model, batch, Mode::eval).logits);
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

ConfusionMatrix evaluate(Model& model, const Dataset& data, const std::map<int, std::vector<Index>>& side,
                         const TrainOptions& opts) {
  const LabeledPixels set = labeled_pixels(side);
  if (set.pixels.empty()) throw ContractError("evaluate: no pixels to score");
  return accumulate(model.config.classes, set.targets, predict(model, data, set.pixels, opts));
}

void write_training_log_header(std::ostream& os) { os << "epoch,lr,loss,train_oa\n"; }

void write_training_log_row(std::ostream& os, const EpochLog& e) {
  const auto precision = os.precision(17);
  os << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.train_oa << '\n';
  os.precision(precision);
}

void write_training_log(std::ostream& os, const std::vector<EpochLog>& log) {
  write_training_log_header(os);
  for (const auto& e : log) write_training_log_row(os, e);
}

}  // namespace minigcn
