#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "minigcn/data.hpp"
#include "minigcn/graph.hpp"
#include "minigcn/metrics.hpp"
#include "minigcn/model.hpp"
#include "minigcn/sampler.hpp"

namespace minigcn {

struct TrainOptions {
  Index epochs = 200;
  Index batch = 32;
  double base_lr = 0.001;
  double l2 = 0.001;
  double bn_momentum = 0.9;
  std::uint64_t seed = 0;
  Index graph_k = 10;
  double graph_sigma = 1.0;
};

/// Band-normalized cube with labels and split. Class id c maps to output
/// index c - 1.
struct Dataset {
  SpectralCube cube;
  LabelGrid labels;
  SplitSpec split;
  Index classes = 0;
};

/// Normalizes the cube, validates the split against the labels, and sets
/// `classes` to the largest class id present.
Dataset make_dataset(const SpectralCube& raw, const LabelGrid& labels, const SplitSpec& split);

/// Pixels of one split side in class order, with their output indices.
struct LabeledPixels {
  std::vector<Index> pixels;
  std::vector<Index> targets;
};

LabeledPixels labeled_pixels(const std::map<int, std::vector<Index>>& side);
DenseMatrix one_hot(const std::vector<Index>& targets, Index classes);

/// Features (and patches when the model has a CNN branch) for `pixels`, with
/// `prop` as the GCN propagation matrix.
ModelBatch make_batch(const Model& model, const Dataset& data, const std::vector<Index>& pixels,
                      SparseSymMatrix prop);

/// Runs every batch of `partition` (indices into `pixels`) through the model
/// on subgraphs of `graph` and writes each output row back to its vertex
/// position, so the result is in `pixels` order.
DenseMatrix minibatch_forward(Model& model, const Dataset& data, const std::vector<Index>& pixels, const Graph& graph,
                              const EpochPartition& partition, Mode mode);

struct EpochLog {
  Index epoch = 0;
  double lr = 0.0;
  double loss = 0.0;       // mean cross-entropy over the epoch's batches
  double objective = 0.0;  // loss plus the L2 penalty
  double train_oa = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

/// Trains on the training pixels only. GCN trains full-batch on the training
/// graph; every other architecture draws a fresh partition with budget
/// `batch` each epoch (a trailing single-vertex batch joins the previous one,
/// since train-mode BN needs two rows). Throws NumericError naming the epoch
/// if the loss becomes non-finite.
TrainResult train(const ModelConfig& cfg, const TrainOptions& opts, const Dataset& data,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Class index per pixel. Pixels are processed in chunks of `opts.batch`
/// (at least 2), each with its own KNN graph using k = min(graph_k, size - 1)
/// and the training sigma.
std::vector<Index> predict(Model& model, const Dataset& data, const std::vector<Index>& pixels,
                           const TrainOptions& opts);

ConfusionMatrix evaluate(Model& model, const Dataset& data, const std::map<int, std::vector<Index>>& side,
                         const TrainOptions& opts);

/// CSV with header epoch,lr,loss,train_oa.
void write_training_log(std::ostream& os, const std::vector<EpochLog>& log);
void write_training_log_header(std::ostream& os);
void write_training_log_row(std::ostream& os, const EpochLog& e);

}  // namespace minigcn
