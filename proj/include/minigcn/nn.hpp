#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <utility>
#include <vector>

#include "minigcn/linalg.hpp"

namespace minigcn {

enum class Mode { train, eval };

enum class LayerKind : std::uint8_t { graph_conv = 1, conv2d = 2, batch_norm = 3, fully_connected = 4 };

const char* to_string(LayerKind kind);

/// Trainable state of one layer. Unused fields stay empty for a given kind.
///
/// conv2d weights are (kernel * kernel * C_in) x C_out with rows ordered
/// (dy, dx, c_in); graph_conv and fully_connected weights are D_in x D_out.
struct LayerParams {
  LayerKind kind = LayerKind::fully_connected;
  Index kernel = 0;
  DenseMatrix weights;
  DenseVector bias;
  DenseVector bn_gamma;
  DenseVector bn_beta;
  DenseVector bn_running_mean;
  DenseVector bn_running_var;
};

/// Exact (bitwise for finite values) equality of kind, kernel and all arrays.
bool operator==(const LayerParams& a, const LayerParams& b);

/// Gradients for the trainable fields of LayerParams (same shapes).
struct LayerGrads {
  DenseMatrix weights;
  DenseVector bias;
  DenseVector bn_gamma;
  DenseVector bn_beta;
};

LayerGrads zero_grads(const LayerParams& p);

/// Glorot-uniform weights, zero bias.
LayerParams make_fully_connected(Index in, Index out, std::mt19937_64& rng);
LayerParams make_graph_conv(Index in, Index out, std::mt19937_64& rng);
LayerParams make_conv2d(Index kernel, Index in_channels, Index out_channels, std::mt19937_64& rng);
/// gamma = 1, beta = 0, running mean 0, running variance 1.
LayerParams make_batch_norm(Index channels);

/// Number of trainable scalars (weights, bias, gamma, beta).
Index trainable_count(const LayerParams& p);

/// Batch of feature maps: row (b * height + y) * width + x holds the
/// channel vector of pixel (y, x) in sample b.
struct FeatureMap {
  Index batch = 0;
  Index height = 0;
  Index width = 0;
  DenseMatrix values;

  Index channels() const { return values.cols(); }
};

// Graph convolution: prop * h * W + b.

struct GraphConvTape {
  Mode mode = Mode::eval;
  DenseMatrix aggregated;
  SparseSymMatrix prop;
};

std::pair<DenseMatrix, GraphConvTape> graph_conv_forward(const DenseMatrix& h, const SparseSymMatrix& prop,
                                                         const LayerParams& p, Mode mode);
DenseMatrix graph_conv_backward(const DenseMatrix& grad_out, const GraphConvTape& tape, const LayerParams& p,
                                LayerGrads& grads);

// Fully connected: x * W + b.

struct LinearTape {
  Mode mode = Mode::eval;
  DenseMatrix input;
};

std::pair<DenseMatrix, LinearTape> fully_connected_forward(const DenseMatrix& x, const LayerParams& p, Mode mode);
DenseMatrix fully_connected_backward(const DenseMatrix& grad_out, const LinearTape& tape, const LayerParams& p,
                                     LayerGrads& grads);

// Stride-1 same-padded (zero) cross-correlation.

struct Conv2dTape {
  Mode mode = Mode::eval;
  Index batch = 0;
  Index height = 0;
  Index width = 0;
  Index in_channels = 0;
  DenseMatrix columns;
};

std::pair<FeatureMap, Conv2dTape> conv2d_forward(const FeatureMap& x, const LayerParams& p, Mode mode);
FeatureMap conv2d_backward(const FeatureMap& grad_out, const Conv2dTape& tape, const LayerParams& p,
                           LayerGrads& grads);

// 2x2 stride-2 max pooling, ceil mode. Ties go to the first element in
// row-major window order.

struct MaxPoolTape {
  Mode mode = Mode::eval;
  Index batch = 0;
  Index height = 0;
  Index width = 0;
  Matrix<Index> argmax;
};

std::pair<FeatureMap, MaxPoolTape> maxpool2x2_forward(const FeatureMap& x, Mode mode);
FeatureMap maxpool2x2_backward(const FeatureMap& grad_out, const MaxPoolTape& tape);

// Batch normalization over rows, per column. Train mode normalizes with the
// biased batch variance and updates running stats with
// r <- momentum * r + (1 - momentum) * batch_stat.

struct BatchNormTape {
  Mode mode = Mode::eval;
  DenseMatrix normalized;
  DenseVector inv_std;
};

inline constexpr double kBatchNormEpsilon = 1e-5;

std::pair<DenseMatrix, BatchNormTape> batch_norm_forward(const DenseMatrix& x, LayerParams& p, Mode mode,
                                                         double momentum = 0.9);
std::pair<FeatureMap, BatchNormTape> batch_norm_forward(const FeatureMap& x, LayerParams& p, Mode mode,
                                                        double momentum = 0.9);
DenseMatrix batch_norm_backward(const DenseMatrix& grad_out, const BatchNormTape& tape, const LayerParams& p,
                                LayerGrads& grads);

// ReLU.

struct ReluTape {
  Mode mode = Mode::eval;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> active;
};

std::pair<DenseMatrix, ReluTape> relu_forward(const DenseMatrix& x, Mode mode);
DenseMatrix relu_backward(const DenseMatrix& grad_out, const ReluTape& tape);

// Softmax + mean cross-entropy against one-hot labels.

struct SoftmaxTape {
  Mode mode = Mode::eval;
  DenseMatrix probabilities;
  DenseMatrix labels;
};

struct SoftmaxResult {
  double loss = 0.0;
  DenseMatrix probabilities;
  SoftmaxTape tape;
};

DenseMatrix softmax(const DenseMatrix& logits);
SoftmaxResult softmax_cross_entropy(const DenseMatrix& logits, const DenseMatrix& one_hot, Mode mode = Mode::train);
/// (probabilities - labels) / B.
DenseMatrix softmax_cross_entropy_backward(const SoftmaxTape& tape);

// Checkpoints: "MGKP1", u64 layer count, then per layer a u8 kind tag, u64
// kernel, and six arrays (weights, bias, gamma, beta, running mean, running
// var), each as u64 rows, u64 cols, rows*cols little-endian f64.

void write_checkpoint(std::ostream& os, const std::vector<LayerParams>& layers);
std::vector<LayerParams> read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const std::vector<LayerParams>& layers);
std::vector<LayerParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace minigcn
