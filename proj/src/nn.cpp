#include "minigcn/nn.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"

namespace minigcn {

namespace {

void require_train(Mode mode, const char* op) {
  if (mode != Mode::train) throw ContractError(std::string(op) + ": backward needs a train-mode tape");
}

DenseMatrix glorot(Index fan_in, Index fan_out, Index rows, Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseMatrix w(rows, cols);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

void add_bias(DenseMatrix& out, const DenseVector& bias) { out.rowwise() += bias.transpose(); }

template <typename A, typename B>
bool same_array(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

void check_kind(const LayerParams& p, LayerKind kind, const char* op) {
  if (p.kind != kind) throw ContractError(std::string(op) + ": wrong layer kind " + to_string(p.kind));
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::graph_conv: return "graph_conv";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::fully_connected: return "fully_connected";
  }
  return "unknown";
}

bool operator==(const LayerParams& a, const LayerParams& b) {
  return a.kind == b.kind && a.kernel == b.kernel && same_array(a.weights, b.weights) && same_array(a.bias, b.bias) &&
         same_array(a.bn_gamma, b.bn_gamma) && same_array(a.bn_beta, b.bn_beta) &&
         same_array(a.bn_running_mean, b.bn_running_mean) && same_array(a.bn_running_var, b.bn_running_var);
}

LayerGrads zero_grads(const LayerParams& p) {
  return {DenseMatrix::Zero(p.weights.rows(), p.weights.cols()), DenseVector::Zero(p.bias.size()),
          DenseVector::Zero(p.bn_gamma.size()), DenseVector::Zero(p.bn_beta.size())};
}

LayerParams make_fully_connected(Index in, Index out, std::mt19937_64& rng) {
  if (in <= 0 || out <= 0) throw ConfigError("make_fully_connected: dimensions must be positive");
  LayerParams p;
  p.kind = LayerKind::fully_connected;
  p.weights = glorot(in, out, in, out, rng);
  p.bias = DenseVector::Zero(out);
  return p;
}

LayerParams make_graph_conv(Index in, Index out, std::mt19937_64& rng) {
  LayerParams p = make_fully_connected(in, out, rng);
  p.kind = LayerKind::graph_conv;
  return p;
}

LayerParams make_conv2d(Index kernel, Index in_channels, Index out_channels, std::mt19937_64& rng) {
  if (kernel != 1 && kernel != 3) throw ConfigError("make_conv2d: kernel must be 1 or 3");
  if (in_channels <= 0 || out_channels <= 0) throw ConfigError("make_conv2d: channels must be positive");
  LayerParams p;
  p.kind = LayerKind::conv2d;
  p.kernel = kernel;
  const Index area = kernel * kernel;
  p.weights = glorot(area * in_channels, area * out_channels, area * in_channels, out_channels, rng);
  p.bias = DenseVector::Zero(out_channels);
  return p;
}

LayerParams make_batch_norm(Index channels) {
  if (channels <= 0) throw ConfigError("make_batch_norm: channels must be positive");
  LayerParams p;
  p.kind = LayerKind::batch_norm;
  p.bn_gamma = DenseVector::Ones(channels);
  p.bn_beta = DenseVector::Zero(channels);
  p.bn_running_mean = DenseVector::Zero(channels);
  p.bn_running_var = DenseVector::Ones(channels);
  return p;
}

Index trainable_count(const LayerParams& p) {
  return p.weights.size() + p.bias.size() + p.bn_gamma.size() + p.bn_beta.size();
}

// --- graph convolution ------------------------------------------------------

std::pair<DenseMatrix, GraphConvTape> graph_conv_forward(const DenseMatrix& h, const SparseSymMatrix& prop,
                                                         const LayerParams& p, Mode mode) {
  check_kind(p, LayerKind::graph_conv, "graph_conv_forward");
  if (prop.dim() != h.rows()) {
    throw ShapeError("graph_conv_forward: propagation " + shape_string(prop.matrix()) + " vs features " +
                     shape_string(h));
  }
  if (p.weights.rows() != h.cols()) {
    throw ShapeError("graph_conv_forward: features " + shape_string(h) + " vs weights " + shape_string(p.weights));
  }
  GraphConvTape tape;
  tape.mode = mode;
  DenseMatrix aggregated = prop.matrix() * h;
  DenseMatrix out = aggregated * p.weights;
  add_bias(out, p.bias);
  if (mode == Mode::train) {
    tape.aggregated = std::move(aggregated);
    tape.prop = prop;
  }
  return {std::move(out), std::move(tape)};
}

DenseMatrix graph_conv_backward(const DenseMatrix& grad_out, const GraphConvTape& tape, const LayerParams& p,
                                LayerGrads& grads) {
  require_train(tape.mode, "graph_conv_backward");
  if (grad_out.rows() != tape.aggregated.rows() || grad_out.cols() != p.weights.cols()) {
    throw ShapeError("graph_conv_backward: gradient " + shape_string(grad_out));
  }
  grads.weights += tape.aggregated.transpose() * grad_out;
  grads.bias += grad_out.colwise().sum().transpose();
  const DenseMatrix through_w = grad_out * p.weights.transpose();
  return tape.prop.matrix() * through_w;
}

// --- fully connected --------------------------------------------------------

std::pair<DenseMatrix, LinearTape> fully_connected_forward(const DenseMatrix& x, const LayerParams& p, Mode mode) {
  check_kind(p, LayerKind::fully_connected, "fully_connected_forward");
  if (p.weights.rows() != x.cols()) {
    throw ShapeError("fully_connected_forward: input " + shape_string(x) + " vs weights " + shape_string(p.weights));
  }
  LinearTape tape;
  tape.mode = mode;
  DenseMatrix out = x * p.weights;
  add_bias(out, p.bias);
  if (mode == Mode::train) tape.input = x;
  return {std::move(out), std::move(tape)};
}

DenseMatrix fully_connected_backward(const DenseMatrix& grad_out, const LinearTape& tape, const LayerParams& p,
                                     LayerGrads& grads) {
  require_train(tape.mode, "fully_connected_backward");
  if (grad_out.rows() != tape.input.rows() || grad_out.cols() != p.weights.cols()) {
    throw ShapeError("fully_connected_backward: gradient " + shape_string(grad_out));
  }
  grads.weights += tape.input.transpose() * grad_out;
  grads.bias += grad_out.colwise().sum().transpose();
  return grad_out * p.weights.transpose();
}

// --- conv2d -----------------------------------------------------------------

namespace {

DenseMatrix im2col(const FeatureMap& x, Index kernel) {
  const Index c = x.channels();
  const Index pad = kernel / 2;
  DenseMatrix cols = DenseMatrix::Zero(x.batch * x.height * x.width, kernel * kernel * c);
  for (Index b = 0; b < x.batch; ++b) {
    for (Index y = 0; y < x.height; ++y) {
      for (Index xx = 0; xx < x.width; ++xx) {
        const Index out_row = (b * x.height + y) * x.width + xx;
        for (Index dy = 0; dy < kernel; ++dy) {
          const Index sy = y + dy - pad;
          if (sy < 0 || sy >= x.height) continue;
          for (Index dx = 0; dx < kernel; ++dx) {
            const Index sx = xx + dx - pad;
            if (sx < 0 || sx >= x.width) continue;
            cols.row(out_row).segment((dy * kernel + dx) * c, c) = x.values.row((b * x.height + sy) * x.width + sx);
          }
        }
      }
    }
  }
  return cols;
}

FeatureMap col2im(const DenseMatrix& cols, Index batch, Index height, Index width, Index channels, Index kernel) {
  const Index pad = kernel / 2;
  FeatureMap out{batch, height, width, DenseMatrix::Zero(batch * height * width, channels)};
  for (Index b = 0; b < batch; ++b) {
    for (Index y = 0; y < height; ++y) {
      for (Index xx = 0; xx < width; ++xx) {
        const Index col_row = (b * height + y) * width + xx;
        for (Index dy = 0; dy < kernel; ++dy) {
          const Index sy = y + dy - pad;
          if (sy < 0 || sy >= height) continue;
          for (Index dx = 0; dx < kernel; ++dx) {
            const Index sx = xx + dx - pad;
            if (sx < 0 || sx >= width) continue;
            out.values.row((b * height + sy) * width + sx) +=
                cols.row(col_row).segment((dy * kernel + dx) * channels, channels);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

std::pair<FeatureMap, Conv2dTape> conv2d_forward(const FeatureMap& x, const LayerParams& p, Mode mode) {
  check_kind(p, LayerKind::conv2d, "conv2d_forward");
  if (x.values.rows() != x.batch * x.height * x.width) {
    throw ShapeError("conv2d_forward: feature map rows " + std::to_string(x.values.rows()) + " do not match " +
                     std::to_string(x.batch) + "x" + std::to_string(x.height) + "x" + std::to_string(x.width));
  }
  if (p.weights.rows() != p.kernel * p.kernel * x.channels()) {
    throw ShapeError("conv2d_forward: " + std::to_string(x.channels()) + " input channels vs weights " +
                     shape_string(p.weights) + " for kernel " + std::to_string(p.kernel));
  }
  DenseMatrix cols = p.kernel == 1 ? x.values : im2col(x, p.kernel);
  FeatureMap out{x.batch, x.height, x.width, cols * p.weights};
  add_bias(out.values, p.bias);
  Conv2dTape tape{mode, x.batch, x.height, x.width, x.channels(), {}};
  if (mode == Mode::train) tape.columns = std::move(cols);
  return {std::move(out), std::move(tape)};
}

FeatureMap conv2d_backward(const FeatureMap& grad_out, const Conv2dTape& tape, const LayerParams& p,
                           LayerGrads& grads) {
  require_train(tape.mode, "conv2d_backward");
  if (grad_out.values.rows() != tape.columns.rows() || grad_out.values.cols() != p.weights.cols()) {
    throw ShapeError("conv2d_backward: gradient " + shape_string(grad_out.values));
  }
  grads.weights += tape.columns.transpose() * grad_out.values;
  grads.bias += grad_out.values.colwise().sum().transpose();
  const DenseMatrix grad_cols = grad_out.values * p.weights.transpose();
  if (p.kernel == 1) return {tape.batch, tape.height, tape.width, grad_cols};
  return col2im(grad_cols, tape.batch, tape.height, tape.width, tape.in_channels, p.kernel);
}

// --- max pooling ------------------------------------------------------------

std::pair<FeatureMap, MaxPoolTape> maxpool2x2_forward(const FeatureMap& x, Mode mode) {
  if (x.height < 1 || x.width < 1) throw ShapeError("maxpool2x2_forward: empty spatial extent");
  const Index oh = (x.height + 1) / 2;
  const Index ow = (x.width + 1) / 2;
  const Index c = x.channels();
  FeatureMap out{x.batch, oh, ow, DenseMatrix(x.batch * oh * ow, c)};
  Matrix<Index> argmax(x.batch * oh * ow, c);
  for (Index b = 0; b < x.batch; ++b) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index orow = (b * oh + oy) * ow + ox;
        for (Index ch = 0; ch < c; ++ch) {
          Index best = -1;
          double best_value = -std::numeric_limits<double>::infinity();
          for (Index dy = 0; dy < 2; ++dy) {
            const Index y = 2 * oy + dy;
            if (y >= x.height) continue;
            for (Index dx = 0; dx < 2; ++dx) {
              const Index xx = 2 * ox + dx;
              if (xx >= x.width) continue;
              const Index r = (b * x.height + y) * x.width + xx;
              if (best < 0 || x.values(r, ch) > best_value) {
                best = r;
                best_value = x.values(r, ch);
              }
            }
          }
          out.values(orow, ch) = best_value;
          argmax(orow, ch) = best;
        }
      }
    }
  }
  MaxPoolTape tape{mode, x.batch, x.height, x.width, {}};
  if (mode == Mode::train) tape.argmax = std::move(argmax);
  return {std::move(out), std::move(tape)};
}

FeatureMap maxpool2x2_backward(const FeatureMap& grad_out, const MaxPoolTape& tape) {
  require_train(tape.mode, "maxpool2x2_backward");
  if (grad_out.values.rows() != tape.argmax.rows() || grad_out.values.cols() != tape.argmax.cols()) {
    throw ShapeError("maxpool2x2_backward: gradient " + shape_string(grad_out.values));
  }
  FeatureMap grad_in{tape.batch, tape.height, tape.width,
                     DenseMatrix::Zero(tape.batch * tape.height * tape.width, grad_out.values.cols())};
  for (Index r = 0; r < tape.argmax.rows(); ++r) {
    for (Index ch = 0; ch < tape.argmax.cols(); ++ch) grad_in.values(tape.argmax(r, ch), ch) += grad_out.values(r, ch);
  }
  return grad_in;
}

// --- batch norm -------------------------------------------------------------

std::pair<DenseMatrix, BatchNormTape> batch_norm_forward(const DenseMatrix& x, LayerParams& p, Mode mode,
                                                         double momentum) {
  check_kind(p, LayerKind::batch_norm, "batch_norm_forward");
  if (x.cols() != p.bn_gamma.size()) {
    throw ShapeError("batch_norm_forward: input " + shape_string(x) + " vs " + std::to_string(p.bn_gamma.size()) +
                     " channels");
  }
  BatchNormTape tape;
  tape.mode = mode;
  if (mode == Mode::eval) {
    const DenseVector inv_std = (p.bn_running_var.array() + kBatchNormEpsilon).rsqrt();
    DenseMatrix out = (x.rowwise() - p.bn_running_mean.transpose()) * inv_std.asDiagonal();
    out = out * p.bn_gamma.asDiagonal();
    add_bias(out, p.bn_beta);
    return {std::move(out), std::move(tape)};
  }
  const Index n = x.rows();
  if (n < 2) throw ContractError("batch_norm_forward: train mode needs at least 2 rows, got " + std::to_string(n));
  const DenseVector mean = x.colwise().mean().transpose();
  const DenseMatrix centered = x.rowwise() - mean.transpose();
  const DenseVector var = centered.colwise().squaredNorm().transpose() / static_cast<double>(n);
  tape.inv_std = (var.array() + kBatchNormEpsilon).rsqrt();
  tape.normalized = centered * tape.inv_std.asDiagonal();
  DenseMatrix out = tape.normalized * p.bn_gamma.asDiagonal();
  add_bias(out, p.bn_beta);
  p.bn_running_mean = momentum * p.bn_running_mean + (1.0 - momentum) * mean;
  p.bn_running_var = momentum * p.bn_running_var + (1.0 - momentum) * var;
  return {std::move(out), std::move(tape)};
}

std::pair<FeatureMap, BatchNormTape> batch_norm_forward(const FeatureMap& x, LayerParams& p, Mode mode,
                                                        double momentum) {
  auto [values, tape] = batch_norm_forward(x.values, p, mode, momentum);
  return {FeatureMap{x.batch, x.height, x.width, std::move(values)}, std::move(tape)};
}

DenseMatrix batch_norm_backward(const DenseMatrix& grad_out, const BatchNormTape& tape, const LayerParams& p,
                                LayerGrads& grads) {
  require_train(tape.mode, "batch_norm_backward");
  if (grad_out.rows() != tape.normalized.rows() || grad_out.cols() != tape.normalized.cols()) {
    throw ShapeError("batch_norm_backward: gradient " + shape_string(grad_out));
  }
  const double n = static_cast<double>(grad_out.rows());
  const DenseVector sum_g = grad_out.colwise().sum().transpose();
  const DenseVector sum_gx = grad_out.cwiseProduct(tape.normalized).colwise().sum().transpose();
  grads.bn_gamma += sum_gx;
  grads.bn_beta += sum_g;
  DenseMatrix grad_in = (n * grad_out).rowwise() - sum_g.transpose();
  grad_in -= tape.normalized * sum_gx.asDiagonal();
  const DenseVector scale = p.bn_gamma.cwiseProduct(tape.inv_std) / n;
  return grad_in * scale.asDiagonal();
}

// --- relu -------------------------------------------------------------------

std::pair<DenseMatrix, ReluTape> relu_forward(const DenseMatrix& x, Mode mode) {
  ReluTape tape;
  tape.mode = mode;
  DenseMatrix out = x.cwiseMax(0.0);
  if (mode == Mode::train) tape.active = x.array() > 0.0;
  return {std::move(out), std::move(tape)};
}

DenseMatrix relu_backward(const DenseMatrix& grad_out, const ReluTape& tape) {
  require_train(tape.mode, "relu_backward");
  if (grad_out.rows() != tape.active.rows() || grad_out.cols() != tape.active.cols()) {
    throw ShapeError("relu_backward: gradient " + shape_string(grad_out));
  }
  return tape.active.select(grad_out.array(), 0.0).matrix();
}

// --- softmax cross-entropy --------------------------------------------------

DenseMatrix softmax(const DenseMatrix& logits) {
  DenseMatrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  DenseMatrix e = shifted.array().exp().matrix();
  const DenseVector sums = e.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * e;
}

SoftmaxResult softmax_cross_entropy(const DenseMatrix& logits, const DenseMatrix& one_hot, Mode mode) {
  if (logits.rows() != one_hot.rows() || logits.cols() != one_hot.cols()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_string(logits) + " vs labels " + shape_string(one_hot));
  }
  if (logits.rows() == 0) throw ContractError("softmax_cross_entropy: empty batch");
  for (Index r = 0; r < one_hot.rows(); ++r) {
    int ones = 0;
    for (Index c = 0; c < one_hot.cols(); ++c) {
      const double v = one_hot(r, c);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw ContractError("softmax_cross_entropy: label row " + std::to_string(r) + " is not one-hot");
  }
  const DenseVector row_max = logits.rowwise().maxCoeff();
  const DenseMatrix shifted = logits.colwise() - row_max;
  const DenseVector log_sum = shifted.array().exp().rowwise().sum().log().matrix();
  const DenseMatrix log_prob = shifted.colwise() - log_sum;

  SoftmaxResult result;
  result.loss = -(log_prob.cwiseProduct(one_hot)).sum() / static_cast<double>(logits.rows());
  result.probabilities = log_prob.array().exp().matrix();
  result.tape.mode = mode;
  if (mode == Mode::train) {
    result.tape.probabilities = result.probabilities;
    result.tape.labels = one_hot;
  }
  return result;
}

DenseMatrix softmax_cross_entropy_backward(const SoftmaxTape& tape) {
  require_train(tape.mode, "softmax_cross_entropy_backward");
  return (tape.probabilities - tape.labels) / static_cast<double>(tape.probabilities.rows());
}

// --- checkpoints ------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[5] = {'M', 'G', 'K', 'P', '1'};

template <typename Derived>
void write_array(std::ostream& os, const Eigen::PlainObjectBase<Derived>& a) {
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(a.rows()));
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(a.cols()));
  for (Index i = 0; i < a.size(); ++i) detail::write_f64(os, a.data()[i]);
}

DenseMatrix read_array(detail::Reader& in) {
  const auto rows = in.read_le<std::uint64_t>("array rows");
  const auto cols = in.read_le<std::uint64_t>("array cols");
  constexpr std::uint64_t kLimit = std::uint64_t(1) << 31;
  if (rows > kLimit || cols > kLimit || rows * cols > kLimit) {
    throw FormatError("implausible array shape " + std::to_string(rows) + "x" + std::to_string(cols), in.offset());
  }
  DenseMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = in.read_f64("array payload");
  return m;
}

DenseVector read_vector(detail::Reader& in) {
  const auto at = in.offset();
  DenseMatrix m = read_array(in);
  if (m.cols() != 1 && m.size() != 0) throw FormatError("expected a column vector", at);
  return Eigen::Map<const DenseVector>(m.data(), m.size());
}

}  // namespace

void write_checkpoint(std::ostream& os, const std::vector<LayerParams>& layers) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_le<std::uint64_t>(os, layers.size());
  for (const auto& p : layers) {
    detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(p.kind));
    detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(p.kernel));
    write_array(os, p.weights);
    write_array(os, p.bias);
    write_array(os, p.bn_gamma);
    write_array(os, p.bn_beta);
    write_array(os, p.bn_running_mean);
    write_array(os, p.bn_running_var);
  }
}

std::vector<LayerParams> read_checkpoint(std::istream& is) {
  detail::Reader in(is);
  char magic[sizeof(kCheckpointMagic)];
  in.read_bytes(magic, sizeof(magic), "checkpoint magic");
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
    throw FormatError("bad checkpoint magic", 0);
  }
  const auto count = in.read_le<std::uint64_t>("layer count");
  if (count > 4096) throw FormatError("implausible layer count " + std::to_string(count), in.offset());
  std::vector<LayerParams> layers;
  for (std::uint64_t l = 0; l < count; ++l) {
    const auto at = in.offset();
    const auto tag = in.read_le<std::uint8_t>("layer kind");
    if (tag < 1 || tag > 4) throw FormatError("unknown layer kind " + std::to_string(tag), at);
    LayerParams p;
    p.kind = static_cast<LayerKind>(tag);
    p.kernel = static_cast<Index>(in.read_le<std::uint64_t>("kernel"));
    p.weights = read_array(in);
    p.bias = read_vector(in);
    p.bn_gamma = read_vector(in);
    p.bn_beta = read_vector(in);
    p.bn_running_mean = read_vector(in);
    p.bn_running_var = read_vector(in);
    layers.push_back(std::move(p));
  }
  if (!in.at_end()) throw FormatError("trailing bytes after checkpoint", in.offset());
  return layers;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<LayerParams>& layers) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, layers);
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<LayerParams> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace minigcn
