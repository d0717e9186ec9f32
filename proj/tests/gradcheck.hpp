#pragma once

// Randomized finite-difference checks for every layer. Each check draws one
// configuration, projects the layer output onto a random direction R so the
// scalar loss is sum(R .* out), and returns the worst relative error over all
// differentiable inputs.

#include <algorithm>

#include "minigcn/model.hpp"
#include "minigcn/nn.hpp"
#include "test_support.hpp"

namespace minigcn::testing {

inline double projected(const DenseMatrix& out, const DenseMatrix& r) { return out.cwiseProduct(r).sum(); }

inline double worst(std::initializer_list<double> errs) { return std::max(errs); }

inline double check_graph_conv(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dim(1, 6);
  const Index m = dim(rng), din = dim(rng), dout = dim(rng);
  const Graph g = random_graph(m, 0.4, rng);
  LayerParams p = make_graph_conv(din, dout, rng);
  p.bias = random_matrix(dout, 1, rng);
  DenseMatrix h = random_matrix(m, din, rng);
  const DenseMatrix r = random_matrix(m, dout, rng);
  auto loss = [&] { return projected(graph_conv_forward(h, g.prop, p, Mode::train).first, r); };

  auto [out, tape] = graph_conv_forward(h, g.prop, p, Mode::train);
  LayerGrads grads = zero_grads(p);
  const DenseMatrix dh = graph_conv_backward(r, tape, p, grads);
  return worst({relative_error(dh, numeric_gradient(loss, h)),
                relative_error(grads.weights, numeric_gradient(loss, p.weights)),
                relative_error(grads.bias, numeric_gradient(loss, p.bias))});
}

inline double check_fully_connected(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dim(1, 6);
  const Index b = dim(rng), din = dim(rng), dout = dim(rng);
  LayerParams p = make_fully_connected(din, dout, rng);
  p.bias = random_matrix(dout, 1, rng);
  DenseMatrix x = random_matrix(b, din, rng);
  const DenseMatrix r = random_matrix(b, dout, rng);
  auto loss = [&] { return projected(fully_connected_forward(x, p, Mode::train).first, r); };

  auto [out, tape] = fully_connected_forward(x, p, Mode::train);
  LayerGrads grads = zero_grads(p);
  const DenseMatrix dx = fully_connected_backward(r, tape, p, grads);
  return worst({relative_error(dx, numeric_gradient(loss, x)),
                relative_error(grads.weights, numeric_gradient(loss, p.weights)),
                relative_error(grads.bias, numeric_gradient(loss, p.bias))});
}

inline double check_conv2d(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dim(1, 3);
  std::uniform_int_distribution<Index> spatial(1, 5);
  std::bernoulli_distribution three(0.7);
  const Index b = dim(rng), h = spatial(rng), w = spatial(rng), cin = dim(rng), cout = dim(rng);
  const Index kernel = three(rng) ? 3 : 1;
  LayerParams p = make_conv2d(kernel, cin, cout, rng);
  p.bias = random_matrix(cout, 1, rng);
  FeatureMap x{b, h, w, random_matrix(b * h * w, cin, rng)};
  const DenseMatrix r = random_matrix(b * h * w, cout, rng);
  auto loss = [&] { return projected(conv2d_forward(x, p, Mode::train).first.values, r); };

  auto [out, tape] = conv2d_forward(x, p, Mode::train);
  LayerGrads grads = zero_grads(p);
  const FeatureMap dx = conv2d_backward(FeatureMap{b, h, w, r}, tape, p, grads);
  return worst({relative_error(dx.values, numeric_gradient(loss, x.values)),
                relative_error(grads.weights, numeric_gradient(loss, p.weights)),
                relative_error(grads.bias, numeric_gradient(loss, p.bias))});
}

inline double check_maxpool(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dim(1, 3);
  std::uniform_int_distribution<Index> spatial(1, 7);
  const Index b = dim(rng), h = spatial(rng), w = spatial(rng), c = dim(rng);
  // Distinct values on a 1e-2 grid keep every window far from a tie, so
  // central differences never straddle an argmax switch.
  FeatureMap x{b, h, w, DenseMatrix(b * h * w, c)};
  std::vector<double> grid(static_cast<std::size_t>(x.values.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 0.01 * static_cast<double>(i) - 1.0;
  std::shuffle(grid.begin(), grid.end(), rng);
  std::copy(grid.begin(), grid.end(), x.values.data());
  const Index oh = (h + 1) / 2, ow = (w + 1) / 2;
  const DenseMatrix r = random_matrix(b * oh * ow, c, rng);
  auto loss = [&] { return projected(maxpool2x2_forward(x, Mode::train).first.values, r); };

  auto [out, tape] = maxpool2x2_forward(x, Mode::train);
  const FeatureMap dx = maxpool2x2_backward(FeatureMap{b, oh, ow, r}, tape);
  return relative_error(dx.values, numeric_gradient(loss, x.values));
}

inline double check_batch_norm(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> rows(2, 8);
  std::uniform_int_distribution<Index> cols(1, 5);
  const Index n = rows(rng), c = cols(rng);
  LayerParams p = make_batch_norm(c);
  p.bn_gamma = random_matrix(c, 1, rng, 0.5, 1.5);
  p.bn_beta = random_matrix(c, 1, rng);
  DenseMatrix x = random_matrix(n, c, rng, -2.0, 2.0);
  const DenseMatrix r = random_matrix(n, c, rng);
  auto loss = [&] { return projected(batch_norm_forward(x, p, Mode::train).first, r); };

  auto [out, tape] = batch_norm_forward(x, p, Mode::train);
  LayerGrads grads = zero_grads(p);
  const DenseMatrix dx = batch_norm_backward(r, tape, p, grads);
  return worst({relative_error(dx, numeric_gradient(loss, x)),
                relative_error(grads.bn_gamma, numeric_gradient(loss, p.bn_gamma)),
                relative_error(grads.bn_beta, numeric_gradient(loss, p.bn_beta))});
}

inline double check_relu(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dim(1, 6);
  const Index n = dim(rng), c = dim(rng);
  DenseMatrix x = random_matrix(n, c, rng);
  // Keep entries away from the kink so central differences are exact.
  for (Index i = 0; i < x.size(); ++i)
    if (std::abs(x.data()[i]) < 1e-3) x.data()[i] = 0.5;
  const DenseMatrix r = random_matrix(n, c, rng);
  auto loss = [&] { return projected(relu_forward(x, Mode::train).first, r); };
  auto [out, tape] = relu_forward(x, Mode::train);
  return relative_error(relu_backward(r, tape), numeric_gradient(loss, x));
}

inline DenseMatrix random_one_hot(Index rows, Index classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick(0, classes - 1);
  DenseMatrix y = DenseMatrix::Zero(rows, classes);
  for (Index i = 0; i < rows; ++i) y(i, pick(rng)) = 1.0;
  return y;
}

inline double check_softmax_cross_entropy(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dim(1, 6);
  std::uniform_int_distribution<Index> classes(2, 6);
  const Index b = dim(rng), c = classes(rng);
  DenseMatrix logits = random_matrix(b, c, rng, -3.0, 3.0);
  const DenseMatrix y = random_one_hot(b, c, rng);
  auto loss = [&] { return softmax_cross_entropy(logits, y).loss; };
  const auto result = softmax_cross_entropy(logits, y);
  return relative_error(softmax_cross_entropy_backward(result.tape), numeric_gradient(loss, logits));
}

inline double check_fusion(FusionKind kind, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dim(1, 6);
  const Index b = dim(rng), w = dim(rng);
  const Index wg = kind == FusionKind::concatenation ? dim(rng) : w;
  DenseMatrix a = random_matrix(b, w, rng);
  DenseMatrix g = random_matrix(b, wg, rng);
  const DenseMatrix r = random_matrix(b, kind == FusionKind::concatenation ? w + wg : w, rng);
  auto loss = [&] { return projected(fuse(a, g, kind), r); };
  auto [out, tape] = fuse_forward(a, g, kind, Mode::train);
  const auto [da, dg] = fuse_backward(r, tape);
  return worst({relative_error(da, numeric_gradient(loss, a)), relative_error(dg, numeric_gradient(loss, g))});
}

/// Small model of the given architecture on a 6-vertex batch.
struct ToyProblem {
  Model model;
  ModelBatch batch;
  DenseMatrix labels;
};

inline ToyProblem toy_problem(Architecture arch, std::mt19937_64& rng) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.input_bands = 4;
  cfg.classes = 3;
  cfg.gcn_hidden = 5;
  cfg.cnn_channels = {3, 4, 5};
  cfg.fusion_fc = 6;
  cfg.patch_size = 3;
  ToyProblem t{build_model(cfg, rng()), {}, random_one_hot(6, 3, rng)};
  for (auto& p : t.model.layers) {
    if (p.kind == LayerKind::batch_norm) {
      p.bn_gamma = random_matrix(p.bn_gamma.size(), 1, rng, 0.5, 1.5);
      p.bn_beta = random_matrix(p.bn_beta.size(), 1, rng, -0.5, 0.5);
    } else {
      p.bias = random_matrix(p.bias.size(), 1, rng, -0.5, 0.5);
    }
  }
  t.batch.prop = random_graph(6, 0.4, rng).prop;
  t.batch.features = random_matrix(6, 4, rng);
  t.batch.patches = FeatureMap{6, 3, 3, random_matrix(54, 4, rng)};
  t.batch.pixels = t.batch.patch_pixels = {0, 1, 2, 3, 4, 5};
  return t;
}

/// Worst relative error of loss_and_grads over every trainable array.
inline double check_full_model(Architecture arch, std::mt19937_64& rng, double l2 = 0.001) {
  ToyProblem t = toy_problem(arch, rng);
  auto loss = [&] {
    const ForwardResult f = forward(t.model, t.batch, Mode::train);
    return softmax_cross_entropy(f.logits, t.labels).loss + l2_penalty(t.model, l2);
  };
  const ForwardResult f = forward(t.model, t.batch, Mode::train);
  const LossAndGrads lg = loss_and_grads(t.model, f, t.labels, l2);
  // Biases feeding a train-mode BN have an exactly zero gradient; the floor
  // keeps central-difference roundoff (~1e-11 here) from reading as error.
  const double floor = 1e-6;
  double err = 0.0;
  for (std::size_t i = 0; i < t.model.layers.size(); ++i) {
    LayerParams& p = t.model.layers[i];
    const LayerGrads& g = lg.grads[i];
    if (p.kind == LayerKind::batch_norm) {
      err = std::max({err, relative_error(g.bn_gamma, numeric_gradient(loss, p.bn_gamma), floor),
                      relative_error(g.bn_beta, numeric_gradient(loss, p.bn_beta), floor)});
    } else {
      err = std::max({err, relative_error(g.weights, numeric_gradient(loss, p.weights), floor),
                      relative_error(g.bias, numeric_gradient(loss, p.bias), floor)});
    }
  }
  return err;
}

}  // namespace minigcn::testing
