#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "minigcn/nn.hpp"

namespace minigcn {

enum class Architecture { gcn, minigcn, cnn2d, funet_a, funet_m, funet_c };

/// Tags: gcn, minigcn, cnn2d, funet-a, funet-m, funet-c.
Architecture parse_architecture(const std::string& tag);
std::string to_string(Architecture a);

bool has_cnn_branch(Architecture a);
bool has_gcn_branch(Architecture a);

enum class FusionKind { additive, multiplicative, concatenation };

struct ModelConfig {
  Architecture architecture = Architecture::minigcn;
  Index input_bands = 0;
  Index classes = 0;
  Index gcn_hidden = 128;
  std::array<Index, 3> cnn_channels{32, 64, 128};
  Index fusion_fc = 128;
  Index patch_size = 7;
};

/// Throws ConfigError on non-positive sizes, an even or oversized patch
/// (three 2x2 ceil pools must reach 1x1), or unequal branch widths for
/// additive and multiplicative fusion.
void validate(const ModelConfig& cfg);

/// Width of the feature entering the first fusion FC layer.
Index fusion_width(const ModelConfig& cfg);

/// Positions of each role in Model::layers; -1 when absent.
struct ModelLayout {
  std::array<int, 3> conv{-1, -1, -1};
  std::array<int, 3> cnn_bn{-1, -1, -1};
  int gcn_bn_in = -1;
  int gcn = -1;
  int gcn_bn_out = -1;
  int fc1 = -1;
  int fc1_bn = -1;
  int fc2 = -1;
};

/// CNN branch: three blocks conv -> BN -> 2x2 max-pool -> ReLU with 3x3, 3x3
/// and 1x1 kernels. GCN branch: BN -> graph conv -> BN -> ReLU. Head: FC ->
/// BN -> ReLU -> FC to class logits. Single-branch models feed their branch
/// output straight into the head.
struct Model {
  ModelConfig config;
  ModelLayout layout;
  std::vector<LayerParams> layers;
  double bn_momentum = 0.9;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);
Index trainable_count(const Model& model);

// Fusion of the CNN and GCN features: sum, elementwise product, or [cnn, gcn].

struct FusionTape {
  Mode mode = Mode::eval;
  FusionKind kind = FusionKind::additive;
  DenseMatrix cnn;
  DenseMatrix gcn;
};

FusionKind fusion_of(Architecture a);
DenseMatrix fuse(const DenseMatrix& cnn, const DenseMatrix& gcn, FusionKind kind);
std::pair<DenseMatrix, FusionTape> fuse_forward(const DenseMatrix& cnn, const DenseMatrix& gcn, FusionKind kind,
                                                Mode mode);
/// Returns (d cnn, d gcn).
std::pair<DenseMatrix, DenseMatrix> fuse_backward(const DenseMatrix& grad_out, const FusionTape& tape);

/// One batch of samples. `features` and `prop` feed the GCN branch, `patches`
/// the CNN branch. For two-branch models `pixels` and `patch_pixels` must list
/// the same pixels in the same order.
struct ModelBatch {
  SparseSymMatrix prop;
  DenseMatrix features;
  FeatureMap patches;
  std::vector<Index> pixels;
  std::vector<Index> patch_pixels;

  Index size() const;
};

struct ForwardTape {
  Mode mode = Mode::eval;
  std::array<Conv2dTape, 3> conv;
  std::array<BatchNormTape, 3> cnn_bn;
  std::array<MaxPoolTape, 3> pool;
  std::array<ReluTape, 3> cnn_relu;
  BatchNormTape gcn_bn_in;
  GraphConvTape gcn;
  BatchNormTape gcn_bn_out;
  ReluTape gcn_relu;
  FusionTape fusion;
  LinearTape fc1;
  BatchNormTape fc1_bn;
  ReluTape fc1_relu;
  LinearTape fc2;
  Index batch = 0;
};

struct ForwardResult {
  DenseMatrix logits;
  ForwardTape tape;
};

/// Train mode uses batch statistics and updates BN running stats; eval mode
/// uses running stats and leaves the model unchanged.
ForwardResult forward(Model& model, const ModelBatch& batch, Mode mode);

/// Gradients of all layers given d loss / d logits.
std::vector<LayerGrads> backward(const Model& model, const ForwardTape& tape, const DenseMatrix& grad_logits);

/// lambda * sum of squared conv, graph-conv and FC weights (biases and BN
/// parameters excluded).
double l2_penalty(const Model& model, double lambda);

struct LossAndGrads {
  double loss = 0.0;
  double cross_entropy = 0.0;
  std::vector<LayerGrads> grads;
};

/// Mean cross-entropy of a train-mode forward result plus the L2 penalty,
/// with gradients for every trainable array. Eval-mode results are a
/// ContractError.
LossAndGrads loss_and_grads(const Model& model, const ForwardResult& fwd, const DenseMatrix& one_hot,
                            double l2 = 0.001);

/// MGKP1 checkpoint at `path` plus the configuration at `path` + ".json".
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);
std::string model_config_json(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& json_text);

}  // namespace minigcn
