#include "minigcn/model.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace minigcn {

namespace {

constexpr std::array<Index, 3> kKernels{3, 3, 1};

Index pooled(Index s) { return (s + 1) / 2; }

LayerParams& at(Model& m, int role) { return m.layers[static_cast<std::size_t>(role)]; }
const LayerParams& at(const Model& m, int role) { return m.layers[static_cast<std::size_t>(role)]; }

bool is_weighted(LayerKind k) { return k != LayerKind::batch_norm; }

ModelLayout layout_for(const ModelConfig& cfg) {
  ModelLayout l;
  int next = 0;
  if (has_cnn_branch(cfg.architecture)) {
    for (std::size_t i = 0; i < 3; ++i) {
      l.conv[i] = next++;
      l.cnn_bn[i] = next++;
    }
  }
  if (has_gcn_branch(cfg.architecture)) {
    l.gcn_bn_in = next++;
    l.gcn = next++;
    l.gcn_bn_out = next++;
  }
  l.fc1 = next++;
  l.fc1_bn = next++;
  l.fc2 = next++;
  return l;
}

}  // namespace

Architecture parse_architecture(const std::string& tag) {
  if (tag == "gcn") return Architecture::gcn;
  if (tag == "minigcn") return Architecture::minigcn;
  if (tag == "cnn2d") return Architecture::cnn2d;
  if (tag == "funet-a") return Architecture::funet_a;
  if (tag == "funet-m") return Architecture::funet_m;
  if (tag == "funet-c") return Architecture::funet_c;
  throw ConfigError("unknown architecture '" + tag + "' (expected gcn, minigcn, cnn2d, funet-a, funet-m, funet-c)");
}

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::gcn: return "gcn";
    case Architecture::minigcn: return "minigcn";
    case Architecture::cnn2d: return "cnn2d";
    case Architecture::funet_a: return "funet-a";
    case Architecture::funet_m: return "funet-m";
    case Architecture::funet_c: return "funet-c";
  }
  return "unknown";
}

bool has_cnn_branch(Architecture a) { return a != Architecture::gcn && a != Architecture::minigcn; }
bool has_gcn_branch(Architecture a) { return a != Architecture::cnn2d; }

FusionKind fusion_of(Architecture a) {
  switch (a) {
    case Architecture::funet_a: return FusionKind::additive;
    case Architecture::funet_m: return FusionKind::multiplicative;
    case Architecture::funet_c: return FusionKind::concatenation;
    default: throw ConfigError("fusion_of: " + to_string(a) + " has a single branch");
  }
}

void validate(const ModelConfig& cfg) {
  if (cfg.input_bands < 1 || cfg.classes < 1 || cfg.gcn_hidden < 1 || cfg.fusion_fc < 1) {
    throw ConfigError("model config: input_bands, classes, gcn_hidden and fusion_fc must be positive");
  }
  for (const Index c : cfg.cnn_channels)
    if (c < 1) throw ConfigError("model config: cnn_channels must be positive");
  if (cfg.patch_size < 1 || cfg.patch_size % 2 == 0) throw ConfigError("model config: patch_size must be odd");
  if (pooled(pooled(pooled(cfg.patch_size))) != 1) {
    throw ConfigError("model config: patch_size " + std::to_string(cfg.patch_size) +
                      " does not pool to 1x1 after three 2x2 pools (use at most 7)");
  }
  const auto a = cfg.architecture;
  if ((a == Architecture::funet_a || a == Architecture::funet_m) && cfg.cnn_channels[2] != cfg.gcn_hidden) {
    throw ConfigError("model config: " + to_string(a) + " needs equal branch widths, got " +
                      std::to_string(cfg.cnn_channels[2]) + " and " + std::to_string(cfg.gcn_hidden));
  }
}

Index fusion_width(const ModelConfig& cfg) {
  switch (cfg.architecture) {
    case Architecture::gcn:
    case Architecture::minigcn: return cfg.gcn_hidden;
    case Architecture::cnn2d:
    case Architecture::funet_a:
    case Architecture::funet_m: return cfg.cnn_channels[2];
    case Architecture::funet_c: return cfg.cnn_channels[2] + cfg.gcn_hidden;
  }
  return 0;
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Model m;
  m.config = cfg;
  m.layout = layout_for(cfg);
  std::mt19937_64 rng(seed);
  if (has_cnn_branch(cfg.architecture)) {
    Index in = cfg.input_bands;
    for (std::size_t i = 0; i < 3; ++i) {
      m.layers.push_back(make_conv2d(kKernels[i], in, cfg.cnn_channels[i], rng));
      m.layers.push_back(make_batch_norm(cfg.cnn_channels[i]));
      in = cfg.cnn_channels[i];
    }
  }
  if (has_gcn_branch(cfg.architecture)) {
    m.layers.push_back(make_batch_norm(cfg.input_bands));
    m.layers.push_back(make_graph_conv(cfg.input_bands, cfg.gcn_hidden, rng));
    m.layers.push_back(make_batch_norm(cfg.gcn_hidden));
  }
  m.layers.push_back(make_fully_connected(fusion_width(cfg), cfg.fusion_fc, rng));
  m.layers.push_back(make_batch_norm(cfg.fusion_fc));
  m.layers.push_back(make_fully_connected(cfg.fusion_fc, cfg.classes, rng));
  return m;
}

Index trainable_count(const Model& model) {
  Index n = 0;
  for (const auto& p : model.layers) n += trainable_count(p);
  return n;
}

DenseMatrix fuse(const DenseMatrix& cnn, const DenseMatrix& gcn, FusionKind kind) {
  return fuse_forward(cnn, gcn, kind, Mode::eval).first;
}

std::pair<DenseMatrix, FusionTape> fuse_forward(const DenseMatrix& cnn, const DenseMatrix& gcn, FusionKind kind,
                                                Mode mode) {
  if (cnn.rows() != gcn.rows()) {
    throw ShapeError("fuse: batch sizes differ, " + shape_string(cnn) + " vs " + shape_string(gcn));
  }
  if (kind != FusionKind::concatenation && cnn.cols() != gcn.cols()) {
    throw ShapeError("fuse: widths differ, " + shape_string(cnn) + " vs " + shape_string(gcn));
  }
  DenseMatrix out;
  switch (kind) {
    case FusionKind::additive: out = cnn + gcn; break;
    case FusionKind::multiplicative: out = cnn.cwiseProduct(gcn); break;
    case FusionKind::concatenation:
      out.resize(cnn.rows(), cnn.cols() + gcn.cols());
      out << cnn, gcn;
      break;
  }
  FusionTape tape;
  tape.mode = mode;
  tape.kind = kind;
  if (mode == Mode::train) {
    tape.cnn = cnn;
    tape.gcn = gcn;
  } else {
    // Widths are still needed to split concatenation gradients.
    tape.cnn.resize(0, cnn.cols());
    tape.gcn.resize(0, gcn.cols());
  }
  return {std::move(out), std::move(tape)};
}

std::pair<DenseMatrix, DenseMatrix> fuse_backward(const DenseMatrix& grad_out, const FusionTape& tape) {
  if (tape.mode != Mode::train) throw ContractError("fuse_backward: backward needs a train-mode tape");
  const Index wc = tape.cnn.cols(), wg = tape.gcn.cols();
  const Index expected = tape.kind == FusionKind::concatenation ? wc + wg : wc;
  if (grad_out.rows() != tape.cnn.rows() || grad_out.cols() != expected) {
    throw ShapeError("fuse_backward: gradient " + shape_string(grad_out));
  }
  switch (tape.kind) {
    case FusionKind::additive: return {grad_out, grad_out};
    case FusionKind::multiplicative: return {grad_out.cwiseProduct(tape.gcn), grad_out.cwiseProduct(tape.cnn)};
    case FusionKind::concatenation: return {grad_out.leftCols(wc), grad_out.rightCols(wg)};
  }
  return {};
}

Index ModelBatch::size() const { return features.rows() > 0 ? features.rows() : patches.batch; }

ForwardResult forward(Model& model, const ModelBatch& batch, Mode mode) {
  const ModelConfig& cfg = model.config;
  const bool cnn = has_cnn_branch(cfg.architecture), gcn = has_gcn_branch(cfg.architecture);
  const Index b = batch.size();
  if (b < 1) throw ContractError("forward: empty batch");
  if (cnn && gcn) {
    if (batch.patches.batch != batch.features.rows()) {
      throw ContractError("forward: " + std::to_string(batch.patches.batch) + " patches vs " +
                          std::to_string(batch.features.rows()) + " vertices");
    }
    if (batch.pixels != batch.patch_pixels) {
      throw ContractError("forward: patch and vertex pixel orders differ");
    }
  }
  ForwardResult r;
  ForwardTape& t = r.tape;
  t.mode = mode;
  t.batch = b;
  const double mom = model.bn_momentum;
  const ModelLayout& l = model.layout;

  DenseMatrix h_cnn, h_gcn;
  if (cnn) {
    const FeatureMap& p = batch.patches;
    if (p.height != cfg.patch_size || p.width != cfg.patch_size || p.channels() != cfg.input_bands) {
      throw ShapeError("forward: patches " + std::to_string(p.height) + "x" + std::to_string(p.width) + "x" +
                       std::to_string(p.channels()) + " do not match the model input");
    }
    FeatureMap x = p;
    for (std::size_t i = 0; i < 3; ++i) {
      auto [c, ct] = conv2d_forward(x, at(model, l.conv[i]), mode);
      auto [n, nt] = batch_norm_forward(c, at(model, l.cnn_bn[i]), mode, mom);
      auto [q, qt] = maxpool2x2_forward(n, mode);
      auto [a, at_] = relu_forward(q.values, mode);
      t.conv[i] = std::move(ct);
      t.cnn_bn[i] = std::move(nt);
      t.pool[i] = std::move(qt);
      t.cnn_relu[i] = std::move(at_);
      x = FeatureMap{q.batch, q.height, q.width, std::move(a)};
    }
    h_cnn = std::move(x.values);
  }
  if (gcn) {
    if (batch.features.cols() != cfg.input_bands) {
      throw ShapeError("forward: features " + shape_string(batch.features) + " for " +
                       std::to_string(cfg.input_bands) + " bands");
    }
    auto [n0, t0] = batch_norm_forward(batch.features, at(model, l.gcn_bn_in), mode, mom);
    auto [g, tg] = graph_conv_forward(n0, batch.prop, at(model, l.gcn), mode);
    auto [n1, t1] = batch_norm_forward(g, at(model, l.gcn_bn_out), mode, mom);
    auto [a, ta] = relu_forward(n1, mode);
    t.gcn_bn_in = std::move(t0);
    t.gcn = std::move(tg);
    t.gcn_bn_out = std::move(t1);
    t.gcn_relu = std::move(ta);
    h_gcn = std::move(a);
  }
  DenseMatrix h;
  if (cnn && gcn) {
    auto [f, tf] = fuse_forward(h_cnn, h_gcn, fusion_of(cfg.architecture), mode);
    t.fusion = std::move(tf);
    h = std::move(f);
  } else {
    h = cnn ? std::move(h_cnn) : std::move(h_gcn);
  }
  auto [f1, tf1] = fully_connected_forward(h, at(model, l.fc1), mode);
  auto [n2, tn2] = batch_norm_forward(f1, at(model, l.fc1_bn), mode, mom);
  auto [a2, ta2] = relu_forward(n2, mode);
  auto [logits, tf2] = fully_connected_forward(a2, at(model, l.fc2), mode);
  t.fc1 = std::move(tf1);
  t.fc1_bn = std::move(tn2);
  t.fc1_relu = std::move(ta2);
  t.fc2 = std::move(tf2);
  r.logits = std::move(logits);
  return r;
}

std::vector<LayerGrads> backward(const Model& model, const ForwardTape& t, const DenseMatrix& grad_logits) {
  if (t.mode != Mode::train) throw ContractError("backward: needs a train-mode forward tape");
  const ModelConfig& cfg = model.config;
  const ModelLayout& l = model.layout;
  const bool cnn = has_cnn_branch(cfg.architecture), gcn = has_gcn_branch(cfg.architecture);
  std::vector<LayerGrads> grads;
  for (const auto& p : model.layers) grads.push_back(zero_grads(p));
  auto g_at = [&](int role) -> LayerGrads& { return grads[static_cast<std::size_t>(role)]; };

  DenseMatrix g = fully_connected_backward(grad_logits, t.fc2, at(model, l.fc2), g_at(l.fc2));
  g = relu_backward(g, t.fc1_relu);
  g = batch_norm_backward(g, t.fc1_bn, at(model, l.fc1_bn), g_at(l.fc1_bn));
  g = fully_connected_backward(g, t.fc1, at(model, l.fc1), g_at(l.fc1));

  DenseMatrix g_cnn, g_gcn;
  if (cnn && gcn) {
    std::tie(g_cnn, g_gcn) = fuse_backward(g, t.fusion);
  } else if (cnn) {
    g_cnn = std::move(g);
  } else {
    g_gcn = std::move(g);
  }
  if (gcn) {
    DenseMatrix d = relu_backward(g_gcn, t.gcn_relu);
    d = batch_norm_backward(d, t.gcn_bn_out, at(model, l.gcn_bn_out), g_at(l.gcn_bn_out));
    d = graph_conv_backward(d, t.gcn, at(model, l.gcn), g_at(l.gcn));
    batch_norm_backward(d, t.gcn_bn_in, at(model, l.gcn_bn_in), g_at(l.gcn_bn_in));
  }
  if (cnn) {
    DenseMatrix d = std::move(g_cnn);
    for (int i = 2; i >= 0; --i) {
      const auto k = static_cast<std::size_t>(i);
      d = relu_backward(d, t.cnn_relu[k]);
      const MaxPoolTape& pt = t.pool[k];
      const Index oh = pooled(pt.height), ow = pooled(pt.width);
      FeatureMap up = maxpool2x2_backward(FeatureMap{pt.batch, oh, ow, std::move(d)}, pt);
      DenseMatrix n = batch_norm_backward(up.values, t.cnn_bn[k], at(model, l.cnn_bn[k]), g_at(l.cnn_bn[k]));
      if (i == 0) {
        // Input gradients are not needed; only accumulate conv parameter grads.
        conv2d_backward(FeatureMap{up.batch, up.height, up.width, std::move(n)}, t.conv[k], at(model, l.conv[k]),
                        g_at(l.conv[k]));
        break;
      }
      d = conv2d_backward(FeatureMap{up.batch, up.height, up.width, std::move(n)}, t.conv[k], at(model, l.conv[k]),
                          g_at(l.conv[k]))
              .values;
    }
  }
  return grads;
}

double l2_penalty(const Model& model, double lambda) {
  double s = 0.0;
  for (const auto& p : model.layers)
    if (is_weighted(p.kind)) s += p.weights.squaredNorm();
  return lambda * s;
}

LossAndGrads loss_and_grads(const Model& model, const ForwardResult& fwd, const DenseMatrix& one_hot, double l2) {
  if (fwd.tape.mode != Mode::train) throw ContractError("loss_and_grads: needs a train-mode forward result");
  if (l2 < 0.0) throw ContractError("loss_and_grads: negative L2 coefficient");
  const SoftmaxResult ce = softmax_cross_entropy(fwd.logits, one_hot, Mode::train);
  LossAndGrads out;
  out.cross_entropy = ce.loss;
  out.grads = backward(model, fwd.tape, softmax_cross_entropy_backward(ce.tape));
  if (l2 > 0.0) {
    out.loss = ce.loss + l2_penalty(model, l2);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (is_weighted(model.layers[i].kind)) out.grads[i].weights += 2.0 * l2 * model.layers[i].weights;
    }
  } else {
    out.loss = ce.loss;
  }
  return out;
}

std::string model_config_json(const ModelConfig& cfg) {
  const nlohmann::json j = {{"architecture", to_string(cfg.architecture)},
                            {"input_bands", cfg.input_bands},
                            {"classes", cfg.classes},
                            {"gcn_hidden", cfg.gcn_hidden},
                            {"cnn_channels", cfg.cnn_channels},
                            {"fusion_fc", cfg.fusion_fc},
                            {"patch_size", cfg.patch_size}};
  return j.dump(2);
}

ModelConfig parse_model_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config: expected a JSON object");
  ModelConfig cfg;
  try {
    if (j.contains("architecture")) cfg.architecture = parse_architecture(j["architecture"].get<std::string>());
    if (j.contains("input_bands")) cfg.input_bands = j["input_bands"].get<Index>();
    if (j.contains("classes")) cfg.classes = j["classes"].get<Index>();
    if (j.contains("gcn_hidden")) cfg.gcn_hidden = j["gcn_hidden"].get<Index>();
    if (j.contains("cnn_channels")) cfg.cnn_channels = j["cnn_channels"].get<std::array<Index, 3>>();
    if (j.contains("fusion_fc")) cfg.fusion_fc = j["fusion_fc"].get<Index>();
    if (j.contains("patch_size")) cfg.patch_size = j["patch_size"].get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return cfg;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  save_checkpoint(path, model.layers);
  std::ofstream os(path.string() + ".json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string() + ".json");
  os << model_config_json(model.config) << '\n';
  if (!os) throw IoError("write failed for " + path.string() + ".json");
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream is(path.string() + ".json");
  if (!is) throw IoError("cannot open " + path.string() + ".json");
  std::stringstream text;
  text << is.rdbuf();
  Model model = build_model(parse_model_config(text.str()), 0);
  std::vector<LayerParams> layers = load_checkpoint(path);
  if (layers.size() != model.layers.size()) {
    throw ConfigError("checkpoint " + path.string() + " has " + std::to_string(layers.size()) +
                      " layers, configuration expects " + std::to_string(model.layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& want = model.layers[i];
    const auto& got = layers[i];
    if (got.kind != want.kind || got.kernel != want.kernel || got.weights.rows() != want.weights.rows() ||
        got.weights.cols() != want.weights.cols() || got.bias.size() != want.bias.size() ||
        got.bn_gamma.size() != want.bn_gamma.size()) {
      throw ConfigError("checkpoint layer " + std::to_string(i) + " (" + to_string(got.kind) +
                        ") does not match the configured architecture");
    }
  }
  model.layers = std::move(layers);
  return model;
}

}  // namespace minigcn
