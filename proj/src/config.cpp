#include "minigcn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace minigcn {

namespace {

using nlohmann::json;

json defaults() {
  const ModelConfig m;
  const TrainOptions t;
  return json{
      {"model",
       {{"architecture", to_string(m.architecture)},
        {"gcn_hidden", m.gcn_hidden},
        {"cnn_channels", m.cnn_channels},
        {"fusion_fc", m.fusion_fc},
        {"patch_size", m.patch_size}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch", t.batch},
        {"base_lr", t.base_lr},
        {"l2", t.l2},
        {"bn_momentum", t.bn_momentum},
        {"seed", t.seed}}},
      {"graph", {{"k", t.graph_k}, {"sigma", t.graph_sigma}}},
      {"paths", {{"cube", ""}, {"labels", ""}, {"split", ""}, {"checkpoint", ""}, {"output", ""}}},
  };
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // integers stay integers; floats accept either
    return !a.is_number_integer() || b.is_number_integer();
  }
  return a.type() == b.type();
}

void set_value(json& root, const std::string& dotted, const json& value, const std::string& origin) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) throw ConfigError(origin + ": key '" + dotted + "' must look like section.key");
  const std::string section = dotted.substr(0, dot);
  const std::string key = dotted.substr(dot + 1);
  if (!root.contains(section) || !root[section].contains(key)) {
    throw ConfigError(origin + ": unknown key '" + dotted + "'");
  }
  json& slot = root[section][key];
  if (!same_kind(slot, value)) {
    throw ConfigError(origin + ": '" + dotted + "' expects " + std::string(slot.type_name()) + ", got " +
                      std::string(value.type_name()));
  }
  if (slot.is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() < 0) {
    throw ConfigError(origin + ": '" + dotted + "' must be non-negative");
  }
  slot = value;
}

void merge_file(json& root, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config file " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config " + file.string() + ": " + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ConfigError("config " + file.string() + ": top level must be an object");
  for (const auto& [section, body] : doc.items()) {
    if (!body.is_object()) throw ConfigError("config " + file.string() + ": section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) set_value(root, section + "." + key, value, file.string());
  }
}

json parse_override_value(const std::string& text, const json& slot) {
  if (slot.is_string()) return text;
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  const json& m = j.at("model");
  c.model.architecture = parse_architecture(m.at("architecture").get<std::string>());
  c.model.gcn_hidden = m.at("gcn_hidden").get<Index>();
  const auto channels = m.at("cnn_channels").get<std::vector<Index>>();
  if (channels.size() != 3) throw ConfigError("model.cnn_channels must list 3 widths");
  std::copy(channels.begin(), channels.end(), c.model.cnn_channels.begin());
  c.model.fusion_fc = m.at("fusion_fc").get<Index>();
  c.model.patch_size = m.at("patch_size").get<Index>();
  const json& t = j.at("train");
  c.train.epochs = t.at("epochs").get<Index>();
  c.train.batch = t.at("batch").get<Index>();
  c.train.base_lr = t.at("base_lr").get<double>();
  c.train.l2 = t.at("l2").get<double>();
  c.train.bn_momentum = t.at("bn_momentum").get<double>();
  c.train.seed = t.at("seed").get<std::uint64_t>();
  c.train.graph_k = j.at("graph").at("k").get<Index>();
  c.train.graph_sigma = j.at("graph").at("sigma").get<double>();
  const json& p = j.at("paths");
  c.paths = {p.at("cube").get<std::string>(), p.at("labels").get<std::string>(), p.at("split").get<std::string>(),
             p.at("checkpoint").get<std::string>(), p.at("output").get<std::string>()};
  if (c.train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (c.train.batch < 2) throw ConfigError("train.batch must be >= 2");
  if (!(c.train.base_lr > 0.0)) throw ConfigError("train.base_lr must be positive");
  if (c.train.l2 < 0.0) throw ConfigError("train.l2 must be >= 0");
  if (!(c.train.bn_momentum >= 0.0 && c.train.bn_momentum < 1.0)) throw ConfigError("train.bn_momentum must be in [0, 1)");
  if (c.train.graph_k < 1) throw ConfigError("graph.k must be >= 1");
  if (!(c.train.graph_sigma > 0.0)) throw ConfigError("graph.sigma must be positive");
  return c;
}

}  // namespace

std::string default_run_config_json() { return defaults().dump(2); }

RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides,
                             const std::optional<std::string>& seed_env) {
  json root = defaults();
  if (file) merge_file(root, *file);
  if (seed_env) {
    std::uint64_t seed = 0;
    std::size_t used = 0;
    try {
      seed = std::stoull(*seed_env, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != seed_env->size() || seed_env->front() == '-') {
      throw ConfigError("MGK_SEED must be a non-negative integer, got '" + *seed_env + "'");
    }
    root["train"]["seed"] = seed;
  }
  for (const auto& o : overrides) {
    std::string text = o;
    if (text.rfind("--", 0) == 0) text = text.substr(2);
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' must look like section.key=value");
    const std::string key = text.substr(0, eq);
    const auto dot = key.find('.');
    const json* slot = nullptr;
    if (dot != std::string::npos && root.contains(key.substr(0, dot)) &&
        root[key.substr(0, dot)].contains(key.substr(dot + 1))) {
      slot = &root[key.substr(0, dot)][key.substr(dot + 1)];
    }
    set_value(root, key, slot ? parse_override_value(text.substr(eq + 1), *slot) : json(text.substr(eq + 1)),
              "override");
  }
  return from_json(root);
}

std::string run_config_json(const RunConfig& c) {
  json j = defaults();
  j["model"]["architecture"] = to_string(c.model.architecture);
  j["model"]["gcn_hidden"] = c.model.gcn_hidden;
  j["model"]["cnn_channels"] = c.model.cnn_channels;
  j["model"]["fusion_fc"] = c.model.fusion_fc;
  j["model"]["patch_size"] = c.model.patch_size;
  j["train"] = {{"epochs", c.train.epochs}, {"batch", c.train.batch}, {"base_lr", c.train.base_lr},
                {"l2", c.train.l2},         {"bn_momentum", c.train.bn_momentum}, {"seed", c.train.seed}};
  j["graph"] = {{"k", c.train.graph_k}, {"sigma", c.train.graph_sigma}};
  j["paths"] = {{"cube", c.paths.cube.string()},
                {"labels", c.paths.labels.string()},
                {"split", c.paths.split.string()},
                {"checkpoint", c.paths.checkpoint.string()},
                {"output", c.paths.output.string()}};
  return j.dump(2);
}

}  // namespace minigcn
