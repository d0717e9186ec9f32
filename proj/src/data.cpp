#include "minigcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "binary_io.hpp"
#include "json.hpp"

namespace minigcn {

namespace {

using nlohmann::json;

constexpr char kCubeMagic[4] = {'H', 'S', 'C', '1'};
constexpr char kLabelMagic[4] = {'H', 'S', 'L', '1'};
constexpr std::uint64_t kMaxDim = 1 << 20;

void read_magic(detail::Reader& in, const char (&magic)[4], const char* what) {
  char got[4];
  in.read_bytes(got, 4, what);
  if (!std::equal(got, got + 4, magic)) throw FormatError(std::string("bad ") + what, 0);
}

json read_header(detail::Reader& in) {
  const auto start = in.offset();
  const std::string line = in.read_line("header");
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed header: ") + e.what(), start + e.byte - 1);
  }
}

Index header_dim(const json& h, const char* key, std::uint64_t offset) {
  if (!h.contains(key) || !h[key].is_number_unsigned()) {
    throw FormatError(std::string("header field '") + key + "' missing or not a non-negative integer", offset);
  }
  const auto v = h[key].get<std::uint64_t>();
  if (v > kMaxDim) throw FormatError(std::string("header field '") + key + "' too large", offset);
  return static_cast<Index>(v);
}

void expect_string(const json& h, const char* key, const char* value, std::uint64_t offset) {
  if (!h.contains(key) || h[key] != value) {
    throw FormatError(std::string("header field '") + key + "' must be \"" + value + "\"", offset);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

json side_to_json(const std::map<int, std::vector<Index>>& side) {
  json out = json::object();
  for (const auto& [cls, ids] : side) out[std::to_string(cls)] = ids;
  return out;
}

std::map<int, std::vector<Index>> side_from_json(const json& j, const char* name) {
  if (!j.is_object()) throw FormatError(std::string("split: '") + name + "' must be an object", 0);
  std::map<int, std::vector<Index>> side;
  for (const auto& [key, ids] : j.items()) {
    int cls = 0;
    try {
      std::size_t used = 0;
      cls = std::stoi(key, &used);
      if (used != key.size() || cls < 1) throw std::invalid_argument(key);
    } catch (const std::logic_error&) {
      throw FormatError("split: class key '" + key + "' is not a positive integer", 0);
    }
    if (!ids.is_array()) throw FormatError("split: class " + key + " must list indices", 0);
    auto& out = side[cls];
    for (const auto& v : ids) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw FormatError("split: class " + key + " has a non-index entry", 0);
      }
      out.push_back(v.get<Index>());
    }
  }
  return side;
}

void check_disjoint(const SplitSpec& split) {
  std::map<Index, std::string> owner;
  for (const auto* side : {&split.train, &split.test}) {
    const std::string name = side == &split.train ? "train" : "test";
    for (const auto& [cls, ids] : *side) {
      for (const Index id : ids) {
        const std::string here = name + " class " + std::to_string(cls);
        const auto [it, fresh] = owner.emplace(id, here);
        if (!fresh) {
          throw ContractError("split: pixel index " + std::to_string(id) + " appears in " + it->second + " and " + here);
        }
      }
    }
  }
}

}  // namespace

void write_cube(std::ostream& os, const SpectralCube& cube) {
  if (static_cast<Index>(cube.values.size()) != cube.pixels() * cube.bands) {
    throw ShapeError("write_cube: " + std::to_string(cube.values.size()) + " values for " +
                     std::to_string(cube.height) + "x" + std::to_string(cube.width) + "x" + std::to_string(cube.bands));
  }
  os.write(kCubeMagic, 4);
  const json header = {{"height", cube.height},
                       {"width", cube.width},
                       {"bands", cube.bands},
                       {"dtype", "f32le"},
                       {"order", "band-sequential"}};
  os << header.dump() << '\n';
  for (const float v : cube.values) detail::write_f32(os, v);
}

SpectralCube read_cube(std::istream& is) {
  detail::Reader in(is);
  read_magic(in, kCubeMagic, "cube magic");
  const auto header_at = in.offset();
  const json h = read_header(in);
  SpectralCube cube;
  cube.height = header_dim(h, "height", header_at);
  cube.width = header_dim(h, "width", header_at);
  cube.bands = header_dim(h, "bands", header_at);
  expect_string(h, "dtype", "f32le", header_at);
  expect_string(h, "order", "band-sequential", header_at);
  const auto count = static_cast<std::size_t>(cube.pixels() * cube.bands);
  cube.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto at = in.offset();
    const float v = in.read_f32("cube payload");
    if (!std::isfinite(v)) throw FormatError("non-finite cube value", at);
    cube.values[i] = v;
  }
  if (!in.at_end()) throw FormatError("trailing bytes after cube payload", in.offset());
  return cube;
}

void save_cube(const std::filesystem::path& path, const SpectralCube& cube) {
  auto os = open_out(path);
  write_cube(os, cube);
  finish(os, path);
}

SpectralCube load_cube(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_cube(is);
}

void write_labels(std::ostream& os, const LabelGrid& labels) {
  if (static_cast<Index>(labels.labels.size()) != labels.height * labels.width) {
    throw ShapeError("write_labels: label count does not match dimensions");
  }
  os.write(kLabelMagic, 4);
  os << json{{"height", labels.height}, {"width", labels.width}}.dump() << '\n';
  for (const auto v : labels.labels) detail::write_le(os, v);
}

LabelGrid read_labels(std::istream& is) {
  detail::Reader in(is);
  read_magic(in, kLabelMagic, "label magic");
  const auto header_at = in.offset();
  const json h = read_header(in);
  LabelGrid grid;
  grid.height = header_dim(h, "height", header_at);
  grid.width = header_dim(h, "width", header_at);
  grid.labels.resize(static_cast<std::size_t>(grid.height * grid.width));
  for (auto& v : grid.labels) v = in.read_le<std::uint16_t>("label payload");
  if (!in.at_end()) throw FormatError("trailing bytes after label payload", in.offset());
  return grid;
}

void save_labels(const std::filesystem::path& path, const LabelGrid& labels) {
  auto os = open_out(path);
  write_labels(os, labels);
  finish(os, path);
}

LabelGrid load_labels(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_labels(is);
}

void write_split(std::ostream& os, const SplitSpec& split) {
  os << json{{"train", side_to_json(split.train)}, {"test", side_to_json(split.test)}}.dump() << '\n';
}

SplitSpec read_split(std::istream& is) {
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed split: ") + e.what(), e.byte == 0 ? 0 : e.byte - 1);
  }
  if (!j.is_object() || !j.contains("train") || !j.contains("test")) {
    throw FormatError("split must be an object with 'train' and 'test'", 0);
  }
  SplitSpec split{side_from_json(j["train"], "train"), side_from_json(j["test"], "test")};
  check_disjoint(split);
  return split;
}

void save_split(const std::filesystem::path& path, const SplitSpec& split) {
  auto os = open_out(path);
  write_split(os, split);
  finish(os, path);
}

SplitSpec load_split(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_split(is);
}

void validate_split(const SplitSpec& split, const LabelGrid& labels) {
  check_disjoint(split);
  const Index n = labels.height * labels.width;
  for (const auto* side : {&split.train, &split.test}) {
    for (const auto& [cls, ids] : *side) {
      for (const Index id : ids) {
        if (id < 0 || id >= n) {
          throw ContractError("split: pixel index " + std::to_string(id) + " outside the " + std::to_string(n) +
                              "-pixel image");
        }
        if (labels.at(id) != cls) {
          throw ContractError("split: pixel index " + std::to_string(id) + " is listed under class " +
                              std::to_string(cls) + " but labeled " + std::to_string(labels.at(id)));
        }
      }
    }
  }
}

std::map<int, Index> split_counts(const std::map<int, std::vector<Index>>& side) {
  std::map<int, Index> counts;
  for (const auto& [cls, ids] : side) counts[cls] = static_cast<Index>(ids.size());
  return counts;
}

SpectralCube normalize_bands(const SpectralCube& cube) {
  SpectralCube out = cube;
  const auto plane = static_cast<std::size_t>(cube.pixels());
  for (Index b = 0; b < cube.bands; ++b) {
    const auto begin = cube.values.begin() + static_cast<std::ptrdiff_t>(b * cube.pixels());
    const auto [lo_it, hi_it] = std::minmax_element(begin, begin + static_cast<std::ptrdiff_t>(plane));
    const double lo = plane ? *lo_it : 0.0, hi = plane ? *hi_it : 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      auto& v = out.values[static_cast<std::size_t>(b) * plane + i];
      v = hi > lo ? static_cast<float>((static_cast<double>(v) - lo) / (hi - lo)) : 0.0f;
    }
  }
  return out;
}

DenseMatrix pixel_features(const SpectralCube& cube, const std::vector<Index>& pixels) {
  DenseMatrix out(static_cast<Index>(pixels.size()), cube.bands);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const Index p = pixels[i];
    if (p < 0 || p >= cube.pixels()) throw ContractError("pixel_features: pixel " + std::to_string(p) + " out of range");
    for (Index b = 0; b < cube.bands; ++b) {
      out(static_cast<Index>(i), b) = cube.values[static_cast<std::size_t>(b * cube.pixels() + p)];
    }
  }
  return out;
}

DenseMatrix extract_patch(const SpectralCube& cube, Index x, Index y, Index size) {
  if (size < 1 || size % 2 == 0) throw ContractError("extract_patch: size must be odd and positive");
  if (x < 0 || x >= cube.width || y < 0 || y >= cube.height) {
    throw ContractError("extract_patch: centre (" + std::to_string(x) + ", " + std::to_string(y) +
                        ") outside the image");
  }
  const Index half = size / 2;
  DenseMatrix patch(size * size, cube.bands);
  for (Index py = 0; py < size; ++py) {
    const Index sy = std::clamp(y + py - half, Index{0}, cube.height - 1);
    for (Index px = 0; px < size; ++px) {
      const Index sx = std::clamp(x + px - half, Index{0}, cube.width - 1);
      for (Index b = 0; b < cube.bands; ++b) patch(py * size + px, b) = cube.at(b, sy, sx);
    }
  }
  return patch;
}

FeatureMap extract_patches(const SpectralCube& cube, const std::vector<Index>& pixels, Index size) {
  FeatureMap out{static_cast<Index>(pixels.size()), size, size, DenseMatrix(static_cast<Index>(pixels.size()) * size * size, cube.bands)};
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const Index p = pixels[i];
    if (p < 0 || p >= cube.pixels()) throw ContractError("extract_patches: pixel " + std::to_string(p) + " out of range");
    out.values.middleRows(static_cast<Index>(i) * size * size, size * size) =
        extract_patch(cube, p % cube.width, p / cube.width, size);
  }
  return out;
}

SynthScene synth_scene(const SynthOptions& o) {
  if (o.classes < 2) throw ConfigError("synth_scene: need at least 2 classes");
  if (o.bands < 2) throw ConfigError("synth_scene: need at least 2 bands");
  if (o.classes > 65535) throw ConfigError("synth_scene: too many classes for 16-bit labels");
  if (o.noise_sigma < 0.0) throw ConfigError("synth_scene: noise_sigma must be non-negative");
  if (o.train_per_class < 1) throw ConfigError("synth_scene: train_per_class must be >= 1");
  const Index stripe = o.size / std::max<Index>(o.classes, 1);
  if (stripe < 1 || stripe * o.size < o.train_per_class + 1) {
    throw ConfigError("synth_scene: a " + std::to_string(o.size) + "x" + std::to_string(o.size) +
                      " image cannot hold " + std::to_string(o.classes) + " regions with " +
                      std::to_string(o.train_per_class) + " training pixels and a test pixel each");
  }

  std::mt19937_64 rng(o.seed);
  SynthScene scene;
  scene.prototypes.resize(o.classes, o.bands);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (Index c = 0; c < o.classes; ++c) {
    const double phi = phase(rng);
    for (Index b = 0; b < o.bands; ++b) {
      const double t = static_cast<double>(b) / static_cast<double>(o.bands - 1);
      scene.prototypes(c, b) = 0.5 + 0.3 * std::cos(std::numbers::pi * static_cast<double>(c + 1) * t + phi);
    }
  }

  // The last stripe absorbs the columns left over by integer division.
  const auto class_of_column = [&](Index x) { return std::min(x / stripe, o.classes - 1); };

  auto& cube = scene.cube;
  cube.height = cube.width = o.size;
  cube.bands = o.bands;
  cube.values.resize(static_cast<std::size_t>(o.size * o.size * o.bands));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index y = 0; y < o.size; ++y)
    for (Index x = 0; x < o.size; ++x) {
      const Index c = class_of_column(x);
      for (Index b = 0; b < o.bands; ++b) {
        cube.at(b, y, x) = static_cast<float>(scene.prototypes(c, b) + o.noise_sigma * noise(rng));
      }
    }

  auto& labels = scene.labels;
  labels.height = labels.width = o.size;
  labels.labels.resize(static_cast<std::size_t>(o.size * o.size));
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(o.classes));
  for (Index p = 0; p < o.size * o.size; ++p) {
    const Index c = class_of_column(p % o.size);
    labels.labels[static_cast<std::size_t>(p)] = static_cast<std::uint16_t>(c + 1);
    members[static_cast<std::size_t>(c)].push_back(p);
  }
  for (Index c = 0; c < o.classes; ++c) {
    auto& ids = members[static_cast<std::size_t>(c)];
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto cut = ids.begin() + o.train_per_class;
    std::vector<Index> train(ids.begin(), cut), test(cut, ids.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    scene.split.train[static_cast<int>(c + 1)] = std::move(train);
    scene.split.test[static_cast<int>(c + 1)] = std::move(test);
  }
  return scene;
}

}  // namespace minigcn
