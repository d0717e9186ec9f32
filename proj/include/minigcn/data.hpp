#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <vector>

#include "minigcn/linalg.hpp"
#include "minigcn/nn.hpp"

namespace minigcn {

/// H x W x D reflectance cube stored band-sequentially: value (b, y, x) is at
/// b * H * W + y * W + x.
struct SpectralCube {
  Index height = 0;
  Index width = 0;
  Index bands = 0;
  std::vector<float> values;

  Index pixels() const { return height * width; }
  float at(Index band, Index y, Index x) const { return values[static_cast<std::size_t>((band * height + y) * width + x)]; }
  float& at(Index band, Index y, Index x) { return values[static_cast<std::size_t>((band * height + y) * width + x)]; }
};

/// Class ids per pixel, row-major, 0 = unlabeled.
struct LabelGrid {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint16_t> labels;

  std::uint16_t at(Index pixel) const { return labels[static_cast<std::size_t>(pixel)]; }
};

/// Train and test pixels (linear index y * W + x) per class id.
struct SplitSpec {
  std::map<int, std::vector<Index>> train;
  std::map<int, std::vector<Index>> test;
};

// "HSC1" + JSON header + '\n' + f32 little-endian payload.
void write_cube(std::ostream& os, const SpectralCube& cube);
SpectralCube read_cube(std::istream& is);
void save_cube(const std::filesystem::path& path, const SpectralCube& cube);
SpectralCube load_cube(const std::filesystem::path& path);

// "HSL1" + JSON header + '\n' + u16 little-endian payload.
void write_labels(std::ostream& os, const LabelGrid& labels);
LabelGrid read_labels(std::istream& is);
void save_labels(const std::filesystem::path& path, const LabelGrid& labels);
LabelGrid load_labels(const std::filesystem::path& path);

// {"train": {"<class>": [indices...]}, "test": {...}}. Reading rejects
// indices repeated within or across the two sets.
void write_split(std::ostream& os, const SplitSpec& split);
SplitSpec read_split(std::istream& is);
void save_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec load_split(const std::filesystem::path& path);

/// Checks disjointness, range, and that every index carries its class label.
/// Errors name the offending index.
void validate_split(const SplitSpec& split, const LabelGrid& labels);

/// Per-class sample counts of one side of a split.
std::map<int, Index> split_counts(const std::map<int, std::vector<Index>>& side);

/// Per-band min-max scaling to [0, 1]; constant bands become 0.
SpectralCube normalize_bands(const SpectralCube& cube);

/// Spectra of the given pixels as rows (pixels x bands).
DenseMatrix pixel_features(const SpectralCube& cube, const std::vector<Index>& pixels);

/// size x size x D window centred on (x, y) with replicate padding; row
/// py * size + px holds the spectrum.
DenseMatrix extract_patch(const SpectralCube& cube, Index x, Index y, Index size = 7);

/// Patches of several pixels stacked into one feature-map batch.
FeatureMap extract_patches(const SpectralCube& cube, const std::vector<Index>& pixels, Index size = 7);

struct SynthOptions {
  Index classes = 3;
  Index size = 32;
  Index bands = 16;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  Index train_per_class = 50;
};

struct SynthScene {
  SpectralCube cube;
  LabelGrid labels;
  SplitSpec split;
  DenseMatrix prototypes;  // classes x bands
};

/// Square scene of `classes` vertical stripes (class c + 1 in stripe c), each
/// pixel its class's smooth spectral prototype plus Gaussian noise. Every
/// pixel is labeled; per class, `train_per_class` pixels go to training and
/// the rest to test.
SynthScene synth_scene(const SynthOptions& options);

}  // namespace minigcn
