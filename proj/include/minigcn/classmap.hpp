#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "minigcn/linalg.hpp"

namespace minigcn {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr int kPaletteSize = 24;

/// Fixed class palette. Class id 0 (unlabeled) is black; ids 1..24 take the
/// palette entries in order and larger ids wrap around.
Rgb class_color(int class_id);

struct ClassMap {
  Index height = 0;
  Index width = 0;
  std::vector<int> ids;  // row-major, 0 = unlabeled
};

void write_ppm(std::ostream& os, const ClassMap& map);
void save_ppm(const std::filesystem::path& path, const ClassMap& map);

/// Decoded P6 image as RGB triples, row-major.
struct PixelImage {
  Index height = 0;
  Index width = 0;
  std::vector<Rgb> pixels;
};

PixelImage read_ppm(std::istream& is);

/// One line per class id 0..classes: `id r g b`.
void write_palette_legend(std::ostream& os, int classes);

}  // namespace minigcn
