#include "minigcn/classmap.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "minigcn/errors.hpp"

namespace minigcn {

namespace {

constexpr std::array<Rgb, kPaletteSize> kPalette{{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},   {245, 130, 48},  {145, 30, 180},
    {70, 240, 240},  {240, 50, 230},  {210, 245, 60},  {250, 190, 212}, {0, 128, 128},   {220, 190, 255},
    {170, 110, 40},  {255, 250, 200}, {128, 0, 0},     {170, 255, 195}, {128, 128, 0},   {255, 215, 180},
    {0, 0, 128},     {128, 128, 128}, {255, 255, 255}, {100, 100, 255}, {255, 100, 100}, {60, 60, 60},
}};

}  // namespace

Rgb class_color(int class_id) {
  if (class_id < 0) throw ContractError("class_color: negative class id " + std::to_string(class_id));
  if (class_id == 0) return {};
  return kPalette[static_cast<std::size_t>((class_id - 1) % kPaletteSize)];
}

void write_ppm(std::ostream& os, const ClassMap& map) {
  if (map.height < 1 || map.width < 1 || static_cast<Index>(map.ids.size()) != map.height * map.width) {
    throw ContractError("write_ppm: " + std::to_string(map.ids.size()) + " ids for a " + std::to_string(map.height) +
                        "x" + std::to_string(map.width) + " map");
  }
  os << "P6\n" << map.width << ' ' << map.height << "\n255\n";
  for (const int id : map.ids) {
    const Rgb c = class_color(id);
    const char bytes[3] = {static_cast<char>(c.r), static_cast<char>(c.g), static_cast<char>(c.b)};
    os.write(bytes, 3);
  }
  if (!os) throw IoError("write_ppm: stream write failed");
}

void save_ppm(const std::filesystem::path& path, const ClassMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_ppm(out, map);
}

PixelImage read_ppm(std::istream& is) {
  std::string magic;
  PixelImage img;
  int maxval = 0;
  if (!(is >> magic) || magic != "P6") throw FormatError("read_ppm: expected P6 magic", 0);
  if (!(is >> img.width >> img.height >> maxval) || img.width < 1 || img.height < 1 || maxval != 255) {
    throw FormatError("read_ppm: bad header", static_cast<std::uint64_t>(is.tellg()));
  }
  is.get();
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
  for (auto& p : img.pixels) {
    char bytes[3];
    if (!is.read(bytes, 3)) throw FormatError("read_ppm: truncated pixel data", 0);
    p = {static_cast<std::uint8_t>(bytes[0]), static_cast<std::uint8_t>(bytes[1]), static_cast<std::uint8_t>(bytes[2])};
  }
  return img;
}

void write_palette_legend(std::ostream& os, int classes) {
  if (classes < 0) throw ContractError("write_palette_legend: negative class count");
  os << "# class_id r g b (0 = unlabeled)\n";
  for (int id = 0; id <= classes; ++id) {
    const Rgb c = class_color(id);
    os << id << ' ' << int(c.r) << ' ' << int(c.g) << ' ' << int(c.b) << '\n';
  }
}

}  // namespace minigcn
