#pragma once

// Little-endian primitives shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "minigcn/errors.hpp"

namespace minigcn::detail {

template <typename UInt>
void write_le(std::ostream& os, UInt value) {
  unsigned char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(UInt));
}

inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
inline void write_f32(std::ostream& os, float v) { write_le(os, std::bit_cast<std::uint32_t>(v)); }

/// Reads from a stream while tracking the byte offset for error reports.
class Reader {
public:
  explicit Reader(std::istream& is, std::uint64_t offset = 0) : is_(is), offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

  void read_bytes(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) throw FormatError(std::string("truncated ") + what, offset_ + got);
    offset_ += n;
  }

  template <typename UInt>
  UInt read_le(const char* what) {
    unsigned char bytes[sizeof(UInt)];
    read_bytes(bytes, sizeof(UInt), what);
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
    return v;
  }

  double read_f64(const char* what) { return std::bit_cast<double>(read_le<std::uint64_t>(what)); }
  float read_f32(const char* what) { return std::bit_cast<float>(read_le<std::uint32_t>(what)); }

  std::string read_line(const char* what, std::size_t max_len = 1 << 16) {
    std::string line;
    char c = 0;
    while (true) {
      if (!is_.get(c)) throw FormatError(std::string("unterminated ") + what, offset_);
      ++offset_;
      if (c == '\n') return line;
      line.push_back(c);
      if (line.size() > max_len) throw FormatError(std::string("oversized ") + what, offset_);
    }
  }

  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

private:
  std::istream& is_;
  std::uint64_t offset_;
};

}  // namespace minigcn::detail
