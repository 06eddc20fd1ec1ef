#pragma once

// Binary portable graymap (P5), 8-bit only.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace simmp {

struct GrayImage {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
// FormatError on anything but an 8-bit P5 file of the declared size.
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace simmp
