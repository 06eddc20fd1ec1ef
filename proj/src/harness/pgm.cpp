#include "simmp/harness/pgm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "simmp/errors.hpp"

namespace simmp {

namespace {

// Next whitespace-separated header token, skipping # comments.
std::string header_token(const std::vector<char>& buf, std::size_t& pos) {
  for (;;) {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) tok += buf[pos++];
  return tok;
}

std::size_t header_number(const std::vector<char>& buf, std::size_t& pos, const std::filesystem::path& path) {
  const std::string tok = header_token(buf, pos);
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos || tok.size() > 9) {
    throw FormatError(path.string() + ": bad PGM header field '" + tok + "'");
  }
  return std::stoul(tok);
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.height * image.width) throw ContractError("write_pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (header_token(buf, pos) != "P5") throw FormatError(path.string() + ": not a P5 graymap");
  GrayImage img;
  img.width = header_number(buf, pos, path);
  img.height = header_number(buf, pos, path);
  const std::size_t maxval = header_number(buf, pos, path);
  if (maxval == 0 || maxval > 255) throw FormatError(path.string() + ": only 8-bit graymaps are supported");
  if (img.width == 0 || img.height == 0) throw FormatError(path.string() + ": empty image");
  ++pos;  // single whitespace before the raster
  if (buf.size() - std::min(pos, buf.size()) != img.width * img.height) {
    throw FormatError(path.string() + ": raster size does not match header");
  }
  img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.end());
  return img;
}

}  // namespace simmp
