#pragma once

// Minimal rasters plus the netpbm/PNG codecs the planner needs.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace baseplace {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major raster; row 0 is the top of the picture.
template <typename Pixel>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Pixel fill = Pixel{})
      : width_(width), height_(height), px_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative raster size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  Pixel& at(int x, int y) { return px_[index(x, y)]; }
  const Pixel& at(int x, int y) const { return px_[index(x, y)]; }
  void put(int x, int y, Pixel p) {
    if (contains(x, y)) px_[index(x, y)] = p;
  }

  const std::vector<Pixel>& pixels() const { return px_; }
  std::vector<Pixel>& pixels() { return px_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }
  int width_ = 0;
  int height_ = 0;
  std::vector<Pixel> px_;
};

using Image = Raster<Rgb>;
using GrayImage = Raster<std::uint8_t>;
using DepthImage = Raster<double>;
using Mask = Raster<std::uint8_t>;

namespace detail {

inline void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parses a binary netpbm header; returns the offset of the first data byte.
inline std::size_t parse_pnm_header(const std::string& bytes, const char* magic, int& w, int& h, int& maxval) {
  if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0)
    throw std::runtime_error(std::string("not a ") + magic + " file");
  std::size_t pos = 2;
  int fields[3];
  for (int& field : fields) {
    while (pos < bytes.size()) {
      char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') ++pos;
    if (start == pos) throw std::runtime_error("malformed netpbm header");
    field = std::stoi(bytes.substr(start, pos - start));
  }
  ++pos;  // single whitespace before raster
  w = fields[0];
  h = fields[1];
  maxval = fields[2];
  return pos;
}

}  // namespace detail

inline std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.pixels().size() * 3);
  for (const Rgb& p : img.pixels()) {
    out.push_back(static_cast<char>(p.r));
    out.push_back(static_cast<char>(p.g));
    out.push_back(static_cast<char>(p.b));
  }
  return out;
}

inline void write_ppm(const std::string& path, const Image& img) { detail::write_bytes(path, encode_ppm(img)); }

inline Image decode_ppm(const std::string& bytes) {
  int w, h, maxval;
  std::size_t pos = detail::parse_pnm_header(bytes, "P6", w, h, maxval);
  if (maxval != 255) throw std::runtime_error("only 8-bit PPM supported");
  if (bytes.size() < pos + static_cast<std::size_t>(w) * h * 3) throw std::runtime_error("truncated PPM");
  Image img(w, h);
  for (auto& p : img.pixels()) {
    p = {static_cast<std::uint8_t>(bytes[pos]), static_cast<std::uint8_t>(bytes[pos + 1]),
         static_cast<std::uint8_t>(bytes[pos + 2])};
    pos += 3;
  }
  return img;
}

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels().data()), img.pixels().size());
  return out;
}

inline GrayImage decode_pgm(const std::string& bytes) {
  int w, h, maxval;
  std::size_t pos = detail::parse_pnm_header(bytes, "P5", w, h, maxval);
  if (maxval != 255) throw std::runtime_error("expected 8-bit PGM");
  if (bytes.size() < pos + static_cast<std::size_t>(w) * h) throw std::runtime_error("truncated PGM");
  GrayImage img(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels().size(),
              reinterpret_cast<char*>(img.pixels().data()));
  return img;
}

/// 16-bit P5 (big-endian samples, as netpbm requires).
inline std::string encode_pgm16(const Raster<std::uint16_t>& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n65535\n";
  for (std::uint16_t v : img.pixels()) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

inline Raster<std::uint16_t> decode_pgm16(const std::string& bytes) {
  int w, h, maxval;
  std::size_t pos = detail::parse_pnm_header(bytes, "P5", w, h, maxval);
  if (maxval != 65535) throw std::runtime_error("expected 16-bit PGM");
  if (bytes.size() < pos + static_cast<std::size_t>(w) * h * 2) throw std::runtime_error("truncated PGM");
  Raster<std::uint16_t> img(w, h);
  for (auto& v : img.pixels()) {
    v = static_cast<std::uint16_t>((static_cast<unsigned char>(bytes[pos]) << 8) |
                                   static_cast<unsigned char>(bytes[pos + 1]));
    pos += 2;
  }
  return img;
}

/// Depth dump: millimeters, rounded, clamped to 65534; misses and non-finite
/// depths are written as 0.
inline std::string encode_depth_mm(const DepthImage& depth) {
  Raster<std::uint16_t> mm(depth.width(), depth.height());
  for (std::size_t i = 0; i < mm.pixels().size(); ++i) {
    double d = depth.pixels()[i];
    if (!std::isfinite(d) || d <= 0.0) continue;
    double v = std::round(d * 1000.0);
    mm.pixels()[i] = static_cast<std::uint16_t>(v > 65534.0 ? 65534.0 : v);
  }
  return encode_pgm16(mm);
}

inline std::string encode_mask(const Mask& mask) {
  GrayImage g(mask.width(), mask.height());
  for (std::size_t i = 0; i < g.pixels().size(); ++i) g.pixels()[i] = mask.pixels()[i] ? 255 : 0;
  return encode_pgm(g);
}

/// PNG (8-bit RGB, no interlace) via zlib.
inline std::string encode_png(const Image& img) {
  auto put32 = [](std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>(v >> 24));
    s.push_back(static_cast<char>(v >> 16));
    s.push_back(static_cast<char>(v >> 8));
    s.push_back(static_cast<char>(v));
  };
  auto chunk = [&](std::string& out, const char* type, const std::string& data) {
    put32(out, static_cast<std::uint32_t>(data.size()));
    std::string body = std::string(type, 4) + data;
    out += body;
    put32(out, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  };

  std::string raw;
  raw.reserve(static_cast<std::size_t>(img.height()) * (1 + 3 * img.width()));
  for (int y = 0; y < img.height(); ++y) {
    raw.push_back(0);
    for (int x = 0; x < img.width(); ++x) {
      const Rgb& p = img.at(x, y);
      raw.push_back(static_cast<char>(p.r));
      raw.push_back(static_cast<char>(p.g));
      raw.push_back(static_cast<char>(p.b));
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png deflate failed");
  z.resize(zlen);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put32(ihdr, static_cast<std::uint32_t>(img.width()));
  put32(ihdr, static_cast<std::uint32_t>(img.height()));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", "");
  return out;
}

}  // namespace baseplace
