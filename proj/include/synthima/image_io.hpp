#pragma once

// 8-bit RGB rasters, PNG/PPM codecs, and the mapping between pixel space
// and the network's preprocessed real-valued space.

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synthima/error.hpp"
#include "synthima/tensor.hpp"

namespace synthima {

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // R,G,B triples, row-major

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(3 * w * h, fill) {}
  RgbImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> px) : width(w), height(h), pixels(std::move(px)) {
    if (pixels.size() != 3 * w * h) throw ShapeError("RgbImage: pixel buffer does not match 3*width*height");
  }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t ch) { return pixels[3 * (y * width + x) + ch]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t ch) const { return pixels[3 * (y * width + x) + ch]; }

  void set(std::size_t x, std::size_t y, std::array<std::uint8_t, 3> rgb) {
    std::copy(rgb.begin(), rgb.end(), pixels.begin() + 3 * (y * width + x));
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

enum class ChannelOrder { kRgb, kBgr };

struct Extent2 {
  std::size_t width = 0;
  std::size_t height = 0;
};

struct PreprocessSpec {
  /// Means subtracted per tensor channel, i.e. already in `order`.
  std::array<double, 3> means{0.0, 0.0, 0.0};
  ChannelOrder order = ChannelOrder::kRgb;
  /// Resize target; the source extents are kept when unset.
  std::optional<Extent2> target;

  /// Standard VGG16 preprocessing: BGR with ImageNet means.
  static PreprocessSpec vgg16() { return {{103.939, 116.779, 123.68}, ChannelOrder::kBgr, std::nullopt}; }
  /// Zero means, RGB: used with random-weight networks.
  static PreprocessSpec identity() { return {}; }
};

/// Rounds `n` up to the next multiple of `m` (m > 0).
inline std::size_t round_up_to_multiple(std::size_t n, std::size_t m) { return ((n + m - 1) / m) * m; }

// ---------------------------------------------------------------------------
// Resampling

/// Bilinear resize with half-pixel centres: destination pixel d samples the
/// source at (d + 0.5) * in/out - 0.5, clamped to the valid range.
inline RgbImage resize_bilinear(const RgbImage& src, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) throw ArgumentError("resize target extents must be positive");
  if (src.width == 0 || src.height == 0) throw ArgumentError("cannot resize an empty image");
  if (out_w == src.width && out_h == src.height) return src;

  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[d] = {i0, i1, s - static_cast<double>(i0)};
    }
    return t;
  };
  const auto tx = taps(src.width, out_w);
  const auto ty = taps(src.height, out_h);

  RgbImage out(out_w, out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double top = src.at(tx[x].i0, ty[y].i0, ch) * (1.0 - tx[x].frac) + src.at(tx[x].i1, ty[y].i0, ch) * tx[x].frac;
        const double bot = src.at(tx[x].i0, ty[y].i1, ch) * (1.0 - tx[x].frac) + src.at(tx[x].i1, ty[y].i1, ch) * tx[x].frac;
        const double v = top * (1.0 - ty[y].frac) + bot * ty[y].frac;
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pixel space <-> network space

namespace detail {
inline std::size_t source_channel(ChannelOrder order, std::size_t tensor_channel) {
  return order == ChannelOrder::kRgb ? tensor_channel : 2 - tensor_channel;
}
}  // namespace detail

inline Tensor preprocess(const RgbImage& img, const PreprocessSpec& spec) {
  const RgbImage* src = &img;
  RgbImage resized;
  if (spec.target) {
    if (spec.target->width == 0 || spec.target->height == 0) {
      throw ArgumentError("preprocess: target extents must be positive");
    }
    resized = resize_bilinear(img, spec.target->width, spec.target->height);
    src = &resized;
  }
  if (src->width == 0 || src->height == 0) throw ArgumentError("preprocess: empty image");
  Tensor t(Shape{3, src->height, src->width});
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t ch = detail::source_channel(spec.order, c);
    for (std::size_t y = 0; y < src->height; ++y) {
      for (std::size_t x = 0; x < src->width; ++x) {
        t(c, y, x) = static_cast<float>(static_cast<double>(src->at(x, y, ch)) - spec.means[c]);
      }
    }
  }
  return t;
}

/// Inverse of preprocess (without resizing): adds means back, restores RGB
/// order, clamps to [0, 255] and rounds half away from zero.
inline RgbImage deprocess(const Tensor& t, const PreprocessSpec& spec) {
  require_rank(t.shape(), 3, "deprocess");
  if (t.extent(0) != 3) throw ShapeError("deprocess: expected 3 channels, got " + t.shape().str());
  const std::size_t H = t.extent(1), W = t.extent(2);
  RgbImage img(W, H);
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t ch = detail::source_channel(spec.order, c);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double v = std::clamp(static_cast<double>(t(c, y, x)) + spec.means[c], 0.0, 255.0);
        img.at(x, y, ch) = static_cast<std::uint8_t>(std::round(v));
      }
    }
  }
  return img;
}

/// Per-channel bounds [0 - mean, 255 - mean] of the preprocessed space.
inline std::array<std::pair<float, float>, 3> preprocessed_range(const PreprocessSpec& spec) {
  std::array<std::pair<float, float>, 3> r{};
  for (std::size_t c = 0; c < 3; ++c) {
    r[c] = {static_cast<float>(0.0 - spec.means[c]), static_cast<float>(255.0 - spec.means[c])};
  }
  return r;
}

// ---------------------------------------------------------------------------
// Codecs

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline bool is_png(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSig, 8) == 0;
}

inline std::string lower_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace detail

/// Decodes a binary PPM (P6, maxval 255).
inline RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw IoError("PPM: malformed header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1u << 24)) throw IoError("PPM: header value out of range");
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError("PPM: not a binary P6 file");
  pos = 2;
  const std::size_t w = read_uint(), h = read_uint(), maxval = read_uint();
  if (w == 0 || h == 0) throw IoError("PPM: zero extent");
  if (maxval != 255) throw IoError("PPM: unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError("PPM: malformed header");
  ++pos;
  if (bytes.size() - pos < 3 * w * h) throw IoError("PPM: truncated pixel data");
  return RgbImage(w, h, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + 3 * w * h));
}

inline std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

/// Decodes an 8-bit (or lower, expanded) PNG to RGB. Alpha is composited
/// onto white; 16-bit channels are rejected.
inline RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;

  // The simplified API would silently reduce 16-bit data, so check the IHDR
  // bit depth directly: signature (8) + length (4) + "IHDR" (4) + w, h (8).
  if (bytes.size() < 33 || !detail::is_png(bytes)) throw IoError("PNG: not a PNG stream");
  const unsigned bit_depth = bytes[24];
  if (bit_depth == 16) throw IoError("PNG: unsupported bit depth 16");

  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError(std::string("PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out(image.width, image.height);
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("PNG: " + msg);
  }
  return out;
}

inline std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

/// Loads a PNG or P6 PPM, detected from the file's leading bytes.
inline RgbImage load_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    if (detail::is_png(bytes)) return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  throw IoError(path.string() + ": unrecognized image format (expected PNG or binary PPM)");
}

inline void require_image_extension(const std::filesystem::path& path) {
  const std::string ext = detail::lower_extension(path);
  if (ext != ".png" && ext != ".ppm" && ext != ".pnm") {
    throw ArgumentError(path.string() + ": unsupported output extension '" + ext + "' (use .png or .ppm)");
  }
}

/// Encoded bytes for `path`'s extension (.png, .ppm or .pnm).
inline std::vector<std::uint8_t> encode_for_path(const std::filesystem::path& path, const RgbImage& img) {
  require_image_extension(path);
  return detail::lower_extension(path) == ".png" ? encode_png(img) : encode_ppm(img);
}

inline void save_image(const std::filesystem::path& path, const RgbImage& img) {
  detail::write_file(path, encode_for_path(path, img));
}

}  // namespace synthima
