#pragma once

// VGGW weight files, little-endian:
//   "VGGW" | u32 version (1) | u32 entry_count |
//   entry_count x { u32 name_len | name (UTF-8) | u8 ndim | ndim x u32 dims | prod(dims) x f32 }
// Kernels are stored under the layer name with layout [out, in, kh, kw];
// biases under "<layer>.bias".

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "synthima/error.hpp"
#include "synthima/image_io.hpp"
#include "synthima/network.hpp"
#include "synthima/tensor.hpp"

namespace synthima {

inline constexpr std::uint32_t kVggwVersion = 1;

class WeightFileError : public IoError {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kMalformed };

  WeightFileError(Kind kind, const std::string& msg) : IoError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw WeightFileError(WeightFileError::Kind::kTruncated, std::string("VGGW: truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serializes entries in the given order.
inline std::vector<std::uint8_t> encode_vggw(const std::vector<NamedTensor>& entries) {
  detail::ByteWriter w;
  w.bytes("VGGW");
  w.u32(kVggwVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name);
    const auto& shape = e.tensor.shape();
    w.u8(static_cast<std::uint8_t>(shape.rank()));
    for (std::size_t d : shape.extents()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : e.tensor.data()) w.f32(v);
  }
  return w.take();
}

/// Parses every entry in file order.
inline std::vector<NamedTensor> decode_vggw(const std::vector<std::uint8_t>& bytes) {
  using Kind = WeightFileError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "VGGW", 4) != 0) {
    throw WeightFileError(Kind::kBadMagic, "VGGW: bad magic (not a VGGW weight file)");
  }
  detail::ByteReader r(bytes);
  r.str(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kVggwVersion) {
    throw WeightFileError(Kind::kVersionMismatch,
                          "VGGW: unsupported version " + std::to_string(version) + " (expected 1)");
  }
  const std::uint32_t count = r.u32("entry count");
  std::vector<NamedTensor> out;
  std::set<std::string> names;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name = r.str(name_len, "entry name");
    if (name.empty()) throw WeightFileError(Kind::kMalformed, "VGGW: empty entry name");
    if (!names.insert(name).second) throw WeightFileError(Kind::kMalformed, "VGGW: duplicate entry '" + name + "'");
    const std::uint8_t ndim = r.u8("rank");
    if (ndim == 0 || ndim > Shape::kMaxRank) {
      throw WeightFileError(Kind::kMalformed, "VGGW: entry '" + name + "' has unsupported rank " + std::to_string(ndim));
    }
    std::vector<std::size_t> dims(ndim);
    std::size_t total = 1;
    for (auto& d : dims) {
      d = r.u32("dims");
      if (d == 0) throw WeightFileError(Kind::kMalformed, "VGGW: entry '" + name + "' has a zero extent");
      total *= d;
    }
    if (total > r.remaining() / 4) {
      throw WeightFileError(Kind::kTruncated, "VGGW: truncated payload for entry '" + name + "'");
    }
    std::vector<float> data(total);
    for (auto& v : data) v = r.f32("payload");
    out.push_back({std::move(name), Tensor(Shape(std::span<const std::size_t>(dims)), std::move(data))});
  }
  if (!r.done()) throw WeightFileError(Kind::kMalformed, "VGGW: trailing bytes after the last entry");
  return out;
}

/// Layers in name order, each as the kernel entry then "<layer>.bias".
inline std::vector<NamedTensor> to_entries(const WeightStore& store) {
  std::vector<NamedTensor> out;
  for (const auto& [name, p] : store.entries()) {
    out.push_back({name, p.kernels});
    out.push_back({name + ".bias", p.bias});
  }
  return out;
}

inline WeightStore from_entries(const std::vector<NamedTensor>& entries) {
  using Kind = WeightFileError::Kind;
  static const std::string kBiasSuffix = ".bias";
  std::map<std::string, const Tensor*> kernels, biases;
  for (const auto& e : entries) {
    const bool is_bias = e.name.size() > kBiasSuffix.size() &&
                         e.name.compare(e.name.size() - kBiasSuffix.size(), kBiasSuffix.size(), kBiasSuffix) == 0;
    if (is_bias) {
      biases[e.name.substr(0, e.name.size() - kBiasSuffix.size())] = &e.tensor;
    } else {
      kernels[e.name] = &e.tensor;
    }
  }
  WeightStore store;
  for (const auto& [layer, k] : kernels) {
    const auto b = biases.find(layer);
    if (b == biases.end()) throw WeightFileError(Kind::kMalformed, "VGGW: layer '" + layer + "' has no bias entry");
    if (k->rank() != 4) throw WeightFileError(Kind::kMalformed, "VGGW: kernels of '" + layer + "' are not rank 4");
    if (b->second->rank() != 1 || b->second->extent(0) != k->extent(0)) {
      throw WeightFileError(Kind::kMalformed, "VGGW: bias of '" + layer + "' does not match its output channels");
    }
    store.set(layer, {*k, *b->second});
  }
  for (const auto& [layer, b] : biases) {
    if (!kernels.count(layer)) {
      throw WeightFileError(Kind::kMalformed, "VGGW: bias entry without kernels for layer '" + layer + "'");
    }
  }
  return store;
}

inline WeightStore load_weights(const std::filesystem::path& path) {
  return from_entries(decode_vggw(detail::read_file(path)));
}

/// Loads and binds against `spec`; shape conflicts raise ShapeError.
inline WeightStore load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
  WeightStore store = load_weights(path);
  bind_weights(spec, store);
  return store;
}

inline void save_weights(const std::filesystem::path& path, const WeightStore& store) {
  detail::write_file(path, encode_vggw(to_entries(store)));
}

}  // namespace synthima
