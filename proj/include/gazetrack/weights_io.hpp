#pragma once

// Versioned binary weight file, all fields little-endian:
//
//   "GZDM"  u32 version  u32 embed_dim  u32 stream_count  u32 stream_dims[stream_count]
//   u32 feature_count  u32 label_count  u32 flags (bit 0: intra-stream attention present)
//   f64 feature_mean[feature_count]  f64 feature_scale[feature_count]
//   u64 parameter_count  f64 tensors[parameter_count]   (DepthModelParams::for_each_tensor order)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "gazetrack/depth_model.hpp"
#include "gazetrack/error.hpp"

namespace gazetrack {

inline constexpr std::array<char, 4> kWeightMagic = {'G', 'Z', 'D', 'M'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const Bits bits = std::bit_cast<Bits>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(T));
}

template <class T>
T read_le(std::istream& in, const char* field) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError(std::string("weight file truncated while reading ") + field);
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<Bits>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline void save_weights(const DepthModelParams& p, std::ostream& out) {
  out.write(kWeightMagic.data(), kWeightMagic.size());
  detail::write_le<std::uint32_t>(out, kWeightVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.embed_dim));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(kNumStreams));
  for (const auto& s : kStreams) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.input_dim));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(kNumFeatures));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(kNumLabels));
  detail::write_le<std::uint32_t>(out, p.has_intra ? 1u : 0u);
  for (double v : p.feature_mean) detail::write_le(out, v);
  for (double v : p.feature_scale) detail::write_le(out, v);
  detail::write_le<std::uint64_t>(out, p.parameter_count());
  p.for_each_tensor([&](std::string_view, std::span<const double> values) {
    for (double v : values) detail::write_le(out, v);
  });
  if (!out) throw FormatError("failed to write weight file");
}

inline DepthModelParams load_weights(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kWeightMagic) throw FormatError("not a gaze depth weight file");
  const auto version = detail::read_le<std::uint32_t>(in, "version");
  if (version != kWeightVersion)
    throw FormatError("unsupported weight file version " + std::to_string(version) + " (expected " +
                      std::to_string(kWeightVersion) + ")");
  const auto embed_dim = detail::read_le<std::uint32_t>(in, "embed_dim");
  if (embed_dim == 0 || embed_dim > 4096) throw FormatError("implausible embed_dim " + std::to_string(embed_dim));
  const auto streams = detail::read_le<std::uint32_t>(in, "stream count");
  if (streams != kNumStreams) throw FormatError("weight file has " + std::to_string(streams) + " streams");
  for (const auto& s : kStreams) {
    const auto dim = detail::read_le<std::uint32_t>(in, "stream dims");
    if (dim != s.input_dim)
      throw FormatError("stream " + std::string(s.name) + " has input dim " + std::to_string(dim) + ", expected " +
                        std::to_string(s.input_dim));
  }
  if (detail::read_le<std::uint32_t>(in, "feature count") != kNumFeatures) throw FormatError("feature count mismatch");
  if (detail::read_le<std::uint32_t>(in, "label count") != kNumLabels) throw FormatError("label count mismatch");
  const auto flags = detail::read_le<std::uint32_t>(in, "flags");
  if (flags > 1u) throw FormatError("unknown flags " + std::to_string(flags));

  DepthModelParams p = DepthModelParams::zeros(embed_dim, (flags & 1u) != 0);
  for (double& v : p.feature_mean) v = detail::read_le<double>(in, "feature mean");
  for (double& v : p.feature_scale) v = detail::read_le<double>(in, "feature scale");
  const auto count = detail::read_le<std::uint64_t>(in, "parameter count");
  if (count != p.parameter_count())
    throw FormatError("parameter count " + std::to_string(count) + " does not match declared dims (" +
                      std::to_string(p.parameter_count()) + ")");
  p.for_each_tensor([&](std::string_view, std::span<double> values) {
    for (double& v : values) v = detail::read_le<double>(in, "tensor data");
  });
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after weight tensors");
  return p;
}

inline void save_weights(const DepthModelParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  save_weights(p, out);
}

inline DepthModelParams load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weight file " + path);
  try {
    return load_weights(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace gazetrack
