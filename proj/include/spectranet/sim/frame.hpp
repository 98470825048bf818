#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spectranet/core/binary_io.hpp"
#include "spectranet/core/error.hpp"
#include "spectranet/sim/orientation.hpp"

namespace spectranet::sim {

struct FrameMetadata {
  std::string class_id;
  Orientation orientation;
  double target_dnmed = 0.0;
  std::uint64_t rng_seed = 0;
};

/// Single-channel detector frame, row-major. Rendered frames hold values that are
/// exactly representable in float32, so they survive the file format unchanged.
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;
  FrameMetadata meta;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  [[nodiscard]] double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  [[nodiscard]] bool empty() const { return pixels.empty(); }
};

inline constexpr std::uint16_t kFrameFormatVersion = 1;

/// "SPFR" | u16 version | u32 height | u32 width | float32[height*width] row-major, LE.
inline void write_frame(const std::filesystem::path& path, const Frame& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write frame '" + path.string() + "'");
  io::write_magic(os, "SPFR");
  io::write_le<std::uint16_t>(os, kFrameFormatVersion);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.height));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.width));
  std::vector<float> buf(f.pixels.begin(), f.pixels.end());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw ConfigError("failed writing frame '" + path.string() + "'");
}

inline Frame read_frame(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError(path.string(), "simulate");
  io::expect_magic(is, "SPFR", path.string());
  const auto version = io::read_le<std::uint16_t>(is, "frame version");
  if (version != kFrameFormatVersion)
    throw DataError("unsupported frame version " + std::to_string(version) + " in '" + path.string() + "'");
  const auto h = io::read_le<std::uint32_t>(is, "frame height");
  const auto w = io::read_le<std::uint32_t>(is, "frame width");
  std::vector<float> buf(static_cast<std::size_t>(h) * w);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw DataError("truncated frame payload in '" + path.string() + "'");
  Frame f(h, w);
  std::copy(buf.begin(), buf.end(), f.pixels.begin());
  return f;
}

}  // namespace spectranet::sim
