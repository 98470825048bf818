#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectranet/autodiff/tensor.hpp"
#include "spectranet/core/binary_io.hpp"
#include "spectranet/core/error.hpp"

namespace spectranet::ad {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// "SPCK" | u16 version | u32 header_len | header JSON |
/// u32 count | count x (u16 name_len, name, u32 rank, u32 dims[rank], u64 offset) |
/// float32 payload (offsets count floats from the payload start), little-endian.
struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  [[nodiscard]] const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  [[nodiscard]] const NamedTensor& at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw CheckpointError("tensor '" + name + "' not found in checkpoint");
  }
  void add(std::string name, Shape shape, std::vector<float> data) {
    if (numel(shape) != data.size()) throw ShapeError("checkpoint tensor '" + name + "' size mismatch");
    tensors.push_back({std::move(name), std::move(shape), std::move(data)});
  }
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write '" + path.string() + "'");
  io::write_magic(os, "SPCK");
  io::write_le<std::uint16_t>(os, kCheckpointVersion);
  const std::string header = ck.header.dump();
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& t : ck.tensors) {
    io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    io::write_le<std::uint64_t>(os, offset);
    offset += t.data.size();
  }
  for (const auto& t : ck.tensors)
    os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!os) throw CheckpointError("failed writing '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open '" + path.string() + "'");
  try {
    io::expect_magic(is, "SPCK", path.string());
    const auto version = io::read_le<std::uint16_t>(is, "checkpoint version");
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    const auto hlen = io::read_le<std::uint32_t>(is, "header length");
    std::string header(hlen, '\0');
    is.read(header.data(), hlen);
    ck.header = nlohmann::json::parse(header);
    const auto count = io::read_le<std::uint32_t>(is, "tensor count");
    std::vector<std::uint64_t> offsets;
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedTensor t;
      t.name.resize(io::read_le<std::uint16_t>(is, "name length"));
      is.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      const auto rank = io::read_le<std::uint32_t>(is, "rank");
      for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(static_cast<int>(io::read_le<std::uint32_t>(is, "dim")));
      offsets.push_back(io::read_le<std::uint64_t>(is, "offset"));
      t.data.resize(numel(t.shape));
      ck.tensors.push_back(std::move(t));
    }
    const auto payload_start = is.tellg();
    for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
      auto& t = ck.tensors[i];
      is.seekg(payload_start + static_cast<std::streamoff>(offsets[i] * sizeof(float)));
      is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
      if (!is) throw CheckpointError("truncated payload for '" + t.name + "'");
    }
    return ck;
  } catch (const DataError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
}

}  // namespace spectranet::ad
