#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dyronet/numcore/ndarray.hpp"

namespace dyronet::branch {

struct NamedTensor {
  std::string name;
  num::NdArray value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// DRNW1 weight file: the 5-byte magic "DRNW1" followed by one record per
// tensor until end of file. A record is
//   u32 name length | name bytes (UTF-8) | u32 rank | u32 extent * rank |
//   f64 payload (row-major)
// with every integer and float little-endian.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// FNV-1a over the encoded bytes; equal digests mean byte-identical weights.
std::uint64_t checkpoint_digest(const std::vector<NamedTensor>& tensors);

}  // namespace dyronet::branch
