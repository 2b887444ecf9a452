#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tgq/tensor.hpp"

namespace tgq {

// TGQT tensor blob:
//   "TGQT" | u8 version (=1) | u32 rank | u32 dims[rank] | f32 payload
// All integers and floats little-endian, payload row-major.
inline constexpr std::uint8_t kBlobVersion = 1;

std::vector<std::uint8_t> encode_blob(const Tensor& t);
Tensor decode_blob(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void write_blob(const std::filesystem::path& path, const Tensor& t);
Tensor read_blob(const std::filesystem::path& path);

}  // namespace tgq
