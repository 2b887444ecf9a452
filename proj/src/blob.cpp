#include "tgq/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tgq/errors.hpp"

namespace tgq {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos, const std::string& origin) {
  if (pos + 4 > in.size()) throw IoError("truncated TGQT blob: " + origin);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_blob(const Tensor& t) {
  std::vector<std::uint8_t> out = {'T', 'G', 'Q', 'T', kBlobVersion};
  const auto& shape = t.shape();
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  out.reserve(out.size() + 4 * t.numel());
  for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_blob(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), "TGQT", 4) != 0)
    throw IoError("not a TGQT blob (bad magic): " + origin);
  if (bytes[4] != kBlobVersion)
    throw IoError("unsupported TGQT version " + std::to_string(bytes[4]) + ": " + origin);
  std::size_t pos = 5;
  const std::uint32_t rank = get_u32(bytes, pos, origin);
  if (rank == 0 || rank > 8) throw IoError("implausible TGQT rank " + std::to_string(rank) + ": " + origin);
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get_u32(bytes, pos, origin));
  const std::size_t n = shape_numel(shape);
  if (bytes.size() != pos + 4 * n)
    throw IoError("TGQT payload size mismatch for shape " + shape_str(shape) + ": " + origin);
  std::vector<double> data(n);
  for (std::size_t k = 0; k < n; ++k)
    data[k] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, pos, origin)));
  return Tensor::from(std::move(shape), std::move(data));
}

void write_blob(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_blob(t);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Tensor read_blob(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_blob(bytes, path.string());
}

}  // namespace tgq
