#include "stereocenter/tensor.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "stereocenter/error.hpp"

namespace sc {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'C', 'H', 'T'};

void put_u32(std::ostream& out, std::uint32_t value) {
  const std::array<char, 4> bytes{static_cast<char>(value & 0xFFu),
                                  static_cast<char>((value >> 8) & 0xFFu),
                                  static_cast<char>((value >> 16) & 0xFFu),
                                  static_cast<char>((value >> 24) & 0xFFu)};
  out.write(bytes.data(), bytes.size());
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw Error(ErrorCode::kIoError, "truncated SCHT header");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

Tensor::Tensor(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 0 || height < 0 || width < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative tensor extent");
  }
  data_.assign(static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
                   static_cast<std::size_t>(width),
               fill);
}

std::span<double> Tensor::channel(int c) {
  const std::size_t plane = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  return {data_.data() + static_cast<std::size_t>(c) * plane, plane};
}

std::span<const double> Tensor::channel(int c) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  return {data_.data() + static_cast<std::size_t>(c) * plane, plane};
}

void write_scht(std::ostream& out, const Tensor& tensor) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(tensor.width()));
  put_u32(out, static_cast<std::uint32_t>(tensor.height()));
  put_u32(out, static_cast<std::uint32_t>(tensor.channels()));
  for (double value : tensor.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    put_u32(out, bits);
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed to write SCHT tensor");
}

Tensor read_scht(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorCode::kIoError, "missing SCHT magic");
  const std::uint32_t width = get_u32(in);
  const std::uint32_t height = get_u32(in);
  const std::uint32_t channels = get_u32(in);
  Tensor tensor(static_cast<int>(channels), static_cast<int>(height), static_cast<int>(width));
  for (double& value : tensor.data()) {
    value = std::bit_cast<float>(get_u32(in));
  }
  return tensor;
}

void write_scht(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  write_scht(out, tensor);
}

Tensor read_scht(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return read_scht(in);
}

}  // namespace sc
