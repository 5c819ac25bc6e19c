#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace sc {

/// Dense channel-major (channel, row, column) grid of doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool same_extent(const Tensor& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height_) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Flat binary tensor file: ASCII magic "SCHT", then width, height and
/// channel count as little-endian uint32, then channel-major little-endian
/// float32 values.
void write_scht(std::ostream& out, const Tensor& tensor);
Tensor read_scht(std::istream& in);
void write_scht(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_scht(const std::filesystem::path& path);

}  // namespace sc
