#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rlf/error.hpp"

namespace rlf {

/// Row-major luminance raster. Values are normalized to [0,1] at load time;
/// intermediate filter outputs may leave that range but stay finite.
class GrayImage {
 public:
  GrayImage() = default;

  GrayImage(int width, int height, double fill = 0.0)
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InvalidInput("negative image dimensions");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  GrayImage(int width, int height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0) throw InvalidInput("negative image dimensions");
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw InvalidInput("image data length does not match width x height");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double operator()(int x, int y) const { return data_[index(x, y)]; }
  double& operator()(int x, int y) { return data_[index(x, y)]; }

  /// Pixel access with edge replication outside the raster.
  double clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return data_[index(x, y)];
  }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::span<const double> pixels() const { return data_; }
  std::span<double> pixels() { return data_; }
  std::span<const double> row(int y) const {
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
  }
  std::span<double> row(int y) {
    return std::span<double>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
  }

  bool operator==(const GrayImage&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Axis-aligned integer rectangle, top-left anchored.
struct BBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  long long area() const { return static_cast<long long>(w) * h; }
  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool valid() const { return w > 0 && h > 0; }

  bool operator==(const BBox&) const = default;
};

inline long long intersection_area(const BBox& a, const BBox& b) {
  const long long iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const long long ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (iw > 0 && ih > 0) ? iw * ih : 0;
}

/// Smallest box holding the real-valued span [x0,x1]x[y0,y1] grown by pad.
inline BBox bbox_from_extent(double x0, double y0, double x1, double y1, double pad = 0.0) {
  const int bx0 = static_cast<int>(std::floor(x0 - pad));
  const int by0 = static_cast<int>(std::floor(y0 - pad));
  const int bx1 = static_cast<int>(std::ceil(x1 + pad));
  const int by1 = static_cast<int>(std::ceil(y1 + pad));
  return BBox{bx0, by0, std::max(1, bx1 - bx0), std::max(1, by1 - by0)};
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

}  // namespace rlf
