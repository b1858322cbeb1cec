#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "batlas/mask.hpp"

namespace batlas {

// Row-major grayscale raster of non-negative intensities. Source bit depth is
// irrelevant once loaded; all math runs in double.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0);
  GrayImage(int width, int height, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  bool is_square() const { return width_ == height_; }
  std::size_t size() const { return data_.size(); }

  double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int x, int y, double v);

  std::span<const double> pixels() const { return data_; }

  double sum() const;
  double min() const;
  double max() const;

  // Pixel (x, y) moves to (width-1-x, height-1-y).
  GrayImage rotated_180() const;
  GrayImage crop(const Box& box) const;

  bool operator==(const GrayImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

// Bilinear resample to n x n (pixel-centre alignment, edge clamping). Aspect
// ratio is discarded on purpose: every image maps onto the same square grid.
GrayImage normalize_image(const GrayImage& img, int n);

// Crop around the tight bounding box of `mask`, grown by `margin` on every
// side and clamped to the image. Throws EmptyMaskError for an empty mask.
GrayImage bounding_box_roi(const GrayImage& img, const BinaryMask& mask, int margin);
Box roi_box(const BinaryMask& mask, int margin);

}  // namespace batlas
