#include "batlas/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "batlas/error.hpp"

namespace batlas {

GrayImage::GrayImage(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) throw InvalidArgument("negative image dimensions");
  if (fill < 0.0) throw InvalidArgument("negative intensity");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 0 || height < 0) throw InvalidArgument("negative image dimensions");
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("image data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(width) + "x" +
                          std::to_string(height));
  }
  for (double v : data_) {
    if (!(v >= 0.0)) throw InvalidArgument("image intensities must be non-negative");
  }
}

void GrayImage::set(int x, int y, double v) {
  if (!(v >= 0.0)) throw InvalidArgument("image intensities must be non-negative");
  data_[static_cast<std::size_t>(y) * width_ + x] = v;
}

double GrayImage::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double GrayImage::min() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double GrayImage::max() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

GrayImage GrayImage::rotated_180() const {
  std::vector<double> out(data_.rbegin(), data_.rend());
  return GrayImage(width_, height_, std::move(out));
}

GrayImage GrayImage::crop(const Box& box) const {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 >= width_ || box.y1 >= height_ || box.x1 < box.x0 ||
      box.y1 < box.y0) {
    throw InvalidArgument("crop box outside image");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(box.width()) * box.height());
  for (int y = box.y0; y <= box.y1; ++y) {
    for (int x = box.x0; x <= box.x1; ++x) out.push_back(at(x, y));
  }
  return GrayImage(box.width(), box.height(), std::move(out));
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace

GrayImage normalize_image(const GrayImage& img, int n) {
  if (img.empty()) throw InvalidArgument("cannot normalize an empty image");
  if (n < 2) throw InvalidArgument("normalized size must be at least 2");
  if (img.width() == n && img.height() == n) return img;

  const auto xs = bilinear_taps(img.width(), n);
  const auto ys = bilinear_taps(img.height(), n);
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y) {
    const Tap& ty = ys[y];
    for (int x = 0; x < n; ++x) {
      const Tap& tx = xs[x];
      const double top = img.at(tx.lo, ty.lo) * (1.0 - tx.frac) + img.at(tx.hi, ty.lo) * tx.frac;
      const double bottom =
          img.at(tx.lo, ty.hi) * (1.0 - tx.frac) + img.at(tx.hi, ty.hi) * tx.frac;
      out[static_cast<std::size_t>(y) * n + x] = top * (1.0 - ty.frac) + bottom * ty.frac;
    }
  }
  return GrayImage(n, n, std::move(out));
}

Box roi_box(const BinaryMask& mask, int margin) {
  if (margin < 0) throw InvalidArgument("ROI margin must be non-negative");
  auto box = mask.bounding_box();
  if (!box) throw EmptyMaskError("ROI mask is empty; use the whole-image barcode instead");
  return Box{std::max(0, box->x0 - margin), std::max(0, box->y0 - margin),
             std::min(mask.width() - 1, box->x1 + margin),
             std::min(mask.height() - 1, box->y1 + margin)};
}

GrayImage bounding_box_roi(const GrayImage& img, const BinaryMask& mask, int margin) {
  if (mask.width() != img.width() || mask.height() != img.height()) {
    throw InvalidArgument("ROI mask dimensions differ from the image");
  }
  return img.crop(roi_box(mask, margin));
}

}  // namespace batlas
