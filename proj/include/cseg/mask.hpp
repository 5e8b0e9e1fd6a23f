#pragma once

#include <cstdint>
#include <vector>

namespace cseg {

// 2D binary grid, row-major, every element exactly 0 or 1. Holds lesion
// annotations, spatial constraints, and thresholded predictions.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;  // size height*width

  BinaryMask() = default;
  BinaryMask(int h, int w, uint8_t fill = 0)
      : height(h), width(w), data(size_t(h) * size_t(w), fill) {}

  uint8_t at(int r, int c) const { return data[size_t(r) * width + c]; }
  void set(int r, int c, uint8_t v) { data[size_t(r) * width + c] = v; }
  bool in_bounds(int r, int c) const {
    return r >= 0 && r < height && c >= 0 && c < width;
  }
  size_t size() const { return data.size(); }

  long long area() const;
  bool all_one() const;
  bool same_shape(const BinaryMask& o) const {
    return height == o.height && width == o.width;
  }
  bool operator==(const BinaryMask& o) const = default;
};

// 2D grid of reals, row-major. Used both for probability maps (model output,
// values in [0,1]) and normalized grayscale images.
struct RealGrid {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  RealGrid() = default;
  RealGrid(int h, int w, double fill = 0.0)
      : height(h), width(w), data(size_t(h) * size_t(w), fill) {}

  double at(int r, int c) const { return data[size_t(r) * width + c]; }
  void set(int r, int c, double v) { data[size_t(r) * width + c] = v; }
  size_t size() const { return data.size(); }
  bool same_shape(const RealGrid& o) const {
    return height == o.height && width == o.width;
  }
  bool same_shape(const BinaryMask& o) const {
    return height == o.height && width == o.width;
  }
  bool operator==(const RealGrid& o) const = default;
};

using ProbMap = RealGrid;
using GrayImage = RealGrid;

// throws std::invalid_argument on shape mismatch
void require_same_shape(const BinaryMask& a, const BinaryMask& b);
void require_same_shape(const RealGrid& a, const BinaryMask& b);
void require_same_shape(const RealGrid& a, const RealGrid& b);

// |a ∩ b|, counted over 1-pixels
long long intersection_area(const BinaryMask& a, const BinaryMask& b);

// Σ_j y_j·c_j — the soft (probability-mass) intersection of a map and a mask
double soft_intersection(const ProbMap& y, const BinaryMask& c);

// pixel = 1 iff y > t, strictly
BinaryMask threshold(const ProbMap& y, double t);

// full-coverage mask; the penalty term against it is identically zero
BinaryMask all_ones(int height, int width);

}  // namespace cseg
