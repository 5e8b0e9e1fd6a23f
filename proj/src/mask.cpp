#include "cseg/mask.hpp"

#include <stdexcept>

namespace cseg {

long long BinaryMask::area() const {
  long long n = 0;
  for (uint8_t v : data) n += v;
  return n;
}

bool BinaryMask::all_one() const {
  for (uint8_t v : data)
    if (v == 0) return false;
  return !data.empty();
}

void require_same_shape(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mask shape mismatch");
}
void require_same_shape(const RealGrid& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("grid/mask shape mismatch");
}
void require_same_shape(const RealGrid& a, const RealGrid& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("grid shape mismatch");
}

long long intersection_area(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  long long n = 0;
  for (size_t i = 0; i < a.data.size(); ++i) n += a.data[i] & b.data[i];
  return n;
}

double soft_intersection(const ProbMap& y, const BinaryMask& c) {
  require_same_shape(y, c);
  double s = 0.0;
  for (size_t i = 0; i < y.data.size(); ++i)
    if (c.data[i]) s += y.data[i];
  return s;
}

BinaryMask threshold(const ProbMap& y, double t) {
  BinaryMask out(y.height, y.width);
  for (size_t i = 0; i < y.data.size(); ++i)
    out.data[i] = y.data[i] > t ? 1 : 0;
  return out;
}

BinaryMask all_ones(int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("all_ones: empty grid");
  return BinaryMask(height, width, 1);
}

}  // namespace cseg
