#include "cseg/losses.hpp"

namespace cseg {

LossResult dice_loss(const ProbMap& y, const BinaryMask& s, double eps) {
  require_same_shape(y, s);
  double inter = 0.0, sum_y = 0.0, sum_s = 0.0;
  const size_t n = y.size();
  for (size_t i = 0; i < n; ++i) {
    double yi = y.data[i];
    sum_y += yi;
    if (s.data[i]) {
      inter += yi;
      sum_s += 1.0;
    }
  }
  const double num = 2.0 * inter + eps;
  const double den = sum_y + sum_s + eps;
  LossResult res;
  res.value = 1.0 - num / den;
  res.grad = RealGrid(y.height, y.width);
  const double inv_den2 = 1.0 / (den * den);
  for (size_t i = 0; i < n; ++i) {
    double sj = s.data[i] ? 1.0 : 0.0;
    res.grad.data[i] = -(2.0 * sj * den - num) * inv_den2;
  }
  return res;
}

LossResult constraint_penalty(const ProbMap& y, const BinaryMask& c, double eps) {
  require_same_shape(y, c);
  double a = 0.0, sum_y = 0.0;
  const size_t n = y.size();
  for (size_t i = 0; i < n; ++i) {
    double yi = y.data[i];
    sum_y += yi;
    if (c.data[i]) a += yi;
  }
  const double b = sum_y + eps;
  LossResult res;
  res.value = 1.0 - a / b;
  res.grad = RealGrid(y.height, y.width);
  const double inv_b2 = 1.0 / (b * b);
  for (size_t i = 0; i < n; ++i) {
    double cj = c.data[i] ? 1.0 : 0.0;
    res.grad.data[i] = -(cj * b - a) * inv_b2;
  }
  return res;
}

LossResult constrained_loss(const ProbMap& y, const BinaryMask& s, const BinaryMask& c,
                            double lambda, double eps) {
  require_same_shape(y, s);
  require_same_shape(y, c);
  if (c.all_one()) return dice_loss(y, s, eps);
  LossResult dice = dice_loss(y, s, eps);
  LossResult pen = constraint_penalty(y, c, eps);
  LossResult res;
  res.value = dice.value + lambda * pen.value;
  res.grad = RealGrid(y.height, y.width);
  for (size_t i = 0; i < y.size(); ++i)
    res.grad.data[i] = dice.grad.data[i] + lambda * pen.grad.data[i];
  return res;
}

}  // namespace cseg
