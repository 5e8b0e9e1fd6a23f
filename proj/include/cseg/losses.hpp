#pragma once

#include "cseg/mask.hpp"

namespace cseg {

// Loss value plus its gradient with respect to the prediction, same shape as
// the prediction.
struct LossResult {
  double value = 0.0;
  RealGrid grad;
};

inline constexpr double kLossEps = 1e-6;

// Soft dice loss: 1 - (2*sum(y*s) + eps) / (sum(y) + sum(s) + eps).
// grad_j = -(2*s_j*B - (2*sum(y*s) + eps)) / B^2 with B the denominator.
LossResult dice_loss(const ProbMap& y, const BinaryMask& s, double eps = kLossEps);

// Constraint penalty: 1 - sum(y*c) / (sum(y) + eps). Mass predicted outside
// the constraint raises the penalty; a prediction fully inside c costs ~0.
// grad_j = -(c_j*B - A) / B^2 with A = sum(y*c), B = sum(y) + eps.
LossResult constraint_penalty(const ProbMap& y, const BinaryMask& c, double eps = kLossEps);

// dice_loss(y, s) + lambda * constraint_penalty(y, c). An all-ones constraint
// carries no information, so the penalty term is skipped entirely and the
// result equals dice_loss(y, s) bit for bit.
LossResult constrained_loss(const ProbMap& y, const BinaryMask& s, const BinaryMask& c,
                            double lambda, double eps = kLossEps);

}  // namespace cseg
