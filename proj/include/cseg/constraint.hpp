#pragma once

#include <string>
#include <vector>

#include "cseg/mask.hpp"

namespace cseg {

// Morphology recipe turning a raw lung probability map into the dilated
// "lung+" constraint space: threshold -> top_k_components -> close -> dilate.
struct LungPlusConfig {
  double bin_t = 0.5;
  int k_components = 2;
  int close_k = 19;
  int dilate_k = 15;
};

BinaryMask lung_plus_space(const ProbMap& raw_lung, const LungPlusConfig& cfg = {});

// Fraction of the annotation s covered by candidate c: |c n s| / |s|.
// s must be nonempty.
double coverage_rate(const BinaryMask& c, const BinaryMask& s);

// 1 iff coverage strictly exceeds tau.
int make_label(double coverage, double tau);

struct ConstraintRecord {
  std::string sample_id;
  BinaryMask candidate;
  double coverage = 0.0;
  int label = 0;
  bool accepted = false;
  BinaryMask final_constraint;
};

// Accepted records keep their candidate; rejected ones fall back to an
// all-ones mask that nullifies the downstream penalty. Order preserved; one
// decision per record.
std::vector<ConstraintRecord> finalize_constraints(std::vector<ConstraintRecord> records,
                                                   const std::vector<bool>& decisions);

}  // namespace cseg
