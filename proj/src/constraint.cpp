#include "cseg/constraint.hpp"

#include <stdexcept>

#include "cseg/morphology.hpp"

namespace cseg {

BinaryMask lung_plus_space(const ProbMap& raw_lung, const LungPlusConfig& cfg) {
  if (cfg.k_components < 1)
    throw std::invalid_argument("lung_plus_space: k_components must be >= 1");
  BinaryMask m = threshold(raw_lung, cfg.bin_t);
  m = top_k_components(m, cfg.k_components);
  m = close(m, elliptical_element(cfg.close_k));
  m = dilate(m, elliptical_element(cfg.dilate_k));
  return m;
}

double coverage_rate(const BinaryMask& c, const BinaryMask& s) {
  require_same_shape(c, s);
  const long long area_s = s.area();
  if (area_s == 0)
    throw std::invalid_argument("coverage_rate: annotation mask is empty");
  return double(intersection_area(c, s)) / double(area_s);
}

int make_label(double coverage, double tau) {
  if (coverage < 0.0 || coverage > 1.0)
    throw std::invalid_argument("make_label: coverage must lie in [0,1]");
  if (!(tau > 0.0 && tau <= 1.0))
    throw std::invalid_argument("make_label: tau must lie in (0,1]");
  return coverage > tau ? 1 : 0;
}

std::vector<ConstraintRecord> finalize_constraints(std::vector<ConstraintRecord> records,
                                                   const std::vector<bool>& decisions) {
  if (records.size() != decisions.size())
    throw std::invalid_argument("finalize_constraints: one decision per record required");
  for (std::size_t i = 0; i < records.size(); ++i) {
    ConstraintRecord& r = records[i];
    r.accepted = decisions[i];
    if (r.accepted)
      r.final_constraint = r.candidate;
    else
      r.final_constraint = all_ones(r.candidate.height, r.candidate.width);
  }
  return records;
}

}  // namespace cseg
