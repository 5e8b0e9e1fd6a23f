#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cseg/mask.hpp"

namespace cseg {

// Overlap metrics. Conventions: both masks empty -> 1.0, exactly one empty
// -> 0.0. dsc == 2*iou/(1+iou) for every pair.
double iou(const BinaryMask& pred, const BinaryMask& gt);
double dsc(const BinaryMask& pred, const BinaryMask& gt);

// Symmetric Hausdorff distance over pixel centers, euclidean metric, in
// pixels. Exactly one mask empty -> image diagonal sqrt(H^2+W^2); both
// empty -> 0. Implemented with an exact squared distance transform.
double hausdorff(const BinaryMask& pred, const BinaryMask& gt);

// Mann-Whitney rank statistic with midrank tie handling:
// (sum of positive midranks - n_pos*(n_pos+1)/2) / (n_pos*n_neg).
// Both classes must be present; otherwise the metric is undefined and an
// invalid_argument is thrown.
double auroc(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

// Confusion-matrix ratios for binary decisions against binary labels.
// A ratio with a zero denominator is absent, not zero.
struct ConfusionRates {
  std::optional<double> specificity;
  std::optional<double> sensitivity;
  std::optional<double> ppv;
  std::optional<double> npv;
  long long tp = 0, fp = 0, tn = 0, fn = 0;
};
ConfusionRates confusion_rates(const std::vector<uint8_t>& decisions,
                               const std::vector<uint8_t>& labels);

// Standard deviation across B resample means (divisor B-1; B == 1 -> 0.0).
// Each resample draws n values with replacement from a seeded generator, so
// the result is deterministic per seed.
double bootstrap_se(const std::vector<double>& values, int B, std::uint64_t seed);

// Per-sample segmentation quality plus aggregates used by evaluation runs.
struct SampleMetrics {
  double iou = 0.0;
  double dsc = 0.0;
  double hd = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  double se = 0.0;
};

struct MetricReport {
  std::vector<SampleMetrics> samples;
  MetricSummary iou;
  MetricSummary dsc;
  MetricSummary hd;
  std::uint64_t config_fingerprint = 0;
  int n = 0;
};

// Aggregates per-sample values into means and bootstrap SEs. One seeded
// stream per metric, derived from `seed`.
MetricReport make_metric_report(const std::vector<SampleMetrics>& samples, int bootstrap_b,
                                std::uint64_t seed, std::uint64_t config_fingerprint);

}  // namespace cseg
