#include "cseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cseg/rng.hpp"

namespace cseg {

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt);
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    inter += (p && g);
    uni += (p || g);
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt);
  long long inter = 0, ap = 0, ag = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    inter += (p && g);
    ap += p;
    ag += g;
  }
  if (ap == 0 && ag == 0) return 1.0;
  if (ap == 0 || ag == 0) return 0.0;
  return 2.0 * double(inter) / double(ap + ag);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Finite sentinel for cells with no source pixel. Keeping it finite avoids
// inf - inf = NaN inside the envelope intersection, which would corrupt the
// parabola stack; 1e20 still dominates any reachable squared distance.
constexpr double kFar = 1e20;

// 1-d squared euclidean distance transform (lower envelope of parabolas).
void dt1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = int(f.size());
  d.assign(n, 0.0);
  std::vector<int> v(n, 0);
  std::vector<double> z(n + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Squared distance from every pixel to the nearest 1-pixel of m. All-zero
// masks stay at the kFar sentinel everywhere.
std::vector<double> squared_edt(const BinaryMask& m) {
  const int h = m.height, w = m.width;
  std::vector<double> grid(size_t(h) * w);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = m.data[i] ? 0.0 : kFar;
  std::vector<double> col(h), out_col(h);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) col[r] = grid[size_t(r) * w + c];
    dt1d(col, out_col);
    for (int r = 0; r < h; ++r) grid[size_t(r) * w + c] = out_col[r];
  }
  std::vector<double> row(w), out_row(w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) row[c] = grid[size_t(r) * w + c];
    dt1d(row, out_row);
    for (int c = 0; c < w; ++c) grid[size_t(r) * w + c] = out_row[c];
  }
  return grid;
}

double directed_sq_max(const BinaryMask& from, const std::vector<double>& edt_to) {
  double worst = 0.0;
  for (size_t i = 0; i < from.size(); ++i)
    if (from.data[i] && edt_to[i] > worst) worst = edt_to[i];
  return worst;
}

}  // namespace

double hausdorff(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt);
  const bool pe = pred.area() == 0, ge = gt.area() == 0;
  if (pe && ge) return 0.0;
  if (pe || ge)
    return std::sqrt(double(pred.height) * pred.height + double(pred.width) * pred.width);
  auto edt_gt = squared_edt(gt);
  auto edt_pred = squared_edt(pred);
  double sq = std::max(directed_sq_max(pred, edt_gt), directed_sq_max(gt, edt_pred));
  return std::sqrt(sq);
}

double auroc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auroc: scores and labels differ in length");
  const size_t n = scores.size();
  long long n_pos = 0;
  for (uint8_t l : labels) n_pos += (l != 0);
  const long long n_neg = (long long)n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auroc: undefined, both classes must be present");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double midrank = 0.5 * double(i + 1 + j);  // average of ranks i+1 .. j
    for (size_t t = i; t < j; ++t)
      if (labels[order[t]]) rank_sum_pos += midrank;
    i = j;
  }
  return (rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0) /
         (double(n_pos) * double(n_neg));
}

ConfusionRates confusion_rates(const std::vector<uint8_t>& decisions,
                               const std::vector<uint8_t>& labels) {
  if (decisions.size() != labels.size())
    throw std::invalid_argument("confusion_rates: decisions and labels differ in length");
  ConfusionRates r;
  for (size_t i = 0; i < decisions.size(); ++i) {
    bool d = decisions[i] != 0, l = labels[i] != 0;
    if (d && l) ++r.tp;
    else if (d && !l) ++r.fp;
    else if (!d && !l) ++r.tn;
    else ++r.fn;
  }
  if (r.tp + r.fn > 0) r.sensitivity = double(r.tp) / double(r.tp + r.fn);
  if (r.tn + r.fp > 0) r.specificity = double(r.tn) / double(r.tn + r.fp);
  if (r.tp + r.fp > 0) r.ppv = double(r.tp) / double(r.tp + r.fp);
  if (r.tn + r.fn > 0) r.npv = double(r.tn) / double(r.tn + r.fn);
  return r;
}

double bootstrap_se(const std::vector<double>& values, int B, std::uint64_t seed) {
  if (values.empty()) throw std::invalid_argument("bootstrap_se: values must be nonempty");
  if (B < 1) throw std::invalid_argument("bootstrap_se: B must be >= 1");
  const size_t n = values.size();
  Rng rng(seed);
  std::vector<double> means(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += values[rng.next_below(n)];
    means[size_t(b)] = sum / double(n);
  }
  if (B == 1) return 0.0;
  double grand = std::accumulate(means.begin(), means.end(), 0.0) / double(B);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  return std::sqrt(ss / double(B - 1));
}

MetricReport make_metric_report(const std::vector<SampleMetrics>& samples, int bootstrap_b,
                                std::uint64_t seed, std::uint64_t config_fingerprint) {
  MetricReport rep;
  rep.samples = samples;
  rep.config_fingerprint = config_fingerprint;
  rep.n = int(samples.size());
  auto aggregate = [&](auto getter, const char* tag) {
    MetricSummary s;
    std::vector<double> vals;
    vals.reserve(samples.size());
    for (const auto& m : samples) vals.push_back(getter(m));
    if (vals.empty()) return s;
    s.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / double(vals.size());
    s.se = bootstrap_se(vals, bootstrap_b, derive_seed(seed, tag));
    return s;
  };
  rep.iou = aggregate([](const SampleMetrics& m) { return m.iou; }, "boot.iou");
  rep.dsc = aggregate([](const SampleMetrics& m) { return m.dsc; }, "boot.dsc");
  rep.hd = aggregate([](const SampleMetrics& m) { return m.hd; }, "boot.hd");
  return rep;
}

}  // namespace cseg
