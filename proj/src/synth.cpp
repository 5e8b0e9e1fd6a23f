#include "cseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cseg/constraint.hpp"
#include "cseg/morphology.hpp"
#include "cseg/rng.hpp"

namespace cseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate_config(const PhantomConfig& cfg, int n_samples, const char* which) {
  if (cfg.height < 16 || cfg.width < 16)
    throw std::invalid_argument("phantom config: grid must be at least 16x16");
  if (cfg.height % 4 != 0 || cfg.width % 4 != 0)
    throw std::invalid_argument("phantom config: grid dims must be multiples of 4");
  if (n_samples < 1)
    throw std::invalid_argument(std::string("phantom config: ") + which +
                                " must be at least 1 (empty dataset)");
  if (cfg.corruption < 0.0 || cfg.corruption > 1.0)
    throw std::invalid_argument("phantom config: corruption must lie in [0,1]");
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0))
    throw std::invalid_argument("phantom config: tau must lie in (0,1]");
  if (cfg.stripe_period <= 0.0)
    throw std::invalid_argument("phantom config: stripe_period must be positive");
  if (cfg.n_distractors < 0)
    throw std::invalid_argument("phantom config: n_distractors must be >= 0");
}

struct Ellipse {
  double cy = 0, cx = 0, ry = 1, rx = 1;  // pixel units, pixel-center convention
};

double ellipse_f(const Ellipse& e, int r, int c) {
  const double dr = (r + 0.5 - e.cy) / e.ry;
  const double dc = (c + 0.5 - e.cx) / e.rx;
  return dr * dr + dc * dc;
}

Ellipse draw_lung_ellipse(Rng& rng, const PhantomConfig& cfg, double col_frac) {
  Ellipse e;
  e.cy = (cfg.lung_row_center + rng.next_range(-cfg.center_jitter, cfg.center_jitter)) *
         cfg.height;
  e.cx = (col_frac + rng.next_range(-cfg.center_jitter, cfg.center_jitter)) * cfg.width;
  e.rx = rng.next_range(cfg.lung_rx_min, cfg.lung_rx_max) * cfg.width;
  e.ry = rng.next_range(cfg.lung_ry_min, cfg.lung_ry_max) * cfg.height;
  return e;
}

BinaryMask lungs_mask(const PhantomConfig& cfg, const Ellipse& a, const Ellipse& b) {
  BinaryMask m(cfg.height, cfg.width);
  for (int r = 0; r < cfg.height; ++r)
    for (int c = 0; c < cfg.width; ++c)
      if (ellipse_f(a, r, c) <= 1.0 || ellipse_f(b, r, c) <= 1.0) m.set(r, c, 1);
  return m;
}

double wrap_angle(double x) {
  while (x > kPi) x -= 2.0 * kPi;
  while (x <= -kPi) x += 2.0 * kPi;
  return x;
}

// Crescent in the pleural band on the lateral side of one lung: outside the
// lung ellipse, radially within a thin annulus, angularly near the outward
// axis, clipped to the true lung+ space with an interior margin. The margin
// keeps boundary pixels of a spilled prediction inside every well-behaved
// candidate constraint, so out-of-constraint mass measures decoy response
// rather than shared edge blur.
BinaryMask draw_lesion(Rng& rng, const PhantomConfig& cfg, const Ellipse& left,
                       const Ellipse& right, const BinaryMask& lungs,
                       const BinaryMask& plus_space) {
  const BinaryMask placement = erode(plus_space, elliptical_element(7));
  for (int attempt = 0; attempt < 100; ++attempt) {
    const bool use_left = rng.next_below(2) == 0;
    const Ellipse& e = use_left ? left : right;
    const double lateral = use_left ? kPi : 0.0;
    const double band = rng.next_range(0.25, 0.45);
    const double arc_half = rng.next_range(25.0, 45.0) * kPi / 180.0;
    const double arc_off = rng.next_range(-20.0, 20.0) * kPi / 180.0;

    BinaryMask lesion(cfg.height, cfg.width);
    long long area = 0;
    for (int r = 0; r < cfg.height; ++r)
      for (int c = 0; c < cfg.width; ++c) {
        if (lungs.at(r, c) || !placement.at(r, c)) continue;
        const double f = ellipse_f(e, r, c);
        const double rho = std::sqrt(f);
        if (rho <= 1.0 || rho > 1.0 + band) continue;
        const double theta =
            std::atan2((r + 0.5 - e.cy) / e.ry, (c + 0.5 - e.cx) / e.rx);
        if (std::abs(wrap_angle(theta - lateral - arc_off)) > arc_half) continue;
        lesion.set(r, c, 1);
        ++area;
      }
    if (area > 0) return lesion;
  }
  throw std::logic_error("draw_lesion: could not place a nonempty lesion");
}

struct Distractors {
  BinaryMask core;
  BinaryMask arc;
};

// Decoys placed strictly outside the true lung+ space: a dark elliptical
// limb with a bright crescent on its rim, drawn with the same band widths,
// arc spans, lateral orientation, and comparable rim curvature as a real
// lesion beside a lung. Locally the pattern reads as lesion-on-lung; only
// its location and subtler cues (limb depth, inner limb edge) distinguish
// it. The limb is a rim band rather than a full ellipse so its area stays
// well below a lung and can never displace one from the top-2 components.
Distractors draw_distractors(Rng& rng, const PhantomConfig& cfg,
                             const BinaryMask& plus_space) {
  Distractors out{BinaryMask(cfg.height, cfg.width), BinaryMask(cfg.height, cfg.width)};
  BinaryMask used(cfg.height, cfg.width);
  for (int d = 0; d < cfg.n_distractors; ++d) {
    for (int attempt = 0; attempt < 120; ++attempt) {
      Ellipse e;
      e.cy = rng.next_range(0.05, 0.95) * cfg.height;
      e.cx = rng.next_range(0.05, 0.95) * cfg.width;
      e.ry = rng.next_range(0.10, 0.13) * cfg.height;
      e.rx = rng.next_range(0.07, 0.09) * cfg.width;
      const double band = rng.next_range(0.25, 0.45);
      const double lateral = rng.next_below(2) == 0 ? kPi : 0.0;
      const double dir = lateral + rng.next_range(-20.0, 20.0) * kPi / 180.0;
      const double arc_half = rng.next_range(25.0, 45.0) * kPi / 180.0;
      const double limb_half = arc_half + 12.0 * kPi / 180.0;
      long long core_area = 0, arc_area = 0;
      std::vector<std::size_t> core_px, arc_px;
      bool blocked = false;
      for (int r = 0; r < cfg.height && !blocked; ++r)
        for (int c = 0; c < cfg.width; ++c) {
          const double rho = std::sqrt(ellipse_f(e, r, c));
          if (rho <= 0.60 || rho > 1.0 + band) continue;
          const bool in_core = rho <= 1.0;
          const double theta =
              std::atan2((r + 0.5 - e.cy) / e.ry, (c + 0.5 - e.cx) / e.rx);
          const double off = std::abs(wrap_angle(theta - dir));
          if (off > (in_core ? limb_half : arc_half)) continue;
          if (plus_space.at(r, c) || used.at(r, c)) {
            blocked = true;
            break;
          }
          const std::size_t i = std::size_t(r) * cfg.width + c;
          if (in_core) {
            core_px.push_back(i);
            ++core_area;
          } else {
            arc_px.push_back(i);
            ++arc_area;
          }
        }
      // Thresholds reject border-clipped fragments that no longer read as
      // a crescent on a dark limb.
      if (blocked || core_area < 12 || arc_area < 6) continue;
      for (std::size_t i : core_px) {
        out.core.data[i] = 1;
        used.data[i] = 1;
      }
      for (std::size_t i : arc_px) {
        out.arc.data[i] = 1;
        used.data[i] = 1;
      }
      break;
    }
  }
  return out;
}

GrayImage render_image(Rng& rng, const PhantomConfig& cfg, const BinaryMask& lungs,
                       const BinaryMask* lesion, const Distractors* distract,
                       double stripe_phase) {
  GrayImage img(cfg.height, cfg.width);
  for (int r = 0; r < cfg.height; ++r) {
    const double stripe =
        cfg.stripe_amp * std::sin(2.0 * kPi * (r + stripe_phase) / cfg.stripe_period);
    for (int c = 0; c < cfg.width; ++c) {
      double v = cfg.background + stripe;
      if (lungs.at(r, c)) v += cfg.lung_delta;
      if (lesion && lesion->at(r, c)) v += cfg.lesion_delta;
      if (distract && distract->core.at(r, c)) v += cfg.distractor_core_delta;
      if (distract && distract->arc.at(r, c)) v += cfg.distractor_delta;
      v += cfg.noise_sigma * rng.next_normal();
      v = std::clamp(v, 0.0, 1.0);
      // 8-bit quantization at generation time keeps the file format lossless.
      img.set(r, c, std::round(v * 255.0) / 255.0);
    }
  }
  return img;
}

std::string sample_id(const char* prefix, int i) {
  std::ostringstream ss;
  ss << prefix << "_";
  if (i < 100) ss << (i < 10 ? "00" : "0");
  ss << i;
  return ss.str();
}

SplitIndices make_splits(int n, int train_pct, int valid_pct) {
  SplitIndices s;
  const int t = n * train_pct / 100;
  const int v = n * valid_pct / 100;
  for (int i = 0; i < t; ++i) s.train.push_back(i);
  for (int i = t; i < t + v; ++i) s.valid.push_back(i);
  for (int i = t + v; i < n; ++i) s.test.push_back(i);
  return s;
}

BinaryMask translate(const BinaryMask& m, int dr, int dc) {
  BinaryMask out(m.height, m.width);
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      const int nr = r + dr, nc = c + dc;
      if (out.in_bounds(nr, nc)) out.set(nr, nc, 1);
    }
  return out;
}

BinaryMask corrupt_one(const BinaryMask& cand, const BinaryMask& lesion, double tau,
                       Rng& rng) {
  BinaryMask last = cand;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const int mag = 10 + attempt;
    int dx = int(rng.next_below(7)) + mag;
    if (rng.next_below(2) == 1) dx = -dx;
    const int dy = int(rng.next_below(9)) - 4;
    last = translate(cand, dy, dx);
    if (last.area() > 0 && coverage_rate(last, lesion) < tau) return last;
  }
  const StructuringElement se = elliptical_element(3);
  for (int it = 0; it < 30 && last.area() > 0 && coverage_rate(last, lesion) >= tau; ++it)
    last = erode(last, se);
  return last;
}

}  // namespace

BinaryMask true_lung_plus(const BinaryMask& lung_mask) {
  ProbMap p(lung_mask.height, lung_mask.width);
  for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = lung_mask.data[i] ? 1.0 : 0.0;
  return lung_plus_space(p, LungPlusConfig{});
}

Dataset gen_lung_dataset(const PhantomConfig& cfg) {
  validate_config(cfg, cfg.n_lung, "n_lung");
  Dataset ds;
  ds.height = cfg.height;
  ds.width = cfg.width;
  ds.samples.reserve(std::size_t(cfg.n_lung));
  for (int i = 0; i < cfg.n_lung; ++i) {
    Rng rng(derive_seed(cfg.seed, "lung.sample", std::uint64_t(i)));
    const Ellipse left = draw_lung_ellipse(rng, cfg, cfg.lung_col_left);
    const Ellipse right = draw_lung_ellipse(rng, cfg, cfg.lung_col_right);
    const double phase = rng.next_range(0.0, cfg.stripe_period);
    Sample s;
    s.id = sample_id("lung", i);
    s.mask = lungs_mask(cfg, left, right);
    s.image = render_image(rng, cfg, s.mask, nullptr, nullptr, phase);
    ds.samples.push_back(std::move(s));
  }
  ds.splits = make_splits(cfg.n_lung, 70, 20);
  return ds;
}

Dataset gen_lesion_dataset(const PhantomConfig& cfg) {
  validate_config(cfg, cfg.n_lesion, "n_lesion");
  Dataset ds;
  ds.height = cfg.height;
  ds.width = cfg.width;
  ds.samples.reserve(std::size_t(cfg.n_lesion));
  for (int i = 0; i < cfg.n_lesion; ++i) {
    Rng rng(derive_seed(cfg.seed, "lesion.sample", std::uint64_t(i)));
    const Ellipse left = draw_lung_ellipse(rng, cfg, cfg.lung_col_left);
    const Ellipse right = draw_lung_ellipse(rng, cfg, cfg.lung_col_right);
    const double phase = rng.next_range(0.0, cfg.stripe_period);
    Sample s;
    s.id = sample_id("les", i);
    s.aux_lung = lungs_mask(cfg, left, right);
    const BinaryMask plus = true_lung_plus(s.aux_lung);
    s.mask = draw_lesion(rng, cfg, left, right, s.aux_lung, plus);
    const Distractors distract = draw_distractors(rng, cfg, plus);
    s.image = render_image(rng, cfg, s.aux_lung, &s.mask, &distract, phase);
    ds.samples.push_back(std::move(s));
  }
  ds.splits = make_splits(cfg.n_lesion, 70, 10);
  return ds;
}

CorruptionResult corrupt_constraints(const std::vector<BinaryMask>& candidates,
                                     const std::vector<BinaryMask>& lesions,
                                     double fraction, double tau, std::uint64_t seed) {
  if (candidates.size() != lesions.size())
    throw std::invalid_argument("corrupt_constraints: one lesion per candidate required");
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("corrupt_constraints: fraction must lie in [0,1]");
  const int n = int(candidates.size());
  const int k = int(std::floor(fraction * double(n) + 1e-9));

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng select_rng(derive_seed(seed, "corrupt.select"));
  select_rng.shuffle(order);

  CorruptionResult res;
  res.candidates = candidates;
  res.corrupted.assign(std::size_t(n), 0);
  for (int j = 0; j < k; ++j) {
    const int i = order[std::size_t(j)];
    Rng rng(derive_seed(seed, "corrupt.sample", std::uint64_t(i)));
    res.candidates[std::size_t(i)] =
        corrupt_one(candidates[std::size_t(i)], lesions[std::size_t(i)], tau, rng);
    res.corrupted[std::size_t(i)] = 1;
  }
  return res;
}

}  // namespace cseg
