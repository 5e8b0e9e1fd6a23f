#include "cseg/discriminator.hpp"

#include <cmath>
#include <stdexcept>

#include "conv_kernels.hpp"
#include "cseg/rng.hpp"

namespace cseg {

namespace {

using detail::avgpool2_backward;
using detail::avgpool2_forward;
using detail::conv3x3_backward;
using detail::conv3x3_forward;
using detail::stable_sigmoid;

constexpr int kIn = 3;
constexpr int kCA = 8;
constexpr int kCB = 16;

constexpr std::size_t kWA = std::size_t(kCA) * kIn * 9;
constexpr std::size_t kBA = kCA;
constexpr std::size_t kWB = std::size_t(kCB) * kCA * 9;
constexpr std::size_t kBB = kCB;
constexpr std::size_t kWF = 2 * std::size_t(kCB);  // head weights: [means, maxes]
constexpr std::size_t kBF = 1;

constexpr std::size_t kOffWA = 0;
constexpr std::size_t kOffBA = kOffWA + kWA;
constexpr std::size_t kOffWB = kOffBA + kBA;
constexpr std::size_t kOffBB = kOffWB + kWB;
constexpr std::size_t kOffWF = kOffBB + kBB;
constexpr std::size_t kOffBF = kOffWF + kWF;
constexpr std::size_t kNParams = kOffBF + kBF;

void check_spec(const DiscriminatorSpec& spec) {
  if (spec.height < 4 || spec.width < 4 || spec.height % 4 != 0 || spec.width % 4 != 0)
    throw std::invalid_argument("discriminator: dimensions must be multiples of 4");
}

void check_input(const DiscriminatorSpec& spec, const FusedInput& x) {
  if (x.image.height != spec.height || x.image.width != spec.width)
    throw std::invalid_argument("discriminator: input shape does not match spec");
  require_same_shape(x.image, x.constraint);
  require_same_shape(x.image, x.masked);
}

struct Acts {
  std::vector<double> x;   // kIn x h x w
  std::vector<double> aA;  // kCA x h x w, tanh
  std::vector<double> pA;  // kCA x h/2 x w/2
  std::vector<double> aB;  // kCB x h/2 x w/2, tanh
  std::vector<double> pB;  // kCB x h/4 x w/4
  std::vector<double> g;   // kCB global means
  std::vector<double> gm;  // kCB global maxes
  std::vector<std::size_t> gmi;  // argmax cell per channel, first occurrence
  double z = 0.0;                // logit
  double prob = 0.0;
};

void run_forward(const DiscriminatorSpec& spec, const std::vector<double>& params,
                 const FusedInput& in, Acts& acts) {
  const int h = spec.height, w = spec.width, h2 = h / 2, w2 = w / 2, h4 = h / 4,
            w4 = w / 4;
  const std::size_t plane = std::size_t(h) * w, plane2 = std::size_t(h2) * w2,
                    plane4 = std::size_t(h4) * w4;
  const double* P = params.data();

  acts.x.resize(kIn * plane);
  std::copy(in.image.data.begin(), in.image.data.end(), acts.x.begin());
  std::copy(in.constraint.data.begin(), in.constraint.data.end(),
            acts.x.begin() + plane);
  std::copy(in.masked.data.begin(), in.masked.data.end(), acts.x.begin() + 2 * plane);

  acts.aA.resize(kCA * plane);
  conv3x3_forward(acts.x.data(), kIn, h, w, P + kOffWA, P + kOffBA, kCA, acts.aA.data());
  for (double& v : acts.aA) v = std::tanh(v);

  acts.pA.resize(kCA * plane2);
  avgpool2_forward(acts.aA.data(), kCA, h, w, acts.pA.data());

  acts.aB.resize(kCB * plane2);
  conv3x3_forward(acts.pA.data(), kCA, h2, w2, P + kOffWB, P + kOffBB, kCB,
                  acts.aB.data());
  for (double& v : acts.aB) v = std::tanh(v);

  acts.pB.resize(kCB * plane4);
  avgpool2_forward(acts.aB.data(), kCB, h2, w2, acts.pB.data());

  acts.g.assign(kCB, 0.0);
  acts.gm.assign(kCB, 0.0);
  acts.gmi.assign(kCB, 0);
  for (int ch = 0; ch < kCB; ++ch) {
    const double* p = acts.pB.data() + ch * plane4;
    double s = p[0], m = p[0];
    std::size_t mi = 0;
    for (std::size_t i = 1; i < plane4; ++i) {
      s += p[i];
      if (p[i] > m) { m = p[i]; mi = i; }
    }
    acts.g[std::size_t(ch)] = s / double(plane4);
    acts.gm[std::size_t(ch)] = m;
    acts.gmi[std::size_t(ch)] = mi;
  }

  double z = P[kOffBF];
  for (int ch = 0; ch < kCB; ++ch) {
    z += P[kOffWF + ch] * acts.g[std::size_t(ch)];
    z += P[kOffWF + kCB + ch] * acts.gm[std::size_t(ch)];
  }
  acts.z = z;
  acts.prob = stable_sigmoid(z);
}

// dz is dLoss/dlogit. Parameter gradients are accumulated with +=.
void run_backward(const DiscriminatorSpec& spec, const std::vector<double>& params,
                  const Acts& acts, double dz, std::vector<double>& grads) {
  const int h = spec.height, w = spec.width, h2 = h / 2, w2 = w / 2, h4 = h / 4,
            w4 = w / 4;
  const std::size_t plane = std::size_t(h) * w, plane2 = std::size_t(h2) * w2,
                    plane4 = std::size_t(h4) * w4;
  const double* P = params.data();
  double* G = grads.data();

  G[kOffBF] += dz;
  for (int ch = 0; ch < kCB; ++ch) {
    G[kOffWF + ch] += dz * acts.g[std::size_t(ch)];
    G[kOffWF + kCB + ch] += dz * acts.gm[std::size_t(ch)];
  }

  thread_local std::vector<double> dpB, daB, dpA, daA;
  dpB.resize(kCB * plane4);
  for (int ch = 0; ch < kCB; ++ch) {
    const double dg = dz * P[kOffWF + ch] / double(plane4);
    std::fill(dpB.begin() + ch * plane4, dpB.begin() + (ch + 1) * plane4, dg);
    // Max path routes to the first-occurrence argmax cell only.
    dpB[std::size_t(ch) * plane4 + acts.gmi[std::size_t(ch)]] +=
        dz * P[kOffWF + kCB + ch];
  }

  daB.assign(kCB * plane2, 0.0);
  avgpool2_backward(dpB.data(), kCB, h2, w2, daB.data());
  for (std::size_t i = 0; i < daB.size(); ++i) daB[i] *= 1.0 - acts.aB[i] * acts.aB[i];

  dpA.assign(kCA * plane2, 0.0);
  conv3x3_backward(acts.pA.data(), kCA, h2, w2, P + kOffWB, kCB, daB.data(), G + kOffWB,
                   G + kOffBB, dpA.data());

  daA.assign(kCA * plane, 0.0);
  avgpool2_backward(dpA.data(), kCA, h, w, daA.data());
  for (std::size_t i = 0; i < daA.size(); ++i) daA[i] *= 1.0 - acts.aA[i] * acts.aA[i];

  conv3x3_backward(acts.x.data(), kIn, h, w, P + kOffWA, kCA, daA.data(), G + kOffWA,
                   G + kOffBA, nullptr);
}

// Stable binary cross-entropy on the logit: softplus(z) - b*z.
double ce_loss(double z, int label) {
  const double sp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return sp - double(label) * z;
}

}  // namespace

FusedInput fuse(const GrayImage& image, const BinaryMask& constraint) {
  require_same_shape(image, constraint);
  FusedInput f;
  f.image = image;
  f.constraint = RealGrid(image.height, image.width);
  f.masked = RealGrid(image.height, image.width);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double c = constraint.data[i] ? 1.0 : 0.0;
    f.constraint.data[i] = c;
    f.masked.data[i] = image.data[i] * c;
  }
  return f;
}

std::size_t discriminator_param_count(const DiscriminatorSpec& spec) {
  check_spec(spec);
  return kNParams;
}

std::vector<double> init_discriminator_params(const DiscriminatorSpec& spec,
                                              std::uint64_t seed) {
  check_spec(spec);
  std::vector<double> p(kNParams, 0.0);
  Rng rng(seed);
  struct LayerInit {
    std::size_t off, n;
    int fan_in, fan_out;
  };
  const LayerInit layers[] = {
      {kOffWA, kWA, kIn * 9, kCA * 9},
      {kOffWB, kWB, kCA * 9, kCB * 9},
      {kOffWF, kWF, 2 * kCB, 1},
  };
  for (const auto& l : layers) {
    const double s = std::sqrt(6.0 / double(l.fan_in + l.fan_out));
    for (std::size_t i = 0; i < l.n; ++i) p[l.off + i] = rng.next_range(-s, s);
  }
  return p;
}

double score(const Classifier& clf, const FusedInput& input) {
  check_spec(clf.spec);
  check_input(clf.spec, input);
  if (clf.params.size() != kNParams)
    throw std::invalid_argument("discriminator: parameter vector has wrong length");
  thread_local Acts acts;
  run_forward(clf.spec, clf.params, input, acts);
  return acts.prob;
}

Classifier train_discriminator(const std::vector<LabeledFused>& train,
                               const std::vector<LabeledFused>& valid, std::uint64_t seed,
                               const TrainConfig& cfg_in) {
  if (train.empty() || valid.empty())
    throw std::invalid_argument("train_discriminator: both splits must be nonempty");
  bool any_pos = false, any_neg = false;
  for (const auto& s : train) (s.label ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg)
    throw std::invalid_argument(
        "train_discriminator: degenerate labels, both classes required");

  Classifier clf;
  clf.spec.height = train.front().input.image.height;
  clf.spec.width = train.front().input.image.width;
  check_spec(clf.spec);
  for (const auto& s : train) check_input(clf.spec, s.input);
  for (const auto& s : valid) check_input(clf.spec, s.input);

  TrainConfig cfg = cfg_in;
  cfg.seed = seed;
  clf.params = init_discriminator_params(clf.spec, derive_seed(seed, "disc.init"));

  BatchObjective batch_obj = [&](const std::vector<double>& params,
                                 const std::vector<int>& batch,
                                 std::vector<double>& grad_accum) {
    const double scale = 1.0 / double(batch.size());
    double sum = 0.0;
    thread_local Acts acts;
    for (int idx : batch) {
      const LabeledFused& s = train[std::size_t(idx)];
      run_forward(clf.spec, params, s.input, acts);
      sum += ce_loss(acts.z, s.label);
      const double dz = scale * (acts.prob - double(s.label));
      run_backward(clf.spec, params, acts, dz, grad_accum);
    }
    return sum * scale;
  };

  ValidObjective valid_obj = [&](const std::vector<double>& params) {
    double sum = 0.0;
    thread_local Acts acts;
    for (const LabeledFused& s : valid) {
      run_forward(clf.spec, params, s.input, acts);
      sum += ce_loss(acts.z, s.label);
    }
    return sum / double(valid.size());
  };

  clf.history = sgd_train(clf.params, int(train.size()), batch_obj, valid_obj, cfg);
  return clf;
}

CutoffResult cutoff_for_specificity(const std::vector<double>& scores_neg,
                                    double target_spec, double step) {
  if (scores_neg.empty())
    throw std::invalid_argument("cutoff_for_specificity: need negative scores");
  if (!(target_spec > 0.0 && target_spec < 1.0))
    throw std::invalid_argument("cutoff_for_specificity: target must lie in (0,1)");
  if (!(step > 0.0)) throw std::invalid_argument("cutoff_for_specificity: step must be > 0");
  constexpr double kGridTol = 1e-12;
  const double n = double(scores_neg.size());
  for (int k = 0;; ++k) {
    double g = k * step;
    const bool last = g >= 1.0;
    if (last) g = 1.0;
    long long below = 0;
    for (double s : scores_neg) below += (s < g - kGridTol);
    if (double(below) / n >= target_spec) return {g, false};
    if (last) break;
  }
  return {1.0, true};
}

std::vector<uint8_t> apply_cutoff(const std::vector<double>& scores, double cutoff) {
  constexpr double kGridTol = 1e-12;
  std::vector<uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out[i] = scores[i] >= cutoff - kGridTol ? 1 : 0;
  return out;
}

}  // namespace cseg
