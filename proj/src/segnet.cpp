#include "cseg/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
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

constexpr int kC1 = 8;    // encoder level 1
constexpr int kC2 = 16;   // encoder level 2 (half resolution)
constexpr int kC3 = 8;    // decoder
constexpr int kCat = kC1 + kC2;

constexpr std::size_t kW1 = std::size_t(kC1) * 1 * 9;
constexpr std::size_t kB1 = kC1;
constexpr std::size_t kW2 = std::size_t(kC2) * kC1 * 9;
constexpr std::size_t kB2 = kC2;
constexpr std::size_t kW3 = std::size_t(kC3) * kCat * 9;
constexpr std::size_t kB3 = kC3;
constexpr std::size_t kW4 = std::size_t(1) * kC3 * 9;
constexpr std::size_t kB4 = 1;

constexpr std::size_t kOffW1 = 0;
constexpr std::size_t kOffB1 = kOffW1 + kW1;
constexpr std::size_t kOffW2 = kOffB1 + kB1;
constexpr std::size_t kOffB2 = kOffW2 + kW2;
constexpr std::size_t kOffW3 = kOffB2 + kB2;
constexpr std::size_t kOffB3 = kOffW3 + kW3;
constexpr std::size_t kOffW4 = kOffB3 + kB3;
constexpr std::size_t kOffB4 = kOffW4 + kW4;
constexpr std::size_t kNParams = kOffB4 + kB4;

struct Acts {
  int h = 0, w = 0, h2 = 0, w2 = 0;
  std::vector<double> a1;   // kC1 x h x w, tanh
  std::vector<double> p1;   // kC1 x h2 x w2
  std::vector<double> a2;   // kC2 x h2 x w2, tanh
  std::vector<double> cat;  // kCat x h x w: [a1, upsample(a2)]
  std::vector<double> a3;   // kC3 x h x w, tanh
  std::vector<double> y;    // h x w, logistic
};

void check_spec(const NetworkSpec& spec, const Params& params, const GrayImage& image) {
  if (spec.height < 2 || spec.width < 2 || spec.height % 2 != 0 || spec.width % 2 != 0)
    throw std::invalid_argument("segnet: spec dimensions must be even and >= 2");
  if (image.height != spec.height || image.width != spec.width)
    throw std::invalid_argument("segnet: image shape does not match spec");
  if (params.size() != kNParams)
    throw std::invalid_argument("segnet: parameter vector has wrong length");
}

void run_forward(const NetworkSpec& spec, const Params& params, const GrayImage& image,
                 Acts& acts) {
  const int h = spec.height, w = spec.width, h2 = h / 2, w2 = w / 2;
  acts.h = h; acts.w = w; acts.h2 = h2; acts.w2 = w2;
  const std::size_t plane = std::size_t(h) * w, plane2 = std::size_t(h2) * w2;
  const double* P = params.data();

  // Conv and pool outputs are fully overwritten, so buffers only resize.
  acts.a1.resize(kC1 * plane);
  conv3x3_forward(image.data.data(), 1, h, w, P + kOffW1, P + kOffB1, kC1, acts.a1.data());
  for (double& v : acts.a1) v = std::tanh(v);

  acts.p1.resize(kC1 * plane2);
  avgpool2_forward(acts.a1.data(), kC1, h, w, acts.p1.data());

  acts.a2.resize(kC2 * plane2);
  conv3x3_forward(acts.p1.data(), kC1, h2, w2, P + kOffW2, P + kOffB2, kC2, acts.a2.data());
  for (double& v : acts.a2) v = std::tanh(v);

  acts.cat.resize(kCat * plane);
  std::copy(acts.a1.begin(), acts.a1.end(), acts.cat.begin());
  for (int ch = 0; ch < kC2; ++ch) {
    const double* a = acts.a2.data() + ch * plane2;
    double* u = acts.cat.data() + (kC1 + ch) * plane;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        u[std::size_t(r) * w + c] = a[std::size_t(r / 2) * w2 + c / 2];
  }

  acts.a3.resize(kC3 * plane);
  conv3x3_forward(acts.cat.data(), kCat, h, w, P + kOffW3, P + kOffB3, kC3, acts.a3.data());
  for (double& v : acts.a3) v = std::tanh(v);

  acts.y.resize(plane);
  conv3x3_forward(acts.a3.data(), kC3, h, w, P + kOffW4, P + kOffB4, 1, acts.y.data());
  for (double& v : acts.y) v = stable_sigmoid(v);
}

void run_backward(const NetworkSpec& spec, const Params& params, const GrayImage& image,
                  const Acts& acts, const std::vector<double>& dy, ParamGrads& grads) {
  const int h = acts.h, w = acts.w, h2 = acts.h2, w2 = acts.w2;
  const std::size_t plane = std::size_t(h) * w, plane2 = std::size_t(h2) * w2;
  const double* P = params.data();
  double* G = grads.data();
  (void)spec;

  // Scratch persists per thread; the conv backward accumulates, so buffers
  // that feed it start zeroed.
  thread_local std::vector<double> dz4, da3, dcat, da2, dp1, da1;

  dz4.resize(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    double y = acts.y[i];
    dz4[i] = dy[i] * y * (1.0 - y);
  }

  da3.assign(kC3 * plane, 0.0);
  conv3x3_backward(acts.a3.data(), kC3, h, w, P + kOffW4, 1, dz4.data(), G + kOffW4,
                   G + kOffB4, da3.data());
  for (std::size_t i = 0; i < da3.size(); ++i) da3[i] *= 1.0 - acts.a3[i] * acts.a3[i];

  dcat.assign(kCat * plane, 0.0);
  conv3x3_backward(acts.cat.data(), kCat, h, w, P + kOffW3, kC3, da3.data(), G + kOffW3,
                   G + kOffB3, dcat.data());

  da2.assign(kC2 * plane2, 0.0);
  for (int ch = 0; ch < kC2; ++ch) {
    const double* du = dcat.data() + (kC1 + ch) * plane;
    double* d = da2.data() + ch * plane2;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        d[std::size_t(r / 2) * w2 + c / 2] += du[std::size_t(r) * w + c];
  }
  for (std::size_t i = 0; i < da2.size(); ++i) da2[i] *= 1.0 - acts.a2[i] * acts.a2[i];

  dp1.assign(kC1 * plane2, 0.0);
  conv3x3_backward(acts.p1.data(), kC1, h2, w2, P + kOffW2, kC2, da2.data(), G + kOffW2,
                   G + kOffB2, dp1.data());

  da1.assign(dcat.begin(), dcat.begin() + kC1 * plane);
  avgpool2_backward(dp1.data(), kC1, h, w, da1.data());
  for (std::size_t i = 0; i < da1.size(); ++i) da1[i] *= 1.0 - acts.a1[i] * acts.a1[i];

  conv3x3_backward(image.data.data(), 1, h, w, P + kOffW1, kC1, da1.data(), G + kOffW1,
                   G + kOffB1, nullptr);
}

}  // namespace

std::size_t param_count(const NetworkSpec&) { return kNParams; }

Params init_params(const NetworkSpec& spec, std::uint64_t seed) {
  (void)spec;
  Params p(kNParams, 0.0);
  Rng rng(seed);
  struct LayerInit {
    std::size_t off, n;
    int fan_in, fan_out;
  };
  const LayerInit layers[] = {
      {kOffW1, kW1, 1 * 9, kC1 * 9},
      {kOffW2, kW2, kC1 * 9, kC2 * 9},
      {kOffW3, kW3, kCat * 9, kC3 * 9},
      {kOffW4, kW4, kC3 * 9, 1 * 9},
  };
  for (const auto& l : layers) {
    const double s = std::sqrt(6.0 / double(l.fan_in + l.fan_out));
    for (std::size_t i = 0; i < l.n; ++i) p[l.off + i] = rng.next_range(-s, s);
  }
  return p;
}

ProbMap forward(const NetworkSpec& spec, const Params& params, const GrayImage& image) {
  check_spec(spec, params, image);
  thread_local Acts acts;
  run_forward(spec, params, image, acts);
  ProbMap out(spec.height, spec.width);
  out.data = std::move(acts.y);
  return out;
}

ParamGrads backward(const NetworkSpec& spec, const Params& params, const GrayImage& image,
                    const RealGrid& loss_grad) {
  check_spec(spec, params, image);
  if (loss_grad.height != spec.height || loss_grad.width != spec.width)
    throw std::invalid_argument("backward: loss_grad shape does not match output");
  Acts acts;
  run_forward(spec, params, image, acts);
  ParamGrads grads(kNParams, 0.0);
  run_backward(spec, params, image, acts, loss_grad.data, grads);
  return grads;
}

double accumulate_loss_grad(const NetworkSpec& spec, const Params& params,
                            const GrayImage& image,
                            const std::function<LossResult(const ProbMap&)>& objective,
                            ParamGrads& accum, double scale) {
  check_spec(spec, params, image);
  if (accum.size() != kNParams)
    throw std::invalid_argument("accumulate_loss_grad: accumulator has wrong length");
  thread_local Acts acts;
  thread_local ProbMap y;
  thread_local ParamGrads grads;
  run_forward(spec, params, image, acts);
  y.height = spec.height;
  y.width = spec.width;
  y.data = acts.y;
  LossResult res = objective(y);
  grads.assign(kNParams, 0.0);
  run_backward(spec, params, image, acts, res.grad.data, grads);
  for (std::size_t i = 0; i < kNParams; ++i) accum[i] += scale * grads[i];
  return res.value;
}

namespace {

void check_train_config(const TrainConfig& cfg) {
  if (!(cfg.lr0 > 0.0)) throw std::invalid_argument("train: lr0 must be positive");
  if (!(cfg.plateau_factor > 0.0 && cfg.plateau_factor < 1.0))
    throw std::invalid_argument("train: plateau_factor must lie in (0,1)");
  if (cfg.plateau_patience < 1 || cfg.early_stop_patience < 1)
    throw std::invalid_argument("train: patiences must be >= 1");
  if (cfg.max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
}

[[noreturn]] void abort_non_finite(const char* where, int epoch, double lr, int sample) {
  std::ostringstream msg;
  msg << "training aborted: non-finite " << where << " loss at epoch " << epoch
      << ", lr " << lr << ", sample " << sample;
  throw std::runtime_error(msg.str());
}

}  // namespace

TrainHistory sgd_train(std::vector<double>& params, int n_train,
                       const BatchObjective& batch_objective,
                       const ValidObjective& valid_objective, const TrainConfig& cfg) {
  check_train_config(cfg);
  if (n_train < 1) throw std::invalid_argument("train: need at least one training sample");

  TrainHistory hist;
  std::vector<double> best_params = params;
  double best_valid = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int bad_epochs = 0;  // consecutive epochs without strict improvement
  double lr = cfg.lr0;

  std::vector<int> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(params.size());
  std::vector<int> batch;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "epoch.shuffle", std::uint64_t(epoch)));
    shuffle_rng.shuffle(order);

    const double epoch_lr = lr;
    double loss_sum = 0.0;
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      const int end = std::min(n_train, start + cfg.batch_size);
      batch.assign(order.begin() + start, order.begin() + end);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double batch_loss = batch_objective(params, batch, grad);
      if (!std::isfinite(batch_loss))
        abort_non_finite("train", epoch, epoch_lr, batch.front());
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= epoch_lr * grad[i];
      loss_sum += batch_loss * double(batch.size());
    }
    const double train_loss = loss_sum / double(n_train);

    const double valid_loss = valid_objective(params);
    if (!std::isfinite(valid_loss)) abort_non_finite("validation", epoch, epoch_lr, -1);

    hist.epochs.push_back({epoch, train_loss, valid_loss, epoch_lr});

    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best_params = params;
      best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs % cfg.plateau_patience == 0) lr *= cfg.plateau_factor;
      if (bad_epochs >= cfg.early_stop_patience) {
        hist.early_stopped = true;
        break;
      }
    }
  }

  params = best_params;
  hist.best_epoch = best_epoch;
  hist.best_valid = best_valid;
  return hist;
}

SegTrainResult train_segmenter(const NetworkSpec& spec, const Params& init,
                               const SegTrainData& data, double lambda,
                               const TrainConfig& cfg) {
  if (data.train.empty() || data.valid.empty())
    throw std::invalid_argument("train_segmenter: both splits must be nonempty");
  if (init.size() != kNParams)
    throw std::invalid_argument("train_segmenter: parameter vector has wrong length");

  auto sample_objective = [lambda](const SegSample& s) {
    return [&s, lambda](const ProbMap& y) {
      return constrained_loss(y, s.target, s.constraint, lambda);
    };
  };

  BatchObjective batch_obj = [&](const std::vector<double>& params,
                                 const std::vector<int>& batch,
                                 std::vector<double>& grad_accum) {
    const double scale = 1.0 / double(batch.size());
    double sum = 0.0;
    for (int idx : batch) {
      const SegSample& s = data.train[std::size_t(idx)];
      sum += accumulate_loss_grad(spec, params, s.image, sample_objective(s), grad_accum,
                                  scale);
    }
    return sum * scale;
  };

  ValidObjective valid_obj = [&](const std::vector<double>& params) {
    double sum = 0.0;
    for (const SegSample& s : data.valid) {
      ProbMap y = forward(spec, params, s.image);
      sum += constrained_loss(y, s.target, s.constraint, lambda).value;
    }
    return sum / double(data.valid.size());
  };

  SegTrainResult res;
  res.params = init;
  res.history = sgd_train(res.params, int(data.train.size()), batch_obj, valid_obj, cfg);
  return res;
}

}  // namespace cseg
