#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "cseg/losses.hpp"
#include "cseg/mask.hpp"
#include "cseg/rng.hpp"
#include "cseg/segnet.hpp"

using cseg::BinaryMask;
using cseg::GrayImage;
using cseg::NetworkSpec;
using cseg::Params;
using cseg::ProbMap;

namespace {

GrayImage random_image(cseg::Rng& rng, int h, int w) {
  GrayImage img(h, w);
  for (auto& v : img.data) v = rng.next_double();
  return img;
}

// one-blob toy sample: bright square on dark ground, target = the square
cseg::SegSample blob_sample(cseg::Rng& rng, int h, int w) {
  cseg::SegSample s;
  s.image = GrayImage(h, w, 0.2);
  s.target = BinaryMask(h, w);
  int r0 = 1 + int(rng.next_below(std::uint64_t(h - 6)));
  int c0 = 1 + int(rng.next_below(std::uint64_t(w - 6)));
  for (int r = r0; r < r0 + 4; ++r)
    for (int c = c0; c < c0 + 4; ++c) {
      s.image.set(r, c, 0.9);
      s.target.set(r, c, 1);
    }
  s.constraint = cseg::all_ones(h, w);
  return s;
}

}  // namespace

TEST_CASE("init_params determinism, bounds, zero biases") {
  NetworkSpec spec{8, 8};
  Params a = cseg::init_params(spec, 100);
  Params b = cseg::init_params(spec, 100);
  Params c = cseg::init_params(spec, 101);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == cseg::param_count(spec));
  CHECK(cseg::param_count(spec) <= 100000);

  // widest layer bound: fan_in = fan_out = 3*3 gives s ~ 0.577; every layer
  // here has s <= sqrt(6/81)
  double bound = std::sqrt(6.0 / 81.0) + 1e-12;
  long long zeros = 0;
  for (double v : a) {
    CHECK(std::abs(v) <= bound);
    if (v == 0.0) ++zeros;
  }
  // biases (8 + 16 + 8 + 1 of them) start at exactly zero
  CHECK(zeros >= 33);
}

TEST_CASE("forward shape, range, zero-params logistic midpoint") {
  NetworkSpec spec{8, 10};
  cseg::Rng rng(3);
  GrayImage img = random_image(rng, 8, 10);

  Params zero(cseg::param_count(spec), 0.0);
  ProbMap y = cseg::forward(spec, zero, img);
  REQUIRE(y.height == 8);
  REQUIRE(y.width == 10);
  for (double v : y.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

  Params p = cseg::init_params(spec, 5);
  ProbMap y2 = cseg::forward(spec, p, img);
  for (double v : y2.data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // deterministic forward
  CHECK(cseg::forward(spec, p, img) == y2);
}

TEST_CASE("forward validates shapes") {
  NetworkSpec spec{8, 8};
  Params p = cseg::init_params(spec, 1);
  CHECK_THROWS_AS((void)cseg::forward(spec, p, GrayImage(8, 6, 0.5)), std::invalid_argument);
  CHECK_THROWS_AS((void)cseg::forward(NetworkSpec{7, 8}, p, GrayImage(7, 8, 0.5)),
                  std::invalid_argument);
  Params wrong(p.size() - 1, 0.0);
  CHECK_THROWS_AS((void)cseg::forward(spec, wrong, GrayImage(8, 8, 0.5)), std::invalid_argument);
}

TEST_CASE("backward: zero loss_grad and linearity") {
  NetworkSpec spec{8, 8};
  cseg::Rng rng(9);
  GrayImage img = random_image(rng, 8, 8);
  Params p = cseg::init_params(spec, 7);

  cseg::RealGrid zero_grad(8, 8, 0.0);
  cseg::ParamGrads g0 = cseg::backward(spec, p, img, zero_grad);
  for (double v : g0) CHECK(v == 0.0);

  cseg::RealGrid lg(8, 8);
  for (auto& v : lg.data) v = rng.next_range(-1.0, 1.0);
  cseg::RealGrid lg2 = lg;
  for (auto& v : lg2.data) v *= 2.0;
  cseg::ParamGrads g1 = cseg::backward(spec, p, img, lg);
  cseg::ParamGrads g2 = cseg::backward(spec, p, img, lg2);
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
}

TEST_CASE("accumulate_loss_grad equals forward+backward composition") {
  NetworkSpec spec{8, 8};
  cseg::Rng rng(13);
  GrayImage img = random_image(rng, 8, 8);
  Params p = cseg::init_params(spec, 21);
  BinaryMask s(8, 8);
  for (int r = 2; r < 5; ++r)
    for (int c = 2; c < 5; ++c) s.set(r, c, 1);

  auto objective = [&](const ProbMap& y) { return cseg::dice_loss(y, s); };

  ProbMap y = cseg::forward(spec, p, img);
  cseg::LossResult lr = cseg::dice_loss(y, s);
  cseg::ParamGrads want = cseg::backward(spec, p, img, lr.grad);

  cseg::ParamGrads got(p.size(), 0.0);
  double value = cseg::accumulate_loss_grad(spec, p, img, objective, got, 1.0);
  CHECK(value == doctest::Approx(lr.value).epsilon(1e-12));
  for (size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // scale accumulates additively
  cseg::ParamGrads twice(p.size(), 0.0);
  cseg::accumulate_loss_grad(spec, p, img, objective, twice, 0.5);
  cseg::accumulate_loss_grad(spec, p, img, objective, twice, 0.5);
  for (size_t i = 0; i < twice.size(); ++i)
    CHECK(twice[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("end-to-end gradient check against central differences") {
  NetworkSpec spec{8, 8};
  cseg::Rng rng(31);
  GrayImage img = random_image(rng, 8, 8);
  BinaryMask s(8, 8), c(8, 8);
  for (int r = 1; r < 4; ++r)
    for (int col = 1; col < 4; ++col) s.set(r, col, 1);
  for (int r = 0; r < 6; ++r)
    for (int col = 0; col < 6; ++col) c.set(r, col, 1);

  for (double lambda : {0.0, 1.0}) {
    Params p = cseg::init_params(spec, 77);
    auto value_at = [&](const Params& q) {
      ProbMap y = cseg::forward(spec, q, img);
      return cseg::constrained_loss(y, s, c, lambda).value;
    };
    ProbMap y = cseg::forward(spec, p, img);
    cseg::LossResult lr = cseg::constrained_loss(y, s, c, lambda);
    cseg::ParamGrads g = cseg::backward(spec, p, img, lr.grad);

    const double h = 1e-5;
    for (int probe = 0; probe < 12; ++probe) {
      size_t j = size_t(rng.next_below(p.size()));
      Params q = p;
      q[j] += h;
      double up = value_at(q);
      q[j] -= 2 * h;
      double dn = value_at(q);
      double fd = (up - dn) / (2 * h);
      double denom = std::max({std::abs(fd), std::abs(g[j]), 1e-8});
      CHECK(std::abs(fd - g[j]) / denom < 1e-4);
    }
  }
}

TEST_CASE("sgd_train: constant objective leaves parameters unchanged") {
  std::vector<double> params = {0.3, -0.2, 1.0};
  std::vector<double> initial = params;
  cseg::TrainConfig cfg;
  cfg.plateau_patience = 2;
  cfg.early_stop_patience = 5;
  cfg.max_epochs = 50;
  cfg.batch_size = 2;
  cfg.seed = 4;

  auto batch_obj = [](const std::vector<double>&, const std::vector<int>&,
                      std::vector<double>&) { return 0.7; };
  auto valid_obj = [](const std::vector<double>&) { return 0.7; };

  cseg::TrainHistory h = cseg::sgd_train(params, 4, batch_obj, valid_obj, cfg);
  CHECK(params == initial);
  CHECK(h.early_stopped);
  // epoch 1 sets the best; early_stop_patience stagnant epochs follow
  CHECK(int(h.epochs.size()) == 1 + cfg.early_stop_patience);
  CHECK(h.best_epoch == 1);

  // plateau schedule: lr drops by 0.9 after every 2 stagnant epochs;
  // the epoch after the second trigger runs at 0.01 * 0.9^2
  CHECK(h.epochs[0].lr == doctest::Approx(0.01));
  CHECK(h.epochs[3].lr == doctest::Approx(0.009).epsilon(1e-12));
  CHECK(h.epochs[5].lr == doctest::Approx(0.0081).epsilon(1e-12));
  for (size_t i = 1; i < h.epochs.size(); ++i) CHECK(h.epochs[i].lr <= h.epochs[i - 1].lr);
}

TEST_CASE("training lowers dice loss on a one-blob dataset and restores the best epoch") {
  cseg::Rng rng(55);
  cseg::SegTrainData data;
  for (int i = 0; i < 8; ++i) data.train.push_back(blob_sample(rng, 8, 8));
  for (int i = 0; i < 3; ++i) data.valid.push_back(blob_sample(rng, 8, 8));

  NetworkSpec spec{8, 8};
  Params init = cseg::init_params(spec, 42);
  cseg::TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.batch_size = 1;
  cfg.early_stop_patience = 30;
  cfg.seed = 42;

  cseg::SegTrainResult res = cseg::train_segmenter(spec, init, data, 0.0, cfg);
  REQUIRE(!res.history.epochs.empty());
  CHECK(res.history.epochs.back().train_loss < res.history.epochs.front().train_loss);

  // returned parameters reproduce the minimum recorded validation loss
  double min_valid = res.history.epochs.front().valid_loss;
  for (const auto& e : res.history.epochs) min_valid = std::min(min_valid, e.valid_loss);
  CHECK(res.history.best_valid == doctest::Approx(min_valid).epsilon(1e-15));
  double reval = 0.0;
  for (const auto& s : data.valid) {
    ProbMap y = cseg::forward(spec, res.params, s.image);
    reval += cseg::dice_loss(y, s.target).value;
  }
  reval /= double(data.valid.size());
  CHECK(reval == doctest::Approx(res.history.best_valid).epsilon(1e-9));
}

TEST_CASE("training is bit-reproducible per seed") {
  cseg::Rng rng(66);
  cseg::SegTrainData data;
  for (int i = 0; i < 5; ++i) data.train.push_back(blob_sample(rng, 8, 8));
  for (int i = 0; i < 2; ++i) data.valid.push_back(blob_sample(rng, 8, 8));

  NetworkSpec spec{8, 8};
  Params init = cseg::init_params(spec, 9);
  cseg::TrainConfig cfg;
  cfg.max_epochs = 8;
  cfg.batch_size = 2;
  cfg.seed = 31337;

  cseg::SegTrainResult a = cseg::train_segmenter(spec, init, data, 0.4, cfg);
  cseg::SegTrainResult b = cseg::train_segmenter(spec, init, data, 0.4, cfg);
  CHECK(a.params == b.params);
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (size_t i = 0; i < a.history.epochs.size(); ++i) {
    CHECK(a.history.epochs[i].train_loss == b.history.epochs[i].train_loss);
    CHECK(a.history.epochs[i].valid_loss == b.history.epochs[i].valid_loss);
    CHECK(a.history.epochs[i].lr == b.history.epochs[i].lr);
  }
}

TEST_CASE("train config validation") {
  std::vector<double> params = {0.0};
  auto bo = [](const std::vector<double>&, const std::vector<int>&, std::vector<double>&) {
    return 0.0;
  };
  auto vo = [](const std::vector<double>&) { return 0.0; };
  cseg::TrainConfig bad;
  bad.lr0 = 0.0;
  CHECK_THROWS_AS((void)cseg::sgd_train(params, 1, bo, vo, bad), std::invalid_argument);
  bad = {};
  bad.plateau_factor = 1.0;
  CHECK_THROWS_AS((void)cseg::sgd_train(params, 1, bo, vo, bad), std::invalid_argument);
  bad = {};
  bad.batch_size = 0;
  CHECK_THROWS_AS((void)cseg::sgd_train(params, 1, bo, vo, bad), std::invalid_argument);
}
