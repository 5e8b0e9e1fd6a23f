#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cseg/discriminator.hpp"
#include "cseg/mask.hpp"
#include "cseg/metrics.hpp"
#include "cseg/rng.hpp"

using namespace cseg;

namespace {

// Bright 4x4 block in the top-left quadrant; the "good" constraint is a box
// around it, the "bad" constraint the same box shifted to the opposite
// quadrant so it misses the block entirely.
LabeledFused block_case(Rng& rng, int label) {
  const int h = 16, w = 16;
  const int r0 = 1 + int(rng.next_below(3));
  const int c0 = 1 + int(rng.next_below(3));

  GrayImage img(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) img.set(r, c, 0.3 + 0.02 * rng.next_range(-1.0, 1.0));
  for (int r = r0; r < r0 + 4; ++r)
    for (int c = c0; c < c0 + 4; ++c) img.set(r, c, 0.9);

  BinaryMask box(h, w);
  const int dr = label ? 0 : 8, dc = label ? 0 : 8;
  for (int r = r0 - 1 + dr; r <= r0 + 4 + dr; ++r)
    for (int c = c0 - 1 + dc; c <= c0 + 4 + dc; ++c)
      if (r >= 0 && r < h && c >= 0 && c < w) box.set(r, c, true);

  return LabeledFused{fuse(img, box), label};
}

std::vector<LabeledFused> block_set(std::uint64_t seed, int n_per_class) {
  Rng rng(seed);
  std::vector<LabeledFused> out;
  for (int i = 0; i < n_per_class; ++i) {
    out.push_back(block_case(rng, 1));
    out.push_back(block_case(rng, 0));
  }
  return out;
}

}  // namespace

TEST_CASE("fuse builds the exact image/constraint/product planes") {
  GrayImage img(2, 3);
  const double vals[] = {0.1, 0.5, 0.9, 0.2, 0.7, 1.0};
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = vals[i];

  BinaryMask c(2, 3);
  c.set(0, 1, true);
  c.set(1, 0, true);
  c.set(1, 2, true);

  const FusedInput f = fuse(img, c);
  CHECK(f.image == img);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(f.constraint.data[i] == (c.data[i] ? 1.0 : 0.0));
    CHECK(f.masked.data[i] == img.data[i] * f.constraint.data[i]);
  }
  CHECK(f.masked.data[0] == 0.0);
  CHECK(f.masked.data[1] == 0.5);
}

TEST_CASE("fuse with all-ones constraint passes the image through bit-exact") {
  Rng rng(77);
  GrayImage img(4, 4);
  for (double& v : img.data) v = rng.next_double();
  const FusedInput f = fuse(img, all_ones(4, 4));
  CHECK(f.masked == img);
  for (double v : f.constraint.data) CHECK(v == 1.0);
}

TEST_CASE("fuse with empty constraint zeroes the product plane") {
  GrayImage img(4, 4);
  for (double& v : img.data) v = 0.6;
  const FusedInput f = fuse(img, BinaryMask(4, 4));
  for (double v : f.masked.data) CHECK(v == 0.0);
  for (double v : f.constraint.data) CHECK(v == 0.0);
}

TEST_CASE("fuse rejects mismatched shapes") {
  CHECK_THROWS_AS(fuse(GrayImage(4, 4), BinaryMask(4, 5)), std::invalid_argument);
}

TEST_CASE("parameter layout: count, determinism, bounds, zero biases") {
  const DiscriminatorSpec spec{16, 16};
  const std::size_t n = discriminator_param_count(spec);
  // 3->8 conv (216+8), 8->16 conv (1152+16), mean+max head (32+1).
  CHECK(n == 1425);

  const auto p1 = init_discriminator_params(spec, 5);
  const auto p2 = init_discriminator_params(spec, 5);
  const auto p3 = init_discriminator_params(spec, 6);
  CHECK(p1.size() == n);
  CHECK(p1 == p2);
  CHECK(p1 != p3);

  // Widest Glorot interval across layers is the head's (fan 32 -> 1).
  const double bound = std::sqrt(6.0 / (32.0 + 1.0)) + 1e-12;
  int zeros = 0;
  for (double v : p1) {
    CHECK(std::abs(v) <= bound);
    if (v == 0.0) ++zeros;
  }
  CHECK(zeros >= 8 + 16 + 1);  // conv biases and the head bias start at zero
}

TEST_CASE("spec validation requires multiples of four") {
  CHECK_THROWS_AS(discriminator_param_count(DiscriminatorSpec{10, 16}),
                  std::invalid_argument);
  CHECK_THROWS_AS(discriminator_param_count(DiscriminatorSpec{16, 10}),
                  std::invalid_argument);
  CHECK_THROWS_AS(init_discriminator_params(DiscriminatorSpec{0, 0}, 1),
                  std::invalid_argument);
  CHECK_NOTHROW(discriminator_param_count(DiscriminatorSpec{4, 8}));
}

TEST_CASE("score is a deterministic probability and validates its input") {
  const DiscriminatorSpec spec{16, 16};
  Classifier clf;
  clf.spec = spec;
  clf.params = init_discriminator_params(spec, 11);

  Rng rng(12);
  const LabeledFused s = block_case(rng, 1);
  const double p = score(clf, s.input);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(score(clf, s.input) == p);

  GrayImage small(8, 8);
  CHECK_THROWS_AS(score(clf, fuse(small, BinaryMask(8, 8))), std::invalid_argument);

  Classifier bad = clf;
  bad.params.pop_back();
  CHECK_THROWS_AS(score(bad, s.input), std::invalid_argument);
}

TEST_CASE("training separates coverage from non-coverage") {
  const auto train = block_set(100, 16);
  const auto valid = block_set(101, 6);
  const auto eval = block_set(102, 12);

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 200;
  cfg.early_stop_patience = 30;
  const Classifier clf = train_discriminator(train, valid, 42, cfg);
  CHECK(clf.params.size() == discriminator_param_count(clf.spec));
  CHECK(!clf.history.epochs.empty());

  std::vector<double> scores;
  std::vector<uint8_t> labels;
  for (const auto& s : eval) {
    scores.push_back(score(clf, s.input));
    labels.push_back(uint8_t(s.label));
  }
  const double a = auroc(scores, labels);
  CHECK(a >= 0.9);

  // Complement labels invert the ranking exactly.
  std::vector<uint8_t> flipped(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) flipped[i] = uint8_t(1 - labels[i]);
  CHECK(auroc(scores, flipped) <= 0.1);
  CHECK(auroc(scores, labels) + auroc(scores, flipped) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("training is bit-reproducible per seed") {
  const auto train = block_set(200, 6);
  const auto valid = block_set(201, 3);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 8;
  const Classifier a = train_discriminator(train, valid, 9, cfg);
  const Classifier b = train_discriminator(train, valid, 9, cfg);
  CHECK(a.params == b.params);
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    CHECK(a.history.epochs[i].train_loss == b.history.epochs[i].train_loss);
    CHECK(a.history.epochs[i].valid_loss == b.history.epochs[i].valid_loss);
  }
}

TEST_CASE("training rejects empty splits and single-class labels") {
  const auto train = block_set(300, 4);
  const auto valid = block_set(301, 2);

  CHECK_THROWS_AS(train_discriminator({}, valid, 1), std::invalid_argument);
  CHECK_THROWS_AS(train_discriminator(train, {}, 1), std::invalid_argument);

  auto one_class = train;
  for (auto& s : one_class) s.label = 1;
  CHECK_THROWS_AS(train_discriminator(one_class, valid, 1), std::invalid_argument);
}

TEST_CASE("cutoff search walks the grid from zero") {
  const std::vector<double> neg = {0.1, 0.2, 0.3, 0.9};

  SUBCASE("first grid point reaching the target wins") {
    const CutoffResult r = cutoff_for_specificity(neg, 0.75, 0.01);
    // 0.30 leaves 0.3 on the grid point (not strictly below), 0.31 clears it.
    CHECK(r.cutoff == doctest::Approx(0.31).epsilon(1e-9));
    CHECK_FALSE(r.saturated);
  }

  SUBCASE("scores exactly on a grid point never count as below it") {
    const CutoffResult r = cutoff_for_specificity({0.5, 0.5}, 0.5, 0.1);
    CHECK(r.cutoff == doctest::Approx(0.6).epsilon(1e-9));
  }

  SUBCASE("all-zero negatives need one step") {
    const CutoffResult r = cutoff_for_specificity({0.0, 0.0, 0.0}, 0.75, 0.01);
    CHECK(r.cutoff == doctest::Approx(0.01).epsilon(1e-9));
    CHECK_FALSE(r.saturated);
  }

  SUBCASE("negatives stuck at one saturate") {
    const CutoffResult r = cutoff_for_specificity({1.0, 1.0}, 0.5, 0.01);
    CHECK(r.cutoff == 1.0);
    CHECK(r.saturated);
  }

  SUBCASE("cutoff is nondecreasing in the target") {
    Rng rng(55);
    std::vector<double> scores;
    for (int i = 0; i < 40; ++i) scores.push_back(rng.next_double());
    double prev = 0.0;
    for (double t : kDefaultSpecificityAnchors) {
      const CutoffResult r = cutoff_for_specificity(scores, t, 0.01);
      CHECK(r.cutoff >= prev);
      prev = r.cutoff;
    }
  }

  SUBCASE("score order does not matter") {
    std::vector<double> shuffled = neg;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(cutoff_for_specificity(shuffled, 0.75, 0.01).cutoff ==
          cutoff_for_specificity(neg, 0.75, 0.01).cutoff);
  }

  SUBCASE("invalid arguments throw") {
    CHECK_THROWS_AS(cutoff_for_specificity({}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(cutoff_for_specificity(neg, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(cutoff_for_specificity(neg, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(cutoff_for_specificity(neg, 0.5, 0.0), std::invalid_argument);
  }
}

TEST_CASE("achieved specificity meets the requested anchor") {
  Rng rng(66);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> neg;
    const int n = 5 + int(rng.next_below(60));
    for (int i = 0; i < n; ++i)
      neg.push_back(std::round(rng.next_double() * 20.0) / 20.0);
    for (double t : kDefaultSpecificityAnchors) {
      const CutoffResult r = cutoff_for_specificity(neg, t, 0.01);
      if (r.saturated) continue;
      const auto dec = apply_cutoff(neg, r.cutoff);
      int rejected = 0;
      for (uint8_t d : dec) rejected += (d == 0);
      CHECK(double(rejected) / double(n) >= t);
    }
  }
}

TEST_CASE("apply_cutoff accepts at and above the cutoff") {
  const auto dec = apply_cutoff({0.68, 0.70, 0.72}, 0.70);
  REQUIRE(dec.size() == 3);
  CHECK(dec[0] == 0);
  CHECK(dec[1] == 1);
  CHECK(dec[2] == 1);

  const auto all = apply_cutoff({0.0, 0.4, 1.0}, 0.0);
  CHECK(all == std::vector<uint8_t>{1, 1, 1});

  const auto none = apply_cutoff({0.0, 0.4, 1.0}, 1.1);
  CHECK(none == std::vector<uint8_t>{0, 0, 0});
}
