#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "cseg/constraint.hpp"
#include "cseg/mask.hpp"
#include "cseg/morphology.hpp"
#include "cseg/synth.hpp"

using namespace cseg;

namespace {

PhantomConfig small_cfg(std::uint64_t seed) {
  PhantomConfig cfg;
  cfg.n_lung = 10;
  cfg.n_lesion = 12;
  cfg.seed = seed;
  return cfg;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
  REQUIRE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data[i] && !b.data[i]) return false;
  return true;
}

void check_splits(const SplitIndices& s, int n, std::size_t n_train, std::size_t n_valid,
                  std::size_t n_test) {
  CHECK(s.train.size() == n_train);
  CHECK(s.valid.size() == n_valid);
  CHECK(s.test.size() == n_test);
  std::set<int> seen;
  for (const auto* part : {&s.train, &s.valid, &s.test})
    for (int i : *part) {
      CHECK(i >= 0);
      CHECK(i < n);
      CHECK(seen.insert(i).second);  // no index in two splits
    }
  CHECK(int(seen.size()) == n);
}

double mean_where(const GrayImage& img, const BinaryMask& m, bool inside) {
  double sum = 0.0;
  long long n = 0;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (m.data[i] == (inside ? 1 : 0)) {
      sum += img.data[i];
      ++n;
    }
  REQUIRE(n > 0);
  return sum / double(n);
}

}  // namespace

TEST_CASE("generation is a pure function of the config") {
  const PhantomConfig cfg = small_cfg(7);
  const Dataset a = gen_lesion_dataset(cfg);
  const Dataset b = gen_lesion_dataset(cfg);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].id == b.samples[i].id);
    CHECK(a.samples[i].image == b.samples[i].image);
    CHECK(a.samples[i].mask == b.samples[i].mask);
    CHECK(a.samples[i].aux_lung == b.samples[i].aux_lung);
  }
  CHECK(a.splits.train == b.splits.train);

  PhantomConfig other = cfg;
  other.seed = 8;
  const Dataset c = gen_lesion_dataset(other);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.samples.size() && !any_diff; ++i)
    any_diff = !(a.samples[i].image == c.samples[i].image);
  CHECK(any_diff);
}

TEST_CASE("split layout: 70/20/10 for lungs, 70/10/20 for lesions") {
  const PhantomConfig cfg = small_cfg(3);
  const Dataset lung = gen_lung_dataset(cfg);
  check_splits(lung.splits, 10, 7, 2, 1);
  const Dataset les = gen_lesion_dataset(cfg);
  check_splits(les.splits, 12, 8, 1, 3);

  PhantomConfig big = cfg;
  big.n_lung = 120;
  big.n_lesion = 240;
  check_splits(gen_lung_dataset(big).splits, 120, 84, 24, 12);
  check_splits(gen_lesion_dataset(big).splits, 240, 168, 24, 48);
}

TEST_CASE("lung masks have exactly two components and darken the image") {
  const PhantomConfig cfg = small_cfg(11);
  for (const Sample& s : gen_lung_dataset(cfg).samples) {
    CHECK(s.mask.area() > 0);
    CHECK(count_components(s.mask) == 2);
    CHECK(mean_where(s.image, s.mask, true) < mean_where(s.image, s.mask, false));
    CHECK(s.aux_lung.size() == 0);  // lung dataset carries no auxiliary mask
  }
  for (const Sample& s : gen_lesion_dataset(cfg).samples) {
    CHECK(count_components(s.aux_lung) == 2);
    CHECK(mean_where(s.image, s.aux_lung, true) < mean_where(s.image, s.aux_lung, false));
  }
}

TEST_CASE("pixels are 8-bit quantized values in [0,1]") {
  const PhantomConfig cfg = small_cfg(19);
  for (const Sample& s : gen_lesion_dataset(cfg).samples)
    for (double v : s.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(std::abs(v * 255.0 - std::round(v * 255.0)) < 1e-9);
    }
}

TEST_CASE("lesions sit inside the margin-eroded true lung+ space") {
  const PhantomConfig cfg = small_cfg(23);
  const StructuringElement margin = elliptical_element(7);
  for (const Sample& s : gen_lesion_dataset(cfg).samples) {
    CHECK(s.mask.area() > 0);
    const BinaryMask plus = true_lung_plus(s.aux_lung);
    CHECK(subset(s.mask, erode(plus, margin)));
    CHECK(coverage_rate(plus, s.mask) == 1.0);
    // Lesions live in the pleural band, never on lung tissue itself.
    CHECK(intersection_area(s.mask, s.aux_lung) == 0);
  }
}

TEST_CASE("true_lung_plus composes closing then dilation on the exact mask") {
  const PhantomConfig cfg = small_cfg(29);
  const Sample s = gen_lung_dataset(cfg).samples[0];
  const BinaryMask expect =
      dilate(close(s.mask, elliptical_element(19)), elliptical_element(15));
  CHECK(true_lung_plus(s.mask) == expect);
}

TEST_CASE("decoys render strictly outside the true lung+ space") {
  PhantomConfig with = small_cfg(31);
  with.noise_sigma = 0.0;  // makes the decoy toggle the only image difference
  PhantomConfig without = with;
  without.n_distractors = 0;

  const Dataset dw = gen_lesion_dataset(with);
  const Dataset dn = gen_lesion_dataset(without);
  REQUIRE(dw.samples.size() == dn.samples.size());

  int decoyed = 0;
  for (std::size_t i = 0; i < dw.samples.size(); ++i) {
    const Sample& a = dw.samples[i];
    const Sample& b = dn.samples[i];
    CHECK(a.mask == b.mask);
    CHECK(a.aux_lung == b.aux_lung);
    const BinaryMask plus = true_lung_plus(a.aux_lung);
    long long darker = 0, brighter = 0;
    for (int r = 0; r < dw.height; ++r)
      for (int c = 0; c < dw.width; ++c) {
        const double d = a.image.at(r, c) - b.image.at(r, c);
        if (d == 0.0) continue;
        CHECK_FALSE(plus.at(r, c));
        (d < 0.0 ? darker : brighter) += 1;
      }
    // A placed decoy contributes a dark limb (>=12 px) and a bright arc (>=6).
    if (darker >= 12 && brighter >= 6) ++decoyed;
  }
  CHECK(decoyed >= int(dw.samples.size()) / 2);
}

TEST_CASE("corruption hits exactly floor(fraction*n) candidates") {
  const PhantomConfig cfg = small_cfg(37);
  const Dataset ds = gen_lesion_dataset(cfg);
  std::vector<BinaryMask> cands, lesions;
  for (const Sample& s : ds.samples) {
    cands.push_back(true_lung_plus(s.aux_lung));
    lesions.push_back(s.mask);
  }
  const double tau = 0.99;

  SUBCASE("fraction 0.3 of 12 corrupts 3, below tau, others untouched") {
    const CorruptionResult r = corrupt_constraints(cands, lesions, 0.3, tau, 5);
    REQUIRE(r.candidates.size() == cands.size());
    REQUIRE(r.corrupted.size() == cands.size());
    int hit = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (r.corrupted[i]) {
        ++hit;
        CHECK(coverage_rate(r.candidates[i], lesions[i]) < tau);
      } else {
        CHECK(r.candidates[i] == cands[i]);
      }
    }
    CHECK(hit == 3);
  }

  SUBCASE("fraction 0 is the identity") {
    const CorruptionResult r = corrupt_constraints(cands, lesions, 0.0, tau, 5);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      CHECK(r.corrupted[i] == 0);
      CHECK(r.candidates[i] == cands[i]);
    }
  }

  SUBCASE("fraction 1 corrupts everything") {
    const CorruptionResult r = corrupt_constraints(cands, lesions, 1.0, tau, 5);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      CHECK(r.corrupted[i] == 1);
      CHECK(coverage_rate(r.candidates[i], lesions[i]) < tau);
    }
  }

  SUBCASE("same seed, same result; different seed may pick others") {
    const CorruptionResult a = corrupt_constraints(cands, lesions, 0.5, tau, 5);
    const CorruptionResult b = corrupt_constraints(cands, lesions, 0.5, tau, 5);
    CHECK(a.corrupted == b.corrupted);
    for (std::size_t i = 0; i < cands.size(); ++i)
      CHECK(a.candidates[i] == b.candidates[i]);
  }

  SUBCASE("mismatched inputs and bad fractions throw") {
    std::vector<BinaryMask> short_lesions(lesions.begin(), lesions.end() - 1);
    CHECK_THROWS_AS(corrupt_constraints(cands, short_lesions, 0.3, tau, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(corrupt_constraints(cands, lesions, -0.1, tau, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(corrupt_constraints(cands, lesions, 1.1, tau, 5),
                    std::invalid_argument);
  }
}

TEST_CASE("config validation rejects degenerate settings") {
  PhantomConfig cfg = small_cfg(1);

  PhantomConfig empty = cfg;
  empty.n_lung = 0;
  CHECK_THROWS_AS(gen_lung_dataset(empty), std::invalid_argument);
  empty.n_lesion = 0;
  CHECK_THROWS_AS(gen_lesion_dataset(empty), std::invalid_argument);

  PhantomConfig tiny = cfg;
  tiny.height = 8;
  CHECK_THROWS_AS(gen_lung_dataset(tiny), std::invalid_argument);

  PhantomConfig odd = cfg;
  odd.width = 66;
  CHECK_THROWS_AS(gen_lung_dataset(odd), std::invalid_argument);

  PhantomConfig corrupt = cfg;
  corrupt.corruption = 1.5;
  CHECK_THROWS_AS(gen_lesion_dataset(corrupt), std::invalid_argument);

  PhantomConfig bad_tau = cfg;
  bad_tau.tau = 0.0;
  CHECK_THROWS_AS(gen_lesion_dataset(bad_tau), std::invalid_argument);

  PhantomConfig neg = cfg;
  neg.n_distractors = -1;
  CHECK_THROWS_AS(gen_lesion_dataset(neg), std::invalid_argument);
}

TEST_CASE("sample ids are zero-padded and unique") {
  const PhantomConfig cfg = small_cfg(41);
  const Dataset ds = gen_lung_dataset(cfg);
  CHECK(ds.samples[0].id == "lung_000");
  CHECK(ds.samples[9].id == "lung_009");
  std::set<std::string> ids;
  for (const Sample& s : ds.samples) CHECK(ids.insert(s.id).second);
  CHECK(gen_lesion_dataset(cfg).samples[2].id == "les_002");
}
