#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>

#include "cseg/constraint.hpp"
#include "cseg/mask.hpp"
#include "cseg/morphology.hpp"
#include "cseg/rng.hpp"
#include "oracles.hpp"

using cseg::BinaryMask;
using cseg::ProbMap;

namespace {

BinaryMask row_band(int h, int w, int r0, int r1) {
  BinaryMask m(h, w);
  for (int r = r0; r <= r1; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, 1);
  return m;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] && !b.data[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("coverage_rate hand values") {
  BinaryMask c(4, 4, 1);
  BinaryMask s(4, 4);
  s.set(1, 1, 1);
  s.set(2, 2, 1);
  CHECK(cseg::coverage_rate(c, s) == 1.0);  // s inside c

  BinaryMask disjoint(4, 4);
  disjoint.set(0, 0, 1);
  BinaryMask far(4, 4);
  far.set(3, 3, 1);
  CHECK(cseg::coverage_rate(disjoint, far) == 0.0);

  // c = rows 0-1 of 3x3, s = rows 1-2: 3 of 6 annotated pixels covered
  CHECK(cseg::coverage_rate(row_band(3, 3, 0, 1), row_band(3, 3, 1, 2)) ==
        doctest::Approx(0.5).epsilon(1e-12));

  BinaryMask empty(4, 4);
  CHECK_THROWS_AS((void)cseg::coverage_rate(c, empty), std::invalid_argument);
}

TEST_CASE("coverage_rate monotone in the candidate and against an enumeration oracle") {
  cseg::Rng rng(19);
  for (int t = 0; t < 60; ++t) {
    BinaryMask s(10, 10), c1(10, 10);
    for (auto& v : s.data) v = rng.next_double() < 0.3 ? 1 : 0;
    if (s.area() == 0) s.set(0, 0, 1);
    for (auto& v : c1.data) v = rng.next_double() < 0.4 ? 1 : 0;
    BinaryMask c2 = c1;
    for (auto& v : c2.data)
      if (!v && rng.next_double() < 0.3) v = 1;

    CHECK(cseg::coverage_rate(c1, s) == doctest::Approx(oracle::enum_coverage(c1, s)).epsilon(1e-12));
    CHECK(cseg::coverage_rate(c1, s) <= cseg::coverage_rate(c2, s));
    CHECK(cseg::coverage_rate(cseg::all_ones(10, 10), s) == 1.0);
  }
}

TEST_CASE("make_label is strict at tau") {
  CHECK(cseg::make_label(1.0, 0.99) == 1);
  CHECK(cseg::make_label(0.99, 0.99) == 0);
  CHECK(cseg::make_label(0.995, 0.99) == 1);
  CHECK(cseg::make_label(0.0, 0.99) == 0);
}

TEST_CASE("lung_plus_space stage order and degenerate input") {
  // all below threshold: empty constraint
  ProbMap low(24, 24, 0.2);
  CHECK(cseg::lung_plus_space(low).area() == 0);

  // identity elements and generous component budget: just the thresholded map
  ProbMap y(12, 12, 0.1);
  for (int r = 2; r < 5; ++r)
    for (int c = 2; c < 5; ++c) y.set(r, c, 0.9);
  for (int r = 8; r < 10; ++r)
    for (int c = 7; c < 11; ++c) y.set(r, c, 0.8);
  cseg::LungPlusConfig id_cfg{0.5, 4, 1, 1};
  CHECK(cseg::lung_plus_space(y, id_cfg) == cseg::threshold(y, 0.5));

  // two blobs + a speck: speck dropped, blobs closed and dilated
  ProbMap z(28, 28, 0.0);
  for (int r = 4; r < 12; ++r)
    for (int c = 4; c < 10; ++c) z.set(r, c, 1.0);
  for (int r = 14; r < 22; ++r)
    for (int c = 16; c < 22; ++c) z.set(r, c, 1.0);
  z.set(26, 26, 1.0);  // 1-px speck, third largest
  cseg::LungPlusConfig cfg{0.5, 2, 3, 3};
  BinaryMask got = cseg::lung_plus_space(z, cfg);

  BinaryMask kept = oracle::brute_top_k(cseg::threshold(z, 0.5), 2);
  BinaryMask want = oracle::brute_dilate(oracle::brute_close(kept, 3), 3);
  CHECK(got == want);
  CHECK(got.at(26, 26) == 0);

  // pre-dilation mask is a subset of the output (dilation extensivity)
  CHECK(subset(oracle::brute_close(kept, 3), got));
  // component budget respected at the top-k stage
  CHECK(cseg::count_components(kept) <= 2);
}

TEST_CASE("lung_plus_space matches composed oracles on random maps at default sizes") {
  cseg::Rng rng(23);
  for (int t = 0; t < 8; ++t) {
    ProbMap y(32, 32);
    for (auto& v : y.data) v = rng.next_double();
    BinaryMask got = cseg::lung_plus_space(y);  // 0.5 / top-2 / close 19 / dilate 15
    BinaryMask kept = oracle::brute_top_k(cseg::threshold(y, 0.5), 2);
    BinaryMask want = oracle::brute_dilate(oracle::brute_close(kept, 19), 15);
    CHECK(got == want);
  }
}

TEST_CASE("finalize_constraints applies decisions in order") {
  std::vector<cseg::ConstraintRecord> recs(3);
  for (int i = 0; i < 3; ++i) {
    recs[size_t(i)].sample_id = "s" + std::to_string(i);
    recs[size_t(i)].candidate = BinaryMask(4, 4);
    recs[size_t(i)].candidate.set(i, i, 1);
  }

  // mixed decision vector: [accept, reject, accept]
  auto out = cseg::finalize_constraints(recs, {true, false, true});
  REQUIRE(out.size() == 3);
  CHECK(out[0].accepted);
  CHECK(out[0].final_constraint == out[0].candidate);
  CHECK_FALSE(out[1].accepted);
  CHECK(out[1].final_constraint.all_one());
  CHECK(out[2].accepted);
  CHECK(out[2].final_constraint == out[2].candidate);
  CHECK(out[0].sample_id == "s0");
  CHECK(out[2].sample_id == "s2");

  // all accepted / all rejected
  auto acc = cseg::finalize_constraints(recs, {true, true, true});
  for (const auto& r : acc) CHECK(r.final_constraint == r.candidate);
  auto rej = cseg::finalize_constraints(recs, {false, false, false});
  for (const auto& r : rej) CHECK(r.final_constraint.all_one());

  CHECK_THROWS_AS((void)cseg::finalize_constraints(recs, {true}), std::invalid_argument);
}
