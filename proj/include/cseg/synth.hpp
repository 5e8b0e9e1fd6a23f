#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cseg/mask.hpp"

namespace cseg {

// Deterministic phantom generator. Geometry fields are fractions of the grid
// size, intensities live in [0,1]. Every sample is a pure function of
// (config, sample index).
struct PhantomConfig {
  int height = 64;
  int width = 64;
  int n_lung = 120;    // lung dataset size, split 70/20/10
  int n_lesion = 240;  // lesion dataset size, split 70/10/20

  // Two darker elliptical lung fields over a striped background.
  double lung_row_center = 0.52;
  double lung_col_left = 0.30;
  double lung_col_right = 0.70;
  double lung_rx_min = 0.10, lung_rx_max = 0.13;
  double lung_ry_min = 0.23, lung_ry_max = 0.30;
  double center_jitter = 0.02;

  double background = 0.55;
  double lung_delta = -0.25;
  double stripe_amp = 0.08;
  double stripe_period = 9.0;  // rows
  double noise_sigma = 0.02;

  // Crescent lesion in the pleural band, slightly brighter than the rib
  // stripes so it is confusable with them outside the constraint.
  double lesion_delta = 0.10;

  // Decoys rendered outside the true lung+ space in lesion-dataset images
  // only: a dark elliptical limb with a bright crescent on its rim, the same
  // local pattern as a lesion hugging a lung boundary. They carry no
  // annotation, so appearance alone gives a segmenter little reason to
  // reject them; the spatial prior does. The limb is kept slightly shallower
  // than a real lung so the pattern stays separable under pressure.
  int n_distractors = 2;
  double distractor_delta = 0.10;       // crescent brightness, matches lesion_delta
  double distractor_core_delta = -0.16; // limb darkness, vs lung_delta -0.25

  // Fraction of train+valid constraint candidates to corrupt.
  double corruption = 0.3;
  double tau = 0.99;

  std::uint64_t seed = 0;
};

struct Sample {
  std::string id;
  GrayImage image;
  BinaryMask mask;      // lung mask or lesion mask depending on the dataset
  BinaryMask aux_lung;  // lesion dataset only: the generating lung mask
};

struct SplitIndices {
  std::vector<int> train, valid, test;
};

struct Dataset {
  int height = 0, width = 0;
  std::vector<Sample> samples;
  SplitIndices splits;
};

// Grayscale phantoms with two-component lung masks, split 70/20/10.
Dataset gen_lung_dataset(const PhantomConfig& cfg);

// Lesion-positive phantoms, lesion fully inside the true lung+ space,
// split 70/10/20.
Dataset gen_lesion_dataset(const PhantomConfig& cfg);

// The dilated thoracic region implied by a ground-truth lung mask
// (close 19, dilate 15 on the mask itself).
BinaryMask true_lung_plus(const BinaryMask& lung_mask);

// Corrupts floor(fraction*n) seeded-chosen candidates by a large translation
// (escalating, with an erosion fallback) until coverage against the paired
// lesion drops below tau. Untouched candidates pass through unchanged.
struct CorruptionResult {
  std::vector<BinaryMask> candidates;
  std::vector<uint8_t> corrupted;
};

CorruptionResult corrupt_constraints(const std::vector<BinaryMask>& candidates,
                                     const std::vector<BinaryMask>& lesions,
                                     double fraction, double tau, std::uint64_t seed);

}  // namespace cseg
