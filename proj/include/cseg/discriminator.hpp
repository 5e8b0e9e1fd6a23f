#pragma once

#include <cstdint>
#include <vector>

#include "cseg/mask.hpp"
#include "cseg/segnet.hpp"

namespace cseg {

// Channel-level fusion of an image with its candidate constraint. The third
// plane is the exact element-wise product of the first two.
struct FusedInput {
  RealGrid image;
  RealGrid constraint;  // {0,1} values
  RealGrid masked;      // image * constraint
};

FusedInput fuse(const GrayImage& image, const BinaryMask& constraint);

// Small convolutional scorer: two conv+tanh+pool stages, per-channel global
// mean and max pooled into one logit through a logistic. The max path keeps
// localized coverage defects visible that a mean would dilute. Height and
// width must be multiples of 4.
struct DiscriminatorSpec {
  int height = 64;
  int width = 64;
};

struct Classifier {
  DiscriminatorSpec spec;
  std::vector<double> params;
  TrainHistory history;
};

std::size_t discriminator_param_count(const DiscriminatorSpec& spec);

std::vector<double> init_discriminator_params(const DiscriminatorSpec& spec,
                                              std::uint64_t seed);

// Probability in [0,1] that the constraint is well behaved.
double score(const Classifier& clf, const FusedInput& input);

struct LabeledFused {
  FusedInput input;
  int label = 0;  // 1 = well behaved
};

// Cross-entropy training on the shared SGD loop. Both splits must be
// nonempty and the training labels must contain both classes. Deterministic
// per seed (cfg.seed is overridden by `seed`).
Classifier train_discriminator(const std::vector<LabeledFused>& train,
                               const std::vector<LabeledFused>& valid, std::uint64_t seed,
                               const TrainConfig& cfg = {});

// Smallest grid point in {0, step, 2*step, ..., 1} whose strictly-below
// fraction of negative scores reaches target_spec. Scores within 1e-12 of a
// grid point bind to it, so values sitting exactly on the grid never count
// as below. If even 1.0 fails, the result is 1.0 with saturated set.
struct CutoffResult {
  double cutoff = 1.0;
  bool saturated = false;
};

CutoffResult cutoff_for_specificity(const std::vector<double>& scores_neg,
                                    double target_spec, double step = 0.01);

// Accept iff score >= cutoff (same 1e-12 grid tolerance).
std::vector<uint8_t> apply_cutoff(const std::vector<double>& scores, double cutoff);

inline const std::vector<double> kDefaultSpecificityAnchors = {0.80, 0.85, 0.90, 0.95};

}  // namespace cseg
