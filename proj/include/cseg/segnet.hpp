#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cseg/losses.hpp"
#include "cseg/mask.hpp"

namespace cseg {

// Desk-scale encoder-decoder with one downsampling level and a skip
// connection, channels 1 -> 8 -> 16 -> 8 -> 1, all 3x3 convolutions with
// padding 1. Hidden activations are tanh, the output is squashed through a
// logistic so every pixel lands strictly inside (0,1). Height and width must
// be even (one 2x2 average-pool level).
struct NetworkSpec {
  int height = 64;
  int width = 64;
};

// Flat parameter vector in declaration order:
// conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, conv4.w, conv4.b.
using Params = std::vector<double>;
using ParamGrads = std::vector<double>;

std::size_t param_count(const NetworkSpec& spec);

// Weights uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)), biases
// zero. Bit-reproducible per seed.
Params init_params(const NetworkSpec& spec, std::uint64_t seed);

ProbMap forward(const NetworkSpec& spec, const Params& params, const GrayImage& image);

// Reverse-mode gradients of the forward pass composed with loss_grad
// (dL/d-output, same shape as the output).
ParamGrads backward(const NetworkSpec& spec, const Params& params, const GrayImage& image,
                    const RealGrid& loss_grad);

// One forward plus backward sweep sharing the forward's activations.
// Adds scale * dL/dparams into accum and returns the loss value.
double accumulate_loss_grad(const NetworkSpec& spec, const Params& params,
                            const GrayImage& image,
                            const std::function<LossResult(const ProbMap&)>& objective,
                            ParamGrads& accum, double scale);

struct TrainConfig {
  double lr0 = 0.01;
  double plateau_factor = 0.9;
  int plateau_patience = 5;
  int early_stop_patience = 15;
  int max_epochs = 200;
  int batch_size = 8;
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;        // 1-based
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;      // rate used for this epoch's updates
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;   // 1-based epoch whose parameters were returned
  double best_valid = 0.0;
  bool early_stopped = false;
};

// Mean loss over the batch; mean gradient is ADDED into grad_accum (already
// sized like params, zeroed by the caller).
using BatchObjective = std::function<double(const std::vector<double>& params,
                                            const std::vector<int>& batch,
                                            std::vector<double>& grad_accum)>;
using ValidObjective = std::function<double(const std::vector<double>& params)>;

// Shared SGD loop: theta <- theta - lr * grad, per-epoch seeded shuffle,
// plateau schedule (lr *= plateau_factor after each plateau_patience
// consecutive epochs without strict validation improvement), early stop after
// early_stop_patience such epochs, best-validation-epoch parameters restored
// on return. Non-finite losses abort with epoch/lr/sample diagnostics.
TrainHistory sgd_train(std::vector<double>& params, int n_train,
                       const BatchObjective& batch_objective,
                       const ValidObjective& valid_objective, const TrainConfig& cfg);

// Segmentation-specific wrapper around sgd_train.
struct SegSample {
  GrayImage image;
  BinaryMask target;
  BinaryMask constraint;  // all-ones when no usable constraint exists
};

struct SegTrainData {
  std::vector<SegSample> train;
  std::vector<SegSample> valid;
};

struct SegTrainResult {
  Params params;
  TrainHistory history;
};

// Trains with constrained_loss(y, target, constraint, lambda); lambda = 0 or
// all-ones constraints reduce the objective to plain dice.
SegTrainResult train_segmenter(const NetworkSpec& spec, const Params& init,
                               const SegTrainData& data, double lambda,
                               const TrainConfig& cfg);

}  // namespace cseg
