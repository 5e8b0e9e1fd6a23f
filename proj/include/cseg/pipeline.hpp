#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cseg/constraint.hpp"
#include "cseg/discriminator.hpp"
#include "cseg/io.hpp"
#include "cseg/metrics.hpp"
#include "cseg/segnet.hpp"
#include "cseg/synth.hpp"

namespace cseg {

// Every knob of a full run. Defaults mirror the reference configuration:
// close 19, dilate 15, tau 0.99, lr 0.01, lambda grid {0.2..1.0},
// specificity anchors {0.80, 0.85, 0.90, 0.95}.
struct RunConfig {
  PhantomConfig phantom;
  LungPlusConfig lung_plus;
  double tau = 0.99;

  std::vector<double> lambda_grid = {0.2, 0.4, 0.6, 0.8, 1.0};
  bool lambda_fixed = false;   // skip the grid and use lambda_value
  double lambda_value = 0.6;

  double specificity_anchor = 0.80;  // anchor used for the final decision
  std::vector<double> specificity_anchors = {0.80, 0.85, 0.90, 0.95};
  double cutoff_step = 0.01;

  // Single-sample SGD steps dominate wall time, so the phase defaults trade
  // batch size 1 (more updates per pass) against per-phase epoch budgets
  // sized for the 64x64 phantom datasets.
  TrainConfig lung_train{.lr0 = 0.01, .plateau_factor = 0.9, .plateau_patience = 5,
                         .early_stop_patience = 20, .max_epochs = 60, .batch_size = 1};
  TrainConfig disc_train{.lr0 = 0.01, .plateau_factor = 0.9, .plateau_patience = 10,
                         .early_stop_patience = 60, .max_epochs = 300, .batch_size = 1};
  TrainConfig lesion_train{.lr0 = 0.01, .plateau_factor = 0.9, .plateau_patience = 5,
                           .early_stop_patience = 30, .max_epochs = 150, .batch_size = 1};

  int bootstrap_b = 1000;
  std::string mode = "constrained";  // constrained | baseline
  std::uint64_t seed = 0;
};

RunConfig default_run_config();

// Parses a JSON config file; absent fields keep their defaults, unknown or
// invalid fields raise a named-field error.
RunConfig load_run_config(const std::string& path);

// Canonical fingerprint of the full configuration (seed included).
std::uint64_t config_fingerprint(const RunConfig& cfg);

// synth: writes <out>/lung and <out>/lesion dataset directories.
void cmd_synth(const RunConfig& cfg, const std::string& out_dir);

// phase 1: trains the lung segmenter on the lung dataset, emits candidate
// constraints for every target sample (train+valid candidates corrupted per
// cfg.phantom.corruption), writes checkpoint, metrics and the run manifest.
struct Phase1Result {
  std::string checkpoint;
  MetricReport lung_metrics;
  int n_candidates = 0;
  int n_corrupted = 0;
};
Phase1Result cmd_phase1(const std::string& lung_dir, const std::string& target_dir,
                        const RunConfig& cfg, const std::string& run_dir);

// phase 2: coverage labels on train/valid, discriminator training, per-anchor
// cutoffs, finalized constraints (all-ones for rejected), Table-4-style report.
struct AnchorRow {
  double anchor = 0.0;
  double cutoff = 1.0;
  bool saturated = false;
  ConfusionRates rates;  // on the validation split
  double specificity_se = 0.0, sensitivity_se = 0.0, ppv_se = 0.0, npv_se = 0.0;
};
struct Phase2Result {
  double auroc = 0.0;      // validation split
  double auroc_se = 0.0;
  std::vector<AnchorRow> rows;
  double chosen_anchor = 0.0;
  double chosen_cutoff = 1.0;
  int n_pos = 0, n_neg = 0;  // train+valid label counts
  int n_accepted = 0;        // over all splits
};
Phase2Result cmd_phase2(const RunConfig& cfg, const std::string& run_dir);

// phase 3: lesion segmenter training. mode "constrained" uses the finalized
// constraints and the lambda grid (validation IoU selects); mode "baseline"
// trains with nullified (all-ones) constraints. Evaluation runs on the test
// split from the reloaded checkpoint. Out-of-constraint predicted mass is
// reported against the test samples' final constraints when phase 2 ran.
struct Phase3Result {
  MetricReport metrics;
  double lambda = 0.0;
  std::string checkpoint;
  bool has_ooc = false;
  double ooc_mass_mean = 0.0;    // soft predicted mass outside the constraint
  double ooc_frac_mean = 0.0;    // same, as a fraction of total predicted mass
  double ooc_pixels_mean = 0.0;  // thresholded-mask pixels outside the constraint
  std::vector<std::pair<double, double>> lambda_valid_iou;  // (lambda, valid IoU)
};
Phase3Result cmd_phase3(const std::string& manifest_dir, const RunConfig& cfg,
                        const std::string& run_dir, const std::string& mode);

// eval: recomputes the phase-3 test metrics for a stored run from its saved
// checkpoint and manifest; byte-stable against the phase-3 report.
Phase3Result cmd_eval(const std::string& run_dir, const RunConfig& cfg,
                      const std::string& mode);

// ablate: baseline / raw-lung / lung-plus / full under one shared seed.
// raw-lung constrains with the thresholded lung prediction only; lung-plus
// skips the discriminator (every candidate accepted); full is phases 1-3.
struct AblateRow {
  std::string mode;
  MetricReport metrics;
  double lambda = 0.0;
  bool has_ooc = false;
  double ooc_mass_mean = 0.0;
  double ooc_frac_mean = 0.0;
  double ooc_pixels_mean = 0.0;
};
struct AblateResult {
  std::vector<AblateRow> rows;
};
AblateResult cmd_ablate(const std::string& lung_dir, const std::string& target_dir,
                        const RunConfig& cfg, const std::string& out_dir);

// sweep: one full pipeline per axis value plus the shared baseline row.
// Default grids: close_k {15,19,25}, dilate_k {10,15,20}, tau {0.80,0.90,0.99}.
struct SweepRow {
  double value = 0.0;
  MetricReport metrics;
};
struct SweepResult {
  std::string axis;
  std::vector<SweepRow> rows;
  MetricReport baseline;
};
SweepResult cmd_sweep(const std::string& lung_dir, const std::string& target_dir,
                      const RunConfig& cfg, const std::string& axis,
                      const std::string& out_dir);

// gradcheck: finite-difference verification of every analytic gradient.
struct GradcheckResult {
  double max_rel_dice = 0.0;
  double max_rel_penalty = 0.0;
  double max_rel_constrained = 0.0;
  double max_rel_end_to_end = 0.0;  // worst over lambda in {0, 0.6, 1.0}
  bool pass = false;
};
GradcheckResult cmd_gradcheck(const RunConfig& cfg, const std::string& out_dir = "");

}  // namespace cseg
