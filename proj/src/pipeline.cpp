#include "cseg/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "cseg/rng.hpp"

namespace cseg {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- config io

[[noreturn]] void fail_field(const std::string& name, const std::string& why) {
  throw std::invalid_argument("config field '" + name + "': " + why);
}

double as_num(const ordered_json& v, const std::string& name) {
  if (!v.is_number()) fail_field(name, "must be a number");
  return v.get<double>();
}

int as_int(const ordered_json& v, const std::string& name) {
  if (!v.is_number_integer()) fail_field(name, "must be an integer");
  return v.get<int>();
}

bool as_bool(const ordered_json& v, const std::string& name) {
  if (!v.is_boolean()) fail_field(name, "must be a boolean");
  return v.get<bool>();
}

std::string as_str(const ordered_json& v, const std::string& name) {
  if (!v.is_string()) fail_field(name, "must be a string");
  return v.get<std::string>();
}

std::uint64_t as_u64(const ordered_json& v, const std::string& name) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<long long>() < 0))
    fail_field(name, "must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<double> as_num_list(const ordered_json& v, const std::string& name) {
  if (!v.is_array() || v.empty()) fail_field(name, "must be a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) fail_field(name, "must be a non-empty array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

using FieldFn = std::function<void(const ordered_json&, const std::string&)>;

void read_object(const ordered_json& j, const std::string& prefix,
                 const std::map<std::string, FieldFn>& fields) {
  if (!j.is_object())
    fail_field(prefix.empty() ? "(root)" : prefix, "must be an object");
  for (const auto& item : j.items()) {
    auto it = fields.find(item.key());
    if (it == fields.end()) fail_field(prefix + item.key(), "unknown field");
    it->second(item.value(), prefix + item.key());
  }
}

void read_phantom(const ordered_json& j, const std::string& prefix, PhantomConfig& p) {
  read_object(j, prefix, {
    {"height", [&](const ordered_json& v, const std::string& n) { p.height = as_int(v, n); }},
    {"width", [&](const ordered_json& v, const std::string& n) { p.width = as_int(v, n); }},
    {"n_lung", [&](const ordered_json& v, const std::string& n) { p.n_lung = as_int(v, n); }},
    {"n_lesion", [&](const ordered_json& v, const std::string& n) { p.n_lesion = as_int(v, n); }},
    {"lung_row_center", [&](const ordered_json& v, const std::string& n) { p.lung_row_center = as_num(v, n); }},
    {"lung_col_left", [&](const ordered_json& v, const std::string& n) { p.lung_col_left = as_num(v, n); }},
    {"lung_col_right", [&](const ordered_json& v, const std::string& n) { p.lung_col_right = as_num(v, n); }},
    {"lung_rx_min", [&](const ordered_json& v, const std::string& n) { p.lung_rx_min = as_num(v, n); }},
    {"lung_rx_max", [&](const ordered_json& v, const std::string& n) { p.lung_rx_max = as_num(v, n); }},
    {"lung_ry_min", [&](const ordered_json& v, const std::string& n) { p.lung_ry_min = as_num(v, n); }},
    {"lung_ry_max", [&](const ordered_json& v, const std::string& n) { p.lung_ry_max = as_num(v, n); }},
    {"center_jitter", [&](const ordered_json& v, const std::string& n) { p.center_jitter = as_num(v, n); }},
    {"background", [&](const ordered_json& v, const std::string& n) { p.background = as_num(v, n); }},
    {"lung_delta", [&](const ordered_json& v, const std::string& n) { p.lung_delta = as_num(v, n); }},
    {"stripe_amp", [&](const ordered_json& v, const std::string& n) { p.stripe_amp = as_num(v, n); }},
    {"stripe_period", [&](const ordered_json& v, const std::string& n) { p.stripe_period = as_num(v, n); }},
    {"noise_sigma", [&](const ordered_json& v, const std::string& n) { p.noise_sigma = as_num(v, n); }},
    {"lesion_delta", [&](const ordered_json& v, const std::string& n) { p.lesion_delta = as_num(v, n); }},
    {"n_distractors", [&](const ordered_json& v, const std::string& n) { p.n_distractors = as_int(v, n); }},
    {"distractor_delta", [&](const ordered_json& v, const std::string& n) { p.distractor_delta = as_num(v, n); }},
    {"distractor_core_delta", [&](const ordered_json& v, const std::string& n) { p.distractor_core_delta = as_num(v, n); }},
    {"corruption", [&](const ordered_json& v, const std::string& n) { p.corruption = as_num(v, n); }},
  });
}

void read_train(const ordered_json& j, const std::string& prefix, TrainConfig& t) {
  read_object(j, prefix, {
    {"lr0", [&](const ordered_json& v, const std::string& n) { t.lr0 = as_num(v, n); }},
    {"plateau_factor", [&](const ordered_json& v, const std::string& n) { t.plateau_factor = as_num(v, n); }},
    {"plateau_patience", [&](const ordered_json& v, const std::string& n) { t.plateau_patience = as_int(v, n); }},
    {"early_stop_patience", [&](const ordered_json& v, const std::string& n) { t.early_stop_patience = as_int(v, n); }},
    {"max_epochs", [&](const ordered_json& v, const std::string& n) { t.max_epochs = as_int(v, n); }},
    {"batch_size", [&](const ordered_json& v, const std::string& n) { t.batch_size = as_int(v, n); }},
  });
}

void validate_train(const std::string& prefix, const TrainConfig& t) {
  if (t.lr0 <= 0.0) fail_field(prefix + "lr0", "must be positive");
  if (t.plateau_factor <= 0.0 || t.plateau_factor > 1.0)
    fail_field(prefix + "plateau_factor", "must lie in (0, 1]");
  if (t.plateau_patience < 1) fail_field(prefix + "plateau_patience", "must be >= 1");
  if (t.early_stop_patience < 1) fail_field(prefix + "early_stop_patience", "must be >= 1");
  if (t.max_epochs < 1) fail_field(prefix + "max_epochs", "must be >= 1");
  if (t.batch_size < 1) fail_field(prefix + "batch_size", "must be >= 1");
}

void validate_run_config(const RunConfig& cfg) {
  const PhantomConfig& p = cfg.phantom;
  if (p.height < 16 || p.height % 4 != 0) fail_field("phantom.height", "must be >= 16 and a multiple of 4");
  if (p.width < 16 || p.width % 4 != 0) fail_field("phantom.width", "must be >= 16 and a multiple of 4");
  if (p.n_lung < 1) fail_field("phantom.n_lung", "must be >= 1");
  if (p.n_lesion < 1) fail_field("phantom.n_lesion", "must be >= 1");
  if (p.corruption < 0.0 || p.corruption > 1.0) fail_field("phantom.corruption", "must lie in [0, 1]");
  if (p.noise_sigma < 0.0) fail_field("phantom.noise_sigma", "must be >= 0");
  if (p.stripe_period <= 0.0) fail_field("phantom.stripe_period", "must be positive");

  if (cfg.lung_plus.bin_t < 0.0 || cfg.lung_plus.bin_t >= 1.0)
    fail_field("lung_plus.bin_t", "must lie in [0, 1)");
  if (cfg.lung_plus.k_components < 1) fail_field("lung_plus.k_components", "must be >= 1");
  if (cfg.lung_plus.close_k < 1) fail_field("lung_plus.close_k", "must be >= 1");
  if (cfg.lung_plus.dilate_k < 1) fail_field("lung_plus.dilate_k", "must be >= 1");

  if (cfg.tau <= 0.0 || cfg.tau > 1.0) fail_field("tau", "must lie in (0, 1]");
  if (cfg.lambda_grid.empty()) fail_field("lambda_grid", "must be non-empty");
  for (double l : cfg.lambda_grid)
    if (l < 0.0) fail_field("lambda_grid", "entries must be >= 0");
  if (cfg.lambda_value < 0.0) fail_field("lambda_value", "must be >= 0");
  if (cfg.specificity_anchor <= 0.0 || cfg.specificity_anchor >= 1.0)
    fail_field("specificity_anchor", "must lie in (0, 1)");
  if (cfg.specificity_anchors.empty()) fail_field("specificity_anchors", "must be non-empty");
  for (double a : cfg.specificity_anchors)
    if (a <= 0.0 || a >= 1.0) fail_field("specificity_anchors", "entries must lie in (0, 1)");
  if (cfg.cutoff_step <= 0.0 || cfg.cutoff_step > 1.0)
    fail_field("cutoff_step", "must lie in (0, 1]");
  if (cfg.bootstrap_b < 1) fail_field("bootstrap_b", "must be >= 1");
  if (cfg.mode != "constrained" && cfg.mode != "baseline")
    fail_field("mode", "must be 'constrained' or 'baseline'");

  validate_train("lung_train.", cfg.lung_train);
  validate_train("disc_train.", cfg.disc_train);
  validate_train("lesion_train.", cfg.lesion_train);
}

ordered_json phantom_json(const PhantomConfig& p) {
  ordered_json j;
  j["height"] = p.height;
  j["width"] = p.width;
  j["n_lung"] = p.n_lung;
  j["n_lesion"] = p.n_lesion;
  j["lung_row_center"] = p.lung_row_center;
  j["lung_col_left"] = p.lung_col_left;
  j["lung_col_right"] = p.lung_col_right;
  j["lung_rx_min"] = p.lung_rx_min;
  j["lung_rx_max"] = p.lung_rx_max;
  j["lung_ry_min"] = p.lung_ry_min;
  j["lung_ry_max"] = p.lung_ry_max;
  j["center_jitter"] = p.center_jitter;
  j["background"] = p.background;
  j["lung_delta"] = p.lung_delta;
  j["stripe_amp"] = p.stripe_amp;
  j["stripe_period"] = p.stripe_period;
  j["noise_sigma"] = p.noise_sigma;
  j["lesion_delta"] = p.lesion_delta;
  j["n_distractors"] = p.n_distractors;
  j["distractor_delta"] = p.distractor_delta;
  j["distractor_core_delta"] = p.distractor_core_delta;
  j["corruption"] = p.corruption;
  return j;
}

ordered_json train_json(const TrainConfig& t) {
  ordered_json j;
  j["lr0"] = t.lr0;
  j["plateau_factor"] = t.plateau_factor;
  j["plateau_patience"] = t.plateau_patience;
  j["early_stop_patience"] = t.early_stop_patience;
  j["max_epochs"] = t.max_epochs;
  j["batch_size"] = t.batch_size;
  return j;
}

ordered_json config_json(const RunConfig& cfg) {
  ordered_json j;
  j["phantom"] = phantom_json(cfg.phantom);
  ordered_json lp;
  lp["bin_t"] = cfg.lung_plus.bin_t;
  lp["k_components"] = cfg.lung_plus.k_components;
  lp["close_k"] = cfg.lung_plus.close_k;
  lp["dilate_k"] = cfg.lung_plus.dilate_k;
  j["lung_plus"] = lp;
  j["tau"] = cfg.tau;
  j["lambda_grid"] = cfg.lambda_grid;
  j["lambda_fixed"] = cfg.lambda_fixed;
  j["lambda_value"] = cfg.lambda_value;
  j["specificity_anchor"] = cfg.specificity_anchor;
  j["specificity_anchors"] = cfg.specificity_anchors;
  j["cutoff_step"] = cfg.cutoff_step;
  j["lung_train"] = train_json(cfg.lung_train);
  j["disc_train"] = train_json(cfg.disc_train);
  j["lesion_train"] = train_json(cfg.lesion_train);
  j["bootstrap_b"] = cfg.bootstrap_b;
  j["mode"] = cfg.mode;
  j["seed"] = cfg.seed;
  return j;
}

// ------------------------------------------------------------- small shared

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void ensure_dir(const std::string& d) { fs::create_directories(d); }

// Relative path from base_dir to target; falls back to an absolute path when
// no relative form exists.
std::string rel_from(const std::string& base_dir, const std::string& target) {
  std::error_code ec;
  fs::path r = fs::relative(fs::absolute(target), fs::absolute(base_dir), ec);
  if (ec || r.empty()) return fs::absolute(target).generic_string();
  return r.generic_string();
}

struct SplitIdx {
  std::vector<int> train, valid, test;
};

SplitIdx split_indices(const ManifestData& m) {
  SplitIdx s;
  for (int i = 0; i < int(m.entries.size()); ++i) {
    const std::string& tag = m.entries[size_t(i)].split;
    if (tag == "train") s.train.push_back(i);
    else if (tag == "valid") s.valid.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

void require_splits(const SplitIdx& s, const std::string& what) {
  if (s.train.empty()) throw std::invalid_argument(what + ": train split is empty");
  if (s.valid.empty()) throw std::invalid_argument(what + ": valid split is empty");
  if (s.test.empty()) throw std::invalid_argument(what + ": test split is empty");
}

SampleMetrics pair_metrics(const BinaryMask& pred, const BinaryMask& gt) {
  SampleMetrics m;
  m.iou = iou(pred, gt);
  m.dsc = dsc(pred, gt);
  m.hd = hausdorff(pred, gt);
  return m;
}

// Proof obligation carried by every phase: annotations of the held-out split
// stay unread until the evaluation step.
void audit_no_test_mask_reads(const DatasetReader& rd, const std::string& phase) {
  std::unordered_set<std::string> test_masks;
  for (const ManifestEntry& e : rd.manifest().entries)
    if (e.split == "test") test_masks.insert(e.mask);
  for (const std::string& p : rd.mask_access_log())
    if (test_masks.count(p))
      throw std::logic_error(phase + ": test-split annotation read before evaluation");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// SD over B resample evaluations of an arbitrary statistic. Resamples where
// the statistic is undefined are dropped; fewer than two usable resamples
// give 0.
double bootstrap_stat_se(int n, int B, std::uint64_t seed,
                         const std::function<std::optional<double>(const std::vector<int>&)>& stat) {
  Rng rng(seed);
  std::vector<int> idx(static_cast<size_t>(n));
  std::vector<double> vals;
  vals.reserve(size_t(B));
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < n; ++i) idx[size_t(i)] = int(rng.next_below(std::uint64_t(n)));
    std::optional<double> v = stat(idx);
    if (v) vals.push_back(*v);
  }
  if (vals.size() < 2) return 0.0;
  double m = mean_of(vals);
  double acc = 0.0;
  for (double v : vals) acc += (v - m) * (v - m);
  return std::sqrt(acc / double(vals.size() - 1));
}

void write_curves(const std::string& path, const TrainHistory& h) {
  std::vector<std::vector<double>> rows;
  for (const EpochStats& e : h.epochs)
    rows.push_back({double(e.epoch), e.train_loss, e.valid_loss, e.lr});
  write_tsv(path, {"epoch", "train_loss", "valid_loss", "lr"}, rows);
}

void add_metric_block(Report& rep, const MetricReport& m) {
  rep.add("n", m.n);
  rep.add("iou_mean", m.iou.mean);
  rep.add("iou_se", m.iou.se);
  rep.add("dsc_mean", m.dsc.mean);
  rep.add("dsc_se", m.dsc.se);
  rep.add("hd_mean", m.hd.mean);
  rep.add("hd_se", m.hd.se);
}

void add_optional_rate(Report& rep, const std::string& key, const std::optional<double>& v) {
  if (v) rep.add(key, *v);
  else rep.add(key, "n/a");
}

// ------------------------------------------------------ lung segmenter step

struct LungSegArtifacts {
  std::string checkpoint;
  Params params32;  // reloaded from the float32 checkpoint
  MetricReport metrics;
  NetworkSpec spec;
};

LungSegArtifacts train_lung_segmenter(const std::string& lung_dir, const RunConfig& cfg,
                                      const std::string& run_dir) {
  ensure_dir(run_dir);
  ensure_dir(run_dir + "/plots");
  DatasetReader lung(lung_dir);
  const ManifestData& man = lung.manifest();
  SplitIdx sp = split_indices(man);
  require_splits(sp, "phase1: lung dataset");

  NetworkSpec spec{man.height, man.width};
  BinaryMask ones = all_ones(man.height, man.width);
  SegTrainData data;
  for (int i : sp.train) data.train.push_back({lung.image(i), lung.mask(i), ones});
  for (int i : sp.valid) data.valid.push_back({lung.image(i), lung.mask(i), ones});

  TrainConfig tc = cfg.lung_train;
  tc.seed = derive_seed(cfg.seed, "phase1.train");
  Params init = init_params(spec, derive_seed(cfg.seed, "phase1.init"));
  SegTrainResult res = train_segmenter(spec, init, data, 0.0, tc);

  std::string ckpt = run_dir + "/lung_segmenter.ckpt";
  save_checkpoint(ckpt, res.params);
  Params p32 = load_checkpoint(ckpt);
  write_curves(run_dir + "/plots/phase1_curves.tsv", res.history);

  audit_no_test_mask_reads(lung, "phase1");
  std::vector<SampleMetrics> sm;
  for (int i : sp.test) {
    BinaryMask pred = threshold(forward(spec, p32, lung.image(i)), cfg.lung_plus.bin_t);
    sm.push_back(pair_metrics(pred, lung.mask(i)));
  }
  MetricReport rep = make_metric_report(sm, cfg.bootstrap_b,
                                        derive_seed(cfg.seed, "phase1.boot"),
                                        config_fingerprint(cfg));

  Report r;
  r.add("config_fingerprint", rep.config_fingerprint);
  r.add("split", "test");
  add_metric_block(r, rep);
  r.add("best_epoch", res.history.best_epoch);
  r.add("epochs_run", int(res.history.epochs.size()));
  r.add("early_stopped", res.history.early_stopped);
  r.write(run_dir + "/phase1_lung_metrics");

  return {ckpt, std::move(p32), std::move(rep), spec};
}

// Produces candidate constraints for every target sample with the trained
// lung segmenter and corrupts the configured fraction of the train+valid
// candidates. raw_only skips the morphology chain and keeps the bare
// thresholded prediction.
struct CandidateStats {
  int n_candidates = 0;
  int n_corrupted = 0;
};

CandidateStats generate_candidates(const std::string& target_dir, const RunConfig& cfg,
                                   const std::string& run_dir,
                                   const LungSegArtifacts& lung, bool raw_only) {
  ensure_dir(run_dir);
  ensure_dir(run_dir + "/constraints");
  DatasetReader tgt(target_dir);
  const ManifestData& man = tgt.manifest();
  NetworkSpec spec{man.height, man.width};
  int n = int(man.entries.size());

  std::vector<BinaryMask> cands(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    ProbMap prob = forward(spec, lung.params32, tgt.image(i));
    cands[size_t(i)] =
        raw_only ? threshold(prob, cfg.lung_plus.bin_t) : lung_plus_space(prob, cfg.lung_plus);
  }

  // Corrupt train+valid only. Test annotations must stay untouched here.
  std::vector<int> tv;
  for (int i = 0; i < n; ++i)
    if (man.entries[size_t(i)].split != "test") tv.push_back(i);
  std::vector<BinaryMask> tv_cands, tv_lesions;
  for (int i : tv) {
    tv_cands.push_back(cands[size_t(i)]);
    tv_lesions.push_back(tgt.mask(i));
  }
  CorruptionResult cr = corrupt_constraints(tv_cands, tv_lesions, cfg.phantom.corruption,
                                            cfg.tau, derive_seed(cfg.seed, "phase1.corrupt"));
  CandidateStats stats;
  stats.n_candidates = n;
  std::vector<uint8_t> corrupted(size_t(n), 0);
  for (size_t k = 0; k < tv.size(); ++k) {
    cands[size_t(tv[k])] = cr.candidates[k];
    corrupted[size_t(tv[k])] = cr.corrupted[k];
    stats.n_corrupted += int(cr.corrupted[k]);
  }

  ManifestData out;
  out.version = 1;
  out.height = man.height;
  out.width = man.width;
  out.config_fingerprint = config_fingerprint(cfg);
  for (int i = 0; i < n; ++i) {
    const ManifestEntry& e = man.entries[size_t(i)];
    ManifestEntry ne;
    ne.id = e.id;
    ne.split = e.split;
    ne.image = rel_from(run_dir, target_dir + "/" + e.image);
    ne.mask = rel_from(run_dir, target_dir + "/" + e.mask);
    ne.constraint = "constraints/cand_" + e.id + ".pgm";
    write_pgm(run_dir + "/" + ne.constraint, cands[size_t(i)]);
    if (e.split != "test") {
      ne.has_corrupted = true;
      ne.corrupted = corrupted[size_t(i)] != 0;
    }
    out.entries.push_back(std::move(ne));
  }
  write_manifest(run_dir, out);
  audit_no_test_mask_reads(tgt, "phase1");
  return stats;
}

// Lung-plus and raw-lung ablations have no discriminator: every candidate is
// kept verbatim as the final constraint.
void accept_all_constraints(const std::string& run_dir) {
  DatasetReader rd(run_dir);
  ManifestData man = rd.manifest();
  for (int i = 0; i < int(man.entries.size()); ++i) {
    ManifestEntry& e = man.entries[size_t(i)];
    BinaryMask cand = rd.candidate_constraint(i);
    e.final_constraint = "constraints/final_" + e.id + ".pgm";
    write_pgm(run_dir + "/" + e.final_constraint, cand);
    e.has_accepted = true;
    e.accepted = true;
  }
  write_manifest(run_dir, man);
}

// --------------------------------------------------------------- evaluation

struct EvalOutcome {
  MetricReport metrics;
  bool has_ooc = false;
  double ooc_mass = 0.0;
  double ooc_frac = 0.0;
  double ooc_pixels = 0.0;
  std::vector<std::vector<double>> sample_rows;
};

// Test-split evaluation from reloaded float32 parameters: per-sample overlap
// metrics plus the prediction falling outside the sample's final constraint
// (when phase 2 produced one), both as soft probability mass and as pixels of
// the thresholded mask.
EvalOutcome evaluate_test_split(const DatasetReader& rd, const RunConfig& cfg,
                                const Params& p32) {
  const ManifestData& man = rd.manifest();
  NetworkSpec spec{man.height, man.width};
  SplitIdx sp = split_indices(man);
  if (sp.test.empty()) throw std::invalid_argument("evaluate: test split is empty");

  bool ooc_ok = true;
  for (int i : sp.test)
    if (man.entries[size_t(i)].final_constraint.empty()) ooc_ok = false;

  EvalOutcome out;
  std::vector<SampleMetrics> sm;
  double mass_sum = 0.0, frac_sum = 0.0, px_sum = 0.0;
  for (size_t k = 0; k < sp.test.size(); ++k) {
    int i = sp.test[k];
    ProbMap y = forward(spec, p32, rd.image(i));
    BinaryMask pred = threshold(y, 0.5);
    SampleMetrics m = pair_metrics(pred, rd.mask(i));
    sm.push_back(m);
    double ooc = -1.0, ooc_px = -1.0;
    if (ooc_ok) {
      BinaryMask c = rd.final_constraint(i);
      double total = std::accumulate(y.data.begin(), y.data.end(), 0.0);
      ooc = total - soft_intersection(y, c);
      ooc_px = 0.0;
      for (size_t j = 0; j < pred.data.size(); ++j)
        if (pred.data[j] && !c.data[j]) ooc_px += 1.0;
      mass_sum += ooc;
      frac_sum += ooc / total;  // total > 0 for a logistic output
      px_sum += ooc_px;
    }
    out.sample_rows.push_back({double(k), m.iou, m.dsc, m.hd, ooc, ooc_px});
  }
  out.metrics = make_metric_report(sm, cfg.bootstrap_b, derive_seed(cfg.seed, "phase3.boot"),
                                   config_fingerprint(cfg));
  out.has_ooc = ooc_ok;
  if (ooc_ok) {
    out.ooc_mass = mass_sum / double(sp.test.size());
    out.ooc_frac = frac_sum / double(sp.test.size());
    out.ooc_pixels = px_sum / double(sp.test.size());
  }
  return out;
}

void write_eval_report(const std::string& base, const RunConfig& cfg, const std::string& mode,
                       const EvalOutcome& ev) {
  Report r;
  r.add("config_fingerprint", config_fingerprint(cfg));
  r.add("mode", mode);
  add_metric_block(r, ev.metrics);
  if (ev.has_ooc) {
    r.add("ooc_mass_mean", ev.ooc_mass);
    r.add("ooc_frac_mean", ev.ooc_frac);
    r.add("ooc_pixels_mean", ev.ooc_pixels);
  }
  r.write(base);
}

}  // namespace

// ------------------------------------------------------------------- config

RunConfig default_run_config() { return RunConfig{}; }

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const std::exception& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }
  RunConfig cfg;
  read_object(j, "", {
    {"phantom", [&](const ordered_json& v, const std::string&) { read_phantom(v, "phantom.", cfg.phantom); }},
    {"lung_plus", [&](const ordered_json& v, const std::string&) {
      read_object(v, "lung_plus.", {
        {"bin_t", [&](const ordered_json& w, const std::string& n) { cfg.lung_plus.bin_t = as_num(w, n); }},
        {"k_components", [&](const ordered_json& w, const std::string& n) { cfg.lung_plus.k_components = as_int(w, n); }},
        {"close_k", [&](const ordered_json& w, const std::string& n) { cfg.lung_plus.close_k = as_int(w, n); }},
        {"dilate_k", [&](const ordered_json& w, const std::string& n) { cfg.lung_plus.dilate_k = as_int(w, n); }},
      });
    }},
    {"tau", [&](const ordered_json& v, const std::string& n) { cfg.tau = as_num(v, n); }},
    {"lambda_grid", [&](const ordered_json& v, const std::string& n) { cfg.lambda_grid = as_num_list(v, n); }},
    {"lambda_fixed", [&](const ordered_json& v, const std::string& n) { cfg.lambda_fixed = as_bool(v, n); }},
    {"lambda_value", [&](const ordered_json& v, const std::string& n) { cfg.lambda_value = as_num(v, n); }},
    {"specificity_anchor", [&](const ordered_json& v, const std::string& n) { cfg.specificity_anchor = as_num(v, n); }},
    {"specificity_anchors", [&](const ordered_json& v, const std::string& n) { cfg.specificity_anchors = as_num_list(v, n); }},
    {"cutoff_step", [&](const ordered_json& v, const std::string& n) { cfg.cutoff_step = as_num(v, n); }},
    {"lung_train", [&](const ordered_json& v, const std::string&) { read_train(v, "lung_train.", cfg.lung_train); }},
    {"disc_train", [&](const ordered_json& v, const std::string&) { read_train(v, "disc_train.", cfg.disc_train); }},
    {"lesion_train", [&](const ordered_json& v, const std::string&) { read_train(v, "lesion_train.", cfg.lesion_train); }},
    {"bootstrap_b", [&](const ordered_json& v, const std::string& n) { cfg.bootstrap_b = as_int(v, n); }},
    {"mode", [&](const ordered_json& v, const std::string& n) { cfg.mode = as_str(v, n); }},
    {"seed", [&](const ordered_json& v, const std::string& n) { cfg.seed = as_u64(v, n); }},
  });
  validate_run_config(cfg);
  return cfg;
}

std::uint64_t config_fingerprint(const RunConfig& cfg) {
  return fnv1a64(config_json(cfg).dump());
}

// -------------------------------------------------------------------- synth

void cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  PhantomConfig pc = cfg.phantom;
  pc.seed = derive_seed(cfg.seed, "synth");
  pc.tau = cfg.tau;
  std::uint64_t fp = config_fingerprint(cfg);
  write_dataset(out_dir + "/lung", gen_lung_dataset(pc), fp);
  write_dataset(out_dir + "/lesion", gen_lesion_dataset(pc), fp);
}

// ------------------------------------------------------------------ phase 1

Phase1Result cmd_phase1(const std::string& lung_dir, const std::string& target_dir,
                        const RunConfig& cfg, const std::string& run_dir) {
  LungSegArtifacts art = train_lung_segmenter(lung_dir, cfg, run_dir);
  CandidateStats st = generate_candidates(target_dir, cfg, run_dir, art, false);
  Phase1Result res;
  res.checkpoint = art.checkpoint;
  res.lung_metrics = std::move(art.metrics);
  res.n_candidates = st.n_candidates;
  res.n_corrupted = st.n_corrupted;
  return res;
}

// ------------------------------------------------------------------ phase 2

Phase2Result cmd_phase2(const RunConfig& cfg, const std::string& run_dir) {
  DatasetReader rd(run_dir);
  ManifestData man = rd.manifest();
  for (const ManifestEntry& e : man.entries)
    if (e.constraint.empty())
      throw std::runtime_error("phase2: no candidate constraints in manifest; run phase 1 first");
  SplitIdx sp = split_indices(man);
  if (sp.train.empty() || sp.valid.empty())
    throw std::invalid_argument("phase2: train and valid splits must be non-empty");

  int n = int(man.entries.size());
  DiscriminatorSpec dspec{man.height, man.width};
  ensure_dir(run_dir + "/plots");

  std::vector<GrayImage> imgs(static_cast<size_t>(n));
  std::vector<BinaryMask> cand(static_cast<size_t>(n));
  std::vector<uint8_t> usable(size_t(n), 1);
  for (int i = 0; i < n; ++i) {
    imgs[size_t(i)] = rd.image(i);
    cand[size_t(i)] = rd.candidate_constraint(i);
    if (cand[size_t(i)].area() == 0) usable[size_t(i)] = 0;  // auto-reject
  }

  // Coverage labels exist only where annotations may be read: train+valid.
  std::vector<double> cov(size_t(n), 0.0);
  std::vector<int> lab(size_t(n), 0);
  int n_pos = 0, n_neg = 0;
  for (int i = 0; i < n; ++i) {
    if (man.entries[size_t(i)].split == "test") continue;
    cov[size_t(i)] = coverage_rate(cand[size_t(i)], rd.mask(i));
    lab[size_t(i)] = make_label(cov[size_t(i)], cfg.tau);
    if (lab[size_t(i)] == 1) ++n_pos;
    else ++n_neg;
  }

  std::vector<LabeledFused> train_set, valid_set;
  for (int i : sp.train)
    if (usable[size_t(i)]) train_set.push_back({fuse(imgs[size_t(i)], cand[size_t(i)]), lab[size_t(i)]});
  for (int i : sp.valid)
    if (usable[size_t(i)]) valid_set.push_back({fuse(imgs[size_t(i)], cand[size_t(i)]), lab[size_t(i)]});
  auto has_both = [](const std::vector<LabeledFused>& v) {
    bool p = false, q = false;
    for (const LabeledFused& s : v) (s.label == 1 ? p : q) = true;
    return p && q;
  };
  if (train_set.empty() || !has_both(train_set))
    throw std::invalid_argument(
        "phase2: training labels are single-class; raise corruption or dataset size");
  if (valid_set.empty() || !has_both(valid_set))
    throw std::invalid_argument(
        "phase2: validation labels are single-class; raise corruption or dataset size");

  Classifier clf = train_discriminator(train_set, valid_set,
                                       derive_seed(cfg.seed, "phase2.disc"), cfg.disc_train);
  std::string ckpt = run_dir + "/discriminator.ckpt";
  save_checkpoint(ckpt, clf.params);
  Classifier clf32{dspec, load_checkpoint(ckpt), {}};
  write_curves(run_dir + "/plots/phase2_curves.tsv", clf.history);

  std::vector<double> scorev(size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    if (usable[size_t(i)]) scorev[size_t(i)] = score(clf32, fuse(imgs[size_t(i)], cand[size_t(i)]));

  // Validation-split operating characteristics.
  std::vector<double> vs;
  std::vector<uint8_t> vl;
  for (int i : sp.valid)
    if (usable[size_t(i)]) {
      vs.push_back(scorev[size_t(i)]);
      vl.push_back(uint8_t(lab[size_t(i)]));
    }
  Phase2Result res;
  res.auroc = auroc(vs, vl);
  res.auroc_se = bootstrap_stat_se(
      int(vs.size()), cfg.bootstrap_b, derive_seed(cfg.seed, "phase2.boot"),
      [&](const std::vector<int>& idx) -> std::optional<double> {
        std::vector<double> s;
        std::vector<uint8_t> l;
        bool p = false, q = false;
        for (int k : idx) {
          s.push_back(vs[size_t(k)]);
          l.push_back(vl[size_t(k)]);
          (vl[size_t(k)] ? p : q) = true;
        }
        if (!p || !q) return std::nullopt;
        return auroc(s, l);
      });

  std::vector<double> neg;
  for (size_t k = 0; k < vs.size(); ++k)
    if (vl[k] == 0) neg.push_back(vs[k]);

  const char* rate_names[4] = {"specificity", "sensitivity", "ppv", "npv"};
  for (size_t a = 0; a < cfg.specificity_anchors.size(); ++a) {
    double anchor = cfg.specificity_anchors[a];
    CutoffResult cr = cutoff_for_specificity(neg, anchor, cfg.cutoff_step);
    std::vector<uint8_t> dec = apply_cutoff(vs, cr.cutoff);
    AnchorRow row;
    row.anchor = anchor;
    row.cutoff = cr.cutoff;
    row.saturated = cr.saturated;
    row.rates = confusion_rates(dec, vl);
    double* ses[4] = {&row.specificity_se, &row.sensitivity_se, &row.ppv_se, &row.npv_se};
    for (int ri = 0; ri < 4; ++ri) {
      *ses[ri] = bootstrap_stat_se(
          int(vs.size()), cfg.bootstrap_b,
          derive_seed(cfg.seed, "phase2.boot.rate", std::uint64_t(a * 4 + size_t(ri))),
          [&](const std::vector<int>& idx) -> std::optional<double> {
            std::vector<uint8_t> d2, l2;
            for (int k : idx) {
              d2.push_back(dec[size_t(k)]);
              l2.push_back(vl[size_t(k)]);
            }
            ConfusionRates r2 = confusion_rates(d2, l2);
            const std::optional<double>* vals[4] = {&r2.specificity, &r2.sensitivity, &r2.ppv,
                                                    &r2.npv};
            return *vals[ri];
          });
    }
    res.rows.push_back(row);
  }

  res.chosen_anchor = cfg.specificity_anchor;
  res.chosen_cutoff = cutoff_for_specificity(neg, cfg.specificity_anchor, cfg.cutoff_step).cutoff;
  res.n_pos = n_pos;
  res.n_neg = n_neg;

  // Final constraints for every sample; rejected or empty candidates fall
  // back to the uninformative all-ones mask.
  std::vector<uint8_t> acc = apply_cutoff(scorev, res.chosen_cutoff);
  BinaryMask ones = all_ones(man.height, man.width);
  for (int i = 0; i < n; ++i) {
    ManifestEntry& e = man.entries[size_t(i)];
    bool keep = usable[size_t(i)] && acc[size_t(i)] != 0;
    if (keep) ++res.n_accepted;
    e.final_constraint = "constraints/final_" + e.id + ".pgm";
    write_pgm(run_dir + "/" + e.final_constraint, keep ? cand[size_t(i)] : ones);
    if (e.split != "test") {
      e.has_coverage = true;
      e.coverage = cov[size_t(i)];
      e.has_label = true;
      e.label = lab[size_t(i)];
    }
    e.has_score = usable[size_t(i)] != 0;
    e.score = scorev[size_t(i)];
    e.has_accepted = true;
    e.accepted = keep;
  }
  write_manifest(run_dir, man);
  audit_no_test_mask_reads(rd, "phase2");

  Report r;
  r.add("config_fingerprint", config_fingerprint(cfg));
  r.add("n_train", int(sp.train.size()));
  r.add("n_valid", int(sp.valid.size()));
  r.add("n_pos", n_pos);
  r.add("n_neg", n_neg);
  r.add("auroc", res.auroc);
  r.add("auroc_se", res.auroc_se);
  for (const AnchorRow& row : res.rows) {
    std::string p = "anchor_" + fmt2(row.anchor) + ".";
    r.add(p + "cutoff", row.cutoff);
    r.add(p + "saturated", row.saturated);
    add_optional_rate(r, p + "specificity", row.rates.specificity);
    r.add(p + "specificity_se", row.specificity_se);
    add_optional_rate(r, p + "sensitivity", row.rates.sensitivity);
    r.add(p + "sensitivity_se", row.sensitivity_se);
    add_optional_rate(r, p + "ppv", row.rates.ppv);
    r.add(p + "ppv_se", row.ppv_se);
    add_optional_rate(r, p + "npv", row.rates.npv);
    r.add(p + "npv_se", row.npv_se);
    r.add(p + "tp", row.rates.tp);
    r.add(p + "fp", row.rates.fp);
    r.add(p + "tn", row.rates.tn);
    r.add(p + "fn", row.rates.fn);
  }
  r.add("chosen_anchor", res.chosen_anchor);
  r.add("chosen_cutoff", res.chosen_cutoff);
  r.add("n_accepted", res.n_accepted);
  r.write(run_dir + "/phase2_discriminator");

  return res;
}

// ------------------------------------------------------------------ phase 3

Phase3Result cmd_phase3(const std::string& manifest_dir, const RunConfig& cfg,
                        const std::string& run_dir, const std::string& mode) {
  if (mode != "constrained" && mode != "baseline")
    throw std::invalid_argument("phase3 mode must be 'constrained' or 'baseline'");
  bool constrained = mode == "constrained";
  ensure_dir(run_dir);
  ensure_dir(run_dir + "/plots");

  DatasetReader rd(manifest_dir);
  const ManifestData& man = rd.manifest();
  SplitIdx sp = split_indices(man);
  require_splits(sp, "phase3");
  NetworkSpec spec{man.height, man.width};
  BinaryMask ones = all_ones(man.height, man.width);

  if (constrained)
    for (int i : sp.train)
      if (man.entries[size_t(i)].final_constraint.empty())
        throw std::runtime_error("phase3: no finalized constraints in manifest; run phase 2 first");

  SegTrainData data;
  for (int i : sp.train)
    data.train.push_back({rd.image(i), rd.mask(i), constrained ? rd.final_constraint(i) : ones});
  for (int i : sp.valid)
    data.valid.push_back({rd.image(i), rd.mask(i), constrained ? rd.final_constraint(i) : ones});

  std::vector<double> lambdas;
  if (!constrained) lambdas = {0.0};
  else if (cfg.lambda_fixed) lambdas = {cfg.lambda_value};
  else lambdas = cfg.lambda_grid;

  Params init = init_params(spec, derive_seed(cfg.seed, "phase3.init"));
  TrainConfig tc = cfg.lesion_train;
  tc.seed = derive_seed(cfg.seed, "phase3.train");

  Phase3Result res;
  SegTrainResult best;
  double best_iou = -1.0;
  for (double lam : lambdas) {
    SegTrainResult cand = train_segmenter(spec, init, data, lam, tc);
    double viou = 0.0;
    for (const SegSample& s : data.valid)
      viou += iou(threshold(forward(spec, cand.params, s.image), 0.5), s.target);
    viou /= double(data.valid.size());
    res.lambda_valid_iou.push_back({lam, viou});
    if (viou > best_iou) {  // strict: ties keep the first grid point
      best_iou = viou;
      best = std::move(cand);
      res.lambda = lam;
    }
  }

  res.checkpoint = run_dir + "/lesion_" + mode + ".ckpt";
  save_checkpoint(res.checkpoint, best.params);
  Params p32 = load_checkpoint(res.checkpoint);
  write_curves(run_dir + "/plots/phase3_" + mode + "_curves.tsv", best.history);

  audit_no_test_mask_reads(rd, "phase3");
  EvalOutcome ev = evaluate_test_split(rd, cfg, p32);
  res.metrics = ev.metrics;
  res.has_ooc = ev.has_ooc;
  res.ooc_mass_mean = ev.ooc_mass;
  res.ooc_frac_mean = ev.ooc_frac;
  res.ooc_pixels_mean = ev.ooc_pixels;
  write_tsv(run_dir + "/plots/phase3_" + mode + "_samples.tsv",
            {"index", "iou", "dsc", "hd", "ooc_mass", "ooc_pixels"}, ev.sample_rows);

  Report r;
  r.add("config_fingerprint", config_fingerprint(cfg));
  r.add("mode", mode);
  r.add("lambda", res.lambda);
  for (const auto& [lam, viou] : res.lambda_valid_iou)
    r.add("lambda_" + fmt2(lam) + ".valid_iou", viou);
  add_metric_block(r, res.metrics);
  if (res.has_ooc) {
    r.add("ooc_mass_mean", res.ooc_mass_mean);
    r.add("ooc_frac_mean", res.ooc_frac_mean);
    r.add("ooc_pixels_mean", res.ooc_pixels_mean);
  }
  r.add("best_epoch", best.history.best_epoch);
  r.add("epochs_run", int(best.history.epochs.size()));
  r.add("early_stopped", best.history.early_stopped);
  r.write(run_dir + "/phase3_" + mode + "_metrics");

  return res;
}

// --------------------------------------------------------------------- eval

Phase3Result cmd_eval(const std::string& run_dir, const RunConfig& cfg,
                      const std::string& mode) {
  if (mode != "constrained" && mode != "baseline")
    throw std::invalid_argument("eval mode must be 'constrained' or 'baseline'");
  DatasetReader rd(run_dir);
  std::string ckpt = run_dir + "/lesion_" + mode + ".ckpt";
  if (!fs::exists(ckpt))
    throw std::runtime_error("eval: no checkpoint for mode '" + mode + "' in " + run_dir);
  Params p32 = load_checkpoint(ckpt);
  EvalOutcome ev = evaluate_test_split(rd, cfg, p32);
  write_eval_report(run_dir + "/eval_" + mode + "_metrics", cfg, mode, ev);
  Phase3Result res;
  res.metrics = ev.metrics;
  res.checkpoint = ckpt;
  res.has_ooc = ev.has_ooc;
  res.ooc_mass_mean = ev.ooc_mass;
  res.ooc_frac_mean = ev.ooc_frac;
  res.ooc_pixels_mean = ev.ooc_pixels;
  return res;
}

// ------------------------------------------------------------------- ablate

AblateResult cmd_ablate(const std::string& lung_dir, const std::string& target_dir,
                        const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  ensure_dir(out_dir + "/plots");
  LungSegArtifacts lung = train_lung_segmenter(lung_dir, cfg, out_dir + "/shared");

  // full first so the baseline evaluation can reuse its finalized test
  // constraints for the out-of-constraint mass diagnostic.
  std::string full_dir = out_dir + "/full";
  generate_candidates(target_dir, cfg, full_dir, lung, false);
  cmd_phase2(cfg, full_dir);
  Phase3Result full = cmd_phase3(full_dir, cfg, full_dir, "constrained");

  Phase3Result base = cmd_phase3(full_dir, cfg, out_dir + "/baseline", "baseline");

  std::string raw_dir = out_dir + "/raw-lung";
  generate_candidates(target_dir, cfg, raw_dir, lung, true);
  accept_all_constraints(raw_dir);
  Phase3Result raw = cmd_phase3(raw_dir, cfg, raw_dir, "constrained");

  std::string lp_dir = out_dir + "/lung-plus";
  generate_candidates(target_dir, cfg, lp_dir, lung, false);
  accept_all_constraints(lp_dir);
  Phase3Result lp = cmd_phase3(lp_dir, cfg, lp_dir, "constrained");

  AblateResult out;
  auto push = [&out](const std::string& name, const Phase3Result& r) {
    AblateRow row;
    row.mode = name;
    row.metrics = r.metrics;
    row.lambda = r.lambda;
    row.has_ooc = r.has_ooc;
    row.ooc_mass_mean = r.ooc_mass_mean;
    row.ooc_frac_mean = r.ooc_frac_mean;
    row.ooc_pixels_mean = r.ooc_pixels_mean;
    out.rows.push_back(row);
  };
  push("baseline", base);
  push("raw-lung", raw);
  push("lung-plus", lp);
  push("full", full);

  Report r;
  r.add("config_fingerprint", config_fingerprint(cfg));
  r.add("seed", cfg.seed);
  std::vector<std::vector<double>> rows;
  for (size_t k = 0; k < out.rows.size(); ++k) {
    const AblateRow& row = out.rows[k];
    std::string p = row.mode + ".";
    r.add(p + "lambda", row.lambda);
    r.add(p + "iou_mean", row.metrics.iou.mean);
    r.add(p + "iou_se", row.metrics.iou.se);
    r.add(p + "dsc_mean", row.metrics.dsc.mean);
    r.add(p + "dsc_se", row.metrics.dsc.se);
    r.add(p + "hd_mean", row.metrics.hd.mean);
    r.add(p + "hd_se", row.metrics.hd.se);
    if (row.has_ooc) {
      r.add(p + "ooc_mass_mean", row.ooc_mass_mean);
      r.add(p + "ooc_frac_mean", row.ooc_frac_mean);
      r.add(p + "ooc_pixels_mean", row.ooc_pixels_mean);
    }
    rows.push_back({double(k), row.lambda, row.metrics.iou.mean, row.metrics.iou.se,
                    row.metrics.dsc.mean, row.metrics.dsc.se, row.metrics.hd.mean,
                    row.metrics.hd.se});
  }
  write_tsv(out_dir + "/plots/ablation.tsv",
            {"mode_index", "lambda", "iou_mean", "iou_se", "dsc_mean", "dsc_se", "hd_mean",
             "hd_se"},
            rows);
  r.write(out_dir + "/ablation_report");
  return out;
}

// -------------------------------------------------------------------- sweep

SweepResult cmd_sweep(const std::string& lung_dir, const std::string& target_dir,
                      const RunConfig& cfg, const std::string& axis,
                      const std::string& out_dir) {
  std::vector<double> values;
  if (axis == "close") values = {15, 19, 25};
  else if (axis == "dilate") values = {10, 15, 20};
  else if (axis == "tau") values = {0.80, 0.90, 0.99};
  else throw std::invalid_argument("sweep axis must be 'close', 'dilate' or 'tau'");

  ensure_dir(out_dir);
  ensure_dir(out_dir + "/plots");
  LungSegArtifacts lung = train_lung_segmenter(lung_dir, cfg, out_dir + "/shared");

  SweepResult out;
  out.axis = axis;
  Phase3Result base = cmd_phase3(target_dir, cfg, out_dir + "/baseline", "baseline");
  out.baseline = base.metrics;

  Report r;
  r.add("config_fingerprint", config_fingerprint(cfg));
  r.add("axis", axis);
  r.add("baseline.iou_mean", base.metrics.iou.mean);
  r.add("baseline.iou_se", base.metrics.iou.se);
  r.add("baseline.dsc_mean", base.metrics.dsc.mean);
  r.add("baseline.dsc_se", base.metrics.dsc.se);
  r.add("baseline.hd_mean", base.metrics.hd.mean);
  r.add("baseline.hd_se", base.metrics.hd.se);

  std::vector<std::vector<double>> rows;
  rows.push_back({1.0, 0.0, base.metrics.iou.mean, base.metrics.iou.se, base.metrics.dsc.mean,
                  base.metrics.dsc.se, base.metrics.hd.mean, base.metrics.hd.se});
  for (double v : values) {
    RunConfig c2 = cfg;
    std::string token;
    if (axis == "close") {
      c2.lung_plus.close_k = int(v);
      token = std::to_string(int(v));
    } else if (axis == "dilate") {
      c2.lung_plus.dilate_k = int(v);
      token = std::to_string(int(v));
    } else {
      c2.tau = v;
      token = fmt2(v);
    }
    std::string dir = out_dir + "/" + axis + "_" + token;
    generate_candidates(target_dir, c2, dir, lung, false);
    cmd_phase2(c2, dir);
    Phase3Result pr = cmd_phase3(dir, c2, dir, "constrained");
    SweepRow row;
    row.value = v;
    row.metrics = pr.metrics;
    out.rows.push_back(row);

    std::string p = axis + "_" + token + ".";
    r.add(p + "iou_mean", pr.metrics.iou.mean);
    r.add(p + "iou_se", pr.metrics.iou.se);
    r.add(p + "dsc_mean", pr.metrics.dsc.mean);
    r.add(p + "dsc_se", pr.metrics.dsc.se);
    r.add(p + "hd_mean", pr.metrics.hd.mean);
    r.add(p + "hd_se", pr.metrics.hd.se);
    rows.push_back({0.0, v, pr.metrics.iou.mean, pr.metrics.iou.se, pr.metrics.dsc.mean,
                    pr.metrics.dsc.se, pr.metrics.hd.mean, pr.metrics.hd.se});
  }
  write_tsv(out_dir + "/plots/sweep_" + axis + ".tsv",
            {"is_baseline", "value", "iou_mean", "iou_se", "dsc_mean", "dsc_se", "hd_mean",
             "hd_se"},
            rows);
  r.write(out_dir + "/sweep_" + axis + "_report");
  return out;
}

// ---------------------------------------------------------------- gradcheck

GradcheckResult cmd_gradcheck(const RunConfig& cfg, const std::string& out_dir) {
  const double h = 1e-5;
  const int kProbes = 60;
  const int gh = 8, gw = 8;
  Rng rng(derive_seed(cfg.seed, "gradcheck"));

  auto rel = [](double a, double f) {
    return std::fabs(a - f) / std::max({std::fabs(a), std::fabs(f), 1e-6});
  };
  auto rand_probs = [&](double lo, double hi) {
    ProbMap y(gh, gw);
    for (double& v : y.data) v = rng.next_range(lo, hi);
    return y;
  };
  auto rand_mask = [&](double p) {
    BinaryMask m(gh, gw);
    for (uint8_t& v : m.data) v = rng.next_double() < p ? 1 : 0;
    if (m.all_one()) m.data[0] = 0;  // keep the penalty branch live
    return m;
  };

  GradcheckResult res;
  for (int t = 0; t < kProbes; ++t) {
    ProbMap y = rand_probs(0.2, 0.8);
    BinaryMask s = rand_mask(0.4);
    BinaryMask c = rand_mask(0.5);
    size_t j = size_t(rng.next_below(y.size()));
    auto probe = [&](const std::function<LossResult(const ProbMap&)>& fn, double& worst) {
      LossResult lr = fn(y);
      ProbMap yp = y, ym = y;
      yp.data[j] += h;
      ym.data[j] -= h;
      double fd = (fn(yp).value - fn(ym).value) / (2.0 * h);
      worst = std::max(worst, rel(lr.grad.data[j], fd));
    };
    probe([&](const ProbMap& v) { return dice_loss(v, s); }, res.max_rel_dice);
    probe([&](const ProbMap& v) { return constraint_penalty(v, c); }, res.max_rel_penalty);
    probe([&](const ProbMap& v) { return constrained_loss(v, s, c, 0.6); },
          res.max_rel_constrained);
  }

  NetworkSpec spec{gh, gw};
  Params params = init_params(spec, derive_seed(cfg.seed, "gradcheck.init"));
  GrayImage img(gh, gw);
  for (double& v : img.data) v = rng.next_double();
  BinaryMask s = rand_mask(0.4);
  BinaryMask c = rand_mask(0.5);
  for (double lam : {0.0, 0.6, 1.0}) {
    auto objective = [&](const ProbMap& v) { return constrained_loss(v, s, c, lam); };
    ParamGrads g(params.size(), 0.0);
    accumulate_loss_grad(spec, params, img, objective, g, 1.0);
    for (int t = 0; t < kProbes; ++t) {
      size_t k = size_t(rng.next_below(params.size()));
      Params p2 = params;
      p2[k] += h;
      double lp = objective(forward(spec, p2, img)).value;
      p2[k] -= 2.0 * h;
      double lm = objective(forward(spec, p2, img)).value;
      double fd = (lp - lm) / (2.0 * h);
      res.max_rel_end_to_end = std::max(res.max_rel_end_to_end, rel(g[k], fd));
    }
  }

  const double tol = 1e-4;
  res.pass = res.max_rel_dice < tol && res.max_rel_penalty < tol &&
             res.max_rel_constrained < tol && res.max_rel_end_to_end < tol;

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    Report r;
    r.add("config_fingerprint", config_fingerprint(cfg));
    r.add("max_rel_dice", res.max_rel_dice);
    r.add("max_rel_penalty", res.max_rel_penalty);
    r.add("max_rel_constrained", res.max_rel_constrained);
    r.add("max_rel_end_to_end", res.max_rel_end_to_end);
    r.add("tolerance", tol);
    r.add("pass", res.pass);
    r.write(out_dir + "/gradcheck_report");
  }
  return res;
}

}  // namespace cseg
