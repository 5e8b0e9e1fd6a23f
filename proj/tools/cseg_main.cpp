#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "cseg/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, CommonArgs& c) {
  sub->add_option("--config", c.config, "JSON run configuration (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  c.seed_opt = sub->add_option("--seed", c.seed, "override the configured seed");
}

cseg::RunConfig resolve_config(const CommonArgs& c) {
  cseg::RunConfig cfg =
      c.config.empty() ? cseg::default_run_config() : cseg::load_run_config(c.config);
  if (c.seed_opt && c.seed_opt->count() > 0) cfg.seed = c.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constrained lesion segmentation pipeline"};
  app.require_subcommand(1);

  CommonArgs ca_synth, ca_p1, ca_p2, ca_p3, ca_eval, ca_abl, ca_sweep, ca_grad;
  std::string out_synth, out_p1, out_p2, out_p3, out_eval, out_abl, out_sweep, out_grad;
  std::string lung_p1, target_p1, lung_abl, target_abl, lung_sweep, target_sweep;
  std::string manifest_p3, mode_p3 = "constrained", mode_eval = "constrained", axis;

  CLI::App* synth = app.add_subcommand("synth", "generate lung and lesion phantom datasets");
  add_common(synth, ca_synth);
  synth->add_option("--out", out_synth, "output directory (gets lung/ and lesion/)")->required();

  CLI::App* p1 = app.add_subcommand(
      "phase1", "train the lung segmenter and emit candidate constraints");
  add_common(p1, ca_p1);
  p1->add_option("--lung", lung_p1, "lung dataset directory")->required();
  p1->add_option("--target", target_p1, "lesion dataset directory")->required();
  p1->add_option("--out", out_p1, "run directory")->required();

  CLI::App* p2 = app.add_subcommand(
      "phase2", "train the constraint discriminator and finalize constraints");
  add_common(p2, ca_p2);
  p2->add_option("--out", out_p2, "run directory (phase 1 output)")->required();

  CLI::App* p3 = app.add_subcommand("phase3", "train and evaluate the lesion segmenter");
  add_common(p3, ca_p3);
  p3->add_option("--out", out_p3, "run directory")->required();
  p3->add_option("--target", manifest_p3,
                 "manifest directory (defaults to the run directory)");
  p3->add_option("--mode", mode_p3, "constrained | baseline")
      ->check(CLI::IsMember({"constrained", "baseline"}));

  CLI::App* ev = app.add_subcommand("eval", "re-evaluate a stored run from its checkpoint");
  add_common(ev, ca_eval);
  ev->add_option("--out", out_eval, "run directory")->required();
  ev->add_option("--mode", mode_eval, "constrained | baseline")
      ->check(CLI::IsMember({"constrained", "baseline"}));

  CLI::App* abl = app.add_subcommand("ablate",
                                     "baseline / raw-lung / lung-plus / full comparison");
  add_common(abl, ca_abl);
  abl->add_option("--lung", lung_abl, "lung dataset directory")->required();
  abl->add_option("--target", target_abl, "lesion dataset directory")->required();
  abl->add_option("--out", out_abl, "output directory")->required();

  CLI::App* sw = app.add_subcommand("sweep", "morphology / tau sensitivity sweep");
  add_common(sw, ca_sweep);
  sw->add_option("--lung", lung_sweep, "lung dataset directory")->required();
  sw->add_option("--target", target_sweep, "lesion dataset directory")->required();
  sw->add_option("--axis", axis, "close | dilate | tau")
      ->required()
      ->check(CLI::IsMember({"close", "dilate", "tau"}));
  sw->add_option("--out", out_sweep, "output directory")->required();

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gc, ca_grad);
  gc->add_option("--out", out_grad, "optional report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      cseg::cmd_synth(resolve_config(ca_synth), out_synth);
      std::printf("wrote %s/lung and %s/lesion\n", out_synth.c_str(), out_synth.c_str());
    } else if (p1->parsed()) {
      cseg::Phase1Result r = cseg::cmd_phase1(lung_p1, target_p1, resolve_config(ca_p1), out_p1);
      std::printf("phase1: lung test iou %.4f, %d candidates (%d corrupted)\n",
                  r.lung_metrics.iou.mean, r.n_candidates, r.n_corrupted);
    } else if (p2->parsed()) {
      cseg::Phase2Result r = cseg::cmd_phase2(resolve_config(ca_p2), out_p2);
      std::printf("phase2: auroc %.4f, cutoff %.2f at anchor %.2f, %d accepted\n", r.auroc,
                  r.chosen_cutoff, r.chosen_anchor, r.n_accepted);
    } else if (p3->parsed()) {
      cseg::RunConfig cfg = resolve_config(ca_p3);
      std::string man = manifest_p3.empty() ? out_p3 : manifest_p3;
      cseg::Phase3Result r = cseg::cmd_phase3(man, cfg, out_p3, mode_p3);
      std::printf("phase3 (%s): test iou %.4f, dsc %.4f, hd %.2f, lambda %.2f\n",
                  mode_p3.c_str(), r.metrics.iou.mean, r.metrics.dsc.mean, r.metrics.hd.mean,
                  r.lambda);
    } else if (ev->parsed()) {
      cseg::Phase3Result r = cseg::cmd_eval(out_eval, resolve_config(ca_eval), mode_eval);
      std::printf("eval (%s): test iou %.4f, dsc %.4f, hd %.2f\n", mode_eval.c_str(),
                  r.metrics.iou.mean, r.metrics.dsc.mean, r.metrics.hd.mean);
    } else if (abl->parsed()) {
      cseg::AblateResult r =
          cseg::cmd_ablate(lung_abl, target_abl, resolve_config(ca_abl), out_abl);
      for (const cseg::AblateRow& row : r.rows)
        std::printf("ablate %-9s iou %.4f dsc %.4f hd %.2f\n", row.mode.c_str(),
                    row.metrics.iou.mean, row.metrics.dsc.mean, row.metrics.hd.mean);
    } else if (sw->parsed()) {
      cseg::SweepResult r =
          cseg::cmd_sweep(lung_sweep, target_sweep, resolve_config(ca_sweep), axis, out_sweep);
      std::printf("sweep %s: baseline iou %.4f\n", r.axis.c_str(), r.baseline.iou.mean);
      for (const cseg::SweepRow& row : r.rows)
        std::printf("sweep %s=%g iou %.4f\n", r.axis.c_str(), row.value, row.metrics.iou.mean);
    } else if (gc->parsed()) {
      cseg::GradcheckResult r = cseg::cmd_gradcheck(resolve_config(ca_grad), out_grad);
      std::printf("gradcheck: dice %.3e penalty %.3e constrained %.3e end-to-end %.3e -> %s\n",
                  r.max_rel_dice, r.max_rel_penalty, r.max_rel_constrained,
                  r.max_rel_end_to_end, r.pass ? "pass" : "FAIL");
      return r.pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
