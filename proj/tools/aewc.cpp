// SPDX-License-Identifier: Apache-2.0
// Command-line front-end: teacher, fisher, train, sweep, report, audit.
#include <iostream>

#include <CLI11.hpp>

#include "aewc/commands.hpp"

int main(int argc, char** argv) {
  using namespace aewc;
  CLI::App app{"Teacher-student backdoor injection with cosine-aware adaptive EWC", "aewc"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  TeacherArgs teacher;
  auto* t = app.add_subcommand("teacher", "Build the teacher encoder and write it with its vocabulary and pools");
  t->add_option("--config", teacher.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  t->add_option("--out-dir", teacher.out_dir, "Output directory")->required();

  FisherArgs fisher;
  auto* f = app.add_subcommand("fisher", "Estimate and cache the diagonal Fisher of the teacher");
  f->add_option("--config", fisher.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  f->add_option("--out", fisher.out, "Cache file to write")->required();
  f->add_flag("--force", fisher.force, "Overwrite an existing cache");

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train one student and evaluate it");
  tr->add_option("--config", train.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  tr->add_option("--mode", train.mode, "plain|lwf|lwf_cos|fixed|fixed_cos|rap|adaptive")->required();
  tr->add_option("--family", train.family, "syntactic|unicode|phrase")->capture_default_str();
  tr->add_option("--seed", train.seed, "Training seed")->capture_default_str();
  tr->add_option("--fisher-cache", train.fisher_cache, "Fisher cache (required by fixed, fixed_cos, adaptive)");
  tr->add_option("--out-dir", train.out_dir, "Run output directory")->required();
  tr->add_option("--lambda0", train.lambda0, "Override lambda0");
  tr->add_flag("--train-adapter", train.train_adapter, "Also update the adapter during injection");

  SweepArgs sweep;
  auto* sw = app.add_subcommand("sweep", "Run a (family x mode x seed) grid and aggregate it");
  sw->add_option("--config", sweep.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sw->add_option("--modes", sweep.modes, "Modes to run")->required()->delimiter(',');
  sw->add_option("--seeds", sweep.seeds, "Seeds to run")->required()->delimiter(',');
  sw->add_option("--families", sweep.families, "Trigger families")->delimiter(',')->capture_default_str();
  sw->add_option("--fisher-cache", sweep.fisher_cache, "Existing Fisher cache (built into out-dir otherwise)");
  sw->add_option("--out-dir", sweep.out_dir, "Sweep output directory")->required();
  sw->add_option("--lambda0-scan", sweep.lambda0_scan, "lambda0 values for fixed/fixed_cos")->delimiter(',');
  sw->add_option("--baseline", sweep.baseline, "Baseline mode for effect sizes")->capture_default_str();
  sw->add_option("--jobs", sweep.jobs, "Parallel workers")->capture_default_str()->check(CLI::PositiveNumber);

  ReportArgs report;
  auto* rp = app.add_subcommand("report", "Aggregate run reports into CSV tables");
  rp->add_option("--runs-dir", report.runs_dir, "Directory searched for report.json files")->required();
  rp->add_option("--baseline", report.baseline, "Baseline mode for effect sizes")->capture_default_str();
  rp->add_option("--out-dir", report.out_dir, "Where to write tables (defaults to --runs-dir)");

  AuditArgs audit;
  auto* au = app.add_subcommand("audit", "Recompute every hash recorded in run manifests");
  au->add_option("dir", audit.dir, "Run directory, sweep directory or manifest file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto& out = std::cout;
  auto& err = std::cerr;
  if (*t) return guarded([&] { return cmd_teacher(teacher, out, err); }, err);
  if (*f) return guarded([&] { return cmd_fisher(fisher, out, err); }, err);
  if (*tr) return guarded([&] { return cmd_train(train, out, err); }, err);
  if (*sw) return guarded([&] { return cmd_sweep(sweep, out, err); }, err);
  if (*rp) return guarded([&] { return cmd_report(report, out, err); }, err);
  return guarded([&] { return cmd_audit(audit, out, err); }, err);
}
