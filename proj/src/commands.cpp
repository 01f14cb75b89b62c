// SPDX-License-Identifier: Apache-2.0
#include "aewc/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "aewc/errors.hpp"
#include "aewc/experiment.hpp"
#include "aewc/hash.hpp"

namespace aewc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Hashes each named file under `dir`.
json hash_artifacts(const fs::path& dir, const std::vector<std::string>& names) {
  json a = json::object();
  for (const auto& n : names) a[n] = sha256_file(dir / n);
  return a;
}

json base_manifest(const std::string& kind, const ExperimentConfig& config, const Experiment& ex,
                   const std::string& started) {
  return {{"kind", kind},
          {"tool_version", kToolVersion},
          {"config", config.to_json()},
          {"hashes", {{"teacher", ex.teacher.hash()}, {"corpus", ex.pools.hash()}, {"vocab", ex.vocab.hash()}}},
          {"started_at", started}};
}

/// Writes student, step log, report, pools and manifest for one finished cell.
void write_run(const fs::path& dir, const Experiment& ex, const TrainConfig& tc, const FisherCache* cache,
               const CellResult& cell, const std::string& started) {
  fs::create_directories(dir);
  save_model(cell.train.student, dir / "student.bin", "student");
  write_text(dir / "steps.jsonl", cell.train.logs_jsonl());
  write_text(dir / "report.json", cell.report.to_json().dump(2) + "\n");
  write_text(dir / "pools.json", ex.pools.manifest().dump(2) + "\n");
  json m = base_manifest("train_run", ex.config, ex, started);
  m["train"] = tc.to_json();
  m["label"] = cell.report.mode;
  m["seed"] = tc.seed;
  m["hashes"]["fisher_cache"] = cache ? json(cache->content_hash()) : json(nullptr);
  m["hashes"]["batch_trace"] = cell.train.trace_hash();
  m["hashes"]["student"] = model_hash(cell.train.student);
  m["artifacts"] = hash_artifacts(dir, {"student.bin", "steps.jsonl", "report.json", "pools.json"});
  m["finished_at"] = iso_now();
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

struct LoadedRun {
  fs::path dir;
  RunReport report;
  json manifest;
};

std::vector<LoadedRun> find_runs(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::invalid_argument("not a directory: " + root.string());
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "report.json") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<LoadedRun> runs;
  for (const auto& p : paths) {
    LoadedRun r;
    r.dir = p.parent_path();
    try {
      r.report = RunReport::from_json(read_json(p));
    } catch (const json::exception& e) {
      throw ValidationError("malformed run report " + p.string() + ": " + e.what());
    }
    if (fs::exists(r.dir / "manifest.json")) r.manifest = read_json(r.dir / "manifest.json");
    runs.push_back(std::move(r));
  }
  return runs;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// Lambda trajectories of every run; adaptive runs are checked against their
/// configured clip range.
std::string lambda_trajectory_csv(const std::vector<LoadedRun>& runs) {
  std::ostringstream os;
  os << "family,mode,seed,step,lambda,r_hat\n";
  for (const auto& r : runs) {
    const auto log_path = r.dir / "steps.jsonl";
    if (!fs::exists(log_path)) continue;
    RegulatorState bounds;
    bool adaptive = false;
    if (r.manifest.contains("train")) {
      const auto& t = r.manifest.at("train");
      bounds.lambda_min = t.value("lambda_min", bounds.lambda_min);
      bounds.lambda_max = t.value("lambda_max", bounds.lambda_max);
      adaptive = t.value("mode", std::string{}) == "adaptive";
    } else {
      adaptive = r.report.mode == "adaptive";
    }
    std::istringstream in(read_text(log_path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      StepLog s;
      try {
        s = StepLog::from_json(json::parse(line));
      } catch (const json::exception& e) {
        throw ValidationError("malformed step log " + log_path.string() + ": " + e.what());
      }
      if (adaptive && (s.lambda < bounds.lambda_min || s.lambda > bounds.lambda_max)) {
        throw ValidationError("lambda out of range in " + log_path.string() + " at step " + std::to_string(s.step));
      }
      os << r.report.family << ',' << r.report.mode << ',' << r.report.seed << ',' << s.step << ',' << fmt(s.lambda)
         << ',' << fmt(s.r_hat) << '\n';
    }
  }
  return os.str();
}

void write_tables(const std::vector<RunReport>& reports, const std::string& baseline, const EvalConfig& eval,
                  const fs::path& out_dir) {
  const auto agg = aggregate(reports, baseline, eval, true);
  write_text(out_dir / "aggregate.csv", agg.table_csv());
  write_text(out_dir / "pareto.csv", agg.pareto_csv());
  std::set<std::string> families;
  for (const auto& r : reports) families.insert(r.family);
  if (families.size() > 1) {
    for (const auto& f : families) {
      std::vector<RunReport> sub;
      for (const auto& r : reports) {
        if (r.family == f) sub.push_back(r);
      }
      write_text(out_dir / ("aggregate_" + f + ".csv"), aggregate(sub, baseline, eval, true).table_csv());
    }
  }
}

bool audit_manifest(const fs::path& manifest_path, std::ostream& out, std::ostream& err) {
  const auto m = read_json(manifest_path);
  const auto dir = manifest_path.parent_path();
  bool ok = true;
  const json artifacts = m.value("artifacts", json::object());
  for (const auto& [name, digest] : artifacts.items()) {
    const auto p = dir / name;
    if (!fs::exists(p)) {
      err << manifest_path.string() << ": missing artifact " << name << '\n';
      ok = false;
      continue;
    }
    const auto actual = sha256_file(p);
    if (actual != digest.get<std::string>()) {
      err << manifest_path.string() << ": hash mismatch for " << name << '\n';
      ok = false;
    }
  }
  if (m.contains("config")) {
    const auto ex = build_experiment(ExperimentConfig::from_json(m.at("config")));
    const auto& h = m.at("hashes");
    if (h.value("teacher", std::string{}) != ex.teacher.hash()) {
      err << manifest_path.string() << ": teacher hash does not recompute\n";
      ok = false;
    }
    if (h.value("corpus", std::string{}) != ex.pools.hash()) {
      err << manifest_path.string() << ": corpus hash does not recompute\n";
      ok = false;
    }
    if (h.contains("student") && fs::exists(dir / "student.bin")) {
      if (model_hash(load_model(dir / "student.bin")) != h.at("student").get<std::string>()) {
        err << manifest_path.string() << ": student hash does not recompute\n";
        ok = false;
      }
    }
    if (h.contains("fisher_cache") && m.contains("cache_file")) {
      const auto cache = cache_load(dir / m.at("cache_file").get<std::string>(), ex.teacher.hash());
      if (cache.content_hash() != h.at("fisher_cache").get<std::string>()) {
        err << manifest_path.string() << ": fisher cache hash does not recompute\n";
        ok = false;
      }
    }
  }
  out << (ok ? "ok       " : "MISMATCH ") << manifest_path.string() << '\n';
  return ok;
}

}  // namespace

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const json::exception& e) {
    err << "error: malformed input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

std::string scan_label(const std::string& mode, double lambda0) {
  std::ostringstream os;
  os << mode << "@lambda0=" << lambda0;
  return os.str();
}

int cmd_teacher(const TeacherArgs& args, std::ostream& out, std::ostream&) {
  const auto started = iso_now();
  const auto config = ExperimentConfig::load(args.config);
  const auto ex = build_experiment(config);
  fs::create_directories(args.out_dir);
  save_model(ex.teacher.model(), args.out_dir / "teacher.bin", "teacher");
  ex.vocab.save(args.out_dir / "vocab.txt");
  write_text(args.out_dir / "pools.json", ex.pools.manifest().dump(2) + "\n");
  json m = base_manifest("teacher", config, ex, started);
  m["target"] = {{"phrase", ex.target.phrase}, {"z_target", ex.target.z_target.values}};
  m["artifacts"] = hash_artifacts(args.out_dir, {"teacher.bin", "vocab.txt", "pools.json"});
  m["finished_at"] = iso_now();
  write_text(args.out_dir / "manifest.json", m.dump(2) + "\n");
  out << "teacher " << ex.teacher.hash() << '\n';
  return kExitOk;
}

int cmd_fisher(const FisherArgs& args, std::ostream& out, std::ostream&) {
  if (fs::exists(args.out) && !args.force) {
    throw std::invalid_argument(args.out.string() + " exists; pass --force to overwrite");
  }
  const auto started = iso_now();
  const auto config = ExperimentConfig::load(args.config);
  const auto ex = build_experiment(config);
  const auto cache = build_fisher(ex);
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  cache_save(cache, args.out);
  json m = base_manifest("fisher_cache", config, ex, started);
  m["hashes"]["fisher_cache"] = cache.content_hash();
  m["cache_file"] = args.out.filename().string();
  m["n_prompts"] = cache.n_prompts;
  m["artifacts"] = hash_artifacts(args.out.parent_path().empty() ? fs::path(".") : args.out.parent_path(),
                                  {args.out.filename().string()});
  m["finished_at"] = iso_now();
  auto manifest_path = args.out;
  manifest_path += ".manifest.json";
  write_text(manifest_path, m.dump(2) + "\n");
  out << "fisher " << cache.content_hash() << " n_prompts=" << cache.n_prompts << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  const auto started = iso_now();
  const Mode mode = parse_mode(args.mode);
  const TriggerFamily family = parse_family(args.family);
  if (uses_fisher(mode) && !args.fisher_cache) {
    throw std::invalid_argument("--mode " + args.mode + " requires --fisher-cache");
  }
  const auto config = ExperimentConfig::load(args.config);
  auto tc = config.train_config(family, mode, args.seed);
  if (args.lambda0) tc.regulator.lambda0 = *args.lambda0;
  if (args.train_adapter) tc.train_adapter = true;
  tc.validate();

  const auto ex = build_experiment(config);
  std::optional<FisherCache> cache;
  if (mode == Mode::Plain && args.fisher_cache) {
    err << "warning: --fisher-cache is ignored in plain mode\n";
  } else if (args.fisher_cache) {
    cache = cache_load(*args.fisher_cache, ex.teacher.hash());
  }
  const std::string label = args.lambda0 ? scan_label(args.mode, *args.lambda0) : args.mode;
  const auto cell = run_cell(ex, tc, cache ? &*cache : nullptr, label);
  write_run(args.out_dir, ex, tc, cache ? &*cache : nullptr, cell, started);
  const auto& m = cell.report.in_dist;
  out << label << ' ' << args.family << " seed=" << args.seed << " asr=" << m.asr << " clean_cos=" << m.clean_cos
      << '\n';
  return kExitOk;
}

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
  if (args.modes.empty()) throw std::invalid_argument("sweep needs at least one mode");
  if (args.seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  if (args.families.empty()) throw std::invalid_argument("sweep needs at least one family");
  std::vector<Mode> modes;
  for (const auto& m : args.modes) modes.push_back(parse_mode(m));
  std::vector<TriggerFamily> families;
  for (const auto& f : args.families) families.push_back(parse_family(f));

  const auto config = ExperimentConfig::load(args.config);
  const auto ex = build_experiment(config);
  fs::create_directories(args.out_dir);

  std::optional<FisherCache> cache;
  const bool need_cache = std::any_of(modes.begin(), modes.end(), uses_fisher);
  if (args.fisher_cache) {
    cache = cache_load(*args.fisher_cache, ex.teacher.hash());
  } else if (need_cache) {
    FisherArgs fa{args.config, args.out_dir / "fisher.bin", true};
    std::ostringstream sink;
    cmd_fisher(fa, sink, err);
    cache = cache_load(fa.out, ex.teacher.hash());
  }

  struct Cell {
    TrainConfig tc;
    std::string label;
    fs::path dir;
  };
  std::vector<Cell> cells;
  for (const auto family : families) {
    for (const auto mode : modes) {
      const bool scan = !args.lambda0_scan.empty() && (mode == Mode::Fixed || mode == Mode::FixedCos);
      const std::vector<std::optional<double>> lambdas =
          scan ? std::vector<std::optional<double>>(args.lambda0_scan.begin(), args.lambda0_scan.end())
               : std::vector<std::optional<double>>{std::nullopt};
      for (const auto& lam : lambdas) {
        for (const auto seed : args.seeds) {
          Cell c{config.train_config(family, mode, seed), to_string(mode), {}};
          if (lam) {
            c.tc.regulator.lambda0 = *lam;
            c.label = scan_label(to_string(mode), *lam);
          }
          c.dir = args.out_dir / to_string(family) / c.label / ("seed" + std::to_string(seed));
          cells.push_back(std::move(c));
        }
      }
    }
  }

  std::vector<std::optional<RunReport>> reports(cells.size());
  std::vector<json> failures(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto& c = cells[i];
      std::ostringstream cell_err;
      const auto started = iso_now();
      const int code = guarded(
          [&]() {
            const FisherCache* cp = (c.tc.mode == Mode::Plain || !cache) ? nullptr : &*cache;
            auto result = run_cell(ex, c.tc, cp, c.label);
            write_run(c.dir, ex, c.tc, cp, result, started);
            reports[i] = std::move(result.report);
            return kExitOk;
          },
          cell_err);
      std::lock_guard<std::mutex> lock(io);
      if (code != kExitOk) {
        failures[i] = {{"family", to_string(c.tc.family)}, {"label", c.label}, {"seed", c.tc.seed}, {"exit_code", code},
                       {"error", cell_err.str()}};
        err << "cell " << c.dir.string() << " failed: " << cell_err.str();
      } else {
        out << "done " << c.dir.string() << " asr=" << reports[i]->in_dist.asr
            << " clean_cos=" << reports[i]->in_dist.clean_cos << '\n';
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(args.jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<RunReport> ok;
  json failed = json::array();
  int worst = kExitOk;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (reports[i]) ok.push_back(*reports[i]);
    if (!failures[i].is_null()) {
      failed.push_back(failures[i]);
      worst = std::max(worst, failures[i].at("exit_code").get<int>());
    }
  }
  write_text(args.out_dir / "failures.json", failed.dump(2) + "\n");
  if (!ok.empty()) {
    write_tables(ok, args.baseline, config.eval, args.out_dir);
    write_text(args.out_dir / "lambda_trajectory.csv", lambda_trajectory_csv(find_runs(args.out_dir)));
  }
  out << ok.size() << " runs, " << failed.size() << " failed\n";
  return worst;
}

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream&) {
  const auto runs = find_runs(args.runs_dir);
  if (runs.empty()) throw std::invalid_argument("no run reports found under " + args.runs_dir.string());
  std::vector<RunReport> reports;
  EvalConfig eval;
  for (const auto& r : runs) reports.push_back(r.report);
  if (runs.front().manifest.contains("config")) {
    eval = ExperimentConfig::from_json(runs.front().manifest.at("config")).eval;
  }
  const auto out_dir = args.out_dir.value_or(args.runs_dir);
  write_tables(reports, args.baseline, eval, out_dir);
  write_text(out_dir / "lambda_trajectory.csv", lambda_trajectory_csv(runs));
  out << "report over " << runs.size() << " runs written to " << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_audit(const AuditArgs& args, std::ostream& out, std::ostream& err) {
  std::vector<fs::path> manifests;
  if (fs::is_regular_file(args.dir)) {
    manifests.push_back(args.dir);
  } else if (fs::is_directory(args.dir)) {
    for (const auto& e : fs::recursive_directory_iterator(args.dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && (name == "manifest.json" || name.ends_with(".manifest.json"))) {
        manifests.push_back(e.path());
      }
    }
    std::sort(manifests.begin(), manifests.end());
  }
  if (manifests.empty()) throw std::invalid_argument("no manifests found at " + args.dir.string());
  bool ok = true;
  for (const auto& m : manifests) ok = audit_manifest(m, out, err) && ok;
  return ok ? kExitOk : kExitValidation;
}

}  // namespace aewc
