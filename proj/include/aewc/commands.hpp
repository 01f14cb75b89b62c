// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace aewc {

inline constexpr const char* kToolVersion = "0.1.0";

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitDivergence = 3 };

/// Runs `fn`, mapping exceptions to exit codes and printing the message to `err`.
int guarded(const std::function<int()>& fn, std::ostream& err);

struct TeacherArgs {
  std::filesystem::path config;
  std::filesystem::path out_dir;
};

struct FisherArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  bool force = false;
};

struct TrainArgs {
  std::filesystem::path config;
  std::string mode;
  std::string family = "unicode";
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> fisher_cache;
  std::filesystem::path out_dir;
  std::optional<double> lambda0;
  bool train_adapter = false;
};

struct SweepArgs {
  std::filesystem::path config;
  std::vector<std::string> modes;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> families{"unicode"};
  std::optional<std::filesystem::path> fisher_cache;
  std::filesystem::path out_dir;
  /// Extra lambda0 values run for the static modes (fixed, fixed_cos).
  std::vector<double> lambda0_scan;
  std::string baseline = "plain";
  std::size_t jobs = 1;
};

struct ReportArgs {
  std::filesystem::path runs_dir;
  std::string baseline = "plain";
  std::optional<std::filesystem::path> out_dir;
};

struct AuditArgs {
  std::filesystem::path dir;
};

int cmd_teacher(const TeacherArgs& args, std::ostream& out, std::ostream& err);
int cmd_fisher(const FisherArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err);
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);
int cmd_audit(const AuditArgs& args, std::ostream& out, std::ostream& err);

/// Label used for a static-lambda scan cell, e.g. "fixed@lambda0=0.9".
std::string scan_label(const std::string& mode, double lambda0);

}  // namespace aewc
