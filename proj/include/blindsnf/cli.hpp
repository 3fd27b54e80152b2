#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "blindsnf/config.hpp"
#include "blindsnf/degradation.hpp"

namespace blindsnf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// A fully resolved command line.
struct Command {
  std::string verb;  // degrade, train, sample, eval, dump-schedule, gradcheck
  TrainConfig config;
  /// Config keys given explicitly as flags, with their text values.
  std::map<std::string, std::string> overrides;
  std::string config_path;

  std::string input;       // degrade/sample: PNG, directory or manifest; train: data
  std::string output;      // output directory
  std::string checkpoint;  // sample: model; train: resume point
  std::string hr;          // eval: reference directory
  std::optional<DegradationSpec> spec;  // degrade: fixed degradation
  bool dump_steps = false;              // sample: per-step latents
  bool help = false;
  std::string help_text;
};

/// `args` excludes the program name. Config-file values are loaded first and
/// then overridden by flags. Throws UsageError for unknown verbs or flags,
/// missing required paths and bad values.
Command parse_args(const std::vector<std::string>& args);

/// Executes a parsed command; module errors propagate as exceptions.
int run(const Command& command, std::ostream& log);

/// parse_args + run with exit-code mapping: 0 success, 1 failure, 2 usage.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blindsnf
