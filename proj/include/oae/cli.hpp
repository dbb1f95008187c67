#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "oae/data.hpp"
#include "oae/model.hpp"
#include "oae/pipeline.hpp"

namespace oae::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Everything a run depends on besides its input files. The data section
// takes its point count from model.points.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  BenchmarkConfig data;
  ProbeConfig probe;

  void validate() const;
};

// The configuration used by the bundled desk-scale benchmark runs.
RunConfig desk_config();

// `key = value` lines under [model], [train], [data] and [probe] headers.
// '#' starts a comment. Unknown sections, unknown keys and unparsable values
// throw UsageError naming the offending token and line.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& source = "config");
void apply_config_file(RunConfig& config, const std::string& path);

// One override of the form section.key=value.
void apply_override(RunConfig& config, const std::string& assignment);

// Every key with its effective value; reading it back reproduces the config exactly.
std::string format_config(const RunConfig& config);

// Runs one subcommand. args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oae::cli
