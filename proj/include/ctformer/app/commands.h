#ifndef CTFORMER_APP_COMMANDS_H_
#define CTFORMER_APP_COMMANDS_H_

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctformer/app/run_config.h"

namespace ctformer::app {

// Parsed command line, minus the config itself. Stored in every run
// directory so `rerun` can replay it.
struct CommandOptions {
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  // train --stage 1|all: cohort file or gen-data run directory.
  std::string cohort;
  // train --stage 2: directory with the stage-one artifacts (default out_dir).
  // explain / align-check: trained run directory.
  std::string run_dir;
  std::string stage = "all";
  std::vector<int> lead_times{0, 6, 12, 18, 24};
  std::vector<std::string> variants;
  std::string cfc_layers = "1..2";
  std::string transformer_layers = "1..3";
  std::string patient;
  bool whole_cohort = false;
  // 0 keeps the configured thread counts.
  std::size_t threads = 0;
};

nlohmann::json to_json(const CommandOptions& o);
CommandOptions command_options_from_json(const nlohmann::json& j);

// Raised for a missing input produced by another command; the message names
// that command.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Runs one command with an already resolved config and writes its run
// directory, including effective_config.json.
void execute(const CommandOptions& options, const RunConfig& config);

// Re-executes a run directory from its effective_config.json into out_dir.
void rerun(const std::string& run_dir, const std::string& out_dir);

// Full command-line entry point. Returns the process exit code; failures
// print one JSON line {"error", "command", "type"} to stderr.
int run_cli(int argc, char** argv);

// Parses "a..b" (or a single number) into an inclusive range.
std::pair<std::size_t, std::size_t> parse_range(const std::string& text);

}  // namespace ctformer::app

#endif  // CTFORMER_APP_COMMANDS_H_
