#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stdde/training.hpp"

namespace stdde {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitDivergence = 3 };

struct CliConfig {
  std::string subcommand;

  std::string flows;
  std::string adjacency;
  std::string delays;
  std::string checkpoint;
  std::string output;
  std::string history;
  std::string pred;
  std::string truth;
  std::string adj_out;
  std::string delays_out;

  TrainConfig train;
  bool zero_delays = false;
  double minutes_per_step = 5.0;

  // predict horizon: explicit offsets, or count x interval
  std::vector<double> at_minutes;
  int horizon_count = 0;
  double horizon_interval = 0.0;

  // estimate-delays
  int max_shift = 12;
  int resample = 1;

  // stability-check
  double c = 0.0;
  std::string norm = "inf";
  bool peak = false;
  bool key_value = false;
  int graph_nodes = 0;  // 0: largest id + 1

  // generate-synthetic
  int nodes = 3;
  std::vector<std::string> planted;  // "src:dst:lag[:gain]"
  int length = 2000;
  double noise = 0.0;
  double interval = 5.0;
  std::string start_time;
};

/// Parses argv into `config`. Returns -1 when a subcommand should run,
/// otherwise the exit code to return immediately (0 after --help).
int parse(int argc, const char* const* argv, CliConfig& config, std::ostream& out, std::ostream& err);

int run(const CliConfig& config, std::ostream& out, std::ostream& err);

/// parse + run.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stdde
