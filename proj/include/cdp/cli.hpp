#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace cdp {

/// Parsed command-line options shared by the subcommands. Populated by
/// run_cli; exposed for in-process testing.
struct RunConfig {
  std::string command;
  std::string task = "push";
  std::filesystem::path catalog;
  std::filesystem::path demos;
  std::filesystem::path model;
  std::filesystem::path out;
  std::filesystem::path traces;
  std::filesystem::path compare;
  std::filesystem::path chunk;
  std::string base_id;
  std::string novel_id;
  std::string mode = "with_ap";  ///< with_ap | without_ap
  std::string cumulative = "corrected-prefix";
  std::string state_csv;  ///< "x,y,z,rx,ry,rz,g"
  int n = 60;
  int episodes = 50;
  int steps = 3000;
  int batch = 64;
  int hidden = 128;
  int substeps = 16;
  int k_steps = 100;
  int horizon = 8;
  int exec_steps = 1;  ///< actions executed per replan; 0 -> horizon/2 (chunked)
  int projection_window = 5;
  double noise = 0.002;
  double eps_safe = 0.01;
  double eps_task = 0.05;
  long long seed = -1;  ///< mandatory where outcomes depend on randomness
};

/// Entry point behind main(). Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage/config error.
int run_cli(int argc, const char* const* argv);

}  // namespace cdp
