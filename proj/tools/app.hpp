#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgad::cli {

// Fully resolved settings of one invocation. Budget values are in 1/255
// intensity units, as on the command line.
struct RunConfig {
  std::string command;
  std::string dataset;
  std::string profile;  // face or style
  std::string model;
  std::vector<std::string> targets;
  std::vector<std::string> defenses;
  std::string protocol = "distortion";
  double epsilon = 7.0;
  double alpha = 1.0;
  int steps = 60;
  std::string init = "uniform";
  double lambda = 1.0;
  double threshold = 0.008;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
  // gen-data only
  std::string kind = "face";
  int count = 32;
  int size = 64;
};

nlohmann::json to_json(const RunConfig& cfg);

// Parses arguments and runs the selected command. Returns the exit status:
// 0 iff every sample succeeded.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace kgad::cli
