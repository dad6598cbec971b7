#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace uavsim {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitIo = 4 };

enum class SweepAxis { Uavs, Buffer, Sensors };

struct ExperimentSpec {
  std::string command;  // simulate | compare | sweep | train-attention
  std::filesystem::path config_path;
  std::filesystem::path out_dir = "out";
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> policies;
  std::vector<std::string> overrides;
  std::optional<std::filesystem::path> attention_path;  // checkpoint to start from
  int jobs = 1;
  SweepAxis axis = SweepAxis::Uavs;
  std::vector<int> axis_values;
  int epochs = 1;
};

/// "N", "N..M" (inclusive) or "a,b,c". Throws std::invalid_argument.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

int cmd_simulate(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);
int cmd_compare(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);
int cmd_sweep(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);
int cmd_train_attention(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);

/// Parses argv-style arguments (without the program name) and dispatches.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

const char* tool_version();

}  // namespace uavsim
