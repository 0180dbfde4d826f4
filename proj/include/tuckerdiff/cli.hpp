#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tuckerdiff/checks.hpp"
#include "tuckerdiff/diffusion.hpp"

namespace tucker::cli {

/// Every setting a command can read. Resolution order: defaults, then the
/// --config JSON file, then flags.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  std::size_t threads = 0;  // 0 keeps the OpenMP default

  // simulate
  std::size_t p1 = 32, p2 = 32, r1 = 4, r2 = 4;
  double sigma = 0.5;
  std::size_t n_train = 2048;
  std::size_t n_test = 512;
  std::string noise_field = "variance";

  // train
  std::string init = "warm";
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::size_t times_per_sample = 1;
  double t0 = 1e-3;
  double T = 5.0;
  bool heterogeneity = true;
  std::vector<std::size_t> hidden;
  std::size_t checkpoint_every = 10;
  bool resume = false;

  // generate
  std::size_t steps = 50;
  std::string scheme = "ddim";
  std::string grid = "uniform";
  std::size_t n_gen = 2048;
  std::string score = "net";
  double perturb_score = 0.0;

  // oracle-check
  std::size_t oracle_cases = 120;
  std::size_t sampler_ngen = 5000;
  std::size_t sampler_steps = 200;

  void validate() const;
};

struct SchemaEntry {
  std::string key;
  std::string type;  // uint | number | string | bool | uint_list
  std::string allowed;
  std::string help;
};

const std::vector<SchemaEntry>& config_schema();

/// Merges a JSON object into cfg. Unknown keys and type mismatches throw
/// ValidationError.
void apply_json_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
/// One key from its command-line text.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);
std::string to_json_text(const RunConfig& cfg);

void save_gaussian_model(const GaussianModel& m, const std::filesystem::path& dir);
GaussianModel load_gaussian_model(const std::filesystem::path& dir);

// Run-directory artifacts (under cfg.out):
//   simulate: train.ten test.ten truth_U<d>.ten gaussian_model/ manifest_simulate.json
//   train:    checkpoint/ loss.csv train_timing.csv manifest_train.json
//   generate: generated.ten generate_timing.json manifest_generate.json
//   evaluate: metrics.csv (one row per model and seed)
//   oracle-check: oracle_check.csv
void cmd_simulate(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_generate(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
std::vector<checks::CheckResult> cmd_oracle_check(const RunConfig& cfg);

/// Parses arguments, runs one subcommand and maps errors to exit codes:
/// 0 ok, 1 validation, 2 numerical (or failed checks), 3 I/O.
int run(int argc, const char* const* argv);

}  // namespace tucker::cli
