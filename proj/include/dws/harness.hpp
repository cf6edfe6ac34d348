#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dws/agents.hpp"
#include "dws/metrics.hpp"

namespace dws {

/// Everything a run needs. Stored as flat `key = value` text; see
/// config_keys() for the full list and apply_setting() for parsing.
struct RunConfig {
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string output_dir = "runs";
  int checkpoint_every = 10;   // episodes between actor checkpoints; 0 disables
  int final_eval_episodes = 20;

  void validate() const;
};

// All recognised keys, in manifest order.
const std::vector<std::string>& config_keys();

// Sets one field from text. Setting `env` resets every env.* field to that
// environment's defaults. Throws ValidationError naming the key.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
// Applies `env` first, then the rest in order.
void apply_settings(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& settings);
std::string get_setting(const RunConfig& cfg, const std::string& key);

// "key=value" -> pair; whitespace around both parts is trimmed.
std::pair<std::string, std::string> parse_assignment(const std::string& text);

// Lines of `key = value`; '#' starts a comment.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);
// Every resolved key, so that parse_config(write_config(c)) == c.
void write_config(std::ostream& out, const RunConfig& cfg);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<MetricsReport> final_reports;
  TrainResult run;
};

// Trains one seed and evaluates the final policy; writes nothing.
SeedOutcome run_seed(const RunConfig& cfg, std::uint64_t seed, const TrainHooks& hooks = {});

struct CellSummary {
  std::string label;
  std::vector<std::vector<double>> seed_means;  // per seed, report_values() means
  Aggregate across_seeds;                       // mean and std of the per-seed means
};

// Runs every seed of `cfg` and summarises the final evaluations.
CellSummary run_cell(const RunConfig& cfg, const std::string& label);

// Column index in report_columns().
std::size_t metric_index(const std::string& name);

// Per-seed run directories with checkpoints, training log, periodic and final
// evaluation CSVs and a manifest. Returns 0 on success; on failure the
// manifest records the error and the exception is rethrown.
int cmd_train(const RunConfig& cfg, std::ostream& status);

// Noise-free rollouts of a saved actor; writes a report CSV with mean/std rows.
void cmd_eval(const std::string& checkpoint, const RunConfig& cfg, int episodes, std::uint64_t seed,
              std::ostream& csv);

enum class SweepAxis { h, lambda_s, profile };
SweepAxis sweep_axis_from_string(const std::string& name);
std::string to_string(SweepAxis a);
std::vector<std::string> default_grid(SweepAxis axis);

// One aggregate row per grid cell (mean and std over seeds).
std::vector<CellSummary> cmd_sweep(SweepAxis axis, const std::vector<std::string>& grid, const RunConfig& base);

struct AblationVariant {
  std::string name;
  bool execution_window;
  bool value_window;
  bool smooth_reg;
};
const std::vector<AblationVariant>& ablation_variants();
RunConfig ablation_config(const RunConfig& base, const AblationVariant& v);
std::vector<CellSummary> cmd_ablate(const RunConfig& base);

// Table with columns: <key>, seeds, then <metric>_mean and <metric>_std for
// every report column.
void write_summary_csv(std::ostream& out, const std::string& key, const std::vector<CellSummary>& cells);

}  // namespace dws
