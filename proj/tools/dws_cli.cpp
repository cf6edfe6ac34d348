#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dws/errors.hpp"
#include "dws/harness.hpp"
#include "dws/mdp_oracle.hpp"
#include "dws/trajectory_log.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> env, algo, profile, seeds, out;
  std::optional<int> h, episodes;
  std::optional<double> lambda_s;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file of key = value lines");
  cmd->add_option("--set", c.sets, "Override one field, key=value (repeatable)");
  cmd->add_option("--env", c.env, "integrator | corridor | brake");
  cmd->add_option("--algo", c.algo, "vanilla | dws | action_chunk | dws_eg");
  cmd->add_option("--window-h", c.h, "Window length h");
  cmd->add_option("--lambda-s", c.lambda_s, "Smoothness weight");
  cmd->add_option("--profile", c.profile, "zoh | decay");
  cmd->add_option("--seeds", c.seeds, "Comma separated seeds");
  cmd->add_option("--episodes", c.episodes, "Training episodes per seed");
  cmd->add_option("--out", c.out, "Output directory");
}

// Config file first, then --set, then the dedicated flags.
dws::RunConfig resolve(const Common& c) {
  dws::RunConfig cfg = c.config.empty() ? dws::RunConfig{} : dws::load_config(c.config);
  std::vector<std::pair<std::string, std::string>> settings;
  for (const auto& s : c.sets) settings.push_back(dws::parse_assignment(s));
  if (c.env) settings.emplace_back("env", *c.env);
  if (c.algo) settings.emplace_back("algorithm", *c.algo);
  if (c.h) settings.emplace_back("h", std::to_string(*c.h));
  if (c.lambda_s) settings.emplace_back("lambda_s", dws::format_double(*c.lambda_s));
  if (c.profile) settings.emplace_back("profile", *c.profile);
  if (c.seeds) settings.emplace_back("seeds", *c.seeds);
  if (c.episodes) settings.emplace_back("episodes", std::to_string(*c.episodes));
  if (c.out) settings.emplace_back("output_dir", *c.out);
  dws::apply_settings(cfg, settings);
  cfg.validate();
  return cfg;
}

void write_summary(const dws::RunConfig& cfg, const std::string& name, const std::string& key,
                   const std::vector<dws::CellSummary>& cells) {
  std::filesystem::create_directories(cfg.output_dir);
  const auto path = std::filesystem::path(cfg.output_dir) / name;
  std::ofstream out(path);
  dws::write_summary_csv(out, key, cells);
  dws::write_summary_csv(std::cout, key, cells);
  std::cerr << "wrote " << path.string() << '\n';
}

int oracle_test(std::uint64_t seed, std::size_t segments) {
  bool ok = true;
  std::printf("profile,h,segments,cells_checked,max_z,pass\n");
  for (const auto& r : dws::oracle_suite(seed, segments)) {
    std::size_t checked = 0;
    for (const auto& c : r.cells) checked += c.checked;
    std::printf("%s,%d,%zu,%zu,%.3f,%s\n", dws::to_string(r.profile).c_str(), r.h, r.segments, checked, r.max_z(),
                r.pass() ? "pass" : "FAIL");
    for (const auto& c : r.cells)
      if (!c.pass)
        std::fprintf(stderr, "  s=%d kappa=%d ref=%d n=%zu mean=%.6f expected=%.6f se=%.6f\n", c.s, c.kappa, c.ref,
                     c.n, c.mean, c.expected, c.std_error);
    ok = ok && r.pass();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Windowed execution and value targets for smooth off-policy control"};
  app.require_subcommand(1);

  Common train_opts, eval_opts, sweep_opts, ablate_opts;
  auto* train = app.add_subcommand("train", "Train every seed and write run directories");
  add_common(train, train_opts);
  bool dump_config = false;
  train->add_flag("--print-config", dump_config, "Print the resolved configuration and exit");

  auto* eval = app.add_subcommand("eval", "Evaluate a saved actor checkpoint");
  add_common(eval, eval_opts);
  std::string checkpoint;
  int n_episodes = 20;
  std::uint64_t eval_seed = 1000003;
  eval->add_option("--checkpoint", checkpoint, "Actor checkpoint (.bin)")->required();
  eval->add_option("--n-episodes", n_episodes, "Evaluation episodes");
  eval->add_option("--seed", eval_seed, "First evaluation env seed");

  auto* sweep = app.add_subcommand("sweep", "Sensitivity sweep over h, lambda_s or profile");
  add_common(sweep, sweep_opts);
  std::string axis_name = "lambda_s", grid_text;
  sweep->add_option("--axis", axis_name, "h | lambda_s | profile");
  sweep->add_option("--grid", grid_text, "Comma separated values (default per axis)");

  auto* ablate = app.add_subcommand("ablate", "Six-variant component ablation");
  add_common(ablate, ablate_opts);

  auto* oracle = app.add_subcommand("oracle-test", "Monte Carlo check of windowed targets against exact backups");
  std::uint64_t oracle_seed = 20261015;
  std::size_t segments = 100000;
  oracle->add_option("--seed", oracle_seed, "Simulation seed");
  oracle->add_option("--segments", segments, "Minimum valid windows per profile and h");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const auto cfg = resolve(train_opts);
      if (dump_config) {
        dws::write_config(std::cout, cfg);
        return 0;
      }
      return dws::cmd_train(cfg, std::cout);
    }
    if (eval->parsed()) {
      const auto cfg = resolve(eval_opts);
      dws::cmd_eval(checkpoint, cfg, n_episodes, eval_seed, std::cout);
      return 0;
    }
    if (sweep->parsed()) {
      const auto cfg = resolve(sweep_opts);
      const auto axis = dws::sweep_axis_from_string(axis_name);
      std::vector<std::string> grid;
      std::stringstream ss(grid_text);
      for (std::string v; std::getline(ss, v, ',');)
        if (!v.empty()) grid.push_back(v);
      if (grid.empty()) grid = dws::default_grid(axis);
      write_summary(cfg, "sweep_" + dws::to_string(axis) + ".csv", dws::to_string(axis),
                    dws::cmd_sweep(axis, grid, cfg));
      return 0;
    }
    if (ablate->parsed()) {
      const auto cfg = resolve(ablate_opts);
      write_summary(cfg, "ablation.csv", "variant", dws::cmd_ablate(cfg));
      return 0;
    }
    if (oracle->parsed()) return oracle_test(oracle_seed, segments);
  } catch (const dws::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const dws::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const dws::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
