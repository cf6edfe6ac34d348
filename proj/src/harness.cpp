#include "dws/harness.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "dws/errors.hpp"
#include "dws/trajectory_log.hpp"

namespace dws {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  throw ValidationError("field '" + key + "': cannot use '" + value + "' (" + what + ")");
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x)) bad_value(key, v, "expected a number");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "expected an integer");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "expected a non-negative integer");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "expected true or false");
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Ref>
Field real_field(const std::string& key, Ref ref) {
  return {[=](RunConfig& c, const std::string& v) { ref(c) = to_double(key, v); },
          [=](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Field int_field(const std::string& key, Ref ref) {
  return {[=](RunConfig& c, const std::string& v) {
            const long long x = to_int(key, v);
            using T = std::remove_reference_t<decltype(ref(c))>;
            if (x < static_cast<long long>(std::numeric_limits<T>::min()) ||
                (x > 0 && static_cast<unsigned long long>(x) > static_cast<unsigned long long>(std::numeric_limits<T>::max())))
              bad_value(key, v, "out of range");
            ref(c) = static_cast<T>(x);
          },
          [=](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Field bool_field(const std::string& key, Ref ref) {
  return {[=](RunConfig& c, const std::string& v) { ref(c) = to_bool(key, v); },
          [=](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

#define REAL(key, expr) {key, real_field(key, [](RunConfig& c) -> double& { return expr; })}
#define INT(key, expr) {key, int_field(key, [](RunConfig& c) -> auto& { return expr; })}
#define BOOL(key, expr) {key, bool_field(key, [](RunConfig& c) -> bool& { return expr; })}

const std::vector<std::pair<std::string, Field>>& registry() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"env",
       {[](RunConfig& c, const std::string& v) {
          try {
            c.train.env = EnvSpec::defaults(env_from_string(v));
          } catch (const Error&) {
            bad_value("env", v, "unknown environment");
          }
        },
        [](const RunConfig& c) { return to_string(c.train.env.name); }}},
      {"algorithm",
       {[](RunConfig& c, const std::string& v) {
          try {
            c.train.algorithm = algorithm_from_string(v);
          } catch (const Error&) {
            bad_value("algorithm", v, "expected vanilla, dws, action_chunk or dws_eg");
          }
        },
        [](const RunConfig& c) { return to_string(c.train.algorithm); }}},
      {"seeds",
       {[](RunConfig& c, const std::string& v) {
          c.seeds.clear();
          for (const auto& item : split_list(v)) c.seeds.push_back(to_u64("seeds", item));
        },
        [](const RunConfig& c) { return join(c.seeds); }}},
      INT("episodes", c.train.episodes),
      INT("max_env_steps", c.train.max_env_steps),
      INT("eval_every", c.train.eval_every),
      INT("eval_episodes", c.train.eval_episodes),
      INT("eval_seed", c.train.eval_seed),
      INT("final_eval_episodes", c.final_eval_episodes),
      INT("checkpoint_every", c.checkpoint_every),
      {"output_dir",
       {[](RunConfig& c, const std::string& v) { c.output_dir = v; }, [](const RunConfig& c) { return c.output_dir; }}},
      BOOL("expert_guided", c.train.expert_guided),
      BOOL("force_intervention", c.train.force_intervention),
      BOOL("zero_actor", c.train.zero_actor),
      INT("h", c.train.dws.h),
      REAL("lambda_s", c.train.dws.lambda_s),
      {"profile",
       {[](RunConfig& c, const std::string& v) {
          try {
            c.train.dws.profile = profile_from_string(v);
          } catch (const Error&) {
            bad_value("profile", v, "expected zoh or decay");
          }
        },
        [](const RunConfig& c) { return to_string(c.train.dws.profile); }}},
      BOOL("execution_window", c.train.dws.execution_window),
      BOOL("value_window", c.train.dws.value_window),
      BOOL("smooth_reg", c.train.dws.smooth_reg),
      REAL("gamma", c.train.hp.gamma),
      REAL("tau", c.train.hp.tau),
      REAL("lr_actor", c.train.hp.lr_actor),
      REAL("lr_critic", c.train.hp.lr_critic),
      REAL("policy_noise", c.train.hp.policy_noise),
      REAL("noise_clip", c.train.hp.noise_clip),
      INT("policy_update_frequency", c.train.hp.policy_update_frequency),
      INT("batch_size", c.train.hp.batch_size),
      INT("replay_capacity", c.train.hp.replay_capacity),
      INT("window_capacity", c.train.hp.window_capacity),
      REAL("explore_initial", c.train.hp.explore_initial),
      REAL("explore_min", c.train.hp.explore_min),
      REAL("explore_decay", c.train.hp.explore_decay),
      {"hidden",
       {[](RunConfig& c, const std::string& v) {
          std::vector<int> widths;
          for (const auto& item : split_list(v)) {
            const long long w = to_int("hidden", item);
            if (w < 1 || w > 1 << 16) bad_value("hidden", v, "widths must be positive");
            widths.push_back(static_cast<int>(w));
          }
          if (widths.empty()) bad_value("hidden", v, "needs at least one layer");
          c.train.hp.hidden = widths;
        },
        [](const RunConfig& c) { return join(c.train.hp.hidden); }}},
      REAL("lambda_eg", c.train.hp.lambda_eg),
      REAL("window_fraction", c.train.hp.window_fraction),
      INT("warmup_steps", c.train.hp.warmup_steps),
      INT("updates_per_step", c.train.hp.updates_per_step),
      REAL("env.dt", c.train.env.dt),
      INT("env.horizon", c.train.env.horizon),
      INT("env.action_dim", c.train.env.action_dim),
      REAL("env.a_max", c.train.env.a_max),
      REAL("env.obs_noise", c.train.env.obs_noise),
      REAL("env.target_range", c.train.env.target_range),
      REAL("env.target_tolerance", c.train.env.target_tolerance),
      REAL("env.half_width", c.train.env.half_width),
      REAL("env.forward_speed", c.train.env.forward_speed),
      REAL("env.corridor_length", c.train.env.corridor_length),
      REAL("env.progress_weight", c.train.env.progress_weight),
      REAL("env.lateral_weight", c.train.env.lateral_weight),
      REAL("env.initial_lateral", c.train.env.initial_lateral),
      REAL("env.initial_lateral_speed", c.train.env.initial_lateral_speed),
      REAL("env.expert_kp", c.train.env.expert_kp),
      REAL("env.expert_kd", c.train.env.expert_kd),
      REAL("env.intervene_fraction", c.train.env.intervene_fraction),
      REAL("env.cruise_speed", c.train.env.cruise_speed),
      REAL("env.brake_decel", c.train.env.brake_decel),
      REAL("env.obstacle_distance", c.train.env.obstacle_distance),
      REAL("env.obstacle_jitter", c.train.env.obstacle_jitter),
      REAL("env.clear_time", c.train.env.clear_time),
      REAL("env.clear_jitter", c.train.env.clear_jitter),
      REAL("env.speed_weight", c.train.env.speed_weight),
      REAL("env.collision_penalty", c.train.env.collision_penalty),
      REAL("env.effort_weight", c.train.env.effort_weight),
      REAL("env.ttc_threshold", c.train.env.ttc_threshold),
  };
  return fields;
}

#undef REAL
#undef INT
#undef BOOL

const Field& field(const std::string& key) {
  for (const auto& [name, f] : registry())
    if (name == key) return f;
  throw ValidationError("unknown config field '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (seeds.empty()) throw ValidationError("field 'seeds': at least one seed is required");
  if (checkpoint_every < 0) throw ValidationError("field 'checkpoint_every': must be >= 0");
  if (final_eval_episodes < 1) throw ValidationError("field 'final_eval_episodes': must be >= 1");
  if (output_dir.empty()) throw ValidationError("field 'output_dir': must not be empty");
  train.validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : registry()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  field(trim(key)).set(cfg, trim(value));
}

void apply_settings(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& settings) {
  for (const auto& [k, v] : settings)
    if (trim(k) == "env") apply_setting(cfg, k, v);
  for (const auto& [k, v] : settings)
    if (trim(k) != "env") apply_setting(cfg, k, v);
}

std::string get_setting(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

std::pair<std::string, std::string> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + text + "'");
  std::string key = trim(text.substr(0, eq));
  if (key.empty()) throw ValidationError("expected key=value, got '" + text + "'");
  return {key, trim(text.substr(eq + 1))};
}

RunConfig parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> settings;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    try {
      settings.push_back(parse_assignment(line));
    } catch (const ValidationError& e) {
      throw ParseError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  RunConfig cfg;
  apply_settings(cfg, settings);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  return parse_config(in);
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  for (const auto& [name, f] : registry()) out << name << " = " << f.get(cfg) << '\n';
}

SeedOutcome run_seed(const RunConfig& cfg, std::uint64_t seed, const TrainHooks& hooks) {
  SeedOutcome out;
  out.seed = seed;
  out.run = train(cfg.train, seed, hooks);
  out.final_reports = evaluate(out.run, cfg.train, cfg.final_eval_episodes);
  return out;
}

namespace {

Aggregate aggregate_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = report_columns().size();
  Aggregate agg;
  agg.mean.assign(cols, std::numeric_limits<double>::quiet_NaN());
  agg.std.assign(cols, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < cols; ++c) {
    std::vector<double> x;
    for (const auto& r : rows)
      if (!std::isnan(r[c])) x.push_back(r[c]);
    if (x.empty()) continue;
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    agg.mean[c] = m;
    agg.std[c] = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
  }
  return agg;
}

}  // namespace

CellSummary run_cell(const RunConfig& cfg, const std::string& label) {
  cfg.validate();
  CellSummary cell;
  cell.label = label;
  for (std::uint64_t seed : cfg.seeds) cell.seed_means.push_back(aggregate(run_seed(cfg, seed).final_reports).mean);
  cell.across_seeds = aggregate_rows(cell.seed_means);
  return cell;
}

std::size_t metric_index(const std::string& name) {
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i] == name) return i;
  throw UsageError("unknown metric '" + name + "'");
}

namespace {

void write_manifest(const fs::path& dir, const RunConfig& cfg, std::uint64_t seed, const std::string& status,
                    const std::string& error) {
  RunConfig one = cfg;
  one.seeds = {seed};
  std::ofstream out(dir / "manifest.txt");
  out << "# resolved configuration of this run\n";
  write_config(out, one);
  out << "# status = " << status << '\n';
  if (!error.empty()) out << "# error = " << error << '\n';
}

void write_eval_history(std::ostream& out, const std::vector<EvalRecord>& evals) {
  out << "after_episode,episode";
  for (const auto& c : report_columns()) out << ',' << c;
  out << '\n';
  for (const auto& e : evals) {
    for (std::size_t i = 0; i < e.reports.size(); ++i) {
      out << e.after_episode << ',' << i;
      for (double v : report_values(e.reports[i])) out << ',' << (std::isnan(v) ? std::string() : format_double(v));
      out << '\n';
    }
  }
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& status) {
  cfg.validate();
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(dir / "checkpoints");
    write_manifest(dir, cfg, seed, "running", "");
    std::ofstream log(dir / "training_log.csv");
    log << "update,env_step,episode,critic1_loss,critic2_loss,actor_loss,exploration_scale,z_ratio\n";
    TrainHooks hooks;
    hooks.on_log = [&](const TrainingLogRow& r) {
      log << r.update << ',' << r.env_step << ',' << r.episode << ',' << format_double(r.critic1_loss) << ','
          << format_double(r.critic2_loss) << ',' << format_double(r.actor_loss) << ','
          << format_double(r.exploration_scale) << ',' << format_double(r.z_ratio) << '\n';
    };
    hooks.on_episode = [&](int done, const Network& actor) {
      if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0)
        save_network((dir / "checkpoints" / ("actor_ep" + std::to_string(done) + ".bin")).string(), actor);
    };
    try {
      SeedOutcome out;
      out.seed = seed;
      out.run = train(cfg.train, seed, hooks);
      TrajectoryLog traj;
      out.final_reports = evaluate(out.run, cfg.train, cfg.final_eval_episodes, &traj);
      const Network& actor = out.run.agent ? out.run.agent->actor : out.run.chunk_agent->actor;
      save_network((dir / "actor_final.bin").string(), actor);
      std::ofstream evals(dir / "eval.csv");
      write_eval_history(evals, out.run.evals);
      std::ofstream final_csv(dir / "final_eval.csv");
      write_report_csv(final_csv, out.final_reports);
      std::ofstream traj_csv(dir / "final_eval_trajectories.csv");
      write_trajectory_csv(traj_csv, traj);
      write_manifest(dir, cfg, seed, "ok", "");
      const Aggregate agg = aggregate(out.final_reports);
      char line[160];
      std::snprintf(line, sizeof line, "seed %llu: env_steps %lld, return %.3f, afr_l1 %.4f, success %.2f\n",
                    static_cast<unsigned long long>(seed), static_cast<long long>(out.run.env_steps),
                    agg.mean[metric_index("return")], agg.mean[metric_index("afr_l1")],
                    agg.mean[metric_index("success")]);
      status << line;
    } catch (const std::exception& e) {
      log.flush();
      write_manifest(dir, cfg, seed, "failed", e.what());
      throw;
    }
  }
  return 0;
}

void cmd_eval(const std::string& checkpoint, const RunConfig& cfg, int episodes, std::uint64_t seed,
              std::ostream& csv) {
  if (episodes < 1) throw ValidationError("field 'episodes': must be >= 1");
  cfg.train.env.validate();
  Network actor = load_network(checkpoint);
  std::vector<MetricsReport> reports;
  if (cfg.train.algorithm == Algorithm::action_chunk) {
    RngStream init(seed, StreamId::init);
    const int expected = cfg.train.dws.h * cfg.train.env.action_dim;
    if (actor.spec().output_dim() != expected || actor.spec().input_dim() != cfg.train.env.observation_dim())
      throw CompatibilityError("checkpoint does not match a chunk actor with h = " + std::to_string(cfg.train.dws.h));
    ChunkAgent agent(cfg.train.env.observation_dim(), cfg.train.env.action_dim, cfg.train.dws.h, cfg.train.env.a_max,
                     cfg.train.hp, init);
    agent.actor = actor;
    reports = evaluate_chunk(agent, cfg.train.env, episodes, seed);
  } else {
    reports = evaluate_actor(actor, cfg.train.env.a_max, cfg.train.env, cfg.train.effective_dws(), episodes, seed);
  }
  write_report_csv(csv, reports);
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "h") return SweepAxis::h;
  if (name == "lambda_s" || name == "lambda_S") return SweepAxis::lambda_s;
  if (name == "profile") return SweepAxis::profile;
  throw ValidationError("unknown sweep axis '" + name + "' (expected h, lambda_s or profile)");
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::h: return "h";
    case SweepAxis::lambda_s: return "lambda_s";
    case SweepAxis::profile: return "profile";
  }
  return "?";
}

std::vector<std::string> default_grid(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::h: return {"1", "2", "3", "4", "5"};
    case SweepAxis::lambda_s: return {"0", "0.03", "0.10", "0.30", "0.40"};
    case SweepAxis::profile: return {"zoh", "decay"};
  }
  return {};
}

std::vector<CellSummary> cmd_sweep(SweepAxis axis, const std::vector<std::string>& grid, const RunConfig& base) {
  if (grid.empty()) throw ValidationError("field 'grid': must not be empty");
  std::vector<RunConfig> cells;
  for (const auto& value : grid) {
    RunConfig c = base;
    apply_setting(c, to_string(axis), value);
    c.validate();
    cells.push_back(c);
  }
  std::vector<CellSummary> out;
  for (std::size_t i = 0; i < cells.size(); ++i) out.push_back(run_cell(cells[i], grid[i]));
  return out;
}

const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> v = {
      {"backbone", false, false, false},
      {"value_window_only", false, true, false},
      {"reg_only", false, false, true},
      {"value_window_reg", false, true, true},
      {"execution_window_only", true, false, false},
      {"full", true, true, true},
  };
  return v;
}

RunConfig ablation_config(const RunConfig& base, const AblationVariant& v) {
  RunConfig c = base;
  c.train.algorithm = Algorithm::dws;
  c.train.dws.execution_window = v.execution_window;
  c.train.dws.value_window = v.value_window;
  c.train.dws.smooth_reg = v.smooth_reg;
  return c;
}

std::vector<CellSummary> cmd_ablate(const RunConfig& base) {
  base.validate();
  std::vector<CellSummary> out;
  for (const auto& v : ablation_variants()) out.push_back(run_cell(ablation_config(base, v), v.name));
  return out;
}

void write_summary_csv(std::ostream& out, const std::string& key, const std::vector<CellSummary>& cells) {
  auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  out << key << ",seeds";
  for (const auto& c : report_columns()) out << ',' << c << "_mean," << c << "_std";
  out << '\n';
  for (const auto& c : cells) {
    out << c.label << ',' << c.seed_means.size();
    for (std::size_t i = 0; i < report_columns().size(); ++i)
      out << ',' << cell(c.across_seeds.mean[i]) << ',' << cell(c.across_seeds.std[i]);
    out << '\n';
  }
}

}  // namespace dws
