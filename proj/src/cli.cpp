#include "uavsim/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "uavsim/config.hpp"
#include "uavsim/report.hpp"
#include "uavsim/text.hpp"

#ifndef UAVSIM_VERSION
#define UAVSIM_VERSION "dev"
#endif

namespace uavsim {

namespace {

namespace fs = std::filesystem;

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

SimConfig load(const ExperimentSpec& spec) { return load_config(spec.config_path, spec.overrides); }

std::optional<AttentionParams> load_attention(const ExperimentSpec& spec) {
  if (!spec.attention_path) return std::nullopt;
  std::ifstream in(*spec.attention_path);
  if (!in) throw IoError("cannot read attention checkpoint: " + spec.attention_path->string());
  try {
    return load_params(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("attention checkpoint: ") + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(seeds[i]);
  }
  return s;
}

void table_header(std::ostream& out, std::string_view table, const std::vector<std::uint64_t>& seeds) {
  out << "# uavsim " << tool_version() << ' ' << table << " v" << kCsvSchemaVersion << " seeds=" << seeds_text(seeds)
      << '\n';
}

std::string_view axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Uavs: return "uavs";
    case SweepAxis::Buffer: return "buffer";
    case SweepAxis::Sensors: return "sensors";
  }
  return "?";
}

std::vector<std::uint64_t> seeds_or_default(const ExperimentSpec& spec, const SimConfig& cfg) {
  return spec.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : spec.seeds;
}

void check_policies(const std::vector<std::string>& names) {
  for (const std::string& n : names) {
    if (!is_policy_name(n)) throw ConfigError("unknown policy: " + n);
  }
}

}  // namespace

const char* tool_version() { return UAVSIM_VERSION; }

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  const std::string_view t = trim(text);
  if (t.empty()) throw std::invalid_argument("empty seed list");
  auto one = [](std::string_view s) {
    const long long v = parse_int(trim(s));
    if (v < 0) throw std::invalid_argument("seeds must be non-negative");
    return static_cast<std::uint64_t>(v);
  };
  std::vector<std::uint64_t> out;
  if (const auto dots = t.find(".."); dots != std::string_view::npos) {
    const std::uint64_t lo = one(t.substr(0, dots));
    const std::uint64_t hi = one(t.substr(dots + 2));
    if (hi < lo) throw std::invalid_argument("seed range must be ascending");
    if (hi - lo >= 1000000) throw std::invalid_argument("seed range too large");
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  for (std::string_view item : split(t, ',')) out.push_back(one(item));
  return out;
}

int cmd_simulate(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SimConfig cfg = load(spec);
    if (!spec.seeds.empty()) cfg.seed = spec.seeds.front();
    if (!spec.policies.empty()) {
      check_policies(spec.policies);
      cfg.policy.name = spec.policies.front();
    }
    const auto attention = load_attention(spec);
    const EpisodeResult r = run_episode(cfg, attention);

    std::ostringstream episode, sensors, trace;
    write_episode_csv(episode, r, tool_version());
    write_sensor_csv(sensors, r, tool_version());
    write_trace_jsonl(trace, r);
    ensure_dir(spec.out_dir);
    atomic_write(spec.out_dir / "episode.csv", episode.str());
    atomic_write(spec.out_dir / "sensors.csv", sensors.str());
    atomic_write(spec.out_dir / "trace.jsonl", trace.str());
    if (r.attention) {
      std::ostringstream ckpt;
      save_params(ckpt, *r.attention);
      atomic_write(spec.out_dir / "attention.txt", ckpt.str());
    }

    out << "policy=" << r.policy << " seed=" << r.seed << " loss_events=" << r.total_loss << " (f=" << r.f_total
        << " g=" << r.g_total << ") lost_packets=" << r.packet_loss() << " generated=" << r.ledger.generated
        << " delivered=" << r.ledger.delivered << '\n';
    if (r.fallbacks > 0 || r.conflicts > 0) {
      out << "fallbacks=" << r.fallbacks << " parse_failures=" << r.parse_failures
          << " llm_failures=" << r.llm_failures << " conflicts=" << r.conflicts << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_compare(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (spec.policies.size() < 2) throw ConfigError("compare needs at least two policies");
    check_policies(spec.policies);
    const SimConfig base = load(spec);
    const auto seeds = seeds_or_default(spec, base);
    const auto attention = load_attention(spec);

    std::vector<ExperimentCase> grid;
    for (const std::string& p : spec.policies) {
      ExperimentCase c{p, base};
      c.cfg.policy.name = p;
      grid.push_back(std::move(c));
    }
    const auto rows = run_experiment(grid, seeds, spec.jobs, attention);

    const double reference = rows.front().score.mean_score;
    const auto greedy = std::find_if(rows.begin(), rows.end(), [](const ExperimentRow& r) { return r.policy == "greedy"; });
    std::ostringstream csv;
    table_header(csv, "compare", seeds);
    csv << "policy,episodes,mean_packet_loss,std_packet_loss,min_packet_loss,max_packet_loss,mean_loss_events,"
           "reduction_pct_vs_"
        << rows.front().policy << ",regret_vs_greedy_proxy\n";
    for (const ExperimentRow& r : rows) {
      const double m = r.score.mean_score;
      // A zero reference makes the percentage meaningless unless both are zero.
      const double reduction = reference > 0.0 ? 100.0 * (reference - m) / reference
                               : m == 0.0      ? 0.0
                                               : std::numeric_limits<double>::quiet_NaN();
      csv << r.policy << ',' << r.score.per_episode.size() << ',' << format_double(m) << ','
          << format_double(r.score.std_score) << ',' << format_double(r.score.min_score) << ','
          << format_double(r.score.max_score) << ',' << format_double(r.event_score.mean_score) << ','
          << format_double(reduction) << ',';
      if (greedy != rows.end()) csv << format_double(m - greedy->score.mean_score);
      csv << '\n';
      out << r.policy << ": mean lost packets " << format_double(m) << " (std " << format_double(r.score.std_score)
          << "), reduction vs " << rows.front().policy << " " << format_double(reduction) << "%\n";
    }
    ensure_dir(spec.out_dir);
    atomic_write(spec.out_dir / "compare.csv", csv.str());
    return static_cast<int>(kExitOk);
  });
}

int cmd_sweep(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (spec.axis_values.empty()) throw ConfigError("sweep axis has no values");
    for (std::size_t i = 1; i < spec.axis_values.size(); ++i) {
      if (spec.axis_values[i] <= spec.axis_values[i - 1]) throw ConfigError("sweep values must be strictly increasing");
    }
    const std::vector<std::string> policies = spec.policies.empty() ? std::vector<std::string>{"greedy"} : spec.policies;
    check_policies(policies);
    const SimConfig base = load(spec);
    const auto seeds = seeds_or_default(spec, base);
    const auto attention = load_attention(spec);

    std::vector<ExperimentCase> grid;
    std::vector<int> case_values;
    for (int v : spec.axis_values) {
      for (const std::string& p : policies) {
        ExperimentCase c{std::string(axis_name(spec.axis)) + "=" + std::to_string(v), base};
        c.cfg.policy.name = p;
        switch (spec.axis) {
          case SweepAxis::Uavs:
            c.cfg.world.uavs = v;
            break;
          case SweepAxis::Buffer:
            c.cfg.world.queue_capacity = v;
            break;
          case SweepAxis::Sensors:
            c.cfg.world.sensors = v;
            c.cfg.attention.k = std::min(c.cfg.attention.k, v);
            break;
        }
        validate(c.cfg);
        grid.push_back(std::move(c));
        case_values.push_back(v);
      }
    }
    const auto rows = run_experiment(grid, seeds, spec.jobs, attention);

    std::ostringstream csv;
    table_header(csv, "sweep", seeds);
    csv << "axis,value,policy,episodes,mean_packet_loss,std_packet_loss,min_packet_loss,max_packet_loss,"
           "mean_loss_events\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const ExperimentRow& r = rows[i];
      csv << axis_name(spec.axis) << ',' << case_values[i] << ',' << r.policy << ',' << r.score.per_episode.size()
          << ',' << format_double(r.score.mean_score) << ',' << format_double(r.score.std_score) << ','
          << format_double(r.score.min_score) << ',' << format_double(r.score.max_score) << ','
          << format_double(r.event_score.mean_score) << '\n';
      out << r.label << ' ' << r.policy << ": mean lost packets " << format_double(r.score.mean_score) << '\n';
    }
    ensure_dir(spec.out_dir);
    atomic_write(spec.out_dir / "sweep.csv", csv.str());
    return static_cast<int>(kExitOk);
  });
}

int cmd_train_attention(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (spec.epochs < 1) throw ConfigError("epochs must be >= 1");
    SimConfig cfg = load(spec);
    cfg.policy.name = "icl";
    cfg.attention.online_update = true;
    if (!(cfg.attention.learning_rate > 0.0)) throw ConfigError("training needs attention.learning_rate > 0");
    const auto seeds = seeds_or_default(spec, cfg);
    std::optional<AttentionParams> params = load_attention(spec);
    if (!params) {
      auto init = RngStreams(seeds.front()).stream("init");
      params = init_attention_params(kFeatureDim, cfg.attention.d_prime, init);
    }

    std::ostringstream csv;
    table_header(csv, "training", seeds);
    csv << "epoch,seed,lost_packets,loss_events,updates\n";
    for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
      std::int64_t epoch_loss = 0;
      for (std::uint64_t seed : seeds) {
        cfg.seed = seed;
        const EpisodeResult r = run_episode(cfg, params);
        params = r.attention;
        epoch_loss += r.packet_loss();
        csv << epoch << ',' << seed << ',' << r.packet_loss() << ',' << r.total_loss << ',' << r.attention_updates
            << '\n';
      }
      out << "epoch " << epoch << ": lost packets " << epoch_loss << '\n';
    }
    std::ostringstream ckpt;
    save_params(ckpt, *params);
    ensure_dir(spec.out_dir);
    atomic_write(spec.out_dir / "training.csv", csv.str());
    atomic_write(spec.out_dir / "attention.txt", ckpt.str());
    return static_cast<int>(kExitOk);
  });
}

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-UAV data collection simulator"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  ExperimentSpec spec;
  spec.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string seeds_arg;
  std::string attention_arg;
  std::string axis_arg = "uavs";
  std::string values_arg;
  std::uint64_t single_seed = 0;

  auto common = [&](CLI::App* sub, bool many_seeds) {
    sub->add_option("--config", spec.config_path, "INI configuration file")->required();
    sub->add_option("--set", spec.overrides, "Override as section.key=value (repeatable)");
    sub->add_option("--out", spec.out_dir, "Output directory");
    sub->add_option("--attention", attention_arg, "Attention checkpoint to start from");
    if (many_seeds) {
      sub->add_option("--seeds", seeds_arg, "Seeds as N..M or a,b,c");
      sub->add_option("--jobs", spec.jobs, "Parallel episodes")->check(CLI::PositiveNumber);
    }
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Run one episode");
  common(simulate, false);
  simulate->add_option("--seed", single_seed, "Root seed");
  simulate->add_option("--policy", spec.policies, "Policy name")->expected(1);

  CLI::App* compare = app.add_subcommand("compare", "Compare policies over seeds");
  common(compare, true);
  compare->add_option("--policy", spec.policies, "Policy names, first is the reference")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "Loss against one world parameter");
  common(sweep, true);
  sweep->add_option("--policy", spec.policies, "Policy names (default greedy)");
  sweep->add_option("--axis", axis_arg, "uavs | buffer | sensors")->check(CLI::IsMember({"uavs", "buffer", "sensors"}));
  sweep->add_option("--values", values_arg, "Comma separated, strictly increasing")->required();

  CLI::App* train = app.add_subcommand("train-attention", "Fit the attention weights over episodes");
  common(train, true);
  train->add_option("--epochs", spec.epochs, "Passes over the seed list");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << tool_version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (!seeds_arg.empty()) spec.seeds = parse_seed_list(seeds_arg);
    if (simulate->parsed() && simulate->count("--seed") > 0) spec.seeds = {single_seed};
    if (!attention_arg.empty()) spec.attention_path = attention_arg;
    if (axis_arg == "buffer") spec.axis = SweepAxis::Buffer;
    if (axis_arg == "sensors") spec.axis = SweepAxis::Sensors;
    if (!values_arg.empty()) {
      for (std::string_view v : split(values_arg, ',')) {
        const long long n = parse_int(trim(v));
        if (n < 1 || n > 100000) throw std::invalid_argument("sweep values must be in [1, 100000]");
        spec.axis_values.push_back(static_cast<int>(n));
      }
    }
  } catch (const std::exception& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitConfig;
  }

  if (simulate->parsed()) return cmd_simulate(spec, out, err);
  if (compare->parsed()) return cmd_compare(spec, out, err);
  if (sweep->parsed()) return cmd_sweep(spec, out, err);
  return cmd_train_attention(spec, out, err);
}

}  // namespace uavsim
