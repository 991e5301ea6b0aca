#include "cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "trapscope/pipeline.hpp"

namespace trapscope::cli {

namespace {

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON run configuration (defaults if omitted)")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", c.out_dir, "Output directory (overrides output_dir)");
  sub->add_option("--seed", c.seed, "Random seed (overrides seed)");
  sub->add_option("--threads", c.threads, "Worker threads (fallback: TRAPSCOPE_THREADS)")
      ->check(CLI::PositiveNumber);
}

int threads_from_env() {
  const char* v = std::getenv("TRAPSCOPE_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("TRAPSCOPE_THREADS", "must be a positive integer");
  return static_cast<int>(n);
}

config::RunConfig load(const Common& c) {
  auto cfg = c.config_path.empty() ? config::parse_config_text("{}")
                                   : config::parse_config(c.config_path);
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  if (c.threads) {
    set_thread_count(*c.threads);
  } else if (const int n = threads_from_env(); n > 0) {
    set_thread_count(n);
  }
  return cfg;
}

void print_failures(const app::RunReport& r) {
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& c : r.checks)
    if (!c.pass && !c.diagnostic)
      failed.push_back({{"name", c.name}, {"value", c.value}, {"requirement", c.requirement}});
  std::cerr << nlohmann::json{{"status", "acceptance_failure"},
                              {"command", r.command},
                              {"failed", failed}}
                   .dump()
            << "\n";
}

void print_checks(const app::RunReport& r) {
  for (const auto& c : r.checks) {
    const char* tag = c.diagnostic ? "INFO" : (c.pass ? "PASS" : "FAIL");
    std::cout << tag << "  " << c.name << " = " << c.value << "  (" << c.requirement << ")\n";
  }
}

void print_error(const std::string& kind, const std::string& what, const std::string& key = {}) {
  nlohmann::json j{{"status", kind}, {"error", what}};
  if (!key.empty()) j["key"] = key;
  std::cerr << j.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Surface-trap fluorescence collection and detection simulator", "trapscope"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("trapscope ") + app::tool_version);

  Common common;
  using Runner = app::RunReport (*)(const config::RunConfig&, app::OutputDir&);
  struct Simple {
    const char* name;
    const char* help;
    Runner fn;
  };
  const Simple simple[] = {
      {"trap-solve", "Solve the rf null and secular frequencies", app::run_trap_solve},
      {"collection", "Collection efficiency of the nominal stacks", app::run_collection},
      {"calibrate-undercut", "Calibrate the undercut to the target efficiency",
       app::run_calibrate},
      {"lens-design", "Metalens phase, fit and feature map", app::run_lens_design},
      {"psf", "Point-spread function of the backside-illuminated lens", app::run_psf},
      {"scan-lateral", "Lateral detection scans for both setups", app::run_scan_lateral},
      {"scan-axial", "Axial detection scans for both setups", app::run_scan_axial},
  };
  std::vector<std::pair<CLI::App*, Runner>> runners;
  for (const auto& s : simple) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, common);
    runners.emplace_back(sub, s.fn);
  }

  std::string target;
  auto* rep = app.add_subcommand("reproduce", "Regenerate one figure dataset and check it");
  rep->add_option("target", target, "fig2c | fig2d | fig3d | fig4c | fig4d | budget")
      ->required()
      ->check(CLI::IsMember(app::reproduce_targets()));
  add_common(rep, common);

  app::SweepRequest sweep;
  auto* sw = app.add_subcommand("sweep", "Generic one-parameter sweep");
  sw->add_option("--op", sweep.op, "trap | collection | lateral | axial")->required();
  sw->add_option("--param", sweep.param,
                 "aperture_width | aperture_length (trap, collection); objective | integrated")
      ->required();
  sw->add_option("--start", sweep.range.start)->required();
  sw->add_option("--stop", sweep.range.stop)->required();
  sw->add_option("--step", sweep.range.step)->required();
  add_common(sw, common);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    const auto cfg = load(common);
    app::OutputDir out(cfg.output_dir);
    app::RunReport report;
    bool gated = false;
    if (rep->parsed()) {
      report = app::reproduce(cfg, target, out);
      gated = true;
    } else if (sw->parsed()) {
      report = app::run_sweep(cfg, sweep, out);
    } else {
      for (const auto& [sub, fn] : runners)
        if (sub->parsed()) report = fn(cfg, out);
    }
    app::finalize(out, cfg, report);
    print_checks(report);
    std::cout << "outputs: " << out.path().string() << "\n";
    if (gated && !report.passed()) {
      print_failures(report);
      return exit_failure;
    }
    return exit_ok;
  } catch (const ConfigError& e) {
    print_error("config_error", e.what(), e.key());
    return exit_usage;
  } catch (const app::UsageError& e) {
    print_error("usage_error", e.what());
    return exit_usage;
  } catch (const std::exception& e) {
    print_error("run_failure", e.what());
    return exit_failure;
  }
}

}  // namespace trapscope::cli
