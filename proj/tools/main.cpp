// Command-line front end: optimize, simulate, psd, papr, ber, validate.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric or convergence
// error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "cpsofdm/scenario.hpp"
#include "validate.hpp"

namespace fs = std::filesystem;
using namespace cpsofdm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out) {
  cmd->add_option("--config", args.config, "Scenario file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "Override the scenario seed");
  cmd->add_option("--threads", args.threads, "Worker threads for Eb/N0 points")
      ->check(CLI::PositiveNumber);
  if (needs_out) cmd->add_option("--out", args.out, "Output directory");
}

ScenarioConfig load(const CommonArgs& args) {
  ScenarioConfig cfg = load_scenario(args.config);
  if (args.seed) cfg.seed = *args.seed;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

int cmd_optimize(const CommonArgs& args) {
  const ScenarioConfig cfg = load(args);
  fs::create_directories(args.out);
  int done = 0;
  for (const auto& user : cfg.users) {
    if (user.shaping.kind != ShapingSource::Kind::kOptimize) continue;
    std::vector<TraceRow> trace;
    const ShapingSet sh = resolve_shaping(user, cfg, &trace);
    save_shaping(sh, fs::path(args.out) / ("shaping_" + user.name + ".json"));
    write_text(fs::path(args.out) / ("trace_" + user.name + ".csv"), trace_csv(trace));
    std::cout << user.name << ": " << trace.size() << " iterations, NEP "
              << nep(sh.shaping(), sh.k_sub(), sh.m_sub()) << "\n";
    ++done;
  }
  if (done == 0) std::cout << "no user has an 'optimize' shaping source\n";
  return kExitOk;
}

int cmd_simulate(const CommonArgs& args) {
  const ScenarioConfig cfg = load(args);
  RunOptions opt;
  opt.threads = args.threads;
  const RunArtifact art = run_case(cfg, opt);
  art.write(args.out);
  std::cout << "wrote " << args.out << " (config hash " << art.config_hash << ")\n";
  return kExitOk;
}

int cmd_psd(const CommonArgs& args) {
  const ScenarioConfig cfg = load(args);
  RunOptions opt;
  opt.threads = args.threads;
  opt.collect_papr = false;
  opt.collect_ber = false;
  const RunArtifact art = run_case(cfg, opt);
  fs::create_directories(args.out);
  write_text(fs::path(args.out) / "psd.csv", art.psd_csv());
  for (const auto& u : art.users)
    std::cout << u.name << ": OSBEP " << u.report.osbep << ", MIP " << u.report.mip << ", VIP "
              << u.report.vip << "\n";
  return kExitOk;
}

int cmd_papr(const CommonArgs& args) {
  const ScenarioConfig cfg = load(args);
  RunOptions opt;
  opt.threads = args.threads;
  opt.collect_psd = false;
  opt.collect_ber = false;
  const RunArtifact art = run_case(cfg, opt);
  fs::create_directories(args.out);
  write_text(fs::path(args.out) / "papr_ccdf.csv", art.ccdf_csv());
  std::cout << "wrote " << (fs::path(args.out) / "papr_ccdf.csv").string() << "\n";
  return kExitOk;
}

int cmd_ber(const CommonArgs& args) {
  const ScenarioConfig cfg = load(args);
  const std::vector<BerPoint> points = run_ber(cfg, args.threads);
  MetricReport rep;
  rep.label = cfg.users.front().name;
  rep.ber = points;
  fs::create_directories(args.out);
  write_text(fs::path(args.out) / "ber.csv", rep.ber_csv());
  for (const auto& p : points)
    std::cout << "Eb/N0 " << p.ebn0_db << " dB: BER " << p.ber << " (" << p.errors << "/"
              << p.bits << ")\n";
  return kExitOk;
}

int cmd_validate(const CommonArgs& args) {
  const ScenarioConfig cfg = load(args);
  return cli::validate_scenario(cfg, std::cout) == 0 ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CPS-OFDM waveform toolkit"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  CommonArgs args;
  struct Verb {
    const char* name;
    const char* help;
    bool needs_out;
    int (*run)(const CommonArgs&);
  };
  const Verb verbs[] = {
      {"optimize", "Optimize shaping vectors; writes shaping JSON and trace CSV", true,
       cmd_optimize},
      {"simulate", "Run a scenario; writes the full artifact directory", true, cmd_simulate},
      {"psd", "Closed-form and Welch PSD only", true, cmd_psd},
      {"papr", "PAPR CCDF only", true, cmd_papr},
      {"ber", "Target-user BER only", true, cmd_ber},
      {"validate", "Check structural invariants of the configured users", false, cmd_validate},
  };
  int (*selected)(const CommonArgs&) = nullptr;
  for (const Verb& v : verbs) {
    CLI::App* cmd = app.add_subcommand(v.name, v.help);
    add_common(cmd, args, v.needs_out);
    cmd->callback([&selected, run = v.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    return selected(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_config_error() ? kExitConfig : kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
