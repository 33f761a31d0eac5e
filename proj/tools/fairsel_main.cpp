// fairsel command-line front end.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fairsel/errors.hpp"
#include "fairsel/experiment.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct GlobalOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out = "fairsel_out";
  std::optional<int> jobs;
  std::string format = "csv";
};

fairsel::ExperimentConfig load_config(const GlobalOptions& g, fairsel::Command command) {
  if (!g.config) throw fairsel::ValidationError("--config is required for this command");
  auto config = fairsel::experiment_config_from(fairsel::read_key_values(*g.config), command);
  if (g.seed) config.seed = *g.seed;
  if (g.jobs) config.jobs = *g.jobs;
  config.format = g.format == "json" ? fairsel::OutputFormat::kJson : fairsel::OutputFormat::kCsv;
  return config;
}

void print_summary(const fairsel::GainReport& r) {
  auto show = [](const char* label, const fairsel::Summary& s) {
    std::cout << "  " << label << ": ";
    if (s.mean) {
      std::cout << *s.mean << " (std " << s.std.value_or(0.0) << ", n=" << s.n << ")\n";
    } else {
      std::cout << "n/a\n";
    }
  };
  std::cout << "baseline: " << r.baseline << "\n";
  show("race macro gain %", r.macro[0]);
  show("race micro gain %", r.micro[0]);
  show("country macro gain %", r.macro[1]);
  show("country micro gain %", r.micro[1]);
  show("diversity gain %", r.diversity_gain);
  show("utility gain %", r.utility_gain);
  show("F %", r.f_measure);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware paper selection"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Config file (key = value); synthetic spec for 'synth'");
  app.add_option("--seed", g.seed, "Override the base seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Parallel training runs / grid cells")->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.set_version_flag("--version", fairsel::software_version());

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  auto* run = app.add_subcommand("run", "Train, select and evaluate one fairness setting");
  auto* sweep = app.add_subcommand("sweep", "Lambda sweep for single-attribute modes");
  auto* ablate = app.add_subcommand("ablate", "Combined-mode lambda x weight ablation");
  auto* report = app.add_subcommand("report", "Re-render tables and plots from an output directory");
  for (auto* sub : {synth, run, sweep, ablate, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const std::filesystem::path out(g.out);
    if (*synth) {
      std::optional<std::filesystem::path> spec;
      if (g.config) spec = *g.config;
      fairsel::cmd_synth(spec, g.seed.value_or(7), out);
      std::cout << "wrote " << (out / "papers.csv").string() << " and " << (out / "authors.csv").string() << "\n";
    } else if (*run) {
      print_summary(fairsel::cmd_run(load_config(g, fairsel::Command::kRun), out));
    } else if (*sweep) {
      const auto rows = fairsel::cmd_sweep(load_config(g, fairsel::Command::kSweep), out);
      std::cout << fairsel::sweep_csv(rows);
    } else if (*ablate) {
      const auto rows = fairsel::cmd_ablate(load_config(g, fairsel::Command::kAblate), out);
      std::cout << fairsel::ablation_csv(rows);
    } else if (*report) {
      fairsel::cmd_report(out, g.format == "json" ? fairsel::OutputFormat::kJson : fairsel::OutputFormat::kCsv);
      std::cout << "re-rendered " << out.string() << "\n";
    }
  } catch (const fairsel::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
