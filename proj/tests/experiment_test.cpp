#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <set>
#include <sstream>

#include "fairsel/csv.hpp"
#include "fairsel/errors.hpp"
#include "fairsel/experiment.hpp"
#include "test_support.hpp"

using namespace fairsel;
using namespace fairsel::testing;
namespace fs = std::filesystem;

namespace {

const char* kFastConfig = R"(# small but complete experiment
data.source = synthetic
seed = 3
n_runs = 2
train.epochs = 6
train.patience = 3
train.hidden1 = 8
train.hidden2 = 4
fairness.mode = race_only
fairness.lambda = 0
sweep.lambda_grid = 1, 3
ablate.lambda_grid = 1, 2, 2.5, 3, 5, 10
)";

ExperimentConfig fast_config(Command c, const std::string& extra = "") {
  return experiment_config_from(parse_key_values(std::string(kFastConfig) + extra, "test"), c);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FAIRSEL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  for (auto& r : csv::parse(text, "test")) out.push_back(std::move(r.fields));
  return out;
}

}  // namespace

TEST(KeyValues, ParsesCommentsAndRejectsDuplicates) {
  const auto kv = parse_key_values("a = 1 # trailing\n\n# full line\n b=two words \n", "x");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two words");
  EXPECT_THROW(parse_key_values("a = 1\na = 2\n", "x"), ValidationError);
  try {
    parse_key_values("a = 1\nnot a pair\n", "cfg");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Config, MissingKeyIsNamed) {
  try {
    experiment_config_from(parse_key_values("data.source = synthetic\nfairness.lambda = 1\n", "t"), Command::kRun);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("fairness.mode"), std::string::npos) << e.what();
  }
  // Sweeps do not need a fairness setting.
  EXPECT_NO_THROW(experiment_config_from(parse_key_values("data.source = synthetic\n", "t"), Command::kSweep));
}

TEST(Config, RejectsUnknownAndInvalidValues) {
  EXPECT_THROW(fast_config(Command::kRun, "train.epoch = 4\n"), ValidationError);
  EXPECT_THROW(fast_config(Command::kRun, "split_ratio = 1.5\n"), ValidationError);
  EXPECT_THROW(fast_config(Command::kRun, "fairness.w_race = -1\n"), ValidationError);
  EXPECT_THROW(fast_config(Command::kSweep, "sweep.modes = combined\n"), ValidationError);
  std::string both = kFastConfig;
  both.replace(both.find("race_only"), 9, "both");
  EXPECT_THROW(experiment_config_from(parse_key_values(both, "t"), Command::kRun), ValidationError);
}

TEST(Config, CanonicalFormAndHash) {
  const auto a = fast_config(Command::kAblate);
  EXPECT_EQ(a.weight_multipliers.size(), 3u);
  EXPECT_EQ(a.ablate_lambda_grid.size(), 6u);
  EXPECT_EQ(a.hash(), fast_config(Command::kAblate).hash());
  EXPECT_NE(a.hash(), fast_config(Command::kAblate, "split_ratio = 0.7\n").hash());
  const auto s = fast_config(Command::kRun, "synth.bias_strength = 1.5\n");
  EXPECT_EQ(s.synthetic.bias_strength, 1.5);
}

TEST(Synth, DeterministicAndValidated) {
  TempDir a, b, c;
  cmd_synth(std::nullopt, 11, a.path());
  cmd_synth(std::nullopt, 11, b.path());
  for (const char* f : {"papers.csv", "authors.csv", "manifest.json"}) {
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  }
  const auto papers = csv_rows(read_file(a / "papers.csv"));
  EXPECT_EQ(papers.size(), 531u);  // header + 530

  write_file(c / "bad.spec", "sigchi.race_pct = 130\n");
  EXPECT_THROW(cmd_synth(c / "bad.spec", 1, c / "out"), ValidationError);
  EXPECT_EQ(run_cli("synth --config " + (c / "bad.spec").string() + " --out " + (c / "cli").string()), 1);
  EXPECT_EQ(run_cli("synth --seed 11 --out " + (c / "cli").string()), 0);
  EXPECT_EQ(read_file(c / "cli" / "papers.csv"), read_file(a / "papers.csv"));
}

TEST(Run, LambdaZeroIsItsOwnBaseline) {
  TempDir out;
  const auto report = cmd_run(fast_config(Command::kRun), out.path());
  for (std::size_t a = 0; a < 2; ++a) {
    ASSERT_TRUE(report.macro[a].mean.has_value());
    EXPECT_EQ(*report.macro[a].mean, 0.0);
    EXPECT_EQ(*report.micro[a].mean, 0.0);
  }
  EXPECT_EQ(*report.utility_gain.mean, 0.0);
  for (const char* f : {"manifest.json", "report.json", "report.csv", "run_00/checkpoint.json",
                        "run_01/history.json", "run_01/selection.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
  for (const char* k : {"config_hash", "software_version", "seed", "run_seeds"}) {
    EXPECT_TRUE(manifest.contains(k)) << k;
  }
  const auto history = nlohmann::json::parse(read_file(out / "run_00" / "history.json"));
  for (const auto& b : history.at("batches")) EXPECT_EQ(b.at("fairness_loss").get<double>(), 0.0);
}

TEST(Run, CliExitCodes) {
  TempDir dir;
  write_file(dir / "ok.cfg", kFastConfig);
  write_file(dir / "missing.cfg", "data.source = synthetic\n");
  write_file(dir / "too_many.cfg", std::string(kFastConfig) + "synth.n_accepted = 600\n");
  EXPECT_EQ(run_cli("run --config " + (dir / "ok.cfg").string() + " --out " + (dir / "o1").string()), 0);
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.cfg").string() + " --out " + (dir / "o2").string()), 1);
  EXPECT_EQ(run_cli("run --config " + (dir / "too_many.cfg").string() + " --out " + (dir / "o3").string()), 1);
  EXPECT_EQ(run_cli("run --out " + (dir / "o4").string()), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  // Output below a regular file cannot be created: a runtime failure.
  write_file(dir / "blocker", "x");
  EXPECT_EQ(run_cli("run --config " + (dir / "ok.cfg").string() + " --out " + (dir / "blocker" / "sub").string()), 2);
  EXPECT_EQ(run_cli("sweep --config " + (dir / "ok.cfg").string() + " --format xml"), 1);
}

TEST(Sweep, TableShapeAndDeterminism) {
  TempDir a, b;
  auto config = fast_config(Command::kSweep);
  const auto rows = cmd_sweep(config, a.path());
  EXPECT_EQ(rows.size(), 4u);
  config.jobs = 2;
  cmd_sweep(config, b.path());
  const auto text = read_file(a / "sweep.csv");
  EXPECT_EQ(text, read_file(b / "sweep.csv"));
  const auto table = csv_rows(text);
  ASSERT_EQ(table.size(), 5u);
  EXPECT_EQ(table[0], (std::vector<std::string>{"lambda", "attr", "macro_gain", "macro_std", "micro_gain",
                                                "micro_std", "utility_gain", "utility_std"}));
  for (const char* svg : {"gain_race.svg", "gain_country.svg", "utility.svg"}) {
    EXPECT_EQ(read_file(a / svg), read_file(b / svg)) << svg;
  }
  EXPECT_FALSE(fs::exists(a / "sweep_errors.csv"));

  // Re-rendering from stored cell reports reproduces the table.
  fs::remove(a / "sweep.csv");
  cmd_report(a.path(), OutputFormat::kCsv);
  EXPECT_EQ(read_file(a / "sweep.csv"), text);
}

TEST(Ablate, EighteenRowsWithRecomputableF) {
  TempDir out;
  const auto rows = cmd_ablate(fast_config(Command::kAblate), out.path());
  EXPECT_EQ(rows.size(), 18u);
  const auto table = csv_rows(read_file(out / "ablation.csv"));
  ASSERT_EQ(table.size(), 19u);
  const auto& h = table[0];
  auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin());
  };
  std::set<std::pair<std::string, std::string>> weights;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    weights.insert({row[col("w_race")], row[col("w_country")]});
    const double d = std::stod(row[col("diversity_gain")]);
    const double ug = std::stod(row[col("utility_gain")]);
    const double f = std::stod(row[col("f_measure")]);
    // Columns are printed with 10 significant digits.
    EXPECT_NEAR(f, 2 * d * (100 - ug) / (d + 100 - ug), 1e-7 * std::max(1.0, std::abs(f))) << "row " << r;
  }
  EXPECT_EQ(weights, (std::set<std::pair<std::string, std::string>>{
                         {"0.32", "0.68"}, {"0.32", "1.36"}, {"0.64", "0.68"}}));
}

TEST(Ablate, JsonFormat) {
  TempDir out;
  auto config = fast_config(Command::kAblate, "ablate.weight_multipliers = 1:1\n");
  config.ablate_lambda_grid = {2};
  config.format = OutputFormat::kJson;
  cmd_ablate(config, out.path());
  const auto doc = nlohmann::json::parse(read_file(out / "ablation.json"));
  ASSERT_TRUE(doc.is_array());
  EXPECT_EQ(doc.size(), 1u);
}
