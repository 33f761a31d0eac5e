#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairsel/dataset.hpp"
#include "fairsel/metrics.hpp"
#include "fairsel/selector.hpp"
#include "fairsel/trainer.hpp"

namespace fairsel {

std::string software_version();

// Flat `key = value` document. '#' starts a comment; blank lines are ignored.
// Duplicate keys and lines without '=' are errors.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text, const std::string& source);
KeyValues read_key_values(const std::filesystem::path& path);

// Keys accepted in a synthetic spec file (and, prefixed with "synth.", in an
// experiment config):
//   n_papers n_accepted bias_strength quality_slope coauthor_homophily
//   protected_h_log_shift
//   min_authors max_authors
//   <conf>.n_papers <conf>.gender_pct <conf>.race_pct <conf>.country_pct
//     for conf in sigchi, dis, iui
//   stage.<stage>.share stage.<stage>.h_median stage.<stage>.h_sigma
//     for stage in professor, associate_professor, lecturer, postdoc,
//     grad_student
// Missing keys keep their defaults; unknown keys are errors.
SyntheticSpec synthetic_spec_from(const KeyValues& kv, const std::string& prefix = "");

enum class OutputFormat { kCsv, kJson };
enum class Command { kRun, kSweep, kAblate };

struct ExperimentConfig {
  enum class Source { kCsv, kSynthetic };
  Source source = Source::kSynthetic;
  std::filesystem::path papers_csv;
  std::filesystem::path authors_csv;
  SyntheticSpec synthetic;
  std::optional<std::uint64_t> synthetic_seed;  // defaults to `seed`

  std::uint64_t seed = 7;
  int n_runs = 5;
  std::size_t n_accepted = 351;
  double split_ratio = 0.8;
  TrainConfig train;  // train.fairness holds the run's FairnessConfig

  std::vector<double> lambda_grid = {1, 2, 2.5, 3, 5, 10};
  std::vector<FairnessMode> sweep_modes = {FairnessMode::kRaceOnly, FairnessMode::kCountryOnly};
  std::vector<double> ablate_lambda_grid = {1, 2, 2.5, 3, 5, 10};
  // Multipliers on (fairness.w_race, fairness.w_country).
  std::vector<std::pair<double, double>> weight_multipliers = {{1, 1}, {1, 2}, {2, 1}};

  int jobs = 1;
  OutputFormat format = OutputFormat::kCsv;

  // Canonical "key = value" rendering of every setting; hashed into manifests.
  std::string canonical() const;
  std::string hash() const;
};

// Builds a config from key/values. Required keys for every command:
// data.source (and data.papers / data.authors when it is "csv"); for `run`
// also fairness.mode and fairness.lambda. A missing key raises
// ValidationError naming it.
ExperimentConfig experiment_config_from(const KeyValues& kv, Command command);

// Loaded, encoded and split data shared by every cell of an experiment.
struct PreparedData {
  Dataset dataset;
  FeatureMatrix all;
  FeatureMatrix train;
  FeatureMatrix validation;
  CareerWeights weights;
};

PreparedData prepare_data(const ExperimentConfig& config);

// Scores the full dataset with each run's model and selects the top N_a.
std::vector<SelectionResult> select_runs(const PreparedData& data,
                                         const std::vector<TrainResult>& runs,
                                         std::size_t n_accepted);

// lambda = 0 runs over the same split and seeds; the comparison point for
// every gain.
struct BaselineRuns {
  std::vector<TrainResult> runs;
  std::vector<SelectionResult> selections;
};
BaselineRuns run_baseline(const PreparedData& data, const ExperimentConfig& config);

inline constexpr std::string_view kBaselineDescriptor =
    "demographic-blind scorer (lambda = 0, same features, split and seeds)";

struct CellOutcome {
  FairnessConfig fairness;
  std::optional<GainReport> report;
  std::string error;  // non-empty when the cell failed
};

// Trains n_runs models for `fairness`, selects, and compares each run against
// the baseline run with the same index. When `run_dir` is set, writes
// manifest, per-run checkpoint/history/selection and the gain report there.
CellOutcome run_cell(const PreparedData& data, const ExperimentConfig& config,
                     const FairnessConfig& fairness, const BaselineRuns& baseline,
                     const std::optional<std::filesystem::path>& run_dir);

struct SweepRow {
  double lambda = 0.0;
  ProtectedAttr attr = ProtectedAttr::kRace;
  Summary macro, micro, utility;
  std::string error;
};

struct AblationRow {
  double lambda = 0.0;
  double w_race = 0.0;
  double w_country = 0.0;
  std::array<Summary, 2> macro, micro;
  Summary utility, diversity;
  std::optional<double> f_measure;  // F of the row's mean D_G and mean UG
  std::string error;
};

std::vector<SweepRow> sweep_rows(const std::vector<CellOutcome>& cells);
std::vector<AblationRow> ablation_rows(const std::vector<CellOutcome>& cells);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::ordered_json sweep_json(const std::vector<SweepRow>& rows);
nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows);
// Gain vs lambda charts: one per attribute (macro and micro) and one for
// utility gain.
std::map<std::string, std::string> sweep_plots(const std::vector<SweepRow>& rows);

// Subcommand entry points; each writes only below `out_dir`.
void cmd_synth(const std::optional<std::filesystem::path>& spec_path, std::uint64_t seed,
               const std::filesystem::path& out_dir);
GainReport cmd_run(const ExperimentConfig& config, const std::filesystem::path& out_dir);
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir);
std::vector<AblationRow> cmd_ablate(const ExperimentConfig& config,
                                    const std::filesystem::path& out_dir);
// Re-renders tables and plots from the cell reports stored by sweep/ablate.
void cmd_report(const std::filesystem::path& out_dir, OutputFormat format);

}  // namespace fairsel
