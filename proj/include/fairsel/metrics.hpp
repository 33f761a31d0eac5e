#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairsel/losses.hpp"
#include "fairsel/records.hpp"
#include "json.hpp"

namespace fairsel {

// Fraction of papers whose paper-level flag for `attr` is set.
double protected_paper_share(std::span<const PaperRecord> papers, ProtectedAttr attr);
// Fraction of author slots (with multiplicity across papers) in the group.
double protected_author_share(std::span<const PaperRecord> papers, ProtectedAttr attr);

// 100 * (share(selected) - share(baseline)) / share(baseline), at paper level
// (macro) or author level (micro). Throw UndefinedGainError when the baseline
// share is 0 and ValidationError on empty inputs.
double macro_gain(std::span<const PaperRecord> selected, std::span<const PaperRecord> baseline,
                  ProtectedAttr attr);
double micro_gain(std::span<const PaperRecord> selected, std::span<const PaperRecord> baseline,
                  ProtectedAttr attr);

// Mean of the per-attribute macro gains, each capped at 100.
double diversity_gain(std::span<const double> macro_gains);

// Mean over papers of (mean over authors of weight(stage) * h_index).
double utility(std::span<const PaperRecord> selection, const CareerWeights& weights);
double utility_gain(std::span<const PaperRecord> selected, std::span<const PaperRecord> baseline,
                    const CareerWeights& weights);

// 2 * D * (100 - UG) / (D + (100 - UG)).
double f_measure(double diversity_gain_pct, double utility_gain_pct);

// Harmonic combination 2xy / (x + y).
double harmonic(double x, double y);

// Percent of selected papers per conference, indexed by index_of(Conference).
std::array<double, 3> conference_distribution(std::span<const PaperRecord> selected);

// Selection rate among protected minus selection rate among non-protected,
// over the candidate pool `all_papers`. `selected` must be a subset (by id).
double statistical_parity_difference(std::span<const PaperRecord> selected,
                                     std::span<const PaperRecord> all_papers, ProtectedAttr attr);

// Papers of `dataset` whose ids appear in `ids`, in `ids` order.
std::vector<PaperRecord> gather(const Dataset& dataset, std::span<const std::string> ids);

// Gains of one selection against one baseline selection.
struct RunGains {
  std::array<std::optional<double>, 2> macro;  // indexed by ProtectedAttr
  std::array<std::optional<double>, 2> micro;
  std::optional<double> diversity_gain;
  std::optional<double> utility_gain;
  std::optional<double> f_measure;
  std::array<double, 3> conference_distribution{};
  std::size_t n_selected = 0;
};

// The attributes entering D_G: one for single-attribute modes, both for
// combined mode.
std::vector<ProtectedAttr> evaluated_attributes(FairnessMode mode);

RunGains compute_gains(std::span<const PaperRecord> selected, std::span<const PaperRecord> baseline,
                       const CareerWeights& weights, FairnessMode mode);

struct Summary {
  std::optional<double> mean;
  std::optional<double> std;  // sample standard deviation; 0 for one run
  int n = 0;                  // number of defined values
};

Summary summarize(std::span<const std::optional<double>> values);

struct GainReport {
  std::string baseline;  // human-readable baseline descriptor
  FairnessConfig fairness;
  std::size_t n_selected = 0;
  std::vector<RunGains> runs;

  std::array<Summary, 2> macro;
  std::array<Summary, 2> micro;
  Summary diversity_gain;
  Summary utility_gain;
  Summary f_measure;
  std::array<Summary, 3> conference_distribution;
  // F evaluated on the mean D_G and mean UG.
  std::optional<double> f_measure_of_means;
};

GainReport aggregate_report(std::string baseline, const FairnessConfig& fairness,
                            std::vector<RunGains> runs);

nlohmann::ordered_json report_to_json(const GainReport& report);
GainReport report_from_json(const nlohmann::json& doc);

}  // namespace fairsel
