#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairsel/records.hpp"

namespace fairsel {

inline constexpr std::string_view kPapersHeader = "paper_id,title,conference,label";
inline constexpr std::string_view kAuthorsHeader =
    "paper_id,author_id,gender,race,country_class,career_stage,h_index";

// Reads papers.csv and authors.csv, validates every row, joins authors to
// papers in file order and computes paper_h_index. Errors name the file, the
// line and, for enum fields, the column.
Dataset load_csv(const std::filesystem::path& papers_path,
                 const std::filesystem::path& authors_path);

// Writes the two CSV files with canonical enum spelling. paper_h_index is not
// stored; load_csv recomputes it.
void write_csv(const Dataset& dataset, const std::filesystem::path& papers_path,
               const std::filesystem::path& authors_path);

// Throws ValidationError on empty author lists, bad labels, negative
// h-indices or duplicate paper ids.
void validate(const Dataset& dataset);

struct ColumnRange {
  double min = 0.0;
  double max = 1.0;
  bool operator==(const ColumnRange&) const = default;
};

struct FeatureMatrix {
  std::vector<std::string> paper_ids;
  std::vector<std::string> column_names;
  Eigen::MatrixXd features;  // rows x columns, every entry in [0, 1] at fit time
  Eigen::VectorXd labels;
  std::vector<bool> race_mask;
  std::vector<bool> country_mask;
  std::vector<ColumnRange> normalization;  // one per column
  std::vector<std::string> warnings;

  std::size_t rows() const { return paper_ids.size(); }
  std::size_t cols() const { return column_names.size(); }
  const std::vector<bool>& mask(ProtectedAttr attr) const {
    return attr == ProtectedAttr::kRace ? race_mask : country_mask;
  }
  FeatureMatrix subset(std::span<const std::size_t> rows) const;
};

// Encodes papers as: female-author share, five career-stage shares,
// conference one-hot and min-max normalized paper_h_index. Race shares and the
// underdeveloped-country share are emitted only for attributes NOT in
// `protected_attrs`; protected attributes appear solely as the group masks.
// A constant column normalizes to 0.0 and records a warning.
FeatureMatrix preprocess(const Dataset& dataset, const std::set<ProtectedAttr>& protected_attrs);

// Same encoding, reusing previously fitted column ranges.
FeatureMatrix transform(const Dataset& dataset, const std::set<ProtectedAttr>& protected_attrs,
                        const std::vector<ColumnRange>& normalization);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Stratifies on (label, race_mask, country_mask); members of cells with fewer
// than two rows are pooled by label alone. The training share is allocated by
// largest remainder so the training size is round(ratio * rows) exactly.
SplitIndices stratified_split_indices(const FeatureMatrix& fm, double ratio, std::uint64_t seed);

std::pair<FeatureMatrix, FeatureMatrix> stratified_split(const FeatureMatrix& fm, double ratio,
                                                         std::uint64_t seed);

struct ConferenceTarget {
  Conference conference = Conference::kSIGCHI;
  int n_papers = 0;
  double gender_pct = 0.0;   // female share of author slots
  double race_pct = 0.0;     // share of papers with a race-protected author
  double country_pct = 0.0;  // share of papers with an underdeveloped-country author
};

struct StageProfile {
  double share = 0.2;      // probability an author slot has this stage
  double h_median = 5.0;   // log-normal h-index median
  double h_sigma = 0.5;    // log-normal shape
};

struct SyntheticSpec {
  int n_papers = 530;
  int n_accepted = 351;
  std::vector<ConferenceTarget> conferences = {
      {Conference::kSIGCHI, 234, 41.88, 6.84, 21.94},
      {Conference::kDIS, 140, 65.79, 35.09, 24.56},
      {Conference::kIUI, 156, 43.75, 51.56, 39.06},
  };
  double bias_strength = 2.0;
  double quality_slope = 8.0;
  // Probability that a non-anchor co-author on a protected paper is also in
  // the protected group.
  double coauthor_homophily = 0.3;
  // Added to the log h-index of authors in a protected group (race or
  // country), modelling a citation gap between groups.
  double protected_h_log_shift = -0.4;
  int min_authors = 1;
  int max_authors = 5;
  std::array<StageProfile, 5> stages = {{
      {0.15, 25.0, 0.4},
      {0.15, 15.0, 0.4},
      {0.10, 9.0, 0.5},
      {0.15, 6.0, 0.5},
      {0.45, 2.0, 0.6},
  }};

  // Throws ValidationError describing the first violated constraint.
  void validate() const;
};

// Draws a dataset whose per-conference protected shares match the targets up
// to rounding: the number of protected papers (race, country) and female
// author slots in each conference is fixed at round(pct * count / 100), and
// the members are chosen at random. Labels: the n_accepted papers with the
// highest latent score
//   quality_slope * normalized_h - bias_strength * (race_flag + country_flag)
//     + logistic noise
// are accepted, i.e. a logistic acceptance model conditioned on the quota.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace fairsel
