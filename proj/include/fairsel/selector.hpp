#pragma once

#include <map>
#include <string>
#include <vector>

#include "fairsel/dataset.hpp"
#include "fairsel/neural_net.hpp"
#include "json.hpp"

namespace fairsel {

using ScoreMap = std::map<std::string, double>;

struct TieBreak {
  double score = 0.0;
  std::vector<std::string> tied;      // every id at the threshold score, ascending
  std::vector<std::string> admitted;  // the prefix of `tied` that was selected
};

struct SelectionResult {
  ScoreMap scores;
  std::vector<std::string> ranking;   // descending score, ascending id on ties
  std::vector<std::string> selected;  // first N_a of ranking
  double threshold_score = 0.0;       // N_a-th highest score
  std::vector<TieBreak> tie_breaks;

  bool is_selected(const std::string& paper_id) const;
};

// Eval-mode probabilities for every row of `fm`.
ScoreMap score_all(const ModelParams& model, const FeatureMatrix& fm);

// Top-N_a selection. Ties at the threshold are resolved by ascending paper_id.
SelectionResult select_top(const ScoreMap& scores, std::size_t n_accepted);

// Report-only demographic parity check of a slate against the candidate pool.
struct ParityAudit {
  double race_spd = 0.0;
  double country_spd = 0.0;
  bool race_defined = false;
  bool country_defined = false;
};
ParityAudit audit_parity(const SelectionResult& selection, const Dataset& dataset);

nlohmann::json selection_to_json(const SelectionResult& selection, const ParityAudit* audit);

}  // namespace fairsel
