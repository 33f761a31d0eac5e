#include "fairsel/selector.hpp"

#include <algorithm>
#include <cmath>

#include "fairsel/errors.hpp"
#include "fairsel/metrics.hpp"

namespace fairsel {

bool SelectionResult::is_selected(const std::string& paper_id) const {
  return std::find(selected.begin(), selected.end(), paper_id) != selected.end();
}

ScoreMap score_all(const ModelParams& model, const FeatureMatrix& fm) {
  if (static_cast<int>(fm.cols()) != model.input_dim()) {
    throw ValidationError("score_all: feature schema has " + std::to_string(fm.cols()) +
                          " columns, model expects " + std::to_string(model.input_dim()));
  }
  const auto cache = forward_eval(model, fm.features);
  ScoreMap scores;
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    scores.emplace(fm.paper_ids[i], cache.probs(static_cast<Eigen::Index>(i)));
  }
  return scores;
}

SelectionResult select_top(const ScoreMap& scores, std::size_t n_accepted) {
  if (n_accepted == 0) throw ValidationError("select_top: N_a must be positive");
  if (n_accepted > scores.size()) {
    throw ValidationError("select_top: N_a = " + std::to_string(n_accepted) + " exceeds the " +
                          std::to_string(scores.size()) + " candidates");
  }
  SelectionResult result;
  result.scores = scores;
  std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
  for (const auto& [id, s] : ranked) {
    if (!std::isfinite(s)) throw NumericError("select_top: non-finite score for " + id);
  }
  // Map iteration is already ascending by id, so a stable sort on score alone
  // yields the id tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [id, s] : ranked) result.ranking.push_back(id);
  result.selected.assign(result.ranking.begin(),
                         result.ranking.begin() + static_cast<long>(n_accepted));
  result.threshold_score = ranked[n_accepted - 1].second;

  if (n_accepted < ranked.size() && ranked[n_accepted].second == result.threshold_score) {
    TieBreak tie;
    tie.score = result.threshold_score;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (ranked[i].second == tie.score) {
        tie.tied.push_back(ranked[i].first);
        if (i < n_accepted) tie.admitted.push_back(ranked[i].first);
      }
    }
    result.tie_breaks.push_back(std::move(tie));
  }
  return result;
}

ParityAudit audit_parity(const SelectionResult& selection, const Dataset& dataset) {
  ParityAudit audit;
  const auto chosen = gather(dataset, selection.selected);
  for (ProtectedAttr attr : kProtectedAttrs) {
    try {
      const double spd = statistical_parity_difference(chosen, dataset.papers, attr);
      (attr == ProtectedAttr::kRace ? audit.race_spd : audit.country_spd) = spd;
      (attr == ProtectedAttr::kRace ? audit.race_defined : audit.country_defined) = true;
    } catch (const ValidationError&) {
      // A group absent from the pool leaves the audit undefined for that attribute.
    }
  }
  return audit;
}

nlohmann::json selection_to_json(const SelectionResult& selection, const ParityAudit* audit) {
  nlohmann::json doc;
  doc["n_selected"] = selection.selected.size();
  doc["threshold_score"] = selection.threshold_score;
  auto& ranking = doc["ranking"] = nlohmann::json::array();
  for (std::size_t i = 0; i < selection.ranking.size(); ++i) {
    const auto& id = selection.ranking[i];
    ranking.push_back({{"rank", i + 1},
                       {"paper_id", id},
                       {"score", selection.scores.at(id)},
                       {"selected", i < selection.selected.size()}});
  }
  auto& ties = doc["tie_breaks"] = nlohmann::json::array();
  for (const auto& t : selection.tie_breaks) {
    ties.push_back({{"score", t.score}, {"tied", t.tied}, {"admitted", t.admitted}});
  }
  if (audit != nullptr) {
    auto value = [](bool defined, double v) { return defined ? nlohmann::json(v) : nlohmann::json(nullptr); };
    doc["parity_audit"] = {{"race_statistical_parity_difference", value(audit->race_defined, audit->race_spd)},
                           {"country_statistical_parity_difference",
                            value(audit->country_defined, audit->country_spd)}};
  }
  return doc;
}

}  // namespace fairsel
