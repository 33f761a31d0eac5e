#include "fairsel/metrics.hpp"

#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "fairsel/errors.hpp"

namespace fairsel {
namespace {

double relative_change(double selected, double baseline, const char* what) {
  if (baseline == 0.0) throw UndefinedGainError(std::string(what) + " baseline is zero");
  return 100.0 * (selected - baseline) / baseline;
}

void require_non_empty(std::span<const PaperRecord> papers, const char* what) {
  if (papers.empty()) throw ValidationError(std::string(what) + ": empty selection");
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

nlohmann::ordered_json summary_json(const Summary& s) {
  return {{"mean", optional_json(s.mean)}, {"std", optional_json(s.std)}, {"n", s.n}};
}

template <typename F>
std::optional<double> try_gain(F&& f) {
  try {
    return f();
  } catch (const UndefinedGainError&) {
    return std::nullopt;
  }
}

}  // namespace

double protected_paper_share(std::span<const PaperRecord> papers, ProtectedAttr attr) {
  require_non_empty(papers, "protected_paper_share");
  std::size_t count = 0;
  for (const auto& p : papers) count += p.is_protected(attr) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(papers.size());
}

double protected_author_share(std::span<const PaperRecord> papers, ProtectedAttr attr) {
  require_non_empty(papers, "protected_author_share");
  std::size_t count = 0;
  std::size_t total = 0;
  for (const auto& p : papers) {
    for (const auto& a : p.authors) {
      count += a.is_protected(attr) ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw ValidationError("protected_author_share: selection has no authors");
  return static_cast<double>(count) / static_cast<double>(total);
}

double macro_gain(std::span<const PaperRecord> selected, std::span<const PaperRecord> baseline,
                  ProtectedAttr attr) {
  return relative_change(protected_paper_share(selected, attr), protected_paper_share(baseline, attr),
                         "protected paper share");
}

double micro_gain(std::span<const PaperRecord> selected, std::span<const PaperRecord> baseline,
                  ProtectedAttr attr) {
  return relative_change(protected_author_share(selected, attr),
                         protected_author_share(baseline, attr), "protected author share");
}

double diversity_gain(std::span<const double> macro_gains) {
  if (macro_gains.empty()) throw ValidationError("diversity_gain: no attributes");
  double sum = 0.0;
  for (double g : macro_gains) sum += std::min(100.0, g);
  return sum / static_cast<double>(macro_gains.size());
}

double utility(std::span<const PaperRecord> selection, const CareerWeights& weights) {
  require_non_empty(selection, "utility");
  double sum = 0.0;
  for (const auto& p : selection) sum += aggregate_paper_h_index(p, weights);
  return sum / static_cast<double>(selection.size());
}

double utility_gain(std::span<const PaperRecord> selected, std::span<const PaperRecord> baseline,
                    const CareerWeights& weights) {
  return relative_change(utility(selected, weights), utility(baseline, weights), "utility");
}

double harmonic(double x, double y) {
  if (x + y == 0.0) throw ValidationError("harmonic mean: zero denominator");
  return 2.0 * x * y / (x + y);
}

double f_measure(double diversity_gain_pct, double utility_gain_pct) {
  const double quality = 100.0 - utility_gain_pct;
  if (diversity_gain_pct + quality == 0.0) throw ValidationError("f_measure: zero denominator");
  return 2.0 * diversity_gain_pct * quality / (diversity_gain_pct + quality);
}

std::array<double, 3> conference_distribution(std::span<const PaperRecord> selected) {
  require_non_empty(selected, "conference_distribution");
  std::array<double, 3> counts{};
  for (const auto& p : selected) counts[index_of(p.conference)] += 1.0;
  for (double& c : counts) c = 100.0 * c / static_cast<double>(selected.size());
  return counts;
}

double statistical_parity_difference(std::span<const PaperRecord> selected,
                                     std::span<const PaperRecord> all_papers, ProtectedAttr attr) {
  std::unordered_set<std::string> chosen;
  for (const auto& p : selected) chosen.insert(p.paper_id);
  std::array<std::size_t, 2> pool{}, picked{};  // [non-protected, protected]
  for (const auto& p : all_papers) {
    const std::size_t g = p.is_protected(attr) ? 1 : 0;
    ++pool[g];
    picked[g] += chosen.contains(p.paper_id) ? 1 : 0;
  }
  if (pool[0] == 0 || pool[1] == 0) {
    throw ValidationError("statistical_parity_difference: " + std::string(to_string(attr)) +
                          " group empty in the candidate pool");
  }
  return static_cast<double>(picked[1]) / static_cast<double>(pool[1]) -
         static_cast<double>(picked[0]) / static_cast<double>(pool[0]);
}

std::vector<PaperRecord> gather(const Dataset& dataset, std::span<const std::string> ids) {
  std::unordered_map<std::string, const PaperRecord*> index;
  for (const auto& p : dataset.papers) index.emplace(p.paper_id, &p);
  std::vector<PaperRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("unknown paper id: " + id);
    out.push_back(*it->second);
  }
  return out;
}

std::vector<ProtectedAttr> evaluated_attributes(FairnessMode mode) {
  switch (mode) {
    case FairnessMode::kRaceOnly: return {ProtectedAttr::kRace};
    case FairnessMode::kCountryOnly: return {ProtectedAttr::kCountry};
    case FairnessMode::kCombined: return {ProtectedAttr::kRace, ProtectedAttr::kCountry};
  }
  return {};
}

RunGains compute_gains(std::span<const PaperRecord> selected, std::span<const PaperRecord> baseline,
                       const CareerWeights& weights, FairnessMode mode) {
  RunGains g;
  for (ProtectedAttr attr : kProtectedAttrs) {
    const auto a = static_cast<std::size_t>(attr);
    g.macro[a] = try_gain([&] { return macro_gain(selected, baseline, attr); });
    g.micro[a] = try_gain([&] { return micro_gain(selected, baseline, attr); });
  }
  std::vector<double> macros;
  bool all_defined = true;
  for (ProtectedAttr attr : evaluated_attributes(mode)) {
    const auto& m = g.macro[static_cast<std::size_t>(attr)];
    if (m) {
      macros.push_back(*m);
    } else {
      all_defined = false;
    }
  }
  if (all_defined) g.diversity_gain = diversity_gain(macros);
  g.utility_gain = try_gain([&] { return utility_gain(selected, baseline, weights); });
  if (g.diversity_gain && g.utility_gain && *g.diversity_gain + (100.0 - *g.utility_gain) != 0.0) {
    g.f_measure = f_measure(*g.diversity_gain, *g.utility_gain);
  }
  g.conference_distribution = conference_distribution(selected);
  g.n_selected = selected.size();
  return g;
}

Summary summarize(std::span<const std::optional<double>> values) {
  Summary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++s.n;
    }
  }
  if (s.n == 0) return s;
  const double mean = sum / s.n;
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - mean) * (*v - mean);
  }
  s.mean = mean;
  s.std = s.n > 1 ? std::sqrt(ss / (s.n - 1)) : 0.0;
  return s;
}

GainReport aggregate_report(std::string baseline, const FairnessConfig& fairness,
                            std::vector<RunGains> runs) {
  GainReport r;
  r.baseline = std::move(baseline);
  r.fairness = fairness;
  r.runs = std::move(runs);
  if (!r.runs.empty()) r.n_selected = r.runs.front().n_selected;
  auto column = [&](auto getter) {
    std::vector<std::optional<double>> values;
    for (const auto& run : r.runs) values.push_back(getter(run));
    return summarize(values);
  };
  for (std::size_t a = 0; a < 2; ++a) {
    r.macro[a] = column([a](const RunGains& g) { return g.macro[a]; });
    r.micro[a] = column([a](const RunGains& g) { return g.micro[a]; });
  }
  r.diversity_gain = column([](const RunGains& g) { return g.diversity_gain; });
  r.utility_gain = column([](const RunGains& g) { return g.utility_gain; });
  r.f_measure = column([](const RunGains& g) { return g.f_measure; });
  for (std::size_t c = 0; c < 3; ++c) {
    r.conference_distribution[c] =
        column([c](const RunGains& g) { return std::optional<double>(g.conference_distribution[c]); });
  }
  if (r.diversity_gain.mean && r.utility_gain.mean &&
      *r.diversity_gain.mean + (100.0 - *r.utility_gain.mean) != 0.0) {
    r.f_measure_of_means = f_measure(*r.diversity_gain.mean, *r.utility_gain.mean);
  }
  return r;
}

nlohmann::ordered_json report_to_json(const GainReport& report) {
  nlohmann::ordered_json doc;
  doc["baseline"] = report.baseline;
  doc["fairness"] = {{"mode", to_string(report.fairness.mode)},
                     {"lambda", report.fairness.lambda},
                     {"w_race", report.fairness.w_race},
                     {"w_country", report.fairness.w_country}};
  doc["n_selected"] = report.n_selected;
  doc["n_runs"] = report.runs.size();
  nlohmann::ordered_json summary;
  for (ProtectedAttr attr : kProtectedAttrs) {
    const auto a = static_cast<std::size_t>(attr);
    summary[std::string(to_string(attr))] = {{"macro_gain_pct", summary_json(report.macro[a])},
                                             {"micro_gain_pct", summary_json(report.micro[a])}};
  }
  summary["diversity_gain_pct"] = summary_json(report.diversity_gain);
  summary["utility_gain_pct"] = summary_json(report.utility_gain);
  summary["f_measure_pct"] = summary_json(report.f_measure);
  summary["f_measure_of_means_pct"] = optional_json(report.f_measure_of_means);
  nlohmann::ordered_json conf;
  for (Conference c : kConferences) {
    conf[std::string(to_string(c))] = summary_json(report.conference_distribution[index_of(c)]);
  }
  summary["conference_distribution_pct"] = conf;
  doc["summary"] = summary;

  auto& runs = doc["runs"] = nlohmann::ordered_json::array();
  for (const auto& g : report.runs) {
    nlohmann::ordered_json run;
    for (ProtectedAttr attr : kProtectedAttrs) {
      const auto a = static_cast<std::size_t>(attr);
      run[std::string(to_string(attr))] = {{"macro_gain_pct", optional_json(g.macro[a])},
                                           {"micro_gain_pct", optional_json(g.micro[a])}};
    }
    run["diversity_gain_pct"] = optional_json(g.diversity_gain);
    run["utility_gain_pct"] = optional_json(g.utility_gain);
    run["f_measure_pct"] = optional_json(g.f_measure);
    nlohmann::ordered_json dist;
    for (Conference c : kConferences) dist[std::string(to_string(c))] = g.conference_distribution[index_of(c)];
    run["conference_distribution_pct"] = dist;
    run["n_selected"] = g.n_selected;
    runs.push_back(run);
  }
  return doc;
}

GainReport report_from_json(const nlohmann::json& doc) {
  try {
    FairnessConfig fairness;
    const auto& f = doc.at("fairness");
    fairness.mode = parse_fairness_mode(f.at("mode").get<std::string>());
    fairness.lambda = f.at("lambda").get<double>();
    fairness.w_race = f.at("w_race").get<double>();
    fairness.w_country = f.at("w_country").get<double>();
    std::vector<RunGains> runs;
    for (const auto& run : doc.at("runs")) {
      RunGains g;
      for (ProtectedAttr attr : kProtectedAttrs) {
        const auto a = static_cast<std::size_t>(attr);
        const auto& block = run.at(std::string(to_string(attr)));
        g.macro[a] = optional_from(block.at("macro_gain_pct"));
        g.micro[a] = optional_from(block.at("micro_gain_pct"));
      }
      g.diversity_gain = optional_from(run.at("diversity_gain_pct"));
      g.utility_gain = optional_from(run.at("utility_gain_pct"));
      g.f_measure = optional_from(run.at("f_measure_pct"));
      for (Conference c : kConferences) {
        g.conference_distribution[index_of(c)] =
            run.at("conference_distribution_pct").at(std::string(to_string(c))).get<double>();
      }
      g.n_selected = run.at("n_selected").get<std::size_t>();
      runs.push_back(g);
    }
    return aggregate_report(doc.at("baseline").get<std::string>(), fairness, std::move(runs));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("gain report: ") + e.what());
  }
}

}  // namespace fairsel
