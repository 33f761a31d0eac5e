#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fairsel/dataset.hpp"
#include "fairsel/errors.hpp"
#include "fairsel/random.hpp"

namespace fairsel {
namespace {

std::string padded(const char* prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, value);
  return buf;
}

// Exactly round(pct * n / 100) of n slots set, chosen uniformly.
std::vector<bool> exact_membership(std::size_t n, double pct, Rng& rng) {
  const auto k = static_cast<std::size_t>(std::llround(pct * static_cast<double>(n) / 100.0));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<bool> member(n, false);
  for (std::size_t i = 0; i < std::min(k, n); ++i) member[order[i]] = true;
  return member;
}

CareerStage draw_stage(const SyntheticSpec& spec, double total_share, Rng& rng) {
  double u = rng.uniform01() * total_share;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    u -= spec.stages[i].share;
    if (u < 0.0) return kCareerStages[i];
  }
  // Rounding can leave u marginally non-negative; fall to the last stage with mass.
  for (std::size_t i = spec.stages.size(); i-- > 0;) {
    if (spec.stages[i].share > 0.0) return kCareerStages[i];
  }
  return CareerStage::kGradStudent;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_papers <= 0) throw ValidationError("synthetic spec: n_papers must be positive");
  if (conferences.empty()) throw ValidationError("synthetic spec: no conferences");
  long total = 0;
  std::array<bool, 3> seen{};
  for (const auto& c : conferences) {
    const auto name = std::string(to_string(c.conference));
    if (seen[index_of(c.conference)]) {
      throw ValidationError("synthetic spec: conference " + name + " listed twice");
    }
    seen[index_of(c.conference)] = true;
    if (c.n_papers < 0) throw ValidationError("synthetic spec: " + name + " n_papers is negative");
    for (auto [label, pct] : {std::pair{"gender_pct", c.gender_pct}, std::pair{"race_pct", c.race_pct},
                              std::pair{"country_pct", c.country_pct}}) {
      if (!(pct >= 0.0 && pct <= 100.0)) {
        throw ValidationError("synthetic spec: " + name + " " + label +
                              " must lie in [0, 100] percent");
      }
    }
    total += c.n_papers;
  }
  if (total != n_papers) {
    throw ValidationError("synthetic spec: per-conference counts sum to " + std::to_string(total) +
                          ", expected n_papers = " + std::to_string(n_papers));
  }
  if (n_accepted < 0 || n_accepted > n_papers) {
    throw ValidationError("synthetic spec: n_accepted must lie in [0, n_papers]");
  }
  if (!(bias_strength >= 0.0) || !std::isfinite(bias_strength)) {
    throw ValidationError("synthetic spec: bias_strength must be finite and >= 0");
  }
  if (!std::isfinite(quality_slope)) throw ValidationError("synthetic spec: quality_slope must be finite");
  if (!(coauthor_homophily >= 0.0 && coauthor_homophily <= 1.0)) {
    throw ValidationError("synthetic spec: coauthor_homophily must lie in [0, 1]");
  }
  if (!std::isfinite(protected_h_log_shift)) {
    throw ValidationError("synthetic spec: protected_h_log_shift must be finite");
  }
  if (min_authors < 1 || max_authors < min_authors) {
    throw ValidationError("synthetic spec: need 1 <= min_authors <= max_authors");
  }
  double share_total = 0.0;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto name = std::string(to_string(kCareerStages[i]));
    if (!(stages[i].share >= 0.0)) throw ValidationError("synthetic spec: " + name + " share < 0");
    if (!(stages[i].h_median > 0.0)) throw ValidationError("synthetic spec: " + name + " h_median <= 0");
    if (!(stages[i].h_sigma >= 0.0)) throw ValidationError("synthetic spec: " + name + " h_sigma < 0");
    share_total += stages[i].share;
  }
  if (!(share_total > 0.0)) throw ValidationError("synthetic spec: career-stage shares sum to 0");
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  double share_total = 0.0;
  for (const auto& s : spec.stages) share_total += s.share;

  Dataset dataset;
  dataset.provenance = Provenance::kSynthetic;
  dataset.seed = seed;
  std::size_t author_serial = 0;

  for (const auto& target : spec.conferences) {
    const auto n = static_cast<std::size_t>(target.n_papers);
    const auto race_flags = exact_membership(n, target.race_pct, rng);
    const auto country_flags = exact_membership(n, target.country_pct, rng);
    const std::size_t first = dataset.papers.size();

    for (std::size_t i = 0; i < n; ++i) {
      PaperRecord p;
      p.paper_id = padded("P", dataset.papers.size() + 1, 4);
      p.title = "Synthetic submission " + p.paper_id.substr(1);
      p.conference = target.conference;
      const auto k = static_cast<std::size_t>(
          spec.min_authors +
          static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.max_authors - spec.min_authors + 1))));
      const std::size_t race_anchor = race_flags[i] ? rng.uniform_index(k) : k;
      const std::size_t country_anchor = country_flags[i] ? rng.uniform_index(k) : k;
      for (std::size_t j = 0; j < k; ++j) {
        AuthorRecord a;
        a.author_id = padded("A", ++author_serial, 5);
        const bool race_protected =
            j == race_anchor || (race_flags[i] && rng.uniform01() < spec.coauthor_homophily);
        const bool coin = rng.uniform01() < 0.5;
        a.race = race_protected ? (coin ? Race::kHispanic : Race::kBlack)
                                : (coin ? Race::kWhite : Race::kAsian);
        const bool country_protected =
            j == country_anchor || (country_flags[i] && rng.uniform01() < spec.coauthor_homophily);
        a.country_class = country_protected ? CountryClass::kUnderdeveloped : CountryClass::kDeveloped;
        a.career_stage = draw_stage(spec, share_total, rng);
        const auto& profile = spec.stages[index_of(a.career_stage)];
        const double shift = race_protected || country_protected ? spec.protected_h_log_shift : 0.0;
        const double h = std::exp(std::log(profile.h_median) + shift + profile.h_sigma * rng.normal());
        a.h_index = static_cast<int>(std::lround(std::max(0.0, h)));
        p.authors.push_back(std::move(a));
      }
      dataset.papers.push_back(std::move(p));
    }

    // Gender is calibrated over author slots of the conference.
    std::size_t slots = 0;
    for (std::size_t i = first; i < dataset.papers.size(); ++i) slots += dataset.papers[i].authors.size();
    const auto female = exact_membership(slots, target.gender_pct, rng);
    std::size_t s = 0;
    for (std::size_t i = first; i < dataset.papers.size(); ++i) {
      for (auto& a : dataset.papers[i].authors) a.gender = female[s++] ? Gender::kFemale : Gender::kMale;
    }
  }

  assign_paper_h_index(dataset);

  double h_min = dataset.papers.front().paper_h_index;
  double h_max = h_min;
  for (const auto& p : dataset.papers) {
    h_min = std::min(h_min, p.paper_h_index);
    h_max = std::max(h_max, p.paper_h_index);
  }
  const double h_span = h_max - h_min;
  std::vector<double> latent(dataset.papers.size());
  for (std::size_t i = 0; i < dataset.papers.size(); ++i) {
    const auto& p = dataset.papers[i];
    const double quality = h_span > 0.0 ? (p.paper_h_index - h_min) / h_span : 0.0;
    const double penalty = (p.is_protected(ProtectedAttr::kRace) ? 1.0 : 0.0) +
                           (p.is_protected(ProtectedAttr::kCountry) ? 1.0 : 0.0);
    latent[i] = spec.quality_slope * quality - spec.bias_strength * penalty + rng.logistic();
  }
  std::vector<std::size_t> order(latent.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return latent[a] > latent[b]; });
  for (std::size_t r = 0; r < order.size(); ++r) {
    dataset.papers[order[r]].label = static_cast<int>(r) < spec.n_accepted ? 1 : 0;
  }
  return dataset;
}

}  // namespace fairsel
