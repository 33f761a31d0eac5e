#include "fairsel/losses.hpp"

#include <cmath>
#include <string>

#include "fairsel/errors.hpp"

namespace fairsel {
namespace {

using Eigen::Index;
using Eigen::VectorXd;

void check_lengths(const VectorXd& probs, const std::vector<bool>& mask, const char* what) {
  if (static_cast<std::size_t>(probs.size()) != mask.size()) {
    throw ValidationError(std::string(what) + ": mask length does not match predictions");
  }
}

struct GroupMean {
  double mean = 0.0;
  std::size_t count = 0;
};

GroupMean group_mean(const VectorXd& probs, const std::vector<bool>& mask, bool member) {
  GroupMean g;
  double sum = 0.0;
  for (Index i = 0; i < probs.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)] == member) {
      sum += probs(i);
      ++g.count;
    }
  }
  if (g.count > 0) g.mean = sum / static_cast<double>(g.count);
  return g;
}

bool has_member(const std::vector<bool>& mask, bool member) {
  for (bool b : mask) {
    if (b == member) return true;
  }
  return false;
}

// Adds weight * (group mean - global mean)^2 and its gradient.
double add_global_term(const VectorXd& probs, const std::vector<bool>& mask, double weight,
                       VectorXd& grad, const char* name) {
  const auto group = group_mean(probs, mask, true);
  if (group.count == 0) throw DegenerateBatchError(std::string(name) + " group is empty");
  const double n = static_cast<double>(probs.size());
  const double gap = group.mean - probs.mean();
  const double scale = 2.0 * weight * gap;
  for (Index i = 0; i < probs.size(); ++i) {
    const double in_group = mask[static_cast<std::size_t>(i)] ? 1.0 / static_cast<double>(group.count) : 0.0;
    grad(i) += scale * (in_group - 1.0 / n);
  }
  return weight * gap * gap;
}

}  // namespace

std::string_view to_string(FairnessMode m) {
  switch (m) {
    case FairnessMode::kRaceOnly: return "race_only";
    case FairnessMode::kCountryOnly: return "country_only";
    case FairnessMode::kCombined: return "combined";
  }
  return "?";
}

FairnessMode parse_fairness_mode(std::string_view s) {
  for (auto m : {FairnessMode::kRaceOnly, FairnessMode::kCountryOnly, FairnessMode::kCombined}) {
    if (s == to_string(m)) return m;
  }
  throw ValidationError("unknown fairness mode '" + std::string(s) +
                        "' (expected race_only, country_only or combined)");
}

void FairnessConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
  if (!(w_race >= 0.0) || !(w_country >= 0.0)) throw ValidationError("fairness weights must be >= 0");
  if (mode == FairnessMode::kCombined && w_race == 0.0 && w_country == 0.0) {
    throw ValidationError("combined fairness mode needs a positive race or country weight");
  }
}

LossValue bce_loss(const VectorXd& probs, const VectorXd& labels) {
  if (probs.size() != labels.size()) throw ValidationError("bce_loss: length mismatch");
  if (probs.size() == 0) throw ValidationError("bce_loss: empty input");
  const double n = static_cast<double>(probs.size());
  LossValue out;
  out.grad.resize(probs.size());
  double sum = 0.0;
  for (Index i = 0; i < probs.size(); ++i) {
    const double p = probs(i);
    const double y = labels(i);
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("bce_loss: probabilities must lie in (0, 1)");
    sum -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
    out.grad(i) = (p - y) / (p * (1.0 - p) * n);
  }
  out.value = sum / n;
  return out;
}

LossValue parity_loss_pairwise(const VectorXd& probs, const std::vector<bool>& protected_mask) {
  check_lengths(probs, protected_mask, "parity_loss_pairwise");
  const auto prot = group_mean(probs, protected_mask, true);
  const auto rest = group_mean(probs, protected_mask, false);
  if (prot.count == 0 || rest.count == 0) {
    throw DegenerateBatchError(prot.count == 0 ? "protected group is empty"
                                               : "non-protected group is empty");
  }
  const double gap = prot.mean - rest.mean;
  LossValue out;
  out.value = gap * gap;
  out.grad.resize(probs.size());
  for (Index i = 0; i < probs.size(); ++i) {
    out.grad(i) = protected_mask[static_cast<std::size_t>(i)]
                      ? 2.0 * gap / static_cast<double>(prot.count)
                      : -2.0 * gap / static_cast<double>(rest.count);
  }
  return out;
}

LossValue parity_loss_combined(const VectorXd& probs, const std::vector<bool>& race_mask,
                               const std::vector<bool>& country_mask, double w_race,
                               double w_country) {
  check_lengths(probs, race_mask, "parity_loss_combined");
  check_lengths(probs, country_mask, "parity_loss_combined");
  if (probs.size() == 0) throw DegenerateBatchError("empty batch");
  LossValue out;
  out.grad = VectorXd::Zero(probs.size());
  if (w_race != 0.0) out.value += add_global_term(probs, race_mask, w_race, out.grad, "race");
  if (w_country != 0.0) out.value += add_global_term(probs, country_mask, w_country, out.grad, "country");
  return out;
}

CombinedTerms parity_terms_combined(const VectorXd& probs, const std::vector<bool>& race_mask,
                                    const std::vector<bool>& country_mask, double w_race,
                                    double w_country) {
  CombinedTerms t;
  VectorXd scratch = VectorXd::Zero(probs.size());
  check_lengths(probs, race_mask, "parity_terms_combined");
  check_lengths(probs, country_mask, "parity_terms_combined");
  if (w_race != 0.0) t.race = add_global_term(probs, race_mask, w_race, scratch, "race");
  if (w_country != 0.0) t.country = add_global_term(probs, country_mask, w_country, scratch, "country");
  return t;
}

LossValue fairness_loss(const VectorXd& probs, const std::vector<bool>& race_mask,
                        const std::vector<bool>& country_mask, const FairnessConfig& config) {
  switch (config.mode) {
    case FairnessMode::kRaceOnly: return parity_loss_pairwise(probs, race_mask);
    case FairnessMode::kCountryOnly: return parity_loss_pairwise(probs, country_mask);
    case FairnessMode::kCombined:
      return parity_loss_combined(probs, race_mask, country_mask, config.w_race, config.w_country);
  }
  throw ValidationError("unknown fairness mode");
}

bool fairness_defined(const std::vector<bool>& race_mask, const std::vector<bool>& country_mask,
                      const FairnessConfig& config) {
  switch (config.mode) {
    case FairnessMode::kRaceOnly: return has_member(race_mask, true) && has_member(race_mask, false);
    case FairnessMode::kCountryOnly:
      return has_member(country_mask, true) && has_member(country_mask, false);
    case FairnessMode::kCombined:
      return (config.w_race == 0.0 || has_member(race_mask, true)) &&
             (config.w_country == 0.0 || has_member(country_mask, true));
  }
  return false;
}

LossValue total_loss(const LossValue& pred, const LossValue& fair, double lambda) {
  if (lambda < 0.0) throw ValidationError("total_loss: lambda must be >= 0");
  if (pred.grad.size() != fair.grad.size()) throw ValidationError("total_loss: gradient length mismatch");
  LossValue out;
  out.value = pred.value + lambda * fair.value;
  out.grad = pred.grad + lambda * fair.grad;
  return out;
}

}  // namespace fairsel
