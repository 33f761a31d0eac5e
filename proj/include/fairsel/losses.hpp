#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace fairsel {

enum class FairnessMode { kRaceOnly, kCountryOnly, kCombined };

std::string_view to_string(FairnessMode m);
FairnessMode parse_fairness_mode(std::string_view s);

inline constexpr double kDefaultRaceWeight = 0.32;
inline constexpr double kDefaultCountryWeight = 0.68;

struct FairnessConfig {
  double lambda = 0.0;
  double w_race = kDefaultRaceWeight;
  double w_country = kDefaultCountryWeight;
  FairnessMode mode = FairnessMode::kCombined;

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  Eigen::VectorXd grad;  // d value / d probs
};

// Mean binary cross-entropy.
LossValue bce_loss(const Eigen::VectorXd& probs, const Eigen::VectorXd& labels);

// (mean over protected - mean over non-protected)^2. Throws
// DegenerateBatchError when either side is empty.
LossValue parity_loss_pairwise(const Eigen::VectorXd& probs, const std::vector<bool>& protected_mask);

// w_race * (mean over race group - global mean)^2
//   + w_country * (mean over country group - global mean)^2.
// A term with zero weight is dropped before its group is inspected; otherwise
// an empty group throws DegenerateBatchError.
LossValue parity_loss_combined(const Eigen::VectorXd& probs, const std::vector<bool>& race_mask,
                               const std::vector<bool>& country_mask, double w_race,
                               double w_country);

// The two weighted terms of parity_loss_combined, reported separately for
// logging. Same preconditions.
struct CombinedTerms {
  double race = 0.0;
  double country = 0.0;
};
CombinedTerms parity_terms_combined(const Eigen::VectorXd& probs, const std::vector<bool>& race_mask,
                                    const std::vector<bool>& country_mask, double w_race,
                                    double w_country);

// Dispatch on config.mode: single-attribute modes use the pairwise loss,
// combined mode uses the weighted global-mean loss.
LossValue fairness_loss(const Eigen::VectorXd& probs, const std::vector<bool>& race_mask,
                        const std::vector<bool>& country_mask, const FairnessConfig& config);

// Whether fairness_loss is defined on these masks (no required group empty).
bool fairness_defined(const std::vector<bool>& race_mask, const std::vector<bool>& country_mask,
                      const FairnessConfig& config);

// pred + lambda * fair. Throws ValidationError when lambda < 0.
LossValue total_loss(const LossValue& pred, const LossValue& fair, double lambda);

}  // namespace fairsel
