#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fairsel/dataset.hpp"
#include "fairsel/losses.hpp"
#include "fairsel/neural_net.hpp"
#include "json.hpp"

namespace fairsel {

enum class DegenerateBatchPolicy { kSkipFairnessTerm, kMergeWithNext };

std::string_view to_string(DegenerateBatchPolicy p);
DegenerateBatchPolicy parse_degenerate_policy(std::string_view s);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 0.001;
  int patience = 10;
  // Validation loss must drop below best - min_delta to count as improvement.
  double min_delta = 1e-6;
  int hidden1 = 64;
  int hidden2 = 32;
  FairnessConfig fairness;
  std::uint64_t seed = 0;
  DegenerateBatchPolicy degenerate_batch_policy = DegenerateBatchPolicy::kSkipFairnessTerm;
  // Called after each epoch's updates and before validation.
  std::function<void(int epoch, ModelParams& model)> epoch_hook;

  void validate(std::size_t n_train) const;
};

struct BatchRecord {
  int epoch = 0;
  int batch = 0;
  int size = 0;
  double prediction_loss = 0.0;
  double fairness_loss = 0.0;
  // Weighted race and country parity terms (combined mode), or the single
  // pairwise term in the attribute's slot.
  double race_term = 0.0;
  double country_term = 0.0;
  double total_loss = 0.0;
  bool fairness_applied = false;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_prediction_loss = 0.0;
  double train_fairness_loss = 0.0;
  double train_total_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<BatchRecord> batches;
  int stopped_epoch = 0;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  std::int64_t optimizer_steps = 0;
};

struct TrainResult {
  ModelParams model;  // weights from best_epoch, eval mode
  OptimizerState optimizer;
  TrainHistory history;
  std::uint64_t seed = 0;
};

// Patience-based early stopping on a loss that should decrease.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  // Returns true if `loss` is a new best.
  bool observe(int epoch, double loss);
  bool should_stop() const { return stale_epochs_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  double min_delta_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  int stale_epochs_ = 0;
  bool has_best_ = false;
};

// Validation objective: BCE + lambda * fairness over the whole set in eval
// mode; the fairness term is dropped when a group is absent.
double validation_loss(const ModelParams& model, const FeatureMatrix& fm,
                       const FairnessConfig& fairness);

TrainResult train(const FeatureMatrix& train_fm, const FeatureMatrix& val_fm,
                  const TrainConfig& config);

// Run i uses seed config.seed + i. Runs execute on up to `jobs` threads;
// results are ordered by run index and identical for any job count.
std::vector<TrainResult> run_repeated(const FeatureMatrix& train_fm, const FeatureMatrix& val_fm,
                                      const TrainConfig& config, int n_runs, int jobs = 1);

nlohmann::json history_to_json(const TrainHistory& history);

}  // namespace fairsel
