#include "fairsel/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "fairsel/errors.hpp"
#include "fairsel/random.hpp"

namespace fairsel {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5u;

struct Batch {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<bool> race;
  std::vector<bool> country;
};

Batch gather_batch(const FeatureMatrix& fm, std::span<const std::size_t> rows) {
  Batch b;
  b.x.resize(static_cast<Eigen::Index>(rows.size()), fm.features.cols());
  b.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    b.x.row(static_cast<Eigen::Index>(k)) = fm.features.row(i);
    b.y(static_cast<Eigen::Index>(k)) = fm.labels(i);
    b.race.push_back(fm.race_mask[rows[k]]);
    b.country.push_back(fm.country_mask[rows[k]]);
  }
  return b;
}

}  // namespace

std::string_view to_string(DegenerateBatchPolicy p) {
  return p == DegenerateBatchPolicy::kSkipFairnessTerm ? "skip_fairness_term" : "merge_with_next";
}

DegenerateBatchPolicy parse_degenerate_policy(std::string_view s) {
  if (s == "skip_fairness_term") return DegenerateBatchPolicy::kSkipFairnessTerm;
  if (s == "merge_with_next") return DegenerateBatchPolicy::kMergeWithNext;
  throw ValidationError("unknown degenerate batch policy '" + std::string(s) + "'");
}

void TrainConfig::validate(std::size_t n_train) const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (patience < 1 || patience > epochs) throw ValidationError("patience must lie in [1, epochs]");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (!(min_delta >= 0.0)) throw ValidationError("min_delta must be >= 0");
  if (hidden1 < 1 || hidden2 < 1) throw ValidationError("hidden sizes must be >= 1");
  if (n_train == 0) throw ValidationError("empty training set");
  if (static_cast<std::size_t>(batch_size) > n_train) {
    throw ValidationError("batch_size " + std::to_string(batch_size) + " exceeds training-set size " +
                          std::to_string(n_train));
  }
  fairness.validate();
}

bool EarlyStopping::observe(int epoch, double loss) {
  if (!has_best_ || loss < best_loss_ - min_delta_) {
    has_best_ = true;
    best_loss_ = loss;
    best_epoch_ = epoch;
    stale_epochs_ = 0;
    return true;
  }
  ++stale_epochs_;
  return false;
}

double validation_loss(const ModelParams& model, const FeatureMatrix& fm,
                       const FairnessConfig& fairness) {
  const auto cache = forward_eval(model, fm.features);
  if (!cache.probs.allFinite()) throw NumericError("non-finite validation predictions");
  double loss = bce_loss(cache.probs, fm.labels).value;
  if (fairness.lambda > 0.0 && fairness_defined(fm.race_mask, fm.country_mask, fairness)) {
    loss += fairness.lambda * fairness_loss(cache.probs, fm.race_mask, fm.country_mask, fairness).value;
  }
  return loss;
}

TrainResult train(const FeatureMatrix& train_fm, const FeatureMatrix& val_fm,
                  const TrainConfig& config) {
  config.validate(train_fm.rows());
  if (train_fm.column_names != val_fm.column_names) {
    throw ValidationError("train and validation matrices have different columns");
  }
  if (val_fm.rows() == 0) throw ValidationError("empty validation set");

  const auto& fair_cfg = config.fairness;
  TrainResult result;
  result.seed = config.seed;
  ModelParams model = init_model(static_cast<int>(train_fm.cols()), config.hidden1, config.hidden2,
                                 config.seed);
  OptimizerState opt = OptimizerState::for_model(model, config.learning_rate);
  EarlyStopping stopping(config.patience, config.min_delta);
  ModelParams best = model;
  OptimizerState best_opt = opt;
  auto& history = result.history;

  const std::size_t n = train_fm.rows();
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng::derive(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)})
        .shuffle(std::span<std::size_t>(order));

    EpochRecord rec;
    rec.epoch = epoch;
    int executed = 0;
    std::vector<std::size_t> carry;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      std::vector<std::size_t> rows = std::move(carry);
      carry.clear();
      rows.insert(rows.end(), order.begin() + static_cast<long>(start),
                  order.begin() + static_cast<long>(stop));
      Batch batch = gather_batch(train_fm, rows);

      const bool wants_fairness = fair_cfg.lambda > 0.0;
      const bool defined = wants_fairness && fairness_defined(batch.race, batch.country, fair_cfg);
      if (wants_fairness && !defined &&
          config.degenerate_batch_policy == DegenerateBatchPolicy::kMergeWithNext && stop < n) {
        carry = std::move(rows);
        continue;
      }

      BatchRecord br;
      br.epoch = epoch;
      br.batch = executed + 1;
      br.size = static_cast<int>(rows.size());

      auto cache = forward(model, batch.x, Mode::kTrain);
      if (!cache.probs.allFinite()) {
        throw NumericError("non-finite predictions at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(br.batch));
      }
      const LossValue pred = bce_loss(cache.probs, batch.y);
      LossValue fair{0.0, Eigen::VectorXd::Zero(cache.probs.size())};
      if (defined) {
        fair = fairness_loss(cache.probs, batch.race, batch.country, fair_cfg);
        switch (fair_cfg.mode) {
          case FairnessMode::kRaceOnly: br.race_term = fair.value; break;
          case FairnessMode::kCountryOnly: br.country_term = fair.value; break;
          case FairnessMode::kCombined: {
            const auto terms = parity_terms_combined(cache.probs, batch.race, batch.country,
                                                     fair_cfg.w_race, fair_cfg.w_country);
            br.race_term = terms.race;
            br.country_term = terms.country;
            break;
          }
        }
      }
      const LossValue total = total_loss(pred, fair, fair_cfg.lambda);
      if (!std::isfinite(total.value) || !total.grad.allFinite()) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(br.batch));
      }
      adam_step(model, opt, backward(model, cache, total.grad));
      ++history.optimizer_steps;

      br.prediction_loss = pred.value;
      br.fairness_loss = fair.value;
      br.total_loss = total.value;
      br.fairness_applied = defined;
      history.batches.push_back(br);
      rec.train_prediction_loss += pred.value;
      rec.train_fairness_loss += fair.value;
      rec.train_total_loss += total.value;
      ++executed;
    }
    if (executed > 0) {
      rec.train_prediction_loss /= executed;
      rec.train_fairness_loss /= executed;
      rec.train_total_loss /= executed;
    }

    if (config.epoch_hook) config.epoch_hook(epoch, model);
    try {
      rec.validation_loss = validation_loss(model, val_fm, fair_cfg);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
    }
    if (!std::isfinite(rec.validation_loss)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    if (stopping.observe(epoch, rec.validation_loss)) {
      best = model;
      best_opt = opt;
    }
    history.epochs.push_back(rec);
    history.stopped_epoch = epoch;
    if (stopping.should_stop()) break;
  }

  history.best_epoch = stopping.best_epoch();
  history.best_validation_loss = stopping.best_loss();
  best.mode = Mode::kEval;
  result.model = std::move(best);
  result.optimizer = std::move(best_opt);
  return result;
}

std::vector<TrainResult> run_repeated(const FeatureMatrix& train_fm, const FeatureMatrix& val_fm,
                                      const TrainConfig& config, int n_runs, int jobs) {
  if (n_runs < 1) throw ValidationError("n_runs must be >= 1");
  std::vector<TrainResult> results(static_cast<std::size_t>(n_runs));
  std::vector<std::exception_ptr> errors(results.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < results.size(); i = next++) {
      try {
        TrainConfig cfg = config;
        cfg.seed = config.seed + i;
        results[i] = train(train_fm, val_fm, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, n_runs);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

nlohmann::json history_to_json(const TrainHistory& history) {
  nlohmann::json doc;
  doc["stopped_epoch"] = history.stopped_epoch;
  doc["best_epoch"] = history.best_epoch;
  doc["best_validation_loss"] = history.best_validation_loss;
  doc["optimizer_steps"] = history.optimizer_steps;
  auto& epochs = doc["epochs"] = nlohmann::json::array();
  for (const auto& e : history.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_prediction_loss", e.train_prediction_loss},
                      {"train_fairness_loss", e.train_fairness_loss},
                      {"train_total_loss", e.train_total_loss},
                      {"validation_loss", e.validation_loss}});
  }
  auto& batches = doc["batches"] = nlohmann::json::array();
  for (const auto& b : history.batches) {
    batches.push_back({{"epoch", b.epoch},
                       {"batch", b.batch},
                       {"size", b.size},
                       {"prediction_loss", b.prediction_loss},
                       {"fairness_loss", b.fairness_loss},
                       {"race_term", b.race_term},
                       {"country_term", b.country_term},
                       {"total_loss", b.total_loss},
                       {"fairness_applied", b.fairness_applied}});
  }
  return doc;
}

}  // namespace fairsel
