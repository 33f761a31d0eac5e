#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace fairsel {

enum class Mode { kTrain, kEval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
// Output probabilities are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-12;

struct DenseLayer {
  Eigen::MatrixXd weight;  // fan_in x fan_out
  Eigen::VectorXd bias;    // fan_out
};

struct BatchNormLayer {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

// Two hidden blocks of affine -> batch norm -> ReLU, then affine -> sigmoid.
struct ModelParams {
  std::array<int, 4> layer_dims{};  // d_in, h1, h2, 1
  DenseLayer hidden1;
  BatchNormLayer norm1;
  DenseLayer hidden2;
  BatchNormLayer norm2;
  DenseLayer output;
  Mode mode = Mode::kTrain;

  int input_dim() const { return layer_dims[0]; }
  std::size_t parameter_count() const;
  void check_invariants() const;
};

// Same layout as the trainable parts of ModelParams.
struct Gradients {
  DenseLayer hidden1;
  Eigen::VectorXd gamma1, beta1;
  DenseLayer hidden2;
  Eigen::VectorXd gamma2, beta2;
  DenseLayer output;
};

struct ForwardCache {
  Mode mode = Mode::kEval;
  std::array<int, 4> layer_dims{};
  Eigen::MatrixXd input;
  // Per hidden block: affine output, standardized value, 1/sqrt(var + eps),
  // batch-norm output (pre-ReLU), ReLU output.
  struct Block {
    Eigen::MatrixXd affine;
    Eigen::MatrixXd normalized;
    Eigen::VectorXd inv_std;
    Eigen::MatrixXd pre_activation;
    Eigen::MatrixXd activation;
  };
  Block block1, block2;
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
};

// Weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases 0; gamma 1,
// beta 0; running mean 0 and running variance 1.
ModelParams init_model(int d_in, int h1, int h2, std::uint64_t seed);

// Train mode standardizes with batch statistics and folds them into the
// running statistics; eval mode uses the running statistics and leaves the
// model untouched. Throws NumericError on non-finite input.
ForwardCache forward(ModelParams& model, const Eigen::MatrixXd& x, Mode mode);
ForwardCache forward_eval(const ModelParams& model, const Eigen::MatrixXd& x);

// Backpropagates dL/dprobs through a train-mode cache, including the batch
// statistics of both normalization layers.
Gradients backward(const ModelParams& model, const ForwardCache& cache,
                   const Eigen::VectorXd& dloss_dprobs);

// Flattened views in a fixed order: hidden1 W, b, gamma1, beta1, hidden2 W, b,
// gamma2, beta2, output W, b. Matrices are column-major.
std::vector<double> flatten_params(const ModelParams& model);
void unflatten_params(ModelParams& model, const std::vector<double>& flat);
std::vector<double> flatten(const Gradients& grads);

struct OptimizerState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  static OptimizerState for_model(const ModelParams& model, double learning_rate);
};

// Bias-corrected Adam update. Throws NumericError on non-finite gradients and
// ValidationError on shape mismatch.
void adam_step(ModelParams& model, OptimizerState& state, const Gradients& grads);

nlohmann::json checkpoint_to_json(const ModelParams& model, const OptimizerState* state,
                                  std::uint64_t seed, const std::string& config_hash);
ModelParams model_from_json(const nlohmann::json& doc);

}  // namespace fairsel
