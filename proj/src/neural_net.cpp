#include "fairsel/neural_net.hpp"

#include <cmath>

#include "fairsel/errors.hpp"
#include "fairsel/random.hpp"

namespace fairsel {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

DenseLayer init_dense(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseLayer layer;
  layer.weight.resize(fan_in, fan_out);
  // Column-major fill keeps the draw order aligned with flatten_params.
  for (Index j = 0; j < fan_out; ++j) {
    for (Index i = 0; i < fan_in; ++i) layer.weight(i, j) = rng.uniform(-limit, limit);
  }
  layer.bias = VectorXd::Zero(fan_out);
  return layer;
}

BatchNormLayer init_norm(int width) {
  return {VectorXd::Ones(width), VectorXd::Zero(width), VectorXd::Zero(width),
          VectorXd::Ones(width)};
}

MatrixXd affine(const MatrixXd& x, const DenseLayer& layer) {
  MatrixXd z = x * layer.weight;
  z.rowwise() += layer.bias.transpose();
  return z;
}

// `stats` receives the running-statistics update in train mode.
ForwardCache::Block block_forward(const MatrixXd& x, const DenseLayer& layer,
                                  const BatchNormLayer& norm, Mode mode, BatchNormLayer* stats) {
  ForwardCache::Block b;
  b.affine = affine(x, layer);
  const auto m = static_cast<double>(b.affine.rows());
  VectorXd mean, var;
  if (mode == Mode::kTrain) {
    mean = b.affine.colwise().mean().transpose();
    const MatrixXd centered = b.affine.rowwise() - mean.transpose();
    var = centered.array().square().colwise().sum().transpose() / m;
    const VectorXd unbiased = m > 1.0 ? VectorXd(var * (m / (m - 1.0))) : var;
    stats->running_mean = (1.0 - kBatchNormMomentum) * stats->running_mean + kBatchNormMomentum * mean;
    stats->running_var = (1.0 - kBatchNormMomentum) * stats->running_var + kBatchNormMomentum * unbiased;
  } else {
    mean = norm.running_mean;
    var = norm.running_var;
  }
  b.inv_std = (var.array() + kBatchNormEps).rsqrt().matrix();
  b.normalized = (b.affine.rowwise() - mean.transpose()).array().rowwise() *
                 b.inv_std.transpose().array();
  b.pre_activation = (b.normalized.array().rowwise() * norm.gamma.transpose().array()).matrix();
  b.pre_activation.rowwise() += norm.beta.transpose();
  b.activation = b.pre_activation.cwiseMax(0.0);
  return b;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ForwardCache run_forward(const ModelParams& model, const MatrixXd& x, Mode mode,
                         ModelParams* stats) {
  if (x.cols() != model.input_dim()) {
    throw ValidationError("forward: input has " + std::to_string(x.cols()) +
                          " columns, model expects " + std::to_string(model.input_dim()));
  }
  if (x.rows() == 0) throw ValidationError("forward: empty batch");
  if (!x.allFinite()) throw NumericError("forward: non-finite input");
  ForwardCache cache;
  cache.mode = mode;
  cache.layer_dims = model.layer_dims;
  cache.input = x;
  cache.block1 = block_forward(x, model.hidden1, model.norm1, mode, stats ? &stats->norm1 : nullptr);
  cache.block2 = block_forward(cache.block1.activation, model.hidden2, model.norm2, mode,
                               stats ? &stats->norm2 : nullptr);
  cache.logits = affine(cache.block2.activation, model.output).col(0);
  cache.probs.resize(cache.logits.size());
  for (Index i = 0; i < cache.logits.size(); ++i) {
    cache.probs(i) = std::clamp(sigmoid(cache.logits(i)), kProbFloor, 1.0 - kProbFloor);
  }
  return cache;
}

// Returns dL/d(block input) and fills the block's gradients.
MatrixXd block_backward(const MatrixXd& upstream, const ForwardCache::Block& b,
                        const MatrixXd& block_input, const DenseLayer& layer,
                        const BatchNormLayer& norm, DenseLayer& dlayer, VectorXd& dgamma,
                        VectorXd& dbeta) {
  const auto m = static_cast<double>(upstream.rows());
  const MatrixXd dpre = (b.pre_activation.array() > 0.0).select(upstream, 0.0);
  dgamma = (dpre.array() * b.normalized.array()).colwise().sum().transpose();
  dbeta = dpre.colwise().sum().transpose();
  const MatrixXd dnorm = dpre.array().rowwise() * norm.gamma.transpose().array();
  const VectorXd sum_dnorm = dnorm.colwise().sum().transpose();
  const VectorXd sum_dnorm_norm = (dnorm.array() * b.normalized.array()).colwise().sum().transpose();
  MatrixXd daffine = (m * dnorm.array()).matrix();
  daffine.rowwise() -= sum_dnorm.transpose();
  daffine -= (b.normalized.array().rowwise() * sum_dnorm_norm.transpose().array()).matrix();
  daffine = (daffine.array().rowwise() * (b.inv_std.transpose().array() / m)).matrix();
  dlayer.weight = block_input.transpose() * daffine;
  dlayer.bias = daffine.colwise().sum().transpose();
  return daffine * layer.weight.transpose();
}

template <typename Model, typename F>
void visit_params(Model& m, F&& f) {
  f(m.hidden1.weight);
  f(m.hidden1.bias);
  f(m.norm1.gamma);
  f(m.norm1.beta);
  f(m.hidden2.weight);
  f(m.hidden2.bias);
  f(m.norm2.gamma);
  f(m.norm2.beta);
  f(m.output.weight);
  f(m.output.bias);
}

template <typename F>
void visit_grads(const Gradients& g, F&& f) {
  f(g.hidden1.weight);
  f(g.hidden1.bias);
  f(g.gamma1);
  f(g.beta1);
  f(g.hidden2.weight);
  f(g.hidden2.bias);
  f(g.gamma2);
  f(g.beta2);
  f(g.output.weight);
  f(g.output.bias);
}

std::vector<double> to_vector(const MatrixXd& m) { return {m.data(), m.data() + m.size()}; }
std::vector<double> to_vector(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

MatrixXd matrix_from(const nlohmann::json& j, Index rows, Index cols, const char* key) {
  const auto values = j.at(key).get<std::vector<double>>();
  if (values.size() != static_cast<std::size_t>(rows * cols)) {
    throw ValidationError(std::string("checkpoint: '") + key + "' has wrong size");
  }
  return Eigen::Map<const MatrixXd>(values.data(), rows, cols);
}

VectorXd vector_from(const nlohmann::json& j, Index n, const char* key) {
  return matrix_from(j, n, 1, key).col(0);
}

}  // namespace

std::size_t ModelParams::parameter_count() const {
  const auto [d, h1, h2, o] = layer_dims;
  return static_cast<std::size_t>(d * h1 + h1 + 2 * h1 + h1 * h2 + h2 + 2 * h2 + h2 * o + o);
}

void ModelParams::check_invariants() const {
  const auto [d, h1, h2, o] = layer_dims;
  const bool shapes = hidden1.weight.rows() == d && hidden1.weight.cols() == h1 &&
                      hidden1.bias.size() == h1 && hidden2.weight.rows() == h1 &&
                      hidden2.weight.cols() == h2 && hidden2.bias.size() == h2 &&
                      output.weight.rows() == h2 && output.weight.cols() == o &&
                      output.bias.size() == o && o == 1;
  auto norm_ok = [](const BatchNormLayer& n, int w) {
    return n.gamma.size() == w && n.beta.size() == w && n.running_mean.size() == w &&
           n.running_var.size() == w;
  };
  if (!shapes || !norm_ok(norm1, h1) || !norm_ok(norm2, h2)) {
    throw ValidationError("model parameters inconsistent with layer_dims");
  }
  if ((norm1.running_var.array() < 0.0).any() || (norm2.running_var.array() < 0.0).any()) {
    throw NumericError("negative running variance");
  }
  bool finite = norm1.running_mean.allFinite() && norm1.running_var.allFinite() &&
                norm2.running_mean.allFinite() && norm2.running_var.allFinite();
  for (double v : flatten_params(*this)) finite = finite && std::isfinite(v);
  if (!finite) throw NumericError("non-finite model parameter");
}

ModelParams init_model(int d_in, int h1, int h2, std::uint64_t seed) {
  if (d_in < 1 || h1 < 1 || h2 < 1) throw ValidationError("init_model: dimensions must be >= 1");
  Rng rng = Rng::derive(seed, {0x1417u});
  ModelParams m;
  m.layer_dims = {d_in, h1, h2, 1};
  m.hidden1 = init_dense(d_in, h1, rng);
  m.norm1 = init_norm(h1);
  m.hidden2 = init_dense(h1, h2, rng);
  m.norm2 = init_norm(h2);
  m.output = init_dense(h2, 1, rng);
  return m;
}

ForwardCache forward(ModelParams& model, const Eigen::MatrixXd& x, Mode mode) {
  model.mode = mode;
  return run_forward(model, x, mode, mode == Mode::kTrain ? &model : nullptr);
}

ForwardCache forward_eval(const ModelParams& model, const Eigen::MatrixXd& x) {
  return run_forward(model, x, Mode::kEval, nullptr);
}

Gradients backward(const ModelParams& model, const ForwardCache& cache,
                   const Eigen::VectorXd& dloss_dprobs) {
  if (cache.mode != Mode::kTrain) throw ValidationError("backward: cache is not from a train-mode forward");
  if (cache.layer_dims != model.layer_dims) throw ValidationError("backward: cache/model mismatch");
  if (dloss_dprobs.size() != cache.probs.size()) {
    throw ValidationError("backward: gradient length does not match batch size");
  }
  Gradients g;
  const VectorXd dlogits = dloss_dprobs.array() * cache.probs.array() * (1.0 - cache.probs.array());
  g.output.weight = cache.block2.activation.transpose() * dlogits;
  g.output.bias = VectorXd::Constant(1, dlogits.sum());
  const MatrixXd da2 = dlogits * model.output.weight.transpose();
  const MatrixXd da1 = block_backward(da2, cache.block2, cache.block1.activation, model.hidden2,
                                      model.norm2, g.hidden2, g.gamma2, g.beta2);
  block_backward(da1, cache.block1, cache.input, model.hidden1, model.norm1, g.hidden1, g.gamma1,
                 g.beta1);
  return g;
}

std::vector<double> flatten_params(const ModelParams& model) {
  std::vector<double> flat;
  flat.reserve(model.parameter_count());
  visit_params(model, [&](const auto& block) {
    flat.insert(flat.end(), block.data(), block.data() + block.size());
  });
  return flat;
}

void unflatten_params(ModelParams& model, const std::vector<double>& flat) {
  if (flat.size() != model.parameter_count()) throw ValidationError("unflatten_params: size mismatch");
  std::size_t pos = 0;
  visit_params(model, [&](auto& block) {
    std::copy(flat.begin() + static_cast<long>(pos),
              flat.begin() + static_cast<long>(pos + static_cast<std::size_t>(block.size())),
              block.data());
    pos += static_cast<std::size_t>(block.size());
  });
}

std::vector<double> flatten(const Gradients& grads) {
  std::vector<double> flat;
  visit_grads(grads, [&](const auto& block) {
    flat.insert(flat.end(), block.data(), block.data() + block.size());
  });
  return flat;
}

OptimizerState OptimizerState::for_model(const ModelParams& model, double learning_rate) {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.first_moment.assign(model.parameter_count(), 0.0);
  s.second_moment.assign(model.parameter_count(), 0.0);
  return s;
}

void adam_step(ModelParams& model, OptimizerState& state, const Gradients& grads) {
  const auto g = flatten(grads);
  auto p = flatten_params(model);
  if (g.size() != p.size() || state.first_moment.size() != p.size() ||
      state.second_moment.size() != p.size()) {
    throw ValidationError("adam_step: shape mismatch between model, gradients and state");
  }
  for (double v : g) {
    if (!std::isfinite(v)) throw NumericError("adam_step: non-finite gradient");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g[i];
    v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  unflatten_params(model, p);
}

nlohmann::json checkpoint_to_json(const ModelParams& model, const OptimizerState* state,
                                  std::uint64_t seed, const std::string& config_hash) {
  nlohmann::json doc;
  doc["format"] = "fairsel-checkpoint-v1";
  doc["layer_dims"] = model.layer_dims;
  doc["seed"] = seed;
  doc["config_hash"] = config_hash;
  doc["mode"] = model.mode == Mode::kTrain ? "train" : "eval";
  auto& params = doc["parameters"];
  params["hidden1.weight"] = to_vector(model.hidden1.weight);
  params["hidden1.bias"] = to_vector(model.hidden1.bias);
  params["norm1.gamma"] = to_vector(model.norm1.gamma);
  params["norm1.beta"] = to_vector(model.norm1.beta);
  params["hidden2.weight"] = to_vector(model.hidden2.weight);
  params["hidden2.bias"] = to_vector(model.hidden2.bias);
  params["norm2.gamma"] = to_vector(model.norm2.gamma);
  params["norm2.beta"] = to_vector(model.norm2.beta);
  params["output.weight"] = to_vector(model.output.weight);
  params["output.bias"] = to_vector(model.output.bias);
  auto& running = doc["running_stats"];
  running["norm1.mean"] = to_vector(model.norm1.running_mean);
  running["norm1.var"] = to_vector(model.norm1.running_var);
  running["norm2.mean"] = to_vector(model.norm2.running_mean);
  running["norm2.var"] = to_vector(model.norm2.running_var);
  if (state != nullptr) {
    doc["optimizer"] = {{"kind", "adam"},
                        {"learning_rate", state->learning_rate},
                        {"beta1", state->beta1},
                        {"beta2", state->beta2},
                        {"eps", state->eps},
                        {"step", state->step},
                        {"first_moment", state->first_moment},
                        {"second_moment", state->second_moment}};
  }
  return doc;
}

ModelParams model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format") != "fairsel-checkpoint-v1") throw ValidationError("unknown checkpoint format");
    ModelParams m;
    m.layer_dims = doc.at("layer_dims").get<std::array<int, 4>>();
    const auto [d, h1, h2, o] = m.layer_dims;
    const auto& p = doc.at("parameters");
    const auto& r = doc.at("running_stats");
    m.hidden1 = {matrix_from(p, d, h1, "hidden1.weight"), vector_from(p, h1, "hidden1.bias")};
    m.norm1 = {vector_from(p, h1, "norm1.gamma"), vector_from(p, h1, "norm1.beta"),
               vector_from(r, h1, "norm1.mean"), vector_from(r, h1, "norm1.var")};
    m.hidden2 = {matrix_from(p, h1, h2, "hidden2.weight"), vector_from(p, h2, "hidden2.bias")};
    m.norm2 = {vector_from(p, h2, "norm2.gamma"), vector_from(p, h2, "norm2.beta"),
               vector_from(r, h2, "norm2.mean"), vector_from(r, h2, "norm2.var")};
    m.output = {matrix_from(p, h2, o, "output.weight"), vector_from(p, o, "output.bias")};
    m.mode = doc.at("mode") == "train" ? Mode::kTrain : Mode::kEval;
    m.check_invariants();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace fairsel
