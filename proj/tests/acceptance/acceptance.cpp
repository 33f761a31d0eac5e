// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../gradcheck.hpp"
#include "../metric_oracle.hpp"
#include "../selection_checks.hpp"
#include "../test_support.hpp"
#include "fairsel/errors.hpp"
#include "fairsel/experiment.hpp"

using namespace fairsel;
using namespace fairsel::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ModelParams random_model(Rng& rng, int d, int h1, int h2) {
  auto m = init_model(d, h1, h2, rng.uniform_index(1u << 30));
  // Move batch-norm and bias parameters off their initial values so no
  // gradient is trivially structured.
  for (auto* bn : {&m.norm1, &m.norm2}) {
    for (auto& g : bn->gamma) g = rng.uniform(0.5, 1.5);
    for (auto& b : bn->beta) b = rng.uniform(-0.5, 0.5);
  }
  for (auto* layer : {&m.hidden1, &m.hidden2, &m.output}) {
    for (auto& b : layer->bias) b = rng.uniform(-0.3, 0.3);
  }
  return m;
}

Eigen::VectorXd random_probs(Rng& rng, std::size_t n) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  for (auto& v : p) v = rng.uniform(0.02, 0.98);
  return p;
}

// 1. Analytic gradients of the full objective vs central differences.
Outcome gradient_oracle() {
  Rng rng(Rng::derive(2024, {1}));
  const double lambdas[] = {0.0, 1.0, 3.0};
  const FairnessMode modes[] = {FairnessMode::kRaceOnly, FairnessMode::kCountryOnly, FairnessMode::kCombined};
  double worst = 0;
  std::size_t checked = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = 6 + static_cast<int>(rng.uniform_index(10));
    Objective obj;
    obj.x = random_matrix(rng, n, 4);
    obj.labels = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) obj.labels(i) = rng.uniform01() < 0.5 ? 1.0 : 0.0;
    obj.race_mask = mixed_mask(rng, static_cast<std::size_t>(n));
    obj.country_mask = mixed_mask(rng, static_cast<std::size_t>(n));
    obj.fairness = {lambdas[inst % 3], rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), modes[(inst / 3) % 3]};
    const auto model = random_model(rng, 4, 6, 5);
    const auto a = obj.analytic(model);
    const auto num = obj.numeric(model, 1e-5);
    for (std::size_t i = 0; i < a.size(); ++i) {
      worst = std::max(worst, relative_error(a[i], num[i]));
      ++checked;
    }
  }
  return {worst < 1e-4, std::to_string(checked) + " partials, max relative error " + fmt("%.3g", worst)};
}

// 2. Loss and metric formulas vs brute force.
Outcome formula_oracle() {
  Rng rng(Rng::derive(2024, {2}));
  for (int i = 0; i < 50; ++i) {
    const auto f = random_metric_fixture(rng);
    if (auto e = compare_with_oracle(f, 1e-9); !e.empty()) return {false, "fixture " + std::to_string(i) + ": " + e};
    const std::size_t n = f.pool.papers.size();
    const auto p = random_probs(rng, n);
    std::vector<bool> rm(n), cm(n);
    for (std::size_t k = 0; k < n; ++k) {
      rm[k] = f.pool.papers[k].is_protected(ProtectedAttr::kRace);
      cm[k] = f.pool.papers[k].is_protected(ProtectedAttr::kCountry);
    }
    auto mean_of = [&](const std::vector<bool>& m, bool want) -> std::optional<double> {
      double s = 0, c = 0;
      for (std::size_t k = 0; k < n; ++k) {
        if (m[k] == want) {
          s += p(static_cast<Eigen::Index>(k));
          c += 1;
        }
      }
      if (c == 0) return std::nullopt;
      return s / c;
    };
    const auto rp = mean_of(rm, true), rn = mean_of(rm, false);
    try {
      const double got = parity_loss_pairwise(p, rm).value;
      if (!rp || !rn || std::abs(got - (*rp - *rn) * (*rp - *rn)) > 1e-9) return {false, "pairwise mismatch"};
    } catch (const DegenerateBatchError&) {
      if (rp && rn) return {false, "pairwise: unexpected degenerate batch"};
    }
    const double wr = rng.uniform(0.05, 1.0), wc = rng.uniform(0.05, 1.0);
    double all = 0;
    for (std::size_t k = 0; k < n; ++k) all += p(static_cast<Eigen::Index>(k));
    all /= static_cast<double>(n);
    const auto cp = mean_of(cm, true);
    try {
      const double got = parity_loss_combined(p, rm, cm, wr, wc).value;
      if (!rp || !cp) return {false, "combined: expected degenerate batch"};
      const double want = wr * (*rp - all) * (*rp - all) + wc * (*cp - all) * (*cp - all);
      if (std::abs(got - want) > 1e-9) return {false, "combined mismatch"};
    } catch (const DegenerateBatchError&) {
      if (rp && cp) return {false, "combined: unexpected degenerate batch"};
    }
  }
  return {true, "50 fixtures agree to 1e-9"};
}

// 3. Equal group and global means give a zero loss with zero gradient.
Outcome parity_fixed_points() {
  Rng rng(Rng::derive(2024, {3}));
  double worst_value = 0, worst_grad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 * (1 + rng.uniform_index(6));
    const auto half = random_probs(rng, k);
    // p = [half, half]; race = first half; country = one copy of every value.
    Eigen::VectorXd p(static_cast<Eigen::Index>(2 * k));
    p << half, half;
    std::vector<bool> race(2 * k, false), country(2 * k, false);
    for (std::size_t i = 0; i < k; ++i) race[i] = true;
    for (std::size_t i = 0; i < k / 2; ++i) country[i] = true;
    for (std::size_t i = k + k / 2; i < 2 * k; ++i) country[i] = true;
    const auto pair = parity_loss_pairwise(p, race);
    const auto comb = parity_loss_combined(p, race, country, rng.uniform01(), rng.uniform01());
    worst_value = std::max({worst_value, std::abs(pair.value), std::abs(comb.value)});
    worst_grad = std::max({worst_grad, pair.grad.cwiseAbs().maxCoeff(), comb.grad.cwiseAbs().maxCoeff()});
  }
  return {worst_value <= 1e-12 && worst_grad <= 1e-12,
          "max |loss| " + fmt("%.3g", worst_value) + ", max |grad| " + fmt("%.3g", worst_grad)};
}

std::function<double(double)> random_increasing(Rng& rng) {
  const double c1 = rng.uniform(0.1, 5), c2 = rng.uniform(0, 3), c3 = rng.uniform(0, 2), c4 = rng.uniform(0, 2);
  const double shift = rng.uniform(-10, 10);
  return [=](double x) {
    return shift + c1 * x + c2 * x * x * x + c3 * std::log(x / (1 - x)) + c4 * std::exp(x);
  };
}

// 4. Selection contract.
Outcome selection_contract() {
  Rng rng(Rng::derive(2024, {4}));
  std::vector<std::function<double(double)>> transforms;
  for (int i = 0; i < 5; ++i) transforms.push_back(random_increasing(rng));
  int tie_cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto scores = random_score_map(rng, 2 + rng.uniform_index(80));
    const std::size_t n_a = 1 + rng.uniform_index(scores.size());
    auto r = select_top(scores, n_a);
    if (auto e = check_selection(scores, n_a, r); !e.empty()) return {false, "map " + std::to_string(trial) + ": " + e};
    for (const auto& f : transforms) {
      const auto t = select_top(transformed(scores, f), n_a);
      if (t.selected != r.selected || t.ranking != r.ranking) return {false, "transform changed the slate"};
    }
    // Force a tie straddling the threshold.
    if (n_a < scores.size()) {
      scores[r.ranking[n_a]] = scores[r.ranking[n_a - 1]];
      r = select_top(scores, n_a);
      if (auto e = check_selection(scores, n_a, r); !e.empty()) return {false, "tie " + std::to_string(trial) + ": " + e};
      if (r.tie_breaks.empty()) return {false, "threshold tie not recorded"};
      const auto& tied = r.tie_breaks[0].tied;
      if (!std::is_sorted(tied.begin(), tied.end())) return {false, "tie group not in id order"};
      for (std::size_t i = 0; i < tied.size(); ++i) {
        const bool admitted = i < r.tie_breaks[0].admitted.size();
        if (admitted != r.is_selected(tied[i])) return {false, "tie rule not by ascending id"};
      }
      ++tie_cases;
    }
  }
  const auto ex = select_top({{"A", 0.9}, {"B", 0.7}, {"C", 0.7}, {"D", 0.2}}, 2);
  if (ex.selected != std::vector<std::string>{"A", "B"}) return {false, "A/B/C/D example"};
  return {true, "200 maps, " + std::to_string(tie_cases) + " constructed ties, 5 transforms"};
}

ExperimentConfig canonical_config() {
  ExperimentConfig c;  // synthetic source, seed 7, 5 runs, N_a = 351
  c.sweep_modes = {FairnessMode::kRaceOnly};
  c.lambda_grid = {1, 2, 3, 5, 10};
  return c;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (i + j) / 2.0 + 1;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// 5 and 7 share the sweep: it runs twice into separate directories.
struct SweepRuns {
  std::vector<SweepRow> rows;
  std::string csv_a, csv_b;
  double seconds = 0;
  std::string error;
};

SweepRuns run_sweeps() {
  SweepRuns s;
  try {
    TempDir a, b;
    const auto t0 = std::chrono::steady_clock::now();
    s.rows = cmd_sweep(canonical_config(), a.path());
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    cmd_sweep(canonical_config(), b.path());
    s.csv_a = read_file(a / "sweep.csv");
    s.csv_b = read_file(b / "sweep.csv");
  } catch (const std::exception& e) {
    s.error = e.what();
  }
  return s;
}

Outcome trend_reproduction(const SweepRuns& s) {
  if (!s.error.empty()) return {false, s.error};
  std::vector<double> lambdas, macro, utility;
  std::ostringstream table;
  for (const auto& row : s.rows) {
    if (!row.error.empty() || !row.macro.mean || !row.utility.mean) return {false, "cell failed: " + row.error};
    lambdas.push_back(row.lambda);
    macro.push_back(*row.macro.mean);
    utility.push_back(*row.utility.mean);
    table << " l=" << row.lambda << ":" << fmt("%.2f", macro.back()) << "/" << fmt("%.2f", utility.back());
  }
  if (lambdas.size() != 5) return {false, "expected 5 rows"};
  const bool positive = std::all_of(macro.begin(), macro.end(), [](double m) { return m > 0; });
  const double rho = spearman(lambdas, macro);
  const bool tradeoff = utility.back() <= utility.front() + 2.0;
  const bool fast = s.seconds < 600;
  std::string detail = std::string("(a) ") + (positive ? "ok" : "FAIL") + " (b) rho=" + fmt("%.3f", rho) +
                       " (c) UG10=" + fmt("%.2f", utility.back()) + " vs UG1+2=" + fmt("%.2f", utility.front() + 2) +
                       ", " + fmt("%.1f", s.seconds) + " s; macro/UG:" + table.str();
  return {positive && rho >= 0.8 && tradeoff && fast, detail};
}

// 6. lambda = 0 is the baseline.
Outcome baseline_reduction() {
  auto config = canonical_config();
  const auto data = prepare_data(config);
  std::size_t batches = 0;
  for (auto mode : {FairnessMode::kRaceOnly, FairnessMode::kCountryOnly, FairnessMode::kCombined}) {
    auto tc = config.train;
    tc.fairness = {0.0, 0.32, 0.68, mode};
    tc.seed = config.seed;
    const auto r = train(data.train, data.validation, tc);
    for (const auto& b : r.history.batches) {
      if (b.fairness_loss != 0.0) return {false, "non-zero fairness loss at epoch " + std::to_string(b.epoch)};
      ++batches;
    }
  }
  const auto baseline = run_baseline(data, config);
  const auto cell = run_cell(data, config, {0.0, 0.32, 0.68, FairnessMode::kCombined}, baseline, std::nullopt);
  if (!cell.report) return {false, cell.error};
  for (const auto& run : cell.report->runs) {
    for (std::size_t a = 0; a < 2; ++a) {
      if (run.macro[a].value_or(1) != 0.0 || run.micro[a].value_or(1) != 0.0) return {false, "non-zero gain"};
    }
    if (run.utility_gain.value_or(1) != 0.0 || run.diversity_gain.value_or(1) != 0.0) return {false, "non-zero gain"};
  }
  return {true, std::to_string(batches) + " batches with zero fairness loss; self-report all zero over " +
                    std::to_string(cell.report->runs.size()) + " runs"};
}

Outcome determinism(const SweepRuns& s) {
  if (!s.error.empty()) return {false, s.error};
  const bool same = !s.csv_a.empty() && s.csv_a == s.csv_b;
  return {same, same ? std::to_string(s.csv_a.size()) + " bytes identical" : "CSV outputs differ"};
}

// 8. Scripted validation curve: improving through epoch 12, flat after.
Outcome early_stopping() {
  auto config = canonical_config();
  const auto data = prepare_data(config);
  const double q = data.validation.labels.mean();
  const double best_bias = std::log(q / (1 - q));
  auto tc = config.train;
  tc.epochs = 50;
  tc.patience = 10;
  tc.fairness = {0.0, 0.32, 0.68, FairnessMode::kCombined};
  tc.seed = 1;
  tc.epoch_hook = [best_bias](int epoch, ModelParams& m) {
    m.output.weight.setZero();
    m.output.bias(0) = best_bias + 0.25 * std::max(0, 12 - epoch);
  };
  const auto r = train(data.train, data.validation, tc);
  const double round_trip = validation_loss(r.model, data.validation, tc.fairness);
  const double diff = std::abs(round_trip - r.history.best_validation_loss);
  const bool ok = r.history.stopped_epoch <= 22 && r.history.best_epoch == 12 && diff <= 1e-10;
  return {ok, "stopped at " + std::to_string(r.history.stopped_epoch) + ", best epoch " +
                  std::to_string(r.history.best_epoch) + ", round-trip diff " + fmt("%.3g", diff)};
}

// 9. Realized per-conference marginals vs the published demographics table.
Outcome synthetic_calibration() {
  struct Target {
    Conference conf;
    double gender, race, country;
  };
  const Target table[] = {{Conference::kSIGCHI, 41.88, 6.84, 21.94},
                          {Conference::kDIS, 65.79, 35.09, 24.56},
                          {Conference::kIUI, 43.75, 51.56, 39.06}};
  double worst = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto d = generate_synthetic(SyntheticSpec{}, seed);
    if (d.papers.size() != 530) return {false, "dataset size " + std::to_string(d.papers.size())};
    for (const auto& t : table) {
      double n = 0, race = 0, country = 0, female = 0, slots = 0;
      for (const auto& p : d.papers) {
        if (p.conference != t.conf) continue;
        n += 1;
        race += p.is_protected(ProtectedAttr::kRace);
        country += p.is_protected(ProtectedAttr::kCountry);
        for (const auto& a : p.authors) {
          female += a.gender == Gender::kFemale;
          slots += 1;
        }
      }
      worst = std::max({worst, std::abs(100 * female / slots - t.gender), std::abs(100 * race / n - t.race),
                        std::abs(100 * country / n - t.country)});
    }
  }
  return {worst <= 3.0, "max deviation " + fmt("%.2f", worst) + " pp over 5 seeds"};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn, double limit_s = 0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && s >= limit_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", limit_s) + " s budget";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << " ("
              << fmt("%.2f", s) << " s)" << std::endl;
  };
  report(1, "gradient oracle", gradient_oracle, 30);
  report(2, "loss and metric oracle", formula_oracle, 10);
  report(3, "parity fixed points", parity_fixed_points);
  report(4, "selection contract", selection_contract);
  const SweepRuns sweeps = run_sweeps();
  report(5, "trend reproduction", [&] { return trend_reproduction(sweeps); });
  report(6, "baseline reduction", baseline_reduction);
  report(7, "sweep determinism", [&] { return determinism(sweeps); });
  report(8, "early stopping", early_stopping);
  report(9, "synthetic calibration", synthetic_calibration);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
