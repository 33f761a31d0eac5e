#include "fairsel/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include "fairsel/csv.hpp"
#include "fairsel/errors.hpp"
#include "fairsel/plot.hpp"

#ifndef FAIRSEL_VERSION
#define FAIRSEL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace fairsel {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

int parse_positive(const std::string& key, const std::string& text) {
  const long long v = parse_int(key, text);
  if (v <= 0 || v > 1'000'000'000) throw ValidationError("config key '" + key + "' must be positive");
  return static_cast<int>(v);
}

std::uint64_t parse_seed(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("config key '" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

// Tracks which keys were consumed so leftovers can be reported as unknown.
class KeyReader {
 public:
  explicit KeyReader(const KeyValues& kv) : kv_(kv) {}

  const std::string* get(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }
  const std::string& require(const std::string& key) {
    const auto* v = get(key);
    if (!v) throw ValidationError("missing config key '" + key + "'");
    return *v;
  }
  void mark_prefix(const std::string& prefix) {
    for (const auto& [k, v] : kv_) {
      if (k.starts_with(prefix)) used_.insert(k);
    }
  }
  void reject_unknown() const {
    for (const auto& [k, v] : kv_) {
      if (!used_.contains(k)) throw ValidationError("unknown config key '" + k + "'");
    }
  }

 private:
  const KeyValues& kv_;
  std::set<std::string> used_;
};

constexpr std::array<const char*, 3> kConfKeys = {"sigchi", "dis", "iui"};
constexpr std::array<const char*, 5> kStageKeys = {"professor", "associate_professor", "lecturer",
                                                   "postdoc", "grad_student"};

Conference conference_for_key(std::size_t i) {
  static constexpr std::array<Conference, 3> kMap = {Conference::kSIGCHI, Conference::kDIS,
                                                     Conference::kIUI};
  return kMap[i];
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NaN"; }

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

// Runs `fn`, prefixing any error with the pipeline stage while keeping the
// error category (and hence the exit code).
template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  const std::string prefix = std::string("stage '") + name + "': ";
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

nlohmann::ordered_json spec_to_json(const SyntheticSpec& spec) {
  nlohmann::ordered_json j;
  j["n_papers"] = spec.n_papers;
  j["n_accepted"] = spec.n_accepted;
  j["bias_strength"] = spec.bias_strength;
  j["quality_slope"] = spec.quality_slope;
  j["coauthor_homophily"] = spec.coauthor_homophily;
  j["protected_h_log_shift"] = spec.protected_h_log_shift;
  j["min_authors"] = spec.min_authors;
  j["max_authors"] = spec.max_authors;
  auto& confs = j["conferences"] = nlohmann::ordered_json::array();
  for (const auto& c : spec.conferences) {
    confs.push_back({{"conference", to_string(c.conference)},
                     {"n_papers", c.n_papers},
                     {"gender_pct", c.gender_pct},
                     {"race_pct", c.race_pct},
                     {"country_pct", c.country_pct}});
  }
  auto& stages = j["stages"] = nlohmann::ordered_json::array();
  for (CareerStage s : kCareerStages) {
    const auto& p = spec.stages[index_of(s)];
    stages.push_back({{"stage", to_string(s)},
                      {"share", p.share},
                      {"h_median", p.h_median},
                      {"h_sigma", p.h_sigma}});
  }
  return j;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }
std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string cell_name(const FairnessConfig& f) {
  std::string name = std::string(to_string(f.mode)) + "_lambda_" + fmt(f.lambda);
  if (f.mode == FairnessMode::kCombined) name += "_wr_" + fmt(f.w_race) + "_wc_" + fmt(f.w_country);
  return name;
}

std::string format_name(OutputFormat f) { return f == OutputFormat::kJson ? "json" : "csv"; }

nlohmann::ordered_json summary_json(const Summary& s) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  return {{"mean", opt(s.mean)}, {"std", opt(s.std)}, {"n", s.n}};
}

// Executes fn(i) for i in [0, n) on up to `jobs` threads.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

nlohmann::ordered_json base_manifest(const ExperimentConfig& config, std::string_view command) {
  nlohmann::ordered_json m;
  m["software_version"] = software_version();
  m["command"] = command;
  m["config_hash"] = config.hash();
  m["seed"] = config.seed;
  m["split_seed"] = config.seed;
  if (config.source == ExperimentConfig::Source::kSynthetic) {
    m["synthetic_seed"] = config.synthetic_seed.value_or(config.seed);
  }
  auto& seeds = m["run_seeds"] = nlohmann::ordered_json::array();
  for (int i = 0; i < config.n_runs; ++i) seeds.push_back(config.seed + static_cast<std::uint64_t>(i));
  m["baseline"] = kBaselineDescriptor;
  m["config"] = config.canonical();
  return m;
}

}  // namespace

std::string software_version() { return FAIRSEL_VERSION; }

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + " line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ValidationError(where + ": empty key");
    if (!kv.emplace(key, value).second) throw ValidationError(where + ": duplicate key '" + key + "'");
  }
  return kv;
}

KeyValues read_key_values(const fs::path& path) {
  return parse_key_values(read_text(path), path.string());
}

SyntheticSpec synthetic_spec_from(const KeyValues& kv, const std::string& prefix) {
  SyntheticSpec spec;
  for (const auto& [full_key, value] : kv) {
    if (!full_key.starts_with(prefix)) continue;
    const std::string key = full_key.substr(prefix.size());
    bool known = true;
    if (key == "n_papers") {
      spec.n_papers = parse_positive(full_key, value);
    } else if (key == "n_accepted") {
      spec.n_accepted = parse_positive(full_key, value);
    } else if (key == "bias_strength") {
      spec.bias_strength = parse_double(full_key, value);
    } else if (key == "quality_slope") {
      spec.quality_slope = parse_double(full_key, value);
    } else if (key == "coauthor_homophily") {
      spec.coauthor_homophily = parse_double(full_key, value);
    } else if (key == "protected_h_log_shift") {
      spec.protected_h_log_shift = parse_double(full_key, value);
    } else if (key == "min_authors") {
      spec.min_authors = parse_positive(full_key, value);
    } else if (key == "max_authors") {
      spec.max_authors = parse_positive(full_key, value);
    } else {
      known = false;
      for (std::size_t c = 0; c < kConfKeys.size() && !known; ++c) {
        const std::string head = std::string(kConfKeys[c]) + ".";
        if (!key.starts_with(head)) continue;
        auto it = std::find_if(spec.conferences.begin(), spec.conferences.end(),
                               [&](const ConferenceTarget& t) { return t.conference == conference_for_key(c); });
        if (it == spec.conferences.end()) break;
        const std::string field = key.substr(head.size());
        known = true;
        if (field == "n_papers") {
          it->n_papers = parse_positive(full_key, value);
        } else if (field == "gender_pct") {
          it->gender_pct = parse_double(full_key, value);
        } else if (field == "race_pct") {
          it->race_pct = parse_double(full_key, value);
        } else if (field == "country_pct") {
          it->country_pct = parse_double(full_key, value);
        } else {
          known = false;
        }
      }
      for (std::size_t s = 0; s < kStageKeys.size() && !known; ++s) {
        const std::string head = std::string("stage.") + kStageKeys[s] + ".";
        if (!key.starts_with(head)) continue;
        const std::string field = key.substr(head.size());
        known = true;
        if (field == "share") {
          spec.stages[s].share = parse_double(full_key, value);
        } else if (field == "h_median") {
          spec.stages[s].h_median = parse_double(full_key, value);
        } else if (field == "h_sigma") {
          spec.stages[s].h_sigma = parse_double(full_key, value);
        } else {
          known = false;
        }
      }
    }
    if (!known) throw ValidationError("unknown synthetic spec key '" + full_key + "'");
  }
  spec.validate();
  return spec;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  auto line = [&](const std::string& k, const std::string& v) { out << k << " = " << v << "\n"; };
  auto list = [](const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + fmt(xs[i]);
    return s;
  };
  if (source == Source::kCsv) {
    line("data.source", "csv");
    line("data.papers", papers_csv.generic_string());
    line("data.authors", authors_csv.generic_string());
  } else {
    line("data.source", "synthetic");
    line("data.seed", std::to_string(synthetic_seed.value_or(seed)));
    line("synth", spec_to_json(synthetic).dump());
  }
  line("seed", std::to_string(seed));
  line("n_runs", std::to_string(n_runs));
  line("n_accepted", std::to_string(n_accepted));
  line("split_ratio", fmt(split_ratio));
  line("train.epochs", std::to_string(train.epochs));
  line("train.batch_size", std::to_string(train.batch_size));
  line("train.learning_rate", fmt(train.learning_rate));
  line("train.patience", std::to_string(train.patience));
  line("train.min_delta", fmt(train.min_delta));
  line("train.hidden1", std::to_string(train.hidden1));
  line("train.hidden2", std::to_string(train.hidden2));
  line("train.degenerate_batch_policy", std::string(to_string(train.degenerate_batch_policy)));
  line("fairness.mode", std::string(to_string(train.fairness.mode)));
  line("fairness.lambda", fmt(train.fairness.lambda));
  line("fairness.w_race", fmt(train.fairness.w_race));
  line("fairness.w_country", fmt(train.fairness.w_country));
  line("sweep.lambda_grid", list(lambda_grid));
  std::string modes;
  for (std::size_t i = 0; i < sweep_modes.size(); ++i) {
    modes += (i ? ", " : "") + std::string(to_string(sweep_modes[i]));
  }
  line("sweep.modes", modes);
  line("ablate.lambda_grid", list(ablate_lambda_grid));
  std::string mults;
  for (std::size_t i = 0; i < weight_multipliers.size(); ++i) {
    mults += (i ? ", " : "") + fmt(weight_multipliers[i].first) + ":" + fmt(weight_multipliers[i].second);
  }
  line("ablate.weight_multipliers", mults);
  return out.str();
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(canonical())); }

ExperimentConfig experiment_config_from(const KeyValues& kv, Command command) {
  ExperimentConfig c;
  KeyReader r(kv);

  const std::string& source = r.require("data.source");
  if (source == "csv") {
    c.source = ExperimentConfig::Source::kCsv;
    c.papers_csv = r.require("data.papers");
    c.authors_csv = r.require("data.authors");
  } else if (source == "synthetic") {
    c.source = ExperimentConfig::Source::kSynthetic;
    c.synthetic = synthetic_spec_from(kv, "synth.");
    r.mark_prefix("synth.");
    if (const auto* v = r.get("data.seed")) c.synthetic_seed = parse_seed("data.seed", *v);
  } else {
    throw ValidationError("config key 'data.source' must be 'csv' or 'synthetic', got '" + source + "'");
  }

  if (const auto* v = r.get("seed")) c.seed = parse_seed("seed", *v);
  if (const auto* v = r.get("n_runs")) c.n_runs = parse_positive("n_runs", *v);
  if (const auto* v = r.get("n_accepted")) c.n_accepted = parse_positive("n_accepted", *v);
  if (const auto* v = r.get("split_ratio")) c.split_ratio = parse_double("split_ratio", *v);
  if (const auto* v = r.get("jobs")) c.jobs = parse_positive("jobs", *v);

  auto& t = c.train;
  if (const auto* v = r.get("train.epochs")) t.epochs = parse_positive("train.epochs", *v);
  if (const auto* v = r.get("train.batch_size")) t.batch_size = parse_positive("train.batch_size", *v);
  if (const auto* v = r.get("train.learning_rate")) t.learning_rate = parse_double("train.learning_rate", *v);
  if (const auto* v = r.get("train.patience")) t.patience = parse_positive("train.patience", *v);
  if (const auto* v = r.get("train.min_delta")) t.min_delta = parse_double("train.min_delta", *v);
  if (const auto* v = r.get("train.hidden1")) t.hidden1 = parse_positive("train.hidden1", *v);
  if (const auto* v = r.get("train.hidden2")) t.hidden2 = parse_positive("train.hidden2", *v);
  if (const auto* v = r.get("train.degenerate_batch_policy")) t.degenerate_batch_policy = parse_degenerate_policy(*v);

  auto& f = t.fairness;
  if (command == Command::kRun) {
    f.mode = parse_fairness_mode(r.require("fairness.mode"));
    f.lambda = parse_double("fairness.lambda", r.require("fairness.lambda"));
  } else {
    if (const auto* v = r.get("fairness.mode")) f.mode = parse_fairness_mode(*v);
    if (const auto* v = r.get("fairness.lambda")) f.lambda = parse_double("fairness.lambda", *v);
  }
  if (const auto* v = r.get("fairness.w_race")) f.w_race = parse_double("fairness.w_race", *v);
  if (const auto* v = r.get("fairness.w_country")) f.w_country = parse_double("fairness.w_country", *v);

  auto grid = [&](const std::string& key, std::vector<double>& out) {
    const auto* v = r.get(key);
    if (!v) return;
    out.clear();
    for (const auto& item : split_list(*v)) out.push_back(parse_double(key, item));
  };
  grid("sweep.lambda_grid", c.lambda_grid);
  grid("ablate.lambda_grid", c.ablate_lambda_grid);
  if (const auto* v = r.get("sweep.modes")) {
    c.sweep_modes.clear();
    for (const auto& item : split_list(*v)) {
      const FairnessMode m = parse_fairness_mode(item);
      if (m == FairnessMode::kCombined) throw ValidationError("sweep.modes: only single-attribute modes sweep");
      c.sweep_modes.push_back(m);
    }
  }
  if (const auto* v = r.get("ablate.weight_multipliers")) {
    c.weight_multipliers.clear();
    for (const auto& item : split_list(*v)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw ValidationError("ablate.weight_multipliers: expected 'race:country', got '" + item + "'");
      }
      c.weight_multipliers.emplace_back(parse_double("ablate.weight_multipliers", trim(item.substr(0, colon))),
                                        parse_double("ablate.weight_multipliers", trim(item.substr(colon + 1))));
    }
  }
  r.reject_unknown();

  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) throw ValidationError("split_ratio must lie in (0, 1)");
  if (t.learning_rate <= 0.0) throw ValidationError("train.learning_rate must be positive");
  if (t.min_delta < 0.0) throw ValidationError("train.min_delta must be non-negative");
  if (t.patience > t.epochs) throw ValidationError("train.patience must not exceed train.epochs");
  f.validate();
  if (command == Command::kSweep && (c.lambda_grid.empty() || c.sweep_modes.empty())) {
    throw ValidationError("sweep grid is empty");
  }
  if (command == Command::kAblate && (c.ablate_lambda_grid.empty() || c.weight_multipliers.empty())) {
    throw ValidationError("ablation grid is empty");
  }
  for (double l : command == Command::kAblate ? c.ablate_lambda_grid : c.lambda_grid) {
    if (l < 0.0) throw ValidationError("lambda grid values must be non-negative");
  }
  for (const auto& [a, b] : c.weight_multipliers) {
    if (a < 0.0 || b < 0.0) throw ValidationError("weight multipliers must be non-negative");
  }
  return c;
}

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData d;
  d.dataset = stage("load", [&] {
    if (config.source == ExperimentConfig::Source::kCsv) return load_csv(config.papers_csv, config.authors_csv);
    return generate_synthetic(config.synthetic, config.synthetic_seed.value_or(config.seed));
  });
  stage("preprocess", [&] {
    if (config.n_accepted > d.dataset.papers.size()) {
      throw ValidationError("n_accepted (" + std::to_string(config.n_accepted) + ") exceeds dataset size (" +
                            std::to_string(d.dataset.papers.size()) + ")");
    }
    d.weights = CareerWeights::from_distribution(d.dataset.papers);
    d.all = preprocess(d.dataset, {ProtectedAttr::kRace, ProtectedAttr::kCountry});
    auto [train, validation] = stratified_split(d.all, config.split_ratio, config.seed);
    d.train = std::move(train);
    d.validation = std::move(validation);
    config.train.validate(d.train.rows());
  });
  return d;
}

std::vector<SelectionResult> select_runs(const PreparedData& data, const std::vector<TrainResult>& runs,
                                         std::size_t n_accepted) {
  std::vector<SelectionResult> out;
  out.reserve(runs.size());
  for (const auto& run : runs) out.push_back(select_top(score_all(run.model, data.all), n_accepted));
  return out;
}

BaselineRuns run_baseline(const PreparedData& data, const ExperimentConfig& config) {
  BaselineRuns b;
  TrainConfig tc = config.train;
  tc.fairness.lambda = 0.0;
  tc.seed = config.seed;
  b.runs = stage("baseline training", [&] {
    return run_repeated(data.train, data.validation, tc, config.n_runs, config.jobs);
  });
  b.selections = stage("baseline selection", [&] { return select_runs(data, b.runs, config.n_accepted); });
  return b;
}

namespace {

GainReport evaluate_cell(const PreparedData& data, const ExperimentConfig& config, const FairnessConfig& fairness,
                         const BaselineRuns& baseline, const std::optional<fs::path>& run_dir) {
  {
    fairness.validate();
    TrainConfig tc = config.train;
    tc.fairness = fairness;
    tc.seed = config.seed;
    const auto runs =
        stage("training", [&] { return run_repeated(data.train, data.validation, tc, config.n_runs, config.jobs); });
    const auto selections = stage("selection", [&] { return select_runs(data, runs, config.n_accepted); });
    if (baseline.selections.size() != selections.size()) {
      throw ValidationError("baseline has " + std::to_string(baseline.selections.size()) + " runs, cell has " +
                            std::to_string(selections.size()));
    }
    std::vector<RunGains> gains;
    stage("metrics", [&] {
      for (std::size_t i = 0; i < selections.size(); ++i) {
        const auto sel = gather(data.dataset, selections[i].selected);
        const auto base = gather(data.dataset, baseline.selections[i].selected);
        gains.push_back(compute_gains(sel, base, data.weights, fairness.mode));
      }
    });
    const GainReport report = aggregate_report(std::string(kBaselineDescriptor), fairness, std::move(gains));

    if (run_dir) {
      stage("write", [&] {
        ensure_dir(*run_dir);
        ExperimentConfig effective = config;
        effective.train.fairness = fairness;
        auto manifest = base_manifest(effective, "run");
        manifest["fairness"] = {{"mode", to_string(fairness.mode)},
                                {"lambda", fairness.lambda},
                                {"w_race", fairness.w_race},
                                {"w_country", fairness.w_country}};
        manifest["career_weights"] = nlohmann::ordered_json::object();
        for (CareerStage s : kCareerStages) manifest["career_weights"][std::string(to_string(s))] = data.weights[s];
        manifest["dataset"] = {{"papers", data.dataset.papers.size()},
                               {"train_rows", data.train.rows()},
                               {"validation_rows", data.validation.rows()},
                               {"feature_columns", data.all.column_names},
                               {"warnings", data.all.warnings}};
        write_text(*run_dir / "manifest.json", dump(manifest));
        for (std::size_t i = 0; i < runs.size(); ++i) {
          char name[16];
          std::snprintf(name, sizeof name, "run_%02zu", i);
          const fs::path dir = *run_dir / name;
          ensure_dir(dir);
          write_text(dir / "checkpoint.json",
                     dump(checkpoint_to_json(runs[i].model, &runs[i].optimizer, runs[i].seed, effective.hash())));
          write_text(dir / "history.json", dump(history_to_json(runs[i].history)));
          const auto audit = audit_parity(selections[i], data.dataset);
          write_text(dir / "selection.json", dump(selection_to_json(selections[i], &audit)));
          write_text(dir / "baseline_selection.json", dump(selection_to_json(baseline.selections[i], nullptr)));
        }
        write_text(*run_dir / "report.json", dump(report_to_json(report)));
      });
    }
    return report;
  }
}

}  // namespace

CellOutcome run_cell(const PreparedData& data, const ExperimentConfig& config, const FairnessConfig& fairness,
                     const BaselineRuns& baseline, const std::optional<fs::path>& run_dir) {
  CellOutcome cell;
  cell.fairness = fairness;
  try {
    cell.report = evaluate_cell(data, config, fairness, baseline, run_dir);
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

std::vector<SweepRow> sweep_rows(const std::vector<CellOutcome>& cells) {
  std::vector<SweepRow> rows;
  for (const auto& cell : cells) {
    SweepRow row;
    row.lambda = cell.fairness.lambda;
    row.attr = cell.fairness.mode == FairnessMode::kCountryOnly ? ProtectedAttr::kCountry : ProtectedAttr::kRace;
    row.error = cell.error;
    if (cell.report) {
      const auto a = static_cast<std::size_t>(row.attr);
      row.macro = cell.report->macro[a];
      row.micro = cell.report->micro[a];
      row.utility = cell.report->utility_gain;
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<AblationRow> ablation_rows(const std::vector<CellOutcome>& cells) {
  std::vector<AblationRow> rows;
  for (const auto& cell : cells) {
    AblationRow row;
    row.lambda = cell.fairness.lambda;
    row.w_race = cell.fairness.w_race;
    row.w_country = cell.fairness.w_country;
    row.error = cell.error;
    if (cell.report) {
      row.macro = cell.report->macro;
      row.micro = cell.report->micro;
      row.utility = cell.report->utility_gain;
      row.diversity = cell.report->diversity_gain;
      row.f_measure = cell.report->f_measure_of_means;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "lambda,attr,macro_gain,macro_std,micro_gain,micro_std,utility_gain,utility_std\n";
  for (const auto& r : rows) {
    out += fmt(r.lambda) + "," + std::string(to_string(r.attr)) + "," + fmt(r.macro.mean) + "," +
           fmt(r.macro.std) + "," + fmt(r.micro.mean) + "," + fmt(r.micro.std) + "," + fmt(r.utility.mean) +
           "," + fmt(r.utility.std) + "\n";
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "lambda,w_race,w_country,race_macro_gain,race_macro_std,race_micro_gain,race_micro_std,"
      "country_macro_gain,country_macro_std,country_micro_gain,country_micro_std,"
      "diversity_gain,diversity_std,utility_gain,utility_std,f_measure\n";
  for (const auto& r : rows) {
    out += fmt(r.lambda) + "," + fmt(r.w_race) + "," + fmt(r.w_country);
    for (std::size_t a = 0; a < 2; ++a) {
      out += "," + fmt(r.macro[a].mean) + "," + fmt(r.macro[a].std) + "," + fmt(r.micro[a].mean) + "," +
             fmt(r.micro[a].std);
    }
    out += "," + fmt(r.diversity.mean) + "," + fmt(r.diversity.std) + "," + fmt(r.utility.mean) + "," +
           fmt(r.utility.std) + "," + fmt(r.f_measure) + "\n";
  }
  return out;
}

nlohmann::ordered_json sweep_json(const std::vector<SweepRow>& rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["lambda"] = r.lambda;
    j["attr"] = to_string(r.attr);
    j["macro_gain"] = summary_json(r.macro);
    j["micro_gain"] = summary_json(r.micro);
    j["utility_gain"] = summary_json(r.utility);
    j["error"] = r.error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.error);
    out.push_back(j);
  }
  return out;
}

nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["lambda"] = r.lambda;
    j["w_race"] = r.w_race;
    j["w_country"] = r.w_country;
    for (ProtectedAttr attr : kProtectedAttrs) {
      const auto a = static_cast<std::size_t>(attr);
      j[std::string(to_string(attr))] = {{"macro_gain", summary_json(r.macro[a])},
                                         {"micro_gain", summary_json(r.micro[a])}};
    }
    j["diversity_gain"] = summary_json(r.diversity);
    j["utility_gain"] = summary_json(r.utility);
    j["f_measure"] = r.f_measure ? nlohmann::ordered_json(*r.f_measure) : nlohmann::ordered_json(nullptr);
    j["error"] = r.error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.error);
    out.push_back(j);
  }
  return out;
}

std::map<std::string, std::string> sweep_plots(const std::vector<SweepRow>& rows) {
  auto series = [&](ProtectedAttr attr, const std::string& name, auto getter) {
    PlotSeries s;
    s.name = name;
    for (const auto& r : rows) {
      if (r.attr != attr) continue;
      const Summary& sum = getter(r);
      s.x.push_back(r.lambda);
      s.y.push_back(sum.mean.value_or(std::nan("")));
      s.err.push_back(sum.std.value_or(0.0));
    }
    return s;
  };
  auto macro = [](const SweepRow& r) -> const Summary& { return r.macro; };
  auto micro = [](const SweepRow& r) -> const Summary& { return r.micro; };
  auto util = [](const SweepRow& r) -> const Summary& { return r.utility; };

  std::map<std::string, std::string> plots;
  for (ProtectedAttr attr : kProtectedAttrs) {
    const std::string a(to_string(attr));
    LinePlot p;
    p.title = "Gain vs lambda (" + a + "-only training)";
    p.x_label = "lambda";
    p.y_label = "gain (%)";
    p.series = {series(attr, "macro gain", macro), series(attr, "micro gain", micro)};
    if (!p.series[0].x.empty()) plots["gain_" + a + ".svg"] = render_svg(p);
  }
  LinePlot u;
  u.title = "Utility gain vs lambda";
  u.x_label = "lambda";
  u.y_label = "utility gain (%)";
  for (ProtectedAttr attr : kProtectedAttrs) {
    auto s = series(attr, std::string(to_string(attr)) + "-only", util);
    if (!s.x.empty()) u.series.push_back(std::move(s));
  }
  plots["utility.svg"] = render_svg(u);
  return plots;
}

void cmd_synth(const std::optional<fs::path>& spec_path, std::uint64_t seed, const fs::path& out_dir) {
  const SyntheticSpec spec = spec_path ? synthetic_spec_from(read_key_values(*spec_path)) : SyntheticSpec{};
  spec.validate();
  const Dataset ds = generate_synthetic(spec, seed);
  ensure_dir(out_dir);
  write_csv(ds, out_dir / "papers.csv", out_dir / "authors.csv");
  nlohmann::ordered_json manifest;
  manifest["software_version"] = software_version();
  manifest["command"] = "synth";
  manifest["seed"] = seed;
  manifest["spec"] = spec_to_json(spec);
  manifest["spec_hash"] = hex64(fnv1a(spec_to_json(spec).dump()));
  manifest["n_papers"] = ds.papers.size();
  write_text(out_dir / "manifest.json", dump(manifest));
}

namespace {

void write_report_table(const GainReport& report, const fs::path& out_dir, OutputFormat format) {
  if (format == OutputFormat::kJson) return;  // report.json already holds everything
  std::string csv = "metric,attr,mean,std,n\n";
  auto row = [&](const std::string& metric, const std::string& attr, const Summary& s) {
    csv += metric + "," + attr + "," + fmt(s.mean) + "," + fmt(s.std) + "," + std::to_string(s.n) + "\n";
  };
  for (ProtectedAttr attr : kProtectedAttrs) {
    const auto a = static_cast<std::size_t>(attr);
    row("macro_gain", std::string(to_string(attr)), report.macro[a]);
    row("micro_gain", std::string(to_string(attr)), report.micro[a]);
  }
  row("diversity_gain", "", report.diversity_gain);
  row("utility_gain", "", report.utility_gain);
  row("f_measure", "", report.f_measure);
  for (Conference c : kConferences) {
    row("conference_share", std::string(to_string(c)), report.conference_distribution[index_of(c)]);
  }
  write_text(out_dir / "report.csv", csv);
}

void write_grid_outputs(Command command, const std::vector<CellOutcome>& cells, const fs::path& out_dir,
                        OutputFormat format) {
  std::string errors;
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      errors += csv::escape(cell_name(c.fairness)) + "," + csv::escape(c.error) + "\n";
    }
  }
  const std::string stem = command == Command::kSweep ? "sweep" : "ablation";
  if (command == Command::kSweep) {
    const auto rows = sweep_rows(cells);
    if (format == OutputFormat::kJson) {
      write_text(out_dir / "sweep.json", dump(sweep_json(rows)));
    } else {
      write_text(out_dir / "sweep.csv", sweep_csv(rows));
    }
    for (const auto& [name, svg] : sweep_plots(rows)) write_text(out_dir / name, svg);
  } else {
    const auto rows = ablation_rows(cells);
    if (format == OutputFormat::kJson) {
      write_text(out_dir / "ablation.json", dump(ablation_json(rows)));
    } else {
      write_text(out_dir / "ablation.csv", ablation_csv(rows));
    }
  }
  const fs::path err_path = out_dir / (stem + "_errors.csv");
  if (errors.empty()) {
    std::error_code ec;
    fs::remove(err_path, ec);
  } else {
    write_text(err_path, "cell,error\n" + errors);
  }
}

std::vector<CellOutcome> run_grid(const ExperimentConfig& config, Command command,
                                  const std::vector<FairnessConfig>& grid, const fs::path& out_dir) {
  ensure_dir(out_dir);
  const PreparedData data = prepare_data(config);
  const BaselineRuns baseline = run_baseline(data, config);

  // Cells run in parallel; each uses a single training thread so the total
  // stays within --jobs.
  ExperimentConfig cell_config = config;
  cell_config.jobs = 1;
  std::vector<CellOutcome> cells(grid.size());
  parallel_for(grid.size(), config.jobs, [&](std::size_t i) {
    cells[i] = run_cell(data, cell_config, grid[i], baseline, out_dir / "cells" / cell_name(grid[i]));
  });

  auto manifest = base_manifest(config, command == Command::kSweep ? "sweep" : "ablate");
  manifest["format"] = format_name(config.format);
  auto& list = manifest["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    list.push_back({{"dir", "cells/" + cell_name(c.fairness)},
                    {"mode", to_string(c.fairness.mode)},
                    {"lambda", c.fairness.lambda},
                    {"w_race", c.fairness.w_race},
                    {"w_country", c.fairness.w_country},
                    {"error", c.error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(c.error)}});
  }
  write_text(out_dir / "manifest.json", dump(manifest));
  write_grid_outputs(command, cells, out_dir, config.format);
  return cells;
}

}  // namespace

GainReport cmd_run(const ExperimentConfig& config, const fs::path& out_dir) {
  const PreparedData data = prepare_data(config);
  const BaselineRuns baseline = run_baseline(data, config);
  const GainReport report = evaluate_cell(data, config, config.train.fairness, baseline, out_dir);
  write_report_table(report, out_dir, config.format);
  return report;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, const fs::path& out_dir) {
  std::vector<FairnessConfig> grid;
  for (double lambda : config.lambda_grid) {
    for (FairnessMode mode : config.sweep_modes) {
      FairnessConfig f = config.train.fairness;
      f.mode = mode;
      f.lambda = lambda;
      grid.push_back(f);
    }
  }
  return sweep_rows(run_grid(config, Command::kSweep, grid, out_dir));
}

std::vector<AblationRow> cmd_ablate(const ExperimentConfig& config, const fs::path& out_dir) {
  std::vector<FairnessConfig> grid;
  for (double lambda : config.ablate_lambda_grid) {
    for (const auto& [mr, mc] : config.weight_multipliers) {
      FairnessConfig f = config.train.fairness;
      f.mode = FairnessMode::kCombined;
      f.lambda = lambda;
      f.w_race *= mr;
      f.w_country *= mc;
      grid.push_back(f);
    }
  }
  return ablation_rows(run_grid(config, Command::kAblate, grid, out_dir));
}

void cmd_report(const fs::path& out_dir, OutputFormat format) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(out_dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest: " + std::string(e.what()));
  }
  const std::string command = manifest.value("command", "");
  if (command == "run") {
    const GainReport report = report_from_json(nlohmann::json::parse(read_text(out_dir / "report.json")));
    write_report_table(report, out_dir, format);
    return;
  }
  if (command != "sweep" && command != "ablate") {
    throw ValidationError("report: " + out_dir.string() + " is not a run, sweep or ablate directory");
  }
  std::vector<CellOutcome> cells;
  try {
    for (const auto& entry : manifest.at("cells")) {
      CellOutcome c;
      c.fairness.mode = parse_fairness_mode(entry.at("mode").get<std::string>());
      c.fairness.lambda = entry.at("lambda").get<double>();
      c.fairness.w_race = entry.at("w_race").get<double>();
      c.fairness.w_country = entry.at("w_country").get<double>();
      if (!entry.at("error").is_null()) {
        c.error = entry.at("error").get<std::string>();
      } else {
        const fs::path report = out_dir / entry.at("dir").get<std::string>() / "report.json";
        c.report = report_from_json(nlohmann::json::parse(read_text(report)));
      }
      cells.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest: " + std::string(e.what()));
  }
  write_grid_outputs(command == "sweep" ? Command::kSweep : Command::kAblate, cells, out_dir, format);
}

}  // namespace fairsel
