#include "fairsel/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "fairsel/csv.hpp"
#include "fairsel/errors.hpp"
#include "fairsel/random.hpp"

namespace fairsel {
namespace {

std::string join_header(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += fields[i];
  }
  return out;
}

std::string where(const std::string& file, const csv::Row& row) {
  return file + " line " + std::to_string(row.line);
}

std::vector<csv::Row> read_table(const std::filesystem::path& path, std::string_view header) {
  if (!std::filesystem::exists(path)) throw ValidationError("missing file: " + path.string());
  auto rows = csv::read_file(path.string());
  if (rows.empty()) throw ValidationError(path.string() + ": empty file, expected header");
  if (join_header(rows.front().fields) != header) {
    throw ValidationError(path.string() + " line 1: expected header '" + std::string(header) + "'");
  }
  const std::size_t width = rows.front().fields.size();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].fields.size() != width) {
      throw ValidationError(where(path.string(), rows[i]) + ": malformed row, expected " +
                            std::to_string(width) + " fields, got " +
                            std::to_string(rows[i].fields.size()));
    }
  }
  rows.erase(rows.begin());
  return rows;
}

template <typename T>
T parse_enum_field(const std::optional<T>& parsed, const std::string& file, const csv::Row& row,
                   std::string_view column, const std::string& raw) {
  if (!parsed) {
    throw ValidationError(where(file, row) + ", column '" + std::string(column) + "': unknown " +
                          std::string(column) + " code '" + raw + "'");
  }
  return *parsed;
}

int parse_int_field(const std::string& file, const csv::Row& row, std::string_view column,
                    const std::string& raw) {
  int value = 0;
  const auto* end = raw.data() + raw.size();
  auto [ptr, ec] = std::from_chars(raw.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError(where(file, row) + ", column '" + std::string(column) +
                          "': malformed integer '" + raw + "'");
  }
  return value;
}

// Encoded columns for one paper, before normalization.
struct ColumnLayout {
  bool race_features = false;
  bool country_features = false;

  std::vector<std::string> names() const {
    std::vector<std::string> n = {"gender_female_share"};
    for (CareerStage s : kCareerStages) n.push_back("stage_share_" + std::string(to_string(s)));
    for (Conference c : kConferences) n.push_back("conference_" + std::string(to_string(c)));
    if (race_features) {
      for (Race r : kRaces) n.push_back("race_share_" + std::string(to_string(r)));
    }
    if (country_features) n.push_back("country_underdeveloped_share");
    n.push_back("paper_h_index");
    return n;
  }

  std::vector<double> encode(const PaperRecord& p) const {
    const double n_authors = static_cast<double>(p.authors.size());
    std::vector<double> row;
    double female = 0.0;
    std::array<double, 5> stage{};
    std::array<double, 4> race{};
    double underdeveloped = 0.0;
    for (const auto& a : p.authors) {
      if (a.gender == Gender::kFemale) female += 1.0;
      stage[index_of(a.career_stage)] += 1.0;
      race[static_cast<std::size_t>(a.race)] += 1.0;
      if (a.country_class == CountryClass::kUnderdeveloped) underdeveloped += 1.0;
    }
    row.push_back(female / n_authors);
    for (double s : stage) row.push_back(s / n_authors);
    for (Conference c : kConferences) row.push_back(p.conference == c ? 1.0 : 0.0);
    if (race_features) {
      for (double r : race) row.push_back(r / n_authors);
    }
    if (country_features) row.push_back(underdeveloped / n_authors);
    row.push_back(p.paper_h_index);
    return row;
  }
};

ColumnLayout layout_for(const std::set<ProtectedAttr>& protected_attrs) {
  ColumnLayout layout;
  layout.race_features = !protected_attrs.contains(ProtectedAttr::kRace);
  layout.country_features = !protected_attrs.contains(ProtectedAttr::kCountry);
  return layout;
}

FeatureMatrix encode(const Dataset& dataset, const ColumnLayout& layout) {
  if (dataset.papers.empty()) throw ValidationError("preprocess: dataset is empty");
  FeatureMatrix fm;
  fm.column_names = layout.names();
  const auto n = dataset.papers.size();
  fm.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(fm.cols()));
  fm.labels.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = dataset.papers[i];
    if (p.authors.empty()) throw ValidationError("paper without authors: " + p.paper_id);
    const auto row = layout.encode(p);
    for (std::size_t j = 0; j < row.size(); ++j) {
      fm.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    fm.labels(static_cast<Eigen::Index>(i)) = p.label;
    fm.paper_ids.push_back(p.paper_id);
    fm.race_mask.push_back(p.is_protected(ProtectedAttr::kRace));
    fm.country_mask.push_back(p.is_protected(ProtectedAttr::kCountry));
  }
  return fm;
}

void apply_ranges(FeatureMatrix& fm) {
  for (Eigen::Index j = 0; j < fm.features.cols(); ++j) {
    const auto& range = fm.normalization[static_cast<std::size_t>(j)];
    const double span = range.max - range.min;
    for (Eigen::Index i = 0; i < fm.features.rows(); ++i) {
      double& v = fm.features(i, j);
      v = span > 0.0 ? (v - range.min) / span : 0.0;
    }
  }
}

}  // namespace

void validate(const Dataset& dataset) {
  std::unordered_set<std::string> seen;
  for (const auto& p : dataset.papers) {
    if (!seen.insert(p.paper_id).second) throw ValidationError("duplicate paper_id: " + p.paper_id);
    if (p.authors.empty()) throw ValidationError("paper without authors: " + p.paper_id);
    if (p.label != 0 && p.label != 1) {
      throw ValidationError("paper " + p.paper_id + ": label must be 0 or 1");
    }
    for (const auto& a : p.authors) {
      if (a.h_index < 0) {
        throw ValidationError("paper " + p.paper_id + ", author " + a.author_id +
                              ": h_index must be non-negative");
      }
    }
  }
}

Dataset load_csv(const std::filesystem::path& papers_path,
                 const std::filesystem::path& authors_path) {
  const std::string papers_file = papers_path.string();
  const std::string authors_file = authors_path.string();
  const auto paper_rows = read_table(papers_path, kPapersHeader);
  const auto author_rows = read_table(authors_path, kAuthorsHeader);

  Dataset dataset;
  dataset.provenance = Provenance::kCsv;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& row : paper_rows) {
    const auto& f = row.fields;
    PaperRecord p;
    p.paper_id = f[0];
    if (p.paper_id.empty()) throw ValidationError(where(papers_file, row) + ": empty paper_id");
    p.title = f[1];
    p.conference = parse_enum_field(parse_conference(f[2]), papers_file, row, "conference", f[2]);
    if (f[3] != "0" && f[3] != "1") {
      throw ValidationError(where(papers_file, row) + ", column 'label': expected 0 or 1, got '" +
                            f[3] + "'");
    }
    p.label = f[3] == "1" ? 1 : 0;
    if (!index.emplace(p.paper_id, dataset.papers.size()).second) {
      throw ValidationError(where(papers_file, row) + ": duplicate paper_id " + p.paper_id);
    }
    dataset.papers.push_back(std::move(p));
  }

  for (const auto& row : author_rows) {
    const auto& f = row.fields;
    auto it = index.find(f[0]);
    if (it == index.end()) {
      throw ValidationError(where(authors_file, row) + ": author row references unknown paper '" +
                            f[0] + "'");
    }
    AuthorRecord a;
    a.author_id = f[1];
    a.gender = parse_enum_field(parse_gender(f[2]), authors_file, row, "gender", f[2]);
    a.race = parse_enum_field(parse_race(f[3]), authors_file, row, "race", f[3]);
    a.country_class =
        parse_enum_field(parse_country_class(f[4]), authors_file, row, "country_class", f[4]);
    a.career_stage =
        parse_enum_field(parse_career_stage(f[5]), authors_file, row, "career_stage", f[5]);
    a.h_index = parse_int_field(authors_file, row, "h_index", f[6]);
    if (a.h_index < 0) {
      throw ValidationError(where(authors_file, row) + ", column 'h_index': must be non-negative");
    }
    dataset.papers[it->second].authors.push_back(std::move(a));
  }

  for (const auto& p : dataset.papers) {
    if (p.authors.empty()) throw ValidationError("paper without authors: " + p.paper_id);
  }
  assign_paper_h_index(dataset);
  return dataset;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& papers_path,
               const std::filesystem::path& authors_path) {
  validate(dataset);
  std::ofstream papers(papers_path, std::ios::binary);
  std::ofstream authors(authors_path, std::ios::binary);
  if (!papers) throw ValidationError("cannot write " + papers_path.string());
  if (!authors) throw ValidationError("cannot write " + authors_path.string());
  papers << kPapersHeader << '\n';
  authors << kAuthorsHeader << '\n';
  for (const auto& p : dataset.papers) {
    csv::write_row(papers, {p.paper_id, p.title, std::string(to_string(p.conference)),
                            std::to_string(p.label)});
    for (const auto& a : p.authors) {
      csv::write_row(authors, {p.paper_id, a.author_id, std::string(to_string(a.gender)),
                               std::string(to_string(a.race)),
                               std::string(to_string(a.country_class)),
                               std::string(to_string(a.career_stage)), std::to_string(a.h_index)});
    }
  }
  if (!papers || !authors) throw ValidationError("write failed for dataset CSV files");
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.column_names = column_names;
  out.normalization = normalization;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    if (i >= this->rows()) throw ValidationError("FeatureMatrix::subset: row out of range");
    out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(i));
    out.labels(static_cast<Eigen::Index>(k)) = labels(static_cast<Eigen::Index>(i));
    out.paper_ids.push_back(paper_ids[i]);
    out.race_mask.push_back(race_mask[i]);
    out.country_mask.push_back(country_mask[i]);
  }
  return out;
}

FeatureMatrix preprocess(const Dataset& dataset, const std::set<ProtectedAttr>& protected_attrs) {
  const auto layout = layout_for(protected_attrs);
  FeatureMatrix fm = encode(dataset, layout);
  const auto h_col = fm.cols() - 1;
  for (std::size_t j = 0; j < fm.cols(); ++j) {
    if (j != h_col) {
      // Shares and one-hot indicators already live in [0, 1].
      fm.normalization.push_back({0.0, 1.0});
      continue;
    }
    const auto col = fm.features.col(static_cast<Eigen::Index>(j));
    ColumnRange range{col.minCoeff(), col.maxCoeff()};
    if (range.max == range.min) {
      fm.warnings.push_back("column '" + fm.column_names[j] +
                            "' is constant; normalized to 0.0");
    }
    fm.normalization.push_back(range);
  }
  apply_ranges(fm);
  return fm;
}

FeatureMatrix transform(const Dataset& dataset, const std::set<ProtectedAttr>& protected_attrs,
                        const std::vector<ColumnRange>& normalization) {
  FeatureMatrix fm = encode(dataset, layout_for(protected_attrs));
  if (normalization.size() != fm.cols()) {
    throw ValidationError("transform: normalization has " + std::to_string(normalization.size()) +
                          " columns, encoding has " + std::to_string(fm.cols()));
  }
  fm.normalization = normalization;
  apply_ranges(fm);
  return fm;
}

SplitIndices stratified_split_indices(const FeatureMatrix& fm, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0, 1)");
  const std::size_t n = fm.rows();
  if (n < 5) throw ValidationError("stratified split needs at least 5 rows");

  auto label_of = [&](std::size_t i) { return fm.labels(static_cast<Eigen::Index>(i)) > 0.5 ? 1 : 0; };
  // Joint cell key: label * 4 + race * 2 + country.
  std::map<int, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    const int key = label_of(i) * 4 + (fm.race_mask[i] ? 2 : 0) + (fm.country_mask[i] ? 1 : 0);
    cells[key].push_back(i);
  }
  // Keys >= 100 hold the label-only fallback pools.
  std::map<int, std::vector<std::size_t>> strata;
  for (auto& [key, members] : cells) {
    if (members.size() >= 2) {
      strata[key] = std::move(members);
    } else {
      auto& pool = strata[100 + key / 4];
      pool.insert(pool.end(), members.begin(), members.end());
    }
  }

  const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  struct Alloc {
    std::vector<std::size_t>* members;
    std::size_t take;
    double remainder;
    std::size_t order;
  };
  std::vector<Alloc> allocs;
  std::size_t allotted = 0;
  std::size_t order = 0;
  for (auto& [key, members] : strata) {
    const double exact = ratio * static_cast<double>(members.size());
    const auto base = static_cast<std::size_t>(std::floor(exact));
    allocs.push_back({&members, base, exact - static_cast<double>(base), order++});
    allotted += base;
  }
  std::vector<Alloc*> by_remainder;
  for (auto& a : allocs) by_remainder.push_back(&a);
  std::stable_sort(by_remainder.begin(), by_remainder.end(), [](const Alloc* a, const Alloc* b) {
    return a->remainder > b->remainder;
  });
  for (std::size_t k = 0; allotted < target && k < by_remainder.size(); ++k) {
    if (by_remainder[k]->take < by_remainder[k]->members->size()) {
      ++by_remainder[k]->take;
      ++allotted;
    }
  }

  Rng rng = Rng::derive(seed, {0x5b11u});
  SplitIndices out;
  for (auto& a : allocs) {
    std::vector<std::size_t> members = *a.members;
    rng.shuffle(std::span<std::size_t>(members));
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<long>(a.take));
    out.validation.insert(out.validation.end(), members.begin() + static_cast<long>(a.take),
                          members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

std::pair<FeatureMatrix, FeatureMatrix> stratified_split(const FeatureMatrix& fm, double ratio,
                                                         std::uint64_t seed) {
  const auto idx = stratified_split_indices(fm, ratio, seed);
  return {fm.subset(idx.train), fm.subset(idx.validation)};
}

}  // namespace fairsel
