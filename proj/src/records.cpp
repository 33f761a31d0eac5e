#include "fairsel/records.hpp"

#include <algorithm>
#include <cctype>

#include "fairsel/errors.hpp"

namespace fairsel {
namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view s, const std::array<Enum, N>& values) {
  for (Enum v : values) {
    if (iequals(s, to_string(v))) return v;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Gender g) { return g == Gender::kMale ? "male" : "female"; }

std::string_view to_string(Race r) {
  switch (r) {
    case Race::kWhite: return "White";
    case Race::kAsian: return "Asian";
    case Race::kHispanic: return "Hispanic";
    case Race::kBlack: return "Black";
  }
  return "?";
}

std::string_view to_string(CountryClass c) {
  return c == CountryClass::kDeveloped ? "developed" : "underdeveloped";
}

std::string_view to_string(CareerStage s) {
  switch (s) {
    case CareerStage::kProfessor: return "Professor";
    case CareerStage::kAssociateProfessor: return "AssociateProfessor";
    case CareerStage::kLecturer: return "Lecturer";
    case CareerStage::kPostDoc: return "PostDoc";
    case CareerStage::kGradStudent: return "GradStudent";
  }
  return "?";
}

std::string_view to_string(Conference c) {
  switch (c) {
    case Conference::kIUI: return "IUI";
    case Conference::kDIS: return "DIS";
    case Conference::kSIGCHI: return "SIGCHI";
  }
  return "?";
}

std::string_view to_string(ProtectedAttr a) { return a == ProtectedAttr::kRace ? "race" : "country"; }

std::optional<Gender> parse_gender(std::string_view s) {
  return parse_enum(s, std::array{Gender::kMale, Gender::kFemale});
}
std::optional<Race> parse_race(std::string_view s) { return parse_enum(s, kRaces); }
std::optional<CountryClass> parse_country_class(std::string_view s) {
  return parse_enum(s, std::array{CountryClass::kDeveloped, CountryClass::kUnderdeveloped});
}
std::optional<CareerStage> parse_career_stage(std::string_view s) {
  return parse_enum(s, kCareerStages);
}
std::optional<Conference> parse_conference(std::string_view s) { return parse_enum(s, kConferences); }
std::optional<ProtectedAttr> parse_protected_attr(std::string_view s) {
  return parse_enum(s, kProtectedAttrs);
}

bool AuthorRecord::is_protected(ProtectedAttr attr) const {
  return attr == ProtectedAttr::kRace ? fairsel::is_protected(race)
                                      : fairsel::is_protected(country_class);
}

bool PaperRecord::is_protected(ProtectedAttr attr) const {
  return std::any_of(authors.begin(), authors.end(),
                     [attr](const AuthorRecord& a) { return a.is_protected(attr); });
}

const PaperRecord* Dataset::find(std::string_view paper_id) const {
  for (const auto& p : papers) {
    if (p.paper_id == paper_id) return &p;
  }
  return nullptr;
}

void CareerWeights::validate() const {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (!(weight[i] > 0.0 && weight[i] <= 1.0)) {
      throw ValidationError("career weight for " + std::string(to_string(kCareerStages[i])) +
                            " must lie in (0, 1]");
    }
  }
}

CareerWeights CareerWeights::explicit_weights(const std::array<double, 5>& w) {
  CareerWeights cw;
  cw.weight = w;
  cw.source = Source::kExplicit;
  cw.validate();
  return cw;
}

CareerWeights CareerWeights::from_distribution(std::span<const PaperRecord> papers) {
  std::array<std::size_t, 5> counts{};
  std::size_t total = 0;
  for (const auto& p : papers) {
    for (const auto& a : p.authors) {
      ++counts[index_of(a.career_stage)];
      ++total;
    }
  }
  if (total == 0) throw ValidationError("career weights need at least one author");
  CareerWeights cw;
  cw.source = Source::kDatasetDistribution;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    cw.weight[i] = counts[i] > 0 ? static_cast<double>(counts[i]) / static_cast<double>(total)
                                 : 1.0 / static_cast<double>(total + 1);
  }
  return cw;
}

double aggregate_paper_h_index(const PaperRecord& paper, const CareerWeights& weights) {
  if (paper.authors.empty()) throw ValidationError("paper without authors: " + paper.paper_id);
  double sum = 0.0;
  for (const auto& a : paper.authors) sum += weights[a.career_stage] * a.h_index;
  return sum / static_cast<double>(paper.authors.size());
}

void assign_paper_h_index(Dataset& dataset) {
  const CareerWeights weights = CareerWeights::from_distribution(dataset.papers);
  for (auto& p : dataset.papers) p.paper_h_index = aggregate_paper_h_index(p, weights);
}

}  // namespace fairsel
