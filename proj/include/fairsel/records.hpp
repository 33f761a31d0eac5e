#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fairsel {

enum class Gender { kMale, kFemale };
enum class Race { kWhite, kAsian, kHispanic, kBlack };
enum class CountryClass { kDeveloped, kUnderdeveloped };
enum class CareerStage { kProfessor, kAssociateProfessor, kLecturer, kPostDoc, kGradStudent };
enum class Conference { kIUI, kDIS, kSIGCHI };
enum class ProtectedAttr { kRace, kCountry };

inline constexpr std::array<CareerStage, 5> kCareerStages = {
    CareerStage::kProfessor, CareerStage::kAssociateProfessor, CareerStage::kLecturer,
    CareerStage::kPostDoc, CareerStage::kGradStudent};
inline constexpr std::array<Conference, 3> kConferences = {Conference::kIUI, Conference::kDIS,
                                                           Conference::kSIGCHI};
inline constexpr std::array<Race, 4> kRaces = {Race::kWhite, Race::kAsian, Race::kHispanic,
                                               Race::kBlack};
inline constexpr std::array<ProtectedAttr, 2> kProtectedAttrs = {ProtectedAttr::kRace,
                                                                 ProtectedAttr::kCountry};

// Canonical spellings, as written to CSV.
std::string_view to_string(Gender g);
std::string_view to_string(Race r);
std::string_view to_string(CountryClass c);
std::string_view to_string(CareerStage s);
std::string_view to_string(Conference c);
std::string_view to_string(ProtectedAttr a);

// Case-insensitive parsers; std::nullopt for unknown codes.
std::optional<Gender> parse_gender(std::string_view s);
std::optional<Race> parse_race(std::string_view s);
std::optional<CountryClass> parse_country_class(std::string_view s);
std::optional<CareerStage> parse_career_stage(std::string_view s);
std::optional<Conference> parse_conference(std::string_view s);
std::optional<ProtectedAttr> parse_protected_attr(std::string_view s);

inline std::size_t index_of(CareerStage s) { return static_cast<std::size_t>(s); }
inline std::size_t index_of(Conference c) { return static_cast<std::size_t>(c); }

// Hispanic and Black authors form the race-protected group.
inline bool is_protected(Race r) { return r == Race::kHispanic || r == Race::kBlack; }
inline bool is_protected(CountryClass c) { return c == CountryClass::kUnderdeveloped; }

struct AuthorRecord {
  std::string author_id;
  Gender gender = Gender::kMale;
  Race race = Race::kWhite;
  CountryClass country_class = CountryClass::kDeveloped;
  CareerStage career_stage = CareerStage::kGradStudent;
  int h_index = 0;

  bool is_protected(ProtectedAttr attr) const;
  bool operator==(const AuthorRecord&) const = default;
};

struct PaperRecord {
  std::string paper_id;
  std::string title;
  std::vector<AuthorRecord> authors;
  Conference conference = Conference::kSIGCHI;
  int label = 0;
  // Mean career-stage-weighted author h-index; see aggregate_paper_h_index.
  double paper_h_index = 0.0;

  // Paper-level group membership: true when ANY author is in the group.
  bool is_protected(ProtectedAttr attr) const;
  bool operator==(const PaperRecord&) const = default;
};

enum class Provenance { kCsv, kSynthetic };

struct Dataset {
  std::vector<PaperRecord> papers;
  Provenance provenance = Provenance::kCsv;
  std::optional<std::uint64_t> seed;

  const PaperRecord* find(std::string_view paper_id) const;
};

// Career-stage weight table shared by the h-index aggregation and the utility
// metric.
struct CareerWeights {
  enum class Source { kDatasetDistribution, kExplicit };

  std::array<double, 5> weight{1.0, 1.0, 1.0, 1.0, 1.0};
  Source source = Source::kExplicit;

  double operator[](CareerStage s) const { return weight[index_of(s)]; }

  // Throws ValidationError unless every weight is in (0, 1].
  void validate() const;

  static CareerWeights explicit_weights(const std::array<double, 5>& w);
  // Each stage's weight is its share of all author rows in `papers`. Stages
  // with no authors get the smallest positive share 1/(n_authors + 1) so the
  // table stays strictly positive.
  static CareerWeights from_distribution(std::span<const PaperRecord> papers);
};

// Mean over the paper's authors of weight(career_stage) * h_index.
double aggregate_paper_h_index(const PaperRecord& paper, const CareerWeights& weights);

// Recomputes paper_h_index for every paper from the dataset's own career-stage
// distribution.
void assign_paper_h_index(Dataset& dataset);

}  // namespace fairsel
