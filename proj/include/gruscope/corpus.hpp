#pragma once

// Annotated sentences, vocabulary, target feature vectors and the synthetic
// scene/caption micro-world.
//
// Annotation file (UTF-8):
//   # id = <sentence id>
//   FORM<TAB>POS<TAB>DEPREL
//   ...
//   <blank line>
//
// Feature file: one line per sentence, "<id><TAB><float> <float> ...".

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gruscope/model.hpp"
#include "gruscope/numkernel.hpp"

namespace gruscope {

inline constexpr std::string_view kEndForm = "</s>";
inline constexpr std::string_view kEndPos = "EOS";
inline constexpr std::string_view kEndDeprel = "eos";
inline constexpr std::string_view kUnknownForm = "<unk>";

enum class PositionBin : std::uint8_t {
  kFirst,
  kSecond,
  kThird,
  kMiddle,
  kAntepenult,
  kPenult,
  kLast,
};

inline constexpr std::size_t kPositionBinCount = 7;
inline constexpr std::array<PositionBin, kPositionBinCount> kAllPositionBins = {
    PositionBin::kFirst,      PositionBin::kSecond, PositionBin::kThird,
    PositionBin::kMiddle,     PositionBin::kAntepenult, PositionBin::kPenult,
    PositionBin::kLast};

const char* to_string(PositionBin bin);
PositionBin parse_position_bin(std::string_view text);

// Bin of a content token. End-relative bins win on short sentences:
// last > penult > antepenult > first > second > third > middle.
// length counts content tokens only.
PositionBin position_bin(std::size_t index, std::size_t length);

struct Token {
  std::string form;
  std::string pos;
  std::string deprel;
  std::size_t index = 0;
  std::optional<PositionBin> position_bin;  // empty for the end marker
  bool is_end_marker() const { return !position_bin.has_value(); }
};

struct TokenFields {
  std::string form;
  std::string pos;
  std::string deprel;
};

struct AnnotatedSentence {
  std::string id;
  std::vector<Token> tokens;  // content tokens, then the end marker

  std::size_t content_size() const { return tokens.size() - 1; }
  std::span<const Token> content() const {
    return std::span<const Token>(tokens).first(content_size());
  }
};

// Appends the end marker and assigns indices and position bins.
AnnotatedSentence make_sentence(std::string id, std::span<const TokenFields> fields);

std::vector<AnnotatedSentence> parse_annotated(std::istream& in, const std::string& source);
std::vector<AnnotatedSentence> load_annotated(const std::filesystem::path& path);
void write_annotated(std::ostream& out, std::span<const AnnotatedSentence> sentences);

class Vocabulary {
 public:
  static constexpr TokenId kEnd = 0;
  static constexpr TokenId kUnknown = 1;

  // Forms seen at least min_count times get their own id, in sorted order
  // after the two reserved entries. The end marker is never counted.
  static Vocabulary build(std::span<const AnnotatedSentence> sentences,
                          std::size_t min_count);
  // Restores a vocabulary from its id-ordered forms (checkpoint manifest).
  static Vocabulary from_forms(std::vector<std::string> forms);

  TokenId id(std::string_view form) const;
  const std::string& form(TokenId id) const { return forms_.at(id); }
  std::size_t size() const { return forms_.size(); }
  const std::vector<std::string>& forms() const { return forms_; }

  // Content ids followed by kEnd.
  std::vector<TokenId> encode(const AnnotatedSentence& sentence) const;

  bool operator==(const Vocabulary& other) const { return forms_ == other.forms_; }

 private:
  std::vector<std::string> forms_;
  std::unordered_map<std::string, TokenId> index_;
};

struct FeatureTable {
  std::vector<std::string> ids;
  Matrix values;  // one row per id

  std::optional<std::size_t> find(std::string_view id) const;
  std::span<const double> row(std::string_view id) const;
  std::size_t dim() const { return values.cols(); }
};

// known_ids empty: accept any id. Otherwise every line's id must be known.
FeatureTable parse_features(std::istream& in, const std::string& source,
                            std::span<const std::string> known_ids = {});
FeatureTable load_features(const std::filesystem::path& path,
                           std::span<const std::string> known_ids = {});
void write_features(std::ostream& out, const FeatureTable& table);

struct Standardization {
  Vector mean;
  Vector stddev;  // population standard deviation over the fit rows

  Vector apply(std::span<const double> row) const;
  Vector invert(std::span<const double> row) const;
};

struct StandardizedFeatures {
  Matrix values;
  Standardization stats;
};

// (x - mean) / stddev with statistics from fit_rows, applied to every row.
StandardizedFeatures standardize(const Matrix& features, std::span<const std::size_t> fit_rows);

// Sentences with vocabulary and standardized targets ready for training.
struct Corpus {
  std::vector<AnnotatedSentence> sentences;
  Vocabulary vocabulary;
  FeatureTable features;  // standardized
  Standardization stats;

  std::vector<Example> examples() const;
  const AnnotatedSentence* find(std::string_view id) const;
};

// Orders features by sentence and standardizes them over every sentence.
// raw may be null for analyses that need no targets; otherwise every
// sentence must have a row.
Corpus assemble_corpus(std::vector<AnnotatedSentence> sentences, const FeatureTable* raw,
                       Vocabulary vocabulary);

// ---- synthetic micro-world -----------------------------------------------

struct Microworld {
  std::vector<AnnotatedSentence> sentences;
  FeatureTable features;  // raw multi-hot, colors then shapes
  std::vector<std::string> attributes;
};

const std::vector<std::string>& microworld_colors();
const std::vector<std::string>& microworld_shapes();

// Scenes hold two or three objects, each a (color, shape) pair. Captions:
//   the C S is near a C S
//   the C S and the C S is near a C S
// The target is the multi-hot of mentioned colors and shapes. "the", "a",
// "is" and "near" occur in every caption, so their presence carries no
// information about the target.
Microworld gen_microworld(std::uint64_t seed, std::size_t n_scenes);

}  // namespace gruscope
