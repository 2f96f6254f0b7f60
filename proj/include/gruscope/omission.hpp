#pragma once

// Omission scores: how far the end-of-sentence state moves when a single
// content token is deleted, measured as 1 - cosine(h_end(S), h_end(S\i)).

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gruscope/corpus.hpp"
#include "gruscope/model.hpp"

namespace gruscope {

struct OmissionRecord {
  std::string sentence_id;
  std::size_t token_index = 0;
  std::string form;
  std::string pos;
  std::string deprel;
  PositionBin position_bin = PositionBin::kFirst;
  double score_visual = 0.0;
  double score_textual = 0.0;

  bool operator==(const OmissionRecord&) const = default;
};

// One record per content token. The end marker is never omitted.
std::vector<OmissionRecord> omission_scores(const ImaginetParams& params,
                                            const Vocabulary& vocab,
                                            const AnnotatedSentence& sentence);

// All sentences, parallel over sentences, results in corpus order.
std::vector<OmissionRecord> omission_scores(const ImaginetParams& params,
                                            const Vocabulary& vocab,
                                            std::span<const AnnotatedSentence> sentences,
                                            std::size_t threads = 1);

// Header: sentence_id,token_index,form,pos,deprel,position_bin,score_visual,score_textual
void write_omission_csv(std::ostream& out, std::span<const OmissionRecord> records);
std::vector<OmissionRecord> read_omission_csv(std::istream& in, const std::string& source);

enum class LabelKind { kPos, kDeprel };
const char* to_string(LabelKind kind);
const std::string& label_of(const OmissionRecord& r, LabelKind kind);

struct Summary {
  std::size_t count = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

// Quartiles by linear interpolation between order statistics.
Summary summarize(std::vector<double> values);

struct LabelDistribution {
  std::string label;
  Summary visual;
  Summary textual;
  std::vector<double> visual_scores;
  std::vector<double> textual_scores;
};

// Labels with fewer than min_count records are dropped. Sorted by label.
std::vector<LabelDistribution> aggregate_by_label(std::span<const OmissionRecord> records,
                                                  LabelKind kind, std::size_t min_count);

inline constexpr double kLogRatioFloor = 1e-12;

struct LogRatioDistribution {
  std::string label;
  std::vector<double> log_ratios;  // ln(score_visual / score_textual)
  Summary summary;
  std::size_t excluded = 0;
};

struct LogRatioReport {
  std::vector<LogRatioDistribution> labels;
  std::size_t excluded = 0;  // tokens with a score <= kLogRatioFloor
};

// Positive values mean the visual pathway is more sensitive to the token.
// min_count applies to label occurrences before exclusion.
LogRatioReport log_ratio_by_label(std::span<const OmissionRecord> records, LabelKind kind,
                                  std::size_t min_count);

struct Neighbor {
  std::string id;
  double distance = 0.0;
};

// Rows of db by ascending cosine distance to query, ties by id. At most k.
std::vector<Neighbor> retrieve_nearest(const FeatureTable& db, std::span<const double> query,
                                       std::size_t k);

}  // namespace gruscope
