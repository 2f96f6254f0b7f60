#pragma once

// Unit-level inspection of a trained encoder: corpus-wide activation
// matrices, top-K contexts per hidden unit, per-sentence traces, and the
// binned mutual-information comparison between the two pathways.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gruscope/corpus.hpp"
#include "gruscope/model.hpp"
#include "gruscope/numkernel.hpp"

namespace gruscope {

struct ColumnRef {
  std::size_t sentence = 0;  // index into the corpus sentences
  std::string sentence_id;
  std::size_t position = 0;  // token index, end marker included

  bool operator==(const ColumnRef&) const = default;
};

struct ActivationMatrix {
  Pathway pathway = Pathway::kTextual;
  Matrix values;  // units x time steps
  std::vector<ColumnRef> columns;

  std::size_t units() const { return values.rows(); }
  std::size_t steps() const { return values.cols(); }
  Vector unit_row(std::size_t unit) const;
};

// Columns ordered by sentence id, then position. One column per token
// including each sentence's end marker.
ActivationMatrix capture(const ImaginetParams& params, Pathway pathway, const Corpus& corpus,
                         std::size_t threads = 1);

enum class ContextUnit { kWord, kDeprel };
const char* to_string(ContextUnit unit);
ContextUnit parse_context_unit(const std::string& text);

enum class RankMode { kSigned, kAbsolute };

struct TopContext {
  std::size_t unit = 0;
  std::size_t rank = 0;  // 1-based
  double activation = 0.0;
  std::vector<std::string> context;  // ends at the activating token
  std::string sentence_id;
  std::size_t position = 0;
  std::size_t column = 0;
};

// The k columns with the highest activation (or highest magnitude with
// kAbsolute), ties broken by column order. Contexts are cut at the
// sentence start rather than padded.
std::vector<TopContext> top_k_contexts(const ActivationMatrix& m,
                                       std::span<const AnnotatedSentence> sentences,
                                       std::size_t unit, std::size_t k,
                                       std::size_t context_len, ContextUnit unit_type,
                                       RankMode mode = RankMode::kSigned);

// Per-unit 90th percentile (linear interpolation) over all columns.
Vector decile_thresholds(const ActivationMatrix& m);

struct UnitTrace {
  std::string sentence_id;
  std::size_t unit = 0;
  std::vector<std::string> tokens;  // forms, end marker included
  Vector activations;
  double threshold = 0.0;
  bool top_decile = false;  // max activation >= threshold
};

UnitTrace trace(const ImaginetParams& params, Pathway pathway, const Vocabulary& vocab,
                const AnnotatedSentence& sentence, std::size_t unit,
                std::span<const double> thresholds);

void write_trace_csv(std::ostream& out, const UnitTrace& t);
// Heat strip of token cells, white at lo to red at hi (linear).
std::string trace_svg(const UnitTrace& t, double lo, double hi);

// ---- mutual information --------------------------------------------------

struct BinnedUnit {
  std::vector<std::uint32_t> bins;  // per time step, in 0..bin_count-1
  Vector edges;  // bin_count + 1 entries: min, the order statistics at
                 // ranks ceil(i n / B) for i = 1..B-1, max
  std::size_t bin_count = 0;
};

// A value's bin is floor(L B / n) with L the number of strictly smaller
// values, so tied values share the lowest bin their run reaches.
BinnedUnit bin_unit(std::span<const double> row, std::size_t bins = 20);

inline constexpr const char* kBoundarySymbol = "<s>";

struct ContextVariable {
  std::vector<std::uint32_t> symbols;  // per column
  std::vector<std::string> names;      // symbol id -> n-gram, sorted
};

// The word or deprel n-gram ending at each column, padded at the sentence
// start with kBoundarySymbol.
ContextVariable context_variable(const ActivationMatrix& m,
                                 std::span<const AnnotatedSentence> sentences,
                                 ContextUnit unit_type, std::size_t n);

// Plug-in estimate in nats.
double mutual_information(std::span<const std::uint32_t> a, std::span<const std::uint32_t> c);
double mutual_information(const BinnedUnit& a, const ContextVariable& c);

std::vector<BinnedUnit> bin_units(const ActivationMatrix& m, std::size_t bins,
                                  std::size_t threads = 1);

struct MedianMi {
  Vector per_unit;
  double median = 0.0;
};

MedianMi median_mi(std::span<const BinnedUnit> units, const ContextVariable& c,
                   std::size_t threads = 1);
MedianMi median_mi(const ActivationMatrix& m, const ContextVariable& c, std::size_t bins,
                   std::size_t threads = 1);

struct BootstrapResult {
  std::vector<std::size_t> replicates;  // indices of kept replicates
  Vector log_ratios;                    // ln(median_T* / median_V*)
  std::size_t excluded = 0;             // replicates with a zero median
};

// Replicate r draws unit indices with replacement for each pathway from a
// generator seeded with seed + r (the same stream for both pathways).
BootstrapResult bootstrap_log_ratio(std::span<const double> mi_textual,
                                    std::span<const double> mi_visual,
                                    std::size_t replicates, std::uint64_t seed,
                                    std::size_t threads = 1);

struct MiSuiteOptions {
  std::size_t bins = 20;
  std::size_t replicates = 5000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

inline constexpr std::array<double, 5> kMiSummaryLevels = {0.025, 0.25, 0.5, 0.75, 0.975};

struct MiSuiteEntry {
  std::string context_type;  // e.g. "deprel_2"
  MedianMi textual;
  MedianMi visual;
  BootstrapResult bootstrap;
  std::array<double, 5> quantiles{};  // at kMiSummaryLevels
};

struct MiSuiteReport {
  MiSuiteOptions options;
  std::vector<MiSuiteEntry> entries;  // word 1..3, then deprel 1..3
};

MiSuiteReport run_mi_suite(const ActivationMatrix& textual, const ActivationMatrix& visual,
                           std::span<const AnnotatedSentence> sentences,
                           const MiSuiteOptions& options);

// context_type,replicate,log_ratio
void write_mi_replicates_csv(std::ostream& out, const MiSuiteReport& report);
// context_type,median_mi_textual,median_mi_visual,excluded,q2.5,q25,q50,q75,q97.5
void write_mi_summary_csv(std::ostream& out, const MiSuiteReport& report);

}  // namespace gruscope
