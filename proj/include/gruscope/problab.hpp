#pragma once

// Linear analyses of omission scores and hidden states:
//  - ridge regression of per-token omission scores on one-hot word, deprel
//    and position blocks (and their interactions), with R^2 on a held-out
//    half of the sentences;
//  - ranking of words by how much a deprel-aware model improves on a
//    word-only model;
//  - multinomial logistic probes predicting a token's deprel from n-gram
//    features plus the hidden activation vector.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gruscope/corpus.hpp"
#include "gruscope/model.hpp"
#include "gruscope/numkernel.hpp"
#include "gruscope/omission.hpp"

namespace gruscope {

// ---- designs -------------------------------------------------------------

enum class FeatureBlock { kWord, kDeprel, kPosition, kWordDeprel, kWordPosition };
const char* to_string(FeatureBlock block);

struct DesignSpec {
  std::vector<FeatureBlock> blocks;
  bool has(FeatureBlock block) const;
};

enum class LmModel { kWord, kDeprel, kPosition, kFull };
inline constexpr std::array<LmModel, 4> kAllLmModels = {LmModel::kWord, LmModel::kDeprel,
                                                        LmModel::kPosition, LmModel::kFull};
const char* to_string(LmModel model);
// WORD {word}; DEPREL {word, deprel, word x deprel};
// POSITION {word, position, word x position}; FULL all five blocks.
DesignSpec spec_for(LmModel model);

// One regression row: a token and one pathway's omission score.
struct LmRow {
  std::string sentence_id;
  std::size_t token_index = 0;
  std::string word;
  std::string deprel;
  PositionBin position = PositionBin::kFirst;
  double target = 0.0;
};

std::vector<LmRow> lm_rows(std::span<const OmissionRecord> records, Pathway pathway);

// Binary design stored as the active column indices of each row.
struct SparseDesign {
  std::size_t width = 0;
  std::vector<std::vector<std::uint32_t>> rows;
  Matrix to_dense() const;
};

// Category -> column assignment learned from the fitting rows. Categories
// not seen at fit time encode as all-zero in their block. The position block
// always holds all seven bins, in bin order.
class FeatureMap {
 public:
  static FeatureMap fit(std::span<const LmRow> rows, const DesignSpec& spec);

  const DesignSpec& spec() const { return spec_; }
  std::size_t width() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<std::size_t> column(FeatureBlock block, std::string_view key) const;
  SparseDesign encode(std::span<const LmRow> rows) const;

 private:
  DesignSpec spec_;
  std::map<FeatureBlock, std::map<std::string, std::size_t, std::less<>>> columns_;
  std::vector<std::string> names_;
};

struct Design {
  FeatureMap map;
  SparseDesign matrix;
};

Design build_design(std::span<const LmRow> rows, const DesignSpec& spec);

// ---- ridge ---------------------------------------------------------------

enum class RankPolicy {
  kError,        // singular normal equations throw NumericError
  kMinimumNorm,  // least-squares solution of minimum norm (OLS projection)
};

struct RidgeOptions {
  double lambda = 1.0;
  bool fit_intercept = true;
  RankPolicy singular = RankPolicy::kError;
};

struct FitResult {
  Vector weights;
  double intercept = 0.0;
  double lambda = 0.0;
  std::size_t rank = 0;  // numerical rank of the centered Gram matrix

  double predict(std::span<const double> row) const;
  double predict(std::span<const std::uint32_t> active) const;
};

// Minimizes ||y - Xw - b||^2 + lambda ||w||^2 with the intercept b
// unpenalized, via the centered normal equations.
FitResult fit_ridge(const Matrix& design, std::span<const double> targets,
                    const RidgeOptions& options);
FitResult fit_ridge(const SparseDesign& design, std::span<const double> targets,
                    const RidgeOptions& options);

// 1 - SS_res / SS_tot around the mean of targets. May be negative.
double r_squared(std::span<const double> predictions, std::span<const double> targets);
double r_squared(const FitResult& fit, const Matrix& design, std::span<const double> targets);
double r_squared(const FitResult& fit, const SparseDesign& design,
                 std::span<const double> targets);

// Sandwich standard errors sigma^2 A^-1 X'X A^-1 with A = X'X + lambda I
// (centered), sigma^2 = SS_res / max(1, n - width - 1).
Vector coefficient_standard_errors(const FitResult& fit, const SparseDesign& design,
                                   std::span<const double> targets);

struct LmFit {
  FeatureMap map;
  FitResult fit;

  double predict(const LmRow& row) const;
  double r_squared(std::span<const LmRow> rows) const;
};

LmFit fit_lm(std::span<const LmRow> rows, const DesignSpec& spec, const RidgeOptions& options);

// Seven coefficients in bin order. Throws if the fit has no position block.
std::array<double, kPositionBinCount> position_coefficients(const LmFit& fit);

// ---- LM suite ------------------------------------------------------------

struct LmSeries {
  std::string name;  // e.g. "sum", "visual", "textual"
  std::vector<LmRow> rows;
};

enum class EvalSplit { kHeldOut, kTraining };

struct LmSuiteOptions {
  std::uint64_t split_seed = 0;
  double lambda = 1.0;
  EvalSplit evaluate_on = EvalSplit::kHeldOut;
  RankPolicy singular = RankPolicy::kError;
};

struct LmSuiteEntry {
  std::string series;
  std::array<double, 4> r2{};     // indexed like kAllLmModels
  std::array<double, 4> delta{};  // r2 - r2[WORD]
  std::array<double, kPositionBinCount> position_coefficients{};  // from FULL
  std::size_t fit_rows = 0;
  std::size_t eval_rows = 0;
};

struct LmSuiteReport {
  LmSuiteOptions options;
  std::vector<std::string> fit_sentences;   // sorted
  std::vector<std::string> eval_sentences;  // sorted
  std::vector<LmSuiteEntry> entries;
};

// Splits sentence ids by a seeded permutation into halves (the first
// ceil(n/2) fit, the rest evaluate), so tokens of one sentence never
// straddle the split.
std::pair<std::vector<std::string>, std::vector<std::string>> split_sentences(
    std::vector<std::string> ids, std::uint64_t seed);

LmSuiteReport run_lm_suite(std::span<const LmSeries> series, const LmSuiteOptions& options);

// ---- deprel gain ranking -------------------------------------------------

enum class GainMetric { kAbsolute, kSquared };

struct WordGain {
  std::string word;
  std::size_t count = 0;
  double mean_gain = 0.0;  // mean over tokens of err(WORD) - err(DEPREL)
  std::map<std::string, std::vector<double>> scores_by_deprel;
};

// Fits WORD and DEPREL on all rows, then ranks words seen at least min_count
// times by mean per-token error reduction, best first.
std::vector<WordGain> rank_words_by_deprel_gain(std::span<const LmRow> rows,
                                                std::size_t min_count, double lambda,
                                                GainMetric metric = GainMetric::kAbsolute);

// ---- logistic probes -----------------------------------------------------

// Contiguous spans of the last `window` tokens up to t, each token tagged
// with its distance from t: "the_2", "the_2 nice_1", "nice_1 dog_0", ...
// Spans never reach before the sentence start.
std::vector<std::string> ngram_features(std::span<const std::string> forms, std::size_t t,
                                        std::size_t window);

struct ProbeToken {
  std::vector<std::string> ngrams;
  Vector activations;
  std::string label;
};

// One probe token per content token (end markers excluded).
std::vector<ProbeToken> probe_tokens(std::span<const AnnotatedSentence> sentences,
                                     std::span<const EncodeTrace> traces, std::size_t window);

struct ProbeOptions {
  std::size_t window = 4;
  double lambda = 0.01;
  std::size_t min_feature_count = 5;
  std::size_t top_k = 5;
  double tolerance = 1e-6;  // on the infinity norm of the gradient
  std::size_t max_iterations = 20000;
};

struct ProbeResult {
  std::vector<std::string> labels;
  std::vector<std::string> ngram_features;  // kept after pruning
  std::size_t units = 0;
  Matrix coefficients;  // labels x (ngram features ++ units)
  Vector intercepts;
  std::vector<std::vector<std::size_t>> top_units;  // per label, by |coef|
  ProbeOptions options;
  double training_accuracy = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
  std::vector<double> loss_history;

  std::span<const double> activation_coefficients(std::size_t label) const;
  std::span<const double> ngram_coefficients(std::size_t label) const;
};

// L2-penalized multinomial logistic regression trained by full-batch
// gradient descent with Armijo backtracking (Barzilai-Borwein trial
// steps). Throws NumericError if the gradient tolerance is not reached.
ProbeResult fit_logistic_probe(std::span<const ProbeToken> tokens, const ProbeOptions& options);

ProbeResult fit_logistic_probe(const ImaginetParams& params, const Corpus& corpus,
                               Pathway pathway, const ProbeOptions& options);

}  // namespace gruscope
