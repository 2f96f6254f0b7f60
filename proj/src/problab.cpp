#include "gruscope/problab.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <unordered_set>

#include <Eigen/Dense>

#include "gruscope/errors.hpp"
#include "gruscope/random.hpp"

namespace gruscope {

const char* to_string(FeatureBlock block) {
  switch (block) {
    case FeatureBlock::kWord: return "word";
    case FeatureBlock::kDeprel: return "deprel";
    case FeatureBlock::kPosition: return "position";
    case FeatureBlock::kWordDeprel: return "word:deprel";
    case FeatureBlock::kWordPosition: return "word:position";
  }
  return "?";
}

bool DesignSpec::has(FeatureBlock block) const {
  return std::find(blocks.begin(), blocks.end(), block) != blocks.end();
}

const char* to_string(LmModel model) {
  switch (model) {
    case LmModel::kWord: return "WORD";
    case LmModel::kDeprel: return "DEPREL";
    case LmModel::kPosition: return "POSITION";
    case LmModel::kFull: return "FULL";
  }
  return "?";
}

DesignSpec spec_for(LmModel model) {
  using B = FeatureBlock;
  switch (model) {
    case LmModel::kWord: return {{B::kWord}};
    case LmModel::kDeprel: return {{B::kWord, B::kDeprel, B::kWordDeprel}};
    case LmModel::kPosition: return {{B::kWord, B::kPosition, B::kWordPosition}};
    case LmModel::kFull:
      return {{B::kWord, B::kDeprel, B::kPosition, B::kWordDeprel, B::kWordPosition}};
  }
  return {};
}

std::vector<LmRow> lm_rows(std::span<const OmissionRecord> records, Pathway pathway) {
  std::vector<LmRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    rows.push_back({r.sentence_id, r.token_index, r.form, r.deprel, r.position_bin,
                    pathway == Pathway::kVisual ? r.score_visual : r.score_textual});
  }
  return rows;
}

Matrix SparseDesign::to_dense() const {
  Matrix m(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::uint32_t c : rows[r]) m(r, c) = 1.0;
  }
  return m;
}

// ---- feature map ---------------------------------------------------------

namespace {

std::string block_key(FeatureBlock block, const LmRow& row) {
  switch (block) {
    case FeatureBlock::kWord: return row.word;
    case FeatureBlock::kDeprel: return row.deprel;
    case FeatureBlock::kPosition: return to_string(row.position);
    case FeatureBlock::kWordDeprel: return row.word + "|" + row.deprel;
    case FeatureBlock::kWordPosition: return row.word + "|" + to_string(row.position);
  }
  return {};
}

}  // namespace

FeatureMap FeatureMap::fit(std::span<const LmRow> rows, const DesignSpec& spec) {
  FeatureMap map;
  map.spec_ = spec;
  for (FeatureBlock block : spec.blocks) {
    std::vector<std::string> keys;
    if (block == FeatureBlock::kPosition) {
      for (PositionBin bin : kAllPositionBins) keys.emplace_back(to_string(bin));
    } else {
      std::set<std::string> seen;
      for (const auto& r : rows) seen.insert(block_key(block, r));
      keys.assign(seen.begin(), seen.end());
    }
    auto& cols = map.columns_[block];
    for (auto& key : keys) {
      cols.emplace(key, map.names_.size());
      map.names_.push_back(std::string(to_string(block)) + "=" + key);
    }
  }
  return map;
}

std::optional<std::size_t> FeatureMap::column(FeatureBlock block, std::string_view key) const {
  const auto b = columns_.find(block);
  if (b == columns_.end()) return std::nullopt;
  const auto c = b->second.find(key);
  if (c == b->second.end()) return std::nullopt;
  return c->second;
}

SparseDesign FeatureMap::encode(std::span<const LmRow> rows) const {
  SparseDesign design;
  design.width = width();
  design.rows.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<std::uint32_t> active;
    for (FeatureBlock block : spec_.blocks) {
      if (const auto c = column(block, block_key(block, r))) {
        active.push_back(static_cast<std::uint32_t>(*c));
      }
    }
    design.rows.push_back(std::move(active));
  }
  return design;
}

Design build_design(std::span<const LmRow> rows, const DesignSpec& spec) {
  if (rows.empty()) throw DataError("build_design: no records");
  Design d{FeatureMap::fit(rows, spec), {}};
  d.matrix = d.map.encode(rows);
  return d;
}

// ---- ridge solver --------------------------------------------------------

namespace {

struct NormalEquations {
  Eigen::MatrixXd gram;  // X'X
  Eigen::VectorXd col_sums;
  Eigen::VectorXd xty;
  double y_sum = 0.0;
  std::size_t n = 0;
};

NormalEquations accumulate(const SparseDesign& x, std::span<const double> y) {
  require_same_size(x.rows.size(), y.size(), "fit_ridge targets");
  const auto w = static_cast<Eigen::Index>(x.width);
  NormalEquations ne{Eigen::MatrixXd::Zero(w, w), Eigen::VectorXd::Zero(w),
                     Eigen::VectorXd::Zero(w), 0.0, y.size()};
  for (std::size_t r = 0; r < x.rows.size(); ++r) {
    const auto& active = x.rows[r];
    for (std::uint32_t a : active) {
      if (a >= x.width) throw ShapeError("sparse design column out of range");
      ne.col_sums(a) += 1.0;
      ne.xty(a) += y[r];
      for (std::uint32_t b : active) ne.gram(a, b) += 1.0;
    }
    ne.y_sum += y[r];
  }
  return ne;
}

NormalEquations accumulate(const Matrix& x, std::span<const double> y) {
  require_same_size(x.rows(), y.size(), "fit_ridge targets");
  const auto w = static_cast<Eigen::Index>(x.cols());
  NormalEquations ne{Eigen::MatrixXd::Zero(w, w), Eigen::VectorXd::Zero(w),
                     Eigen::VectorXd::Zero(w), 0.0, y.size()};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    for (Eigen::Index a = 0; a < w; ++a) {
      const double xa = row[static_cast<std::size_t>(a)];
      ne.col_sums(a) += xa;
      ne.xty(a) += xa * y[r];
      for (Eigen::Index b = 0; b < w; ++b) ne.gram(a, b) += xa * row[static_cast<std::size_t>(b)];
    }
    ne.y_sum += y[r];
  }
  return ne;
}

// Centered Gram matrix and right-hand side (or raw ones without intercept).
void center(const NormalEquations& ne, bool fit_intercept, Eigen::MatrixXd& a,
            Eigen::VectorXd& rhs) {
  a = ne.gram;
  rhs = ne.xty;
  if (fit_intercept) {
    const double n = static_cast<double>(ne.n);
    a.noalias() -= (ne.col_sums * ne.col_sums.transpose()) / n;
    rhs -= ne.col_sums * (ne.y_sum / n);
  }
}

constexpr double kRankTolerance = 1e-10;

FitResult solve(const NormalEquations& ne, const RidgeOptions& opt) {
  if (!(opt.lambda >= 0.0)) throw DataError("ridge penalty must be non-negative");
  if (ne.n == 0) throw DataError("fit_ridge: no rows");

  Eigen::MatrixXd a;
  Eigen::VectorXd rhs;
  center(ne, opt.fit_intercept, a, rhs);
  a.diagonal().array() += opt.lambda;

  const auto width = a.rows();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(width);
  std::size_t rank = static_cast<std::size_t>(width);
  bool solved = false;
  if (opt.lambda > 0.0 && width > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      w = llt.solve(rhs);
      solved = true;
    }
  }
  if (!solved && width > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double top = std::max(std::abs(ev.maxCoeff()), 1.0);
    const double tol = kRankTolerance * top * static_cast<double>(width);
    rank = 0;
    for (Eigen::Index i = 0; i < width; ++i) rank += ev(i) > tol ? 1 : 0;
    if (rank < static_cast<std::size_t>(width) && opt.singular == RankPolicy::kError) {
      throw NumericError("singular normal equations (collinear design, rank " +
                         std::to_string(rank) + " of " + std::to_string(width) +
                         "); use lambda > 0");
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::VectorXd proj = v.transpose() * rhs;
    Eigen::VectorXd scaled_proj = Eigen::VectorXd::Zero(width);
    for (Eigen::Index i = 0; i < width; ++i) {
      if (ev(i) > tol) scaled_proj(i) = proj(i) / ev(i);
    }
    w = v * scaled_proj;
  }

  FitResult fit;
  fit.lambda = opt.lambda;
  fit.rank = rank;
  fit.weights.assign(w.data(), w.data() + w.size());
  if (opt.fit_intercept) {
    const double n = static_cast<double>(ne.n);
    fit.intercept = ne.y_sum / n - ne.col_sums.dot(w) / n;
  }
  return fit;
}

}  // namespace

double FitResult::predict(std::span<const double> row) const {
  return intercept + dot(weights, row);
}

double FitResult::predict(std::span<const std::uint32_t> active) const {
  double acc = intercept;
  for (std::uint32_t c : active) acc += weights.at(c);
  return acc;
}

FitResult fit_ridge(const Matrix& design, std::span<const double> targets,
                    const RidgeOptions& options) {
  return solve(accumulate(design, targets), options);
}

FitResult fit_ridge(const SparseDesign& design, std::span<const double> targets,
                    const RidgeOptions& options) {
  return solve(accumulate(design, targets), options);
}

double r_squared(std::span<const double> predictions, std::span<const double> targets) {
  require_same_size(predictions.size(), targets.size(), "r_squared");
  if (targets.empty()) throw DataError("r_squared: empty evaluation set");
  double mean = 0.0;
  for (double y : targets) mean += y;
  mean /= static_cast<double>(targets.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
    ss_res += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
  }
  if (!(ss_tot > 0.0)) throw NumericError("r_squared: evaluation targets have zero variance");
  return 1.0 - ss_res / ss_tot;
}

double r_squared(const FitResult& fit, const Matrix& design, std::span<const double> targets) {
  Vector pred(design.rows());
  for (std::size_t r = 0; r < design.rows(); ++r) pred[r] = fit.predict(design.row(r));
  return r_squared(pred, targets);
}

double r_squared(const FitResult& fit, const SparseDesign& design,
                 std::span<const double> targets) {
  Vector pred(design.rows.size());
  for (std::size_t r = 0; r < design.rows.size(); ++r) pred[r] = fit.predict(design.rows[r]);
  return r_squared(pred, targets);
}

Vector coefficient_standard_errors(const FitResult& fit, const SparseDesign& design,
                                   std::span<const double> targets) {
  const NormalEquations ne = accumulate(design, targets);
  Eigen::MatrixXd gram;
  Eigen::VectorXd rhs;
  center(ne, true, gram, rhs);
  Eigen::MatrixXd a = gram;
  a.diagonal().array() += fit.lambda;
  const Eigen::MatrixXd a_inv = a.completeOrthogonalDecomposition().pseudoInverse();

  double ss_res = 0.0;
  for (std::size_t r = 0; r < design.rows.size(); ++r) {
    const double e = targets[r] - fit.predict(design.rows[r]);
    ss_res += e * e;
  }
  const double dof = std::max(1.0, static_cast<double>(design.rows.size()) -
                                       static_cast<double>(design.width) - 1.0);
  const double sigma2 = ss_res / dof;
  const Eigen::MatrixXd cov = sigma2 * a_inv * gram * a_inv;
  Vector se(design.width);
  for (std::size_t i = 0; i < design.width; ++i) {
    se[i] = std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(i),
                                        static_cast<Eigen::Index>(i))));
  }
  return se;
}

double LmFit::predict(const LmRow& row) const {
  const SparseDesign one = map.encode(std::span<const LmRow>(&row, 1));
  return fit.predict(one.rows.front());
}

double LmFit::r_squared(std::span<const LmRow> rows) const {
  Vector y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = rows[i].target;
  return gruscope::r_squared(fit, map.encode(rows), y);
}

LmFit fit_lm(std::span<const LmRow> rows, const DesignSpec& spec, const RidgeOptions& options) {
  Design design = build_design(rows, spec);
  Vector y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = rows[i].target;
  FitResult fit = fit_ridge(design.matrix, y, options);
  return {std::move(design.map), std::move(fit)};
}

std::array<double, kPositionBinCount> position_coefficients(const LmFit& fit) {
  if (!fit.map.spec().has(FeatureBlock::kPosition)) {
    throw DataError("position_coefficients: model has no position block");
  }
  std::array<double, kPositionBinCount> out{};
  for (std::size_t i = 0; i < kPositionBinCount; ++i) {
    const auto col = fit.map.column(FeatureBlock::kPosition, to_string(kAllPositionBins[i]));
    out[i] = fit.fit.weights.at(*col);
  }
  return out;
}

// ---- LM suite ------------------------------------------------------------

std::pair<std::vector<std::string>, std::vector<std::string>> split_sentences(
    std::vector<std::string> ids, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw DataError("need at least two sentences to split");
  Rng rng(seed);
  shuffle(std::span<std::string>(ids), rng);
  const std::size_t half = (ids.size() + 1) / 2;
  std::vector<std::string> fit(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::string> eval(ids.begin() + static_cast<std::ptrdiff_t>(half), ids.end());
  std::sort(fit.begin(), fit.end());
  std::sort(eval.begin(), eval.end());
  return {std::move(fit), std::move(eval)};
}

LmSuiteReport run_lm_suite(std::span<const LmSeries> series, const LmSuiteOptions& options) {
  if (series.empty()) throw DataError("run_lm_suite: no score series");
  std::vector<std::string> ids;
  for (const auto& s : series) {
    for (const auto& r : s.rows) ids.push_back(r.sentence_id);
  }

  LmSuiteReport report;
  report.options = options;
  std::tie(report.fit_sentences, report.eval_sentences) =
      split_sentences(std::move(ids), options.split_seed);
  const std::unordered_set<std::string> fit_ids(report.fit_sentences.begin(),
                                                report.fit_sentences.end());
  const RidgeOptions ridge{options.lambda, true, options.singular};

  for (const auto& s : series) {
    std::vector<LmRow> rows = s.rows;
    std::sort(rows.begin(), rows.end(), [](const LmRow& a, const LmRow& b) {
      if (a.sentence_id != b.sentence_id) return a.sentence_id < b.sentence_id;
      return a.token_index < b.token_index;
    });
    std::vector<LmRow> fit_rows;
    std::vector<LmRow> eval_rows;
    for (auto& r : rows) (fit_ids.count(r.sentence_id) ? fit_rows : eval_rows).push_back(r);
    const auto& scored = options.evaluate_on == EvalSplit::kTraining ? fit_rows : eval_rows;

    LmSuiteEntry entry;
    entry.series = s.name;
    entry.fit_rows = fit_rows.size();
    entry.eval_rows = scored.size();
    for (std::size_t m = 0; m < kAllLmModels.size(); ++m) {
      const LmFit fit = fit_lm(fit_rows, spec_for(kAllLmModels[m]), ridge);
      entry.r2[m] = fit.r_squared(scored);
      if (kAllLmModels[m] == LmModel::kFull) {
        entry.position_coefficients = position_coefficients(fit);
      }
    }
    for (std::size_t m = 0; m < kAllLmModels.size(); ++m) entry.delta[m] = entry.r2[m] - entry.r2[0];
    report.entries.push_back(std::move(entry));
  }
  return report;
}

// ---- deprel gain ---------------------------------------------------------

std::vector<WordGain> rank_words_by_deprel_gain(std::span<const LmRow> rows,
                                                std::size_t min_count, double lambda,
                                                GainMetric metric) {
  if (min_count == 0) throw DataError("min_count must be at least 1");
  const RidgeOptions ridge{lambda, true,
                           lambda > 0.0 ? RankPolicy::kError : RankPolicy::kMinimumNorm};
  const LmFit word = fit_lm(rows, spec_for(LmModel::kWord), ridge);
  const LmFit deprel = fit_lm(rows, spec_for(LmModel::kDeprel), ridge);

  auto error = [metric](double e) { return metric == GainMetric::kAbsolute ? std::abs(e) : e * e; };
  std::map<std::string, WordGain> by_word;
  const SparseDesign xw = word.map.encode(rows);
  const SparseDesign xd = deprel.map.encode(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double gain = error(rows[i].target - word.fit.predict(xw.rows[i])) -
                        error(rows[i].target - deprel.fit.predict(xd.rows[i]));
    auto& g = by_word[rows[i].word];
    g.count += 1;
    g.mean_gain += gain;
    g.scores_by_deprel[rows[i].deprel].push_back(rows[i].target);
  }

  std::vector<WordGain> out;
  for (auto& [w, g] : by_word) {
    if (g.count < min_count) continue;
    g.word = w;
    g.mean_gain /= static_cast<double>(g.count);
    out.push_back(std::move(g));
  }
  std::stable_sort(out.begin(), out.end(), [](const WordGain& a, const WordGain& b) {
    return a.mean_gain > b.mean_gain;
  });
  return out;
}

}  // namespace gruscope
