// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "gruscope/inspector.hpp"
#include "gruscope/omission.hpp"
#include "gruscope/problab.hpp"
#include "gruscope/trainer.hpp"
#include "support.hpp"

using namespace gruscope;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << "AC" << id << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << o.detail << std::endl;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---- shared state for the micro-world criteria ----------------------------

struct MicroworldRun {
  Corpus corpus;
  TrainConfig config;
  TrainResult result;
  double seconds = 0.0;
};

MicroworldRun& microworld() {
  static MicroworldRun run = [] {
    MicroworldRun r;
    const Microworld w = gen_microworld(1, 500);
    r.corpus = assemble_corpus(w.sentences, &w.features, Vocabulary::build(w.sentences, 1));
    r.config.hidden = 32;
    r.config.embedding = 32;
    r.config.epochs = 50;
    const auto t0 = Clock::now();
    r.result = train(r.config, r.corpus);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

// ---- AC1 ------------------------------------------------------------------

Outcome ac1() {
  const auto t0 = Clock::now();
  ImaginetParams p = init_params(testsupport::small_dims(20, 8, 8, 6), 0.5, 2024);
  Rng rng(99);
  std::vector<Example> batch;
  for (std::size_t len : {4u, 6u, 3u}) {
    Example ex;
    for (std::size_t t = 0; t < len; ++t) ex.ids.push_back(static_cast<TokenId>(2 + uniform_index(rng, 18)));
    ex.ids.push_back(Vocabulary::kEnd);
    ex.image = testsupport::random_vector(rng, 6);
    batch.push_back(ex);
  }
  const LossResult base = loss(p, batch, true);
  auto params = p.named();
  auto grads = base.grads.named();
  std::vector<GradCheckTarget> targets;
  for (std::size_t i = 0; i < params.size(); ++i) {
    targets.push_back({params[i].name, params[i].tensor->data(), grads[i].tensor->data()});
  }
  const auto rep = grad_check([&] { return loss(p, batch, false).total; }, targets, 1e-5, 1e-4);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : rep.entries) {
    if (e.max_rel_error >= worst) {
      worst = e.max_rel_error;
      worst_name = e.name;
    }
  }
  const double secs = seconds_since(t0);
  return {rep.passed() && worst < 1e-4 && rep.entries.size() == params.size() && secs < 30.0,
          "max relative error " + fmt(worst) + " (" + worst_name + ") over " +
              std::to_string(rep.entries.size()) + " tensors in " + fmt(secs) + " s"};
}

// ---- AC2 ------------------------------------------------------------------

Outcome ac2() {
  const MicroworldRun& r = microworld();
  const auto& log = r.result.log;
  bool decreasing = log.size() > 5;
  for (std::size_t e = 1; e <= 5 && e < log.size(); ++e) decreasing = decreasing && log[e].total < log[e - 1].total;
  const double lv = log.back().visual;
  std::string first;
  for (std::size_t e = 0; e <= 5 && e < log.size(); ++e) first += (e ? " " : "") + fmt(log[e].total);
  return {decreasing && lv < 0.15 && r.seconds < 600.0,
          "final L^V " + fmt(lv) + ", epochs 0-5 L: " + first + ", " + fmt(r.seconds) + " s"};
}

// ---- AC3 ------------------------------------------------------------------

Outcome ac3() {
  const MicroworldRun& r = microworld();
  const auto records = omission_scores(r.result.params, r.corpus.vocabulary, r.corpus.sentences);
  std::vector<double> det, content;
  for (const auto& rec : records) {
    if (rec.pos == "DT") det.push_back(rec.score_visual);
    if (rec.pos == "NN" || rec.pos == "JJ") content.push_back(rec.score_visual);
  }
  if (det.empty() || content.empty()) return {false, "no determiner or content tokens"};
  const double md = median(det);
  const double mc = median(content);
  return {md < 0.25 * mc, "median DT " + fmt(md) + ", median NN/JJ " + fmt(mc) + ", ratio " +
                              fmt(md / mc)};
}

// ---- AC4 ------------------------------------------------------------------

std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
  return b;
}

Outcome ac4() {
  // Closed-form oracle on seeded dense fixtures.
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const std::size_t n = 30 + 10 * seed, p = 3 + seed;
    const double lambda = 0.5 * static_cast<double>(seed - 1);
    Matrix x(n, p);
    for (double& v : x.data()) v = standard_normal(rng);
    const auto y = testsupport::random_vector(rng, n);
    std::vector<double> xbar(p, 0.0);
    double ybar = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < p; ++c) xbar[c] += x(r, c) / static_cast<double>(n);
      ybar += y[r] / static_cast<double>(n);
    }
    std::vector<std::vector<double>> a(p, std::vector<double>(p, 0.0));
    std::vector<double> rhs(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < p; ++i) {
        rhs[i] += (x(r, i) - xbar[i]) * (y[r] - ybar);
        for (std::size_t j = 0; j < p; ++j) a[i][j] += (x(r, i) - xbar[i]) * (x(r, j) - xbar[j]);
      }
    }
    for (std::size_t i = 0; i < p; ++i) a[i][i] += lambda;
    const auto w = gauss_solve(a, rhs);
    double b = ybar;
    for (std::size_t i = 0; i < p; ++i) b -= xbar[i] * w[i];
    const FitResult fit = fit_ridge(x, y, {lambda, true, RankPolicy::kError});
    for (std::size_t i = 0; i < p; ++i) {
      worst = std::max(worst, std::abs(fit.weights[i] - w[i]) / std::max(1.0, std::abs(w[i])));
    }
    worst = std::max(worst, std::abs(fit.intercept - b) / std::max(1.0, std::abs(b)));
  }

  // Nested monotonicity on the micro-world omission scores, training half.
  const MicroworldRun& r = microworld();
  const auto records = omission_scores(r.result.params, r.corpus.vocabulary, r.corpus.sentences);
  const std::vector<LmSeries> series{{"visual", lm_rows(records, Pathway::kVisual)},
                                     {"textual", lm_rows(records, Pathway::kTextual)}};
  LmSuiteOptions opt;
  opt.lambda = 0.0;
  opt.singular = RankPolicy::kMinimumNorm;
  opt.evaluate_on = EvalSplit::kTraining;
  const auto suite = run_lm_suite(series, opt);
  constexpr double kRound = 1e-12;
  bool monotone = true;
  std::string r2;
  for (const auto& e : suite.entries) {
    const auto& v = e.r2;  // WORD, DEPREL, POSITION, FULL
    monotone = monotone && v[3] >= v[1] - kRound && v[1] >= v[0] - kRound &&
               v[3] >= v[2] - kRound && v[2] >= v[0] - kRound;
    r2 += " " + e.series + "[" + fmt(v[0]) + " " + fmt(v[1]) + " " + fmt(v[2]) + " " + fmt(v[3]) + "]";
  }
  return {worst < 1e-10 && monotone,
          "oracle max error " + fmt(worst) + "; R2 WORD/DEPREL/POSITION/FULL" + r2};
}

// ---- AC5 ------------------------------------------------------------------

Outcome ac5() {
  Rng rng(5);
  const std::vector<std::string> words = {"the", "a", "cat", "dog", "sees", "red", "big",
                                          "ball", "on", "mat", "runs", "it"};
  const std::vector<std::string> rels = {"det", "nsubj", "root", "amod", "dobj", "prep", "pobj"};
  std::map<std::string, double> effect;
  for (const auto& w : words) effect[w] = 0.3 * standard_normal(rng);
  std::vector<LmRow> rows;
  for (std::size_t s = 0; s < 300; ++s) {
    const std::size_t len = 3 + uniform_index(rng, 10);
    for (std::size_t t = 0; t < len; ++t) {
      LmRow row;
      row.sentence_id = "p" + std::to_string(s);
      row.token_index = t;
      row.word = words[uniform_index(rng, words.size())];
      row.deprel = rels[uniform_index(rng, rels.size())];
      row.position = position_bin(t, len);
      row.target = effect[row.word] + 0.1 * standard_normal(rng) +
                   (row.position == PositionBin::kLast ? 1.0 : 0.0);
      rows.push_back(row);
    }
  }
  const auto suite = run_lm_suite(std::vector<LmSeries>{{"planted", rows}}, {});
  const auto& e = suite.entries[0];
  const auto& c = e.position_coefficients;
  const std::size_t last = static_cast<std::size_t>(PositionBin::kLast);
  bool strictly_first = true;
  double runner_up = -1e300;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i == last) continue;
    strictly_first = strictly_first && c[last] > c[i];
    runner_up = std::max(runner_up, c[i]);
  }
  return {strictly_first && e.delta[2] > 0.1,
          "coef(last) " + fmt(c[last]) + " vs next " + fmt(runner_up) + ", dR2(POSITION-WORD) " +
              fmt(e.delta[2])};
}

// ---- AC6 ------------------------------------------------------------------

Outcome ac6() {
  // Hand-enumerated 3 x 3 joint counts.
  const int counts[3][3] = {{5, 1, 0}, {2, 2, 2}, {0, 1, 7}};
  std::vector<std::uint32_t> a, c;
  double n = 0.0, row[3] = {0, 0, 0}, col[3] = {0, 0, 0};
  for (std::uint32_t i = 0; i < 3; ++i) {
    for (std::uint32_t j = 0; j < 3; ++j) {
      for (int k = 0; k < counts[i][j]; ++k) {
        a.push_back(i);
        c.push_back(j);
      }
      n += counts[i][j];
      row[i] += counts[i][j];
      col[j] += counts[i][j];
    }
  }
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (counts[i][j] == 0) continue;
      const double p = counts[i][j] / n;
      expect += p * std::log(p * n * n / (row[i] * col[j]));
    }
  }
  const double table_err = std::abs(mutual_information(a, c) - expect);

  std::vector<double> values(400);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::sin(static_cast<double>(i) * 1.7);
  const BinnedUnit b = bin_unit(values, 20);
  const double self_err = std::abs(mutual_information(b.bins, b.bins) - std::log(20.0));

  std::vector<std::uint32_t> x, y;
  for (std::uint32_t i = 0; i < 120; ++i) {
    x.push_back(i % 5);
    y.push_back((i / 5) % 4);
  }
  const double indep = mutual_information(x, y);
  return {table_err <= 1e-12 && self_err <= 1e-12 && indep == 0.0,
          "table error " + fmt(table_err) + ", |I(X;X) - ln 20| " + fmt(self_err) +
              ", independent " + fmt(indep)};
}

// ---- AC7 ------------------------------------------------------------------

Outcome ac7() {
  Rng rng(7);
  std::vector<double> mi(32);
  for (double& v : mi) v = 0.05 + std::abs(standard_normal(rng));
  const auto same = bootstrap_log_ratio(mi, mi, 5000, 11);
  const bool all_zero = same.log_ratios.size() == 5000 &&
                        std::all_of(same.log_ratios.begin(), same.log_ratios.end(),
                                    [](double v) { return v == 0.0; });

  const MicroworldRun& r = microworld();
  const ActivationMatrix t = capture(r.result.params, Pathway::kTextual, r.corpus);
  const ActivationMatrix v = capture(r.result.params, Pathway::kVisual, r.corpus);
  auto replicate_file = [&](std::size_t threads) {
    MiSuiteOptions opt;
    opt.seed = 3;
    opt.threads = threads;
    std::ostringstream out;
    write_mi_replicates_csv(out, run_mi_suite(t, v, r.corpus.sentences, opt));
    return out.str();
  };
  const std::string a = replicate_file(1);
  const std::string b = replicate_file(1);
  const std::string c = replicate_file(4);
  return {all_zero && a == b && a == c,
          std::string("identical inputs all zero: ") + (all_zero ? "yes" : "no") +
              ", rerun identical: " + (a == b ? "yes" : "no") +
              ", serial vs 4 threads identical: " + (a == c ? "yes" : "no") + " (" +
              std::to_string(a.size()) + " bytes)"};
}

// ---- AC8 ------------------------------------------------------------------

Outcome ac8() {
  Rng rng(8);
  const std::vector<std::string> labels = {"amod", "det", "dobj", "nsubj", "root"};
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
  const std::size_t units = 10;

  // Unit 6 takes a distinct level per label; everything else is noise.
  std::vector<ProbeToken> planted;
  for (std::size_t i = 0; i < 500; ++i) {
    const std::size_t y = uniform_index(rng, labels.size());
    ProbeToken t;
    t.label = labels[y];
    t.activations = testsupport::random_vector(rng, units, 0.5);
    t.activations[6] = static_cast<double>(y) - 2.0;
    const std::vector<std::string> forms{words[uniform_index(rng, 6)], words[uniform_index(rng, 6)]};
    t.ngrams = ngram_features(forms, 1, 2);
    planted.push_back(std::move(t));
  }
  const ProbeResult pr = fit_logistic_probe(planted, {});
  bool in_top = pr.top_units.size() == labels.size();
  for (const auto& top : pr.top_units) in_top = in_top && std::find(top.begin(), top.end(), 6) != top.end();

  // Labels decided by the last word; activations are pure noise.
  std::vector<ProbeToken> by_ngram;
  for (std::size_t i = 0; i < 500; ++i) {
    const std::size_t y = uniform_index(rng, labels.size());
    ProbeToken t;
    t.label = labels[y];
    t.activations = testsupport::random_vector(rng, units);
    const std::vector<std::string> forms{words[uniform_index(rng, 6)], words[y]};
    t.ngrams = ngram_features(forms, 1, 2);
    by_ngram.push_back(std::move(t));
  }
  const ProbeResult nr = fit_logistic_probe(by_ngram, {});
  double act = 0.0, gram = 0.0;
  for (std::size_t c = 0; c < nr.labels.size(); ++c) {
    for (double v : nr.activation_coefficients(c)) act = std::max(act, std::abs(v));
    for (double v : nr.ngram_coefficients(c)) gram = std::max(gram, std::abs(v));
  }
  return {in_top && act < 0.1 * gram,
          std::string("planted unit in every top-5: ") + (in_top ? "yes" : "no") +
              ", max |activation coef| " + fmt(act) + " vs max |n-gram coef| " + fmt(gram)};
}

// ---- AC9 ------------------------------------------------------------------

int run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" + std::string(GRUSCOPE_CLI) + "' " +
                          args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testsupport::slurp(e.path());
  }
  return out;
}

Outcome ac9() {
  testsupport::TempDir tmp("ac9");
  const std::vector<std::string> steps = {
      "gen --seed 1 --n 200 --out gen",
      "train --corpus gen/corpus.tsv --features gen/features.tsv --out ck --hidden 16 "
      "--embedding 16 --epochs 8 --seed 2",
      "omit --checkpoint ck --corpus gen/corpus.tsv --features gen/features.tsv --out omit",
      "reglab --omission omit/omission.csv --out reglab --seed 3",
      "mi --checkpoint ck --corpus gen/corpus.tsv --out mi --replicates 1000 --seed 4 --threads 2"};
  for (const char* run : {"a", "b"}) {
    fs::create_directories(tmp / run);
    for (const auto& s : steps) {
      const int code = run_cli(tmp / run, s);
      if (code != 0) return {false, "run " + std::string(run) + ": '" + s + "' exited " + std::to_string(code)};
    }
  }
  const auto ta = tree(tmp / "a");
  const auto tb = tree(tmp / "b");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : ta) {
    const auto it = tb.find(name);
    if (it == tb.end() || it->second != bytes) ++differing;
  }
  const bool same = ta.size() == tb.size() && differing == 0;
  return {same && ta.size() > 15, std::to_string(ta.size()) + " files compared, " +
                                      std::to_string(differing) + " differ"};
}

// ---- AC10 -----------------------------------------------------------------

Outcome ac10() {
  const MicroworldRun& r = microworld();
  testsupport::TempDir tmp("ac10");
  save_checkpoint(tmp.path(), r.result.params, r.config, r.corpus.vocabulary);
  const Checkpoint loaded = load_checkpoint(tmp.path());
  double worst = 0.0;
  for (const auto& s : r.corpus.sentences) {
    const auto ids = r.corpus.vocabulary.encode(s);
    for (Pathway p : {Pathway::kVisual, Pathway::kTextual}) {
      const auto a = encode(r.result.params, p, ids);
      const auto b = encode(loaded.params, p, ids);
      for (std::size_t t = 0; t < a.hidden.size(); ++t) {
        for (std::size_t k = 0; k < a.hidden[t].size(); ++k) {
          worst = std::max(worst, std::abs(a.hidden[t][k] - b.hidden[t][k]));
        }
      }
    }
  }
  const bool exact = loaded.params == round_to_float(r.result.params);
  return {worst <= 1e-6 && exact && loaded.vocabulary == r.corpus.vocabulary,
          "max hidden-state difference " + fmt(worst) + " over " +
              std::to_string(r.corpus.sentences.size()) + " sentences; stored values " +
              (exact ? "match" : "differ from") + " float32 rounding"};
}

}  // namespace

int main() {
  report(1, ac1);
  report(2, ac2);
  report(3, ac3);
  report(4, ac4);
  report(5, ac5);
  report(6, ac6);
  report(7, ac7);
  report(8, ac8);
  report(9, ac9);
  report(10, ac10);
  return failures == 0 ? 0 : 1;
}
