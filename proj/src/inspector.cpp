#include "gruscope/inspector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gruscope/errors.hpp"
#include "gruscope/parallel.hpp"
#include "gruscope/random.hpp"
#include "gruscope/textio.hpp"

namespace gruscope {

Vector ActivationMatrix::unit_row(std::size_t unit) const {
  const auto r = values.row(unit);
  return Vector(r.begin(), r.end());
}

ActivationMatrix capture(const ImaginetParams& params, Pathway pathway, const Corpus& corpus,
                         std::size_t threads) {
  const auto& sentences = corpus.sentences;
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sentences[a].id < sentences[b].id;
  });

  std::vector<EncodeTrace> traces(sentences.size());
  parallel_for(sentences.size(), threads, [&](std::size_t i) {
    traces[i] = encode(params, pathway, corpus.vocabulary.encode(sentences[i]));
  });

  ActivationMatrix m;
  m.pathway = pathway;
  for (std::size_t s : order) {
    for (std::size_t t = 0; t < sentences[s].tokens.size(); ++t) {
      m.columns.push_back({s, sentences[s].id, t});
    }
  }
  const std::size_t units =
      pathway == Pathway::kVisual ? params.visual_state_size() : params.hidden_size();
  m.values = Matrix(units, m.columns.size());
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    const Vector& h = traces[m.columns[c].sentence].hidden[m.columns[c].position];
    for (std::size_t u = 0; u < units; ++u) m.values(u, c) = h[u];
  }
  return m;
}

const char* to_string(ContextUnit unit) {
  return unit == ContextUnit::kWord ? "word" : "deprel";
}

ContextUnit parse_context_unit(const std::string& text) {
  if (text == "word") return ContextUnit::kWord;
  if (text == "deprel") return ContextUnit::kDeprel;
  throw DataError("unknown context unit '" + text + "' (expected word or deprel)");
}

namespace {

const std::string& token_symbol(const Token& t, ContextUnit unit) {
  return unit == ContextUnit::kWord ? t.form : t.deprel;
}

const AnnotatedSentence& sentence_at(std::span<const AnnotatedSentence> sentences,
                                     const ColumnRef& col) {
  if (col.sentence >= sentences.size() || sentences[col.sentence].id != col.sentence_id ||
      col.position >= sentences[col.sentence].tokens.size()) {
    throw DataError("activation column does not match the corpus (sentence " +
                    col.sentence_id + ")");
  }
  return sentences[col.sentence];
}

}  // namespace

std::vector<TopContext> top_k_contexts(const ActivationMatrix& m,
                                       std::span<const AnnotatedSentence> sentences,
                                       std::size_t unit, std::size_t k,
                                       std::size_t context_len, ContextUnit unit_type,
                                       RankMode mode) {
  if (unit >= m.units()) {
    throw DataError("unit " + std::to_string(unit) + " out of range (matrix has " +
                    std::to_string(m.units()) + " units)");
  }
  if (k == 0) throw DataError("top-k: k must be at least 1");
  if (context_len < 1 || context_len > 5) throw DataError("top-k: context length must be 1..5");

  const auto row = m.values.row(unit);
  auto key = [&](std::size_t c) { return mode == RankMode::kAbsolute ? std::abs(row[c]) : row[c]; };
  std::vector<std::size_t> order(m.steps());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  order.resize(std::min(k, order.size()));

  std::vector<TopContext> out;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t c = order[rank];
    const ColumnRef& col = m.columns[c];
    const AnnotatedSentence& s = sentence_at(sentences, col);
    TopContext tc;
    tc.unit = unit;
    tc.rank = rank + 1;
    tc.activation = row[c];
    const std::size_t start = col.position + 1 >= context_len ? col.position + 1 - context_len : 0;
    for (std::size_t p = start; p <= col.position; ++p) {
      tc.context.push_back(token_symbol(s.tokens[p], unit_type));
    }
    tc.sentence_id = col.sentence_id;
    tc.position = col.position;
    tc.column = c;
    out.push_back(std::move(tc));
  }
  return out;
}

Vector decile_thresholds(const ActivationMatrix& m) {
  if (m.steps() == 0) throw DataError("decile thresholds of an empty capture");
  Vector out(m.units());
  for (std::size_t u = 0; u < m.units(); ++u) {
    Vector row = m.unit_row(u);
    std::sort(row.begin(), row.end());
    out[u] = quantile_sorted(row, 0.9);
  }
  return out;
}

UnitTrace trace(const ImaginetParams& params, Pathway pathway, const Vocabulary& vocab,
                const AnnotatedSentence& sentence, std::size_t unit,
                std::span<const double> thresholds) {
  if (unit >= thresholds.size()) {
    throw DataError("unit " + std::to_string(unit) + " has no decile threshold");
  }
  const EncodeTrace enc = encode(params, pathway, vocab.encode(sentence));
  UnitTrace t;
  t.sentence_id = sentence.id;
  t.unit = unit;
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    t.tokens.push_back(sentence.tokens[i].form);
    t.activations.push_back(enc.hidden[i].at(unit));
  }
  t.threshold = thresholds[unit];
  t.top_decile = *std::max_element(t.activations.begin(), t.activations.end()) >= t.threshold;
  return t;
}

void write_trace_csv(std::ostream& out, const UnitTrace& t) {
  out << "sentence_id,unit,position,token,activation,top_decile\n";
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    out << csv_field(t.sentence_id) << ',' << t.unit << ',' << i << ',' << csv_field(t.tokens[i])
        << ',' << format_double(t.activations[i]) << ',' << (t.top_decile ? 1 : 0) << '\n';
  }
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string trace_svg(const UnitTrace& t, double lo, double hi) {
  constexpr int kCell = 64;
  constexpr int kHeight = 28;
  const int width = kCell * static_cast<int>(t.tokens.size());
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << kHeight << "\">\n";
  svg << "<!-- unit " << t.unit << " sentence " << xml_escape(t.sentence_id)
      << "; linear color scale: " << format_double(lo) << " white, " << format_double(hi)
      << " red -->\n";
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    double f = hi > lo ? (t.activations[i] - lo) / (hi - lo) : 1.0;
    f = std::clamp(f, 0.0, 1.0);
    const int fade = static_cast<int>(std::lround(255.0 * (1.0 - f)));
    svg << "<rect x=\"" << kCell * static_cast<int>(i) << "\" y=\"0\" width=\"" << kCell
        << "\" height=\"" << kHeight << "\" fill=\"rgb(255," << fade << ',' << fade
        << ")\" stroke=\"#999\"/>\n";
    svg << "<text x=\"" << kCell * static_cast<int>(i) + kCell / 2
        << "\" y=\"18\" font-size=\"12\" text-anchor=\"middle\">" << xml_escape(t.tokens[i])
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// ---- mutual information --------------------------------------------------

BinnedUnit bin_unit(std::span<const double> row, std::size_t bins) {
  if (bins == 0) throw DataError("bin count must be at least 1");
  if (row.size() < bins) {
    throw DataError("cannot bin " + std::to_string(row.size()) + " values into " +
                    std::to_string(bins) + " bins");
  }
  const std::size_t n = row.size();
  std::vector<double> sorted(row.begin(), row.end());
  std::sort(sorted.begin(), sorted.end());

  BinnedUnit out;
  out.bin_count = bins;
  out.bins.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto below = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), row[i]) - sorted.begin());
    out.bins[i] = static_cast<std::uint32_t>(below * bins / n);
  }
  out.edges.push_back(sorted.front());
  for (std::size_t i = 1; i < bins; ++i) out.edges.push_back(sorted[(i * n + bins - 1) / bins]);
  out.edges.push_back(sorted.back());
  return out;
}

ContextVariable context_variable(const ActivationMatrix& m,
                                 std::span<const AnnotatedSentence> sentences,
                                 ContextUnit unit_type, std::size_t n) {
  if (n == 0) throw DataError("context n-gram length must be at least 1");
  std::vector<std::string> grams;
  grams.reserve(m.columns.size());
  for (const ColumnRef& col : m.columns) {
    const AnnotatedSentence& s = sentence_at(sentences, col);
    std::string g;
    for (std::size_t k = n; k-- > 0;) {
      if (!g.empty()) g += ' ';
      g += col.position >= k ? token_symbol(s.tokens[col.position - k], unit_type)
                             : std::string(kBoundarySymbol);
    }
    grams.push_back(std::move(g));
  }
  ContextVariable cv;
  std::map<std::string, std::uint32_t> ids;
  for (const auto& g : grams) ids.emplace(g, 0);
  for (auto& [g, id] : ids) {
    id = static_cast<std::uint32_t>(cv.names.size());
    cv.names.push_back(g);
  }
  cv.symbols.reserve(grams.size());
  for (const auto& g : grams) cv.symbols.push_back(ids.at(g));
  return cv;
}

double mutual_information(std::span<const std::uint32_t> a, std::span<const std::uint32_t> c) {
  if (a.size() != c.size()) {
    throw DataError("mutual information: lengths differ (" + std::to_string(a.size()) + " vs " +
                    std::to_string(c.size()) + ")");
  }
  if (a.empty()) throw DataError("mutual information of empty variables");
  const std::uint64_t n = a.size();

  std::map<std::uint32_t, std::uint64_t> count_a;
  std::map<std::uint32_t, std::uint64_t> count_c;
  std::vector<std::uint64_t> pairs(n);
  for (std::size_t i = 0; i < n; ++i) {
    ++count_a[a[i]];
    ++count_c[c[i]];
    pairs[i] = (static_cast<std::uint64_t>(a[i]) << 32) | c[i];
  }
  std::sort(pairs.begin(), pairs.end());

  const double inv_n = 1.0 / static_cast<double>(n);
  double mi = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pairs[j] == pairs[i]) ++j;
    const std::uint64_t joint = j - i;
    const auto ai = static_cast<std::uint32_t>(pairs[i] >> 32);
    const auto ci = static_cast<std::uint32_t>(pairs[i] & 0xffffffffu);
    // Integer numerator and denominator keep independent tables at exactly 0.
    const std::uint64_t num = joint * n;
    const std::uint64_t den = count_a[ai] * count_c[ci];
    if (num != den) {
      mi += static_cast<double>(joint) * inv_n *
            std::log(static_cast<double>(num) / static_cast<double>(den));
    }
    i = j;
  }
  return mi;
}

double mutual_information(const BinnedUnit& a, const ContextVariable& c) {
  return mutual_information(a.bins, c.symbols);
}

std::vector<BinnedUnit> bin_units(const ActivationMatrix& m, std::size_t bins,
                                  std::size_t threads) {
  std::vector<BinnedUnit> out(m.units());
  parallel_for(m.units(), threads, [&](std::size_t u) { out[u] = bin_unit(m.values.row(u), bins); });
  return out;
}

MedianMi median_mi(std::span<const BinnedUnit> units, const ContextVariable& c,
                   std::size_t threads) {
  if (units.empty()) throw DataError("median MI over zero units");
  MedianMi out;
  out.per_unit.resize(units.size());
  parallel_for(units.size(), threads,
               [&](std::size_t u) { out.per_unit[u] = mutual_information(units[u], c); });
  out.median = median(out.per_unit);
  return out;
}

MedianMi median_mi(const ActivationMatrix& m, const ContextVariable& c, std::size_t bins,
                   std::size_t threads) {
  const auto units = bin_units(m, bins, threads);
  return median_mi(units, c, threads);
}

BootstrapResult bootstrap_log_ratio(std::span<const double> mi_textual,
                                    std::span<const double> mi_visual,
                                    std::size_t replicates, std::uint64_t seed,
                                    std::size_t threads) {
  if (mi_textual.empty() || mi_visual.empty()) throw DataError("bootstrap: empty MI vector");
  if (replicates == 0) throw DataError("bootstrap: replicates must be at least 1");

  auto resampled_median = [](std::span<const double> v, Rng& rng) {
    std::vector<double> draw(v.size());
    for (double& x : draw) x = v[uniform_index(rng, v.size())];
    return median(std::move(draw));
  };

  Vector values(replicates);
  std::vector<char> kept(replicates, 0);
  parallel_for(replicates, threads, [&](std::size_t r) {
    Rng rng_t(seed + r);
    Rng rng_v(seed + r);
    const double mt = resampled_median(mi_textual, rng_t);
    const double mv = resampled_median(mi_visual, rng_v);
    if (mt > 0.0 && mv > 0.0) {
      values[r] = std::log(mt / mv);
      kept[r] = 1;
    }
  });

  BootstrapResult out;
  for (std::size_t r = 0; r < replicates; ++r) {
    if (kept[r]) {
      out.replicates.push_back(r);
      out.log_ratios.push_back(values[r]);
    } else {
      ++out.excluded;
    }
  }
  if (out.log_ratios.empty()) {
    throw NumericError("bootstrap: all " + std::to_string(replicates) +
                       " replicates had a zero median MI");
  }
  return out;
}

MiSuiteReport run_mi_suite(const ActivationMatrix& textual, const ActivationMatrix& visual,
                           std::span<const AnnotatedSentence> sentences,
                           const MiSuiteOptions& options) {
  if (textual.columns != visual.columns) {
    throw DataError("MI suite: the two captures cover different columns");
  }
  const auto bins_t = bin_units(textual, options.bins, options.threads);
  const auto bins_v = bin_units(visual, options.bins, options.threads);

  MiSuiteReport report;
  report.options = options;
  for (ContextUnit unit : {ContextUnit::kWord, ContextUnit::kDeprel}) {
    for (std::size_t n = 1; n <= 3; ++n) {
      const ContextVariable cv = context_variable(textual, sentences, unit, n);
      MiSuiteEntry e;
      e.context_type = std::string(to_string(unit)) + "_" + std::to_string(n);
      e.textual = median_mi(bins_t, cv, options.threads);
      e.visual = median_mi(bins_v, cv, options.threads);
      e.bootstrap = bootstrap_log_ratio(e.textual.per_unit, e.visual.per_unit,
                                        options.replicates, options.seed, options.threads);
      std::vector<double> sorted = e.bootstrap.log_ratios;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t q = 0; q < kMiSummaryLevels.size(); ++q) {
        e.quantiles[q] = quantile_sorted(sorted, kMiSummaryLevels[q]);
      }
      report.entries.push_back(std::move(e));
    }
  }
  return report;
}

void write_mi_replicates_csv(std::ostream& out, const MiSuiteReport& report) {
  out << "context_type,replicate,log_ratio\n";
  for (const auto& e : report.entries) {
    for (std::size_t i = 0; i < e.bootstrap.log_ratios.size(); ++i) {
      out << e.context_type << ',' << e.bootstrap.replicates[i] << ','
          << format_double(e.bootstrap.log_ratios[i]) << '\n';
    }
  }
}

void write_mi_summary_csv(std::ostream& out, const MiSuiteReport& report) {
  out << "context_type,median_mi_textual,median_mi_visual,excluded,q2.5,q25,q50,q75,q97.5\n";
  for (const auto& e : report.entries) {
    out << e.context_type << ',' << format_double(e.textual.median) << ','
        << format_double(e.visual.median) << ',' << e.bootstrap.excluded;
    for (double q : e.quantiles) out << ',' << format_double(q);
    out << '\n';
  }
}

}  // namespace gruscope
