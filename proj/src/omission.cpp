#include "gruscope/omission.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "gruscope/errors.hpp"
#include "gruscope/parallel.hpp"
#include "gruscope/textio.hpp"

namespace gruscope {

std::vector<OmissionRecord> omission_scores(const ImaginetParams& params,
                                            const Vocabulary& vocab,
                                            const AnnotatedSentence& sentence) {
  const std::vector<TokenId> ids = vocab.encode(sentence);
  const Vector full_visual = encode(params, Pathway::kVisual, ids).final_state();
  const Vector full_textual = encode(params, Pathway::kTextual, ids).final_state();

  std::vector<OmissionRecord> records;
  records.reserve(sentence.content_size());
  std::vector<TokenId> partial;
  for (std::size_t i = 0; i < sentence.content_size(); ++i) {
    partial = ids;
    partial.erase(partial.begin() + static_cast<std::ptrdiff_t>(i));
    const Token& tok = sentence.tokens[i];
    OmissionRecord r;
    r.sentence_id = sentence.id;
    r.token_index = i;
    r.form = tok.form;
    r.pos = tok.pos;
    r.deprel = tok.deprel;
    r.position_bin = *tok.position_bin;
    r.score_visual =
        cosine_distance(full_visual, encode(params, Pathway::kVisual, partial).final_state());
    r.score_textual =
        cosine_distance(full_textual, encode(params, Pathway::kTextual, partial).final_state());
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<OmissionRecord> omission_scores(const ImaginetParams& params,
                                            const Vocabulary& vocab,
                                            std::span<const AnnotatedSentence> sentences,
                                            std::size_t threads) {
  std::vector<std::vector<OmissionRecord>> per_sentence(sentences.size());
  parallel_for(sentences.size(), threads, [&](std::size_t i) {
    per_sentence[i] = omission_scores(params, vocab, sentences[i]);
  });
  std::vector<OmissionRecord> out;
  for (auto& chunk : per_sentence) {
    std::move(chunk.begin(), chunk.end(), std::back_inserter(out));
  }
  return out;
}

namespace {

constexpr const char* kOmissionHeader =
    "sentence_id,token_index,form,pos,deprel,position_bin,score_visual,score_textual";

}  // namespace

void write_omission_csv(std::ostream& out, std::span<const OmissionRecord> records) {
  out << kOmissionHeader << '\n';
  for (const auto& r : records) {
    out << csv_field(r.sentence_id) << ',' << r.token_index << ',' << csv_field(r.form) << ','
        << csv_field(r.pos) << ',' << csv_field(r.deprel) << ',' << to_string(r.position_bin)
        << ',' << format_double(r.score_visual) << ',' << format_double(r.score_textual)
        << '\n';
  }
}

std::vector<OmissionRecord> read_omission_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty omission file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kOmissionHeader) throw DataError(source + ":1: unexpected omission CSV header");

  std::vector<OmissionRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto f = parse_csv_line(line);
    if (f.size() != 8) throw DataError(where + "expected 8 fields");
    OmissionRecord r;
    r.sentence_id = f[0];
    if (!parse_size(f[1], r.token_index)) throw DataError(where + "bad token_index");
    r.form = f[2];
    r.pos = f[3];
    r.deprel = f[4];
    r.position_bin = parse_position_bin(f[5]);
    if (!parse_double(f[6], r.score_visual) || !parse_double(f[7], r.score_textual)) {
      throw DataError(where + "bad score");
    }
    out.push_back(std::move(r));
  }
  return out;
}

const char* to_string(LabelKind kind) { return kind == LabelKind::kPos ? "pos" : "deprel"; }

const std::string& label_of(const OmissionRecord& r, LabelKind kind) {
  return kind == LabelKind::kPos ? r.pos : r.deprel;
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  return s;
}

std::vector<LabelDistribution> aggregate_by_label(std::span<const OmissionRecord> records,
                                                  LabelKind kind, std::size_t min_count) {
  if (min_count == 0) throw DataError("min_count must be at least 1");
  std::map<std::string, LabelDistribution> groups;
  for (const auto& r : records) {
    auto& g = groups[label_of(r, kind)];
    g.visual_scores.push_back(r.score_visual);
    g.textual_scores.push_back(r.score_textual);
  }
  std::vector<LabelDistribution> out;
  for (auto& [label, g] : groups) {
    if (g.visual_scores.size() < min_count) continue;
    g.label = label;
    g.visual = summarize(g.visual_scores);
    g.textual = summarize(g.textual_scores);
    out.push_back(std::move(g));
  }
  return out;
}

LogRatioReport log_ratio_by_label(std::span<const OmissionRecord> records, LabelKind kind,
                                  std::size_t min_count) {
  if (min_count == 0) throw DataError("min_count must be at least 1");
  std::map<std::string, std::size_t> occurrences;
  for (const auto& r : records) ++occurrences[label_of(r, kind)];

  std::map<std::string, LogRatioDistribution> groups;
  LogRatioReport report;
  for (const auto& r : records) {
    const std::string& label = label_of(r, kind);
    if (occurrences[label] < min_count) continue;
    auto& g = groups[label];
    if (r.score_visual <= kLogRatioFloor || r.score_textual <= kLogRatioFloor) {
      ++g.excluded;
      ++report.excluded;
      continue;
    }
    g.log_ratios.push_back(std::log(r.score_visual / r.score_textual));
  }
  for (auto& [label, g] : groups) {
    g.label = label;
    g.summary = summarize(g.log_ratios);
    report.labels.push_back(std::move(g));
  }
  return report;
}

std::vector<Neighbor> retrieve_nearest(const FeatureTable& db, std::span<const double> query,
                                       std::size_t k) {
  if (db.ids.empty()) throw DataError("retrieve_nearest: empty database");
  if (k == 0) throw DataError("retrieve_nearest: k must be at least 1");
  std::vector<Neighbor> all;
  all.reserve(db.ids.size());
  for (std::size_t i = 0; i < db.ids.size(); ++i) {
    all.push_back({db.ids[i], cosine_distance(query, db.values.row(i))});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace gruscope
