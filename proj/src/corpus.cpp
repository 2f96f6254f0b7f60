#include "gruscope/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>

#include "gruscope/errors.hpp"
#include "gruscope/random.hpp"
#include "gruscope/textio.hpp"

namespace gruscope {

const char* to_string(PositionBin bin) {
  switch (bin) {
    case PositionBin::kFirst: return "first";
    case PositionBin::kSecond: return "second";
    case PositionBin::kThird: return "third";
    case PositionBin::kMiddle: return "middle";
    case PositionBin::kAntepenult: return "antepenult";
    case PositionBin::kPenult: return "penult";
    case PositionBin::kLast: return "last";
  }
  return "?";
}

PositionBin parse_position_bin(std::string_view text) {
  for (PositionBin bin : kAllPositionBins) {
    if (text == to_string(bin)) return bin;
  }
  throw DataError("unknown position bin '" + std::string(text) + "'");
}

PositionBin position_bin(std::size_t index, std::size_t length) {
  if (index >= length) {
    throw DataError("position index " + std::to_string(index) +
                    " out of range for length " + std::to_string(length));
  }
  if (index + 1 == length) return PositionBin::kLast;
  if (index + 2 == length) return PositionBin::kPenult;
  if (index + 3 == length) return PositionBin::kAntepenult;
  if (index == 0) return PositionBin::kFirst;
  if (index == 1) return PositionBin::kSecond;
  if (index == 2) return PositionBin::kThird;
  return PositionBin::kMiddle;
}

AnnotatedSentence make_sentence(std::string id, std::span<const TokenFields> fields) {
  if (fields.empty()) throw DataError("sentence " + id + " has no tokens");
  AnnotatedSentence s;
  s.id = std::move(id);
  s.tokens.reserve(fields.size() + 1);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].form == kEndForm) {
      throw DataError("sentence " + s.id + " uses the reserved form " + std::string(kEndForm));
    }
    s.tokens.push_back({fields[i].form, fields[i].pos, fields[i].deprel, i,
                        position_bin(i, fields.size())});
  }
  s.tokens.push_back({std::string(kEndForm), std::string(kEndPos), std::string(kEndDeprel),
                      fields.size(), std::nullopt});
  return s;
}

// ---- annotation files ----------------------------------------------------

std::vector<AnnotatedSentence> parse_annotated(std::istream& in, const std::string& source) {
  std::vector<AnnotatedSentence> out;
  std::unordered_set<std::string> seen;
  std::optional<std::string> current_id;
  std::size_t header_line = 0;
  std::vector<TokenFields> fields;

  auto where = [&](std::size_t line) { return source + ":" + std::to_string(line) + ": "; };
  auto flush = [&] {
    if (!current_id) return;
    if (fields.empty()) {
      throw DataError(where(header_line) + "sentence " + *current_id + " has no tokens");
    }
    out.push_back(make_sentence(*current_id, fields));
    fields.clear();
    current_id.reset();
  };

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string_view line = raw;
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (line.front() == '#' && line.find('\t') == std::string_view::npos) {
      const std::string_view body = trim(line.substr(1));
      if (body.substr(0, 2) == "id" && trim(body.substr(2)).substr(0, 1) == "=") {
        flush();
        const std::string id(trim(trim(body.substr(2)).substr(1)));
        if (id.empty()) throw DataError(where(line_no) + "empty sentence id");
        if (!seen.insert(id).second) {
          throw DataError(where(line_no) + "duplicate sentence id " + id);
        }
        current_id = id;
        header_line = line_no;
      }
      continue;  // other comment lines are ignored
    }
    const auto cols = split(line, '\t');
    if (cols.size() != 3) {
      throw DataError(where(line_no) + "expected 3 tab-separated columns (FORM POS DEPREL), found " +
                      std::to_string(cols.size()));
    }
    if (!current_id) throw DataError(where(line_no) + "token line before any '# id =' header");
    for (const auto& c : cols) {
      if (c.empty()) throw DataError(where(line_no) + "empty column");
    }
    if (cols[0] == kEndForm) {
      throw DataError(where(line_no) + "form " + std::string(kEndForm) + " is reserved");
    }
    fields.push_back({std::string(cols[0]), std::string(cols[1]), std::string(cols[2])});
  }
  flush();
  if (out.empty()) throw DataError(source + ": no sentences found");
  return out;
}

std::vector<AnnotatedSentence> load_annotated(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_annotated(in, path.string());
}

void write_annotated(std::ostream& out, std::span<const AnnotatedSentence> sentences) {
  for (const auto& s : sentences) {
    out << "# id = " << s.id << '\n';
    for (const Token& t : s.content()) {
      out << t.form << '\t' << t.pos << '\t' << t.deprel << '\n';
    }
    out << '\n';
  }
}

// ---- vocabulary ----------------------------------------------------------

Vocabulary Vocabulary::build(std::span<const AnnotatedSentence> sentences,
                             std::size_t min_count) {
  if (min_count == 0) throw DataError("min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences) {
    for (const Token& t : s.content()) ++counts[t.form];
  }
  std::vector<std::string> forms = {std::string(kEndForm), std::string(kUnknownForm)};
  for (const auto& [form, count] : counts) {
    if (count >= min_count && form != kUnknownForm) forms.push_back(form);
  }
  return from_forms(std::move(forms));
}

Vocabulary Vocabulary::from_forms(std::vector<std::string> forms) {
  if (forms.size() < 2 || forms[kEnd] != kEndForm || forms[kUnknown] != kUnknownForm) {
    throw DataError("vocabulary must start with the reserved end and unknown forms");
  }
  Vocabulary v;
  v.forms_ = std::move(forms);
  for (std::size_t i = 0; i < v.forms_.size(); ++i) {
    if (!v.index_.emplace(v.forms_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary form " + v.forms_[i]);
    }
  }
  return v;
}

TokenId Vocabulary::id(std::string_view form) const {
  const auto it = index_.find(std::string(form));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<TokenId> Vocabulary::encode(const AnnotatedSentence& sentence) const {
  std::vector<TokenId> ids;
  ids.reserve(sentence.tokens.size());
  for (const Token& t : sentence.content()) ids.push_back(id(t.form));
  ids.push_back(kEnd);
  return ids;
}

// ---- feature files -------------------------------------------------------

std::optional<std::size_t> FeatureTable::find(std::string_view id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  return std::nullopt;
}

std::span<const double> FeatureTable::row(std::string_view id) const {
  const auto idx = find(id);
  if (!idx) throw DataError("no feature vector for id " + std::string(id));
  return values.row(*idx);
}

FeatureTable parse_features(std::istream& in, const std::string& source,
                            std::span<const std::string> known_ids) {
  const std::unordered_set<std::string> known(known_ids.begin(), known_ids.end());
  std::unordered_set<std::string> seen;
  std::vector<std::string> ids;
  std::vector<double> flat;
  std::size_t dim = 0;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw DataError(where + "expected <id><TAB><values>");
    const std::string id(line.substr(0, tab));
    if (id.empty()) throw DataError(where + "empty id");
    if (!known.empty() && !known.count(id)) throw DataError(where + "unknown id " + id);
    if (!seen.insert(id).second) throw DataError(where + "duplicate id " + id);

    std::size_t count = 0;
    for (const auto field : split(trim(line.substr(tab + 1)), ' ')) {
      if (field.empty()) continue;
      double value = 0.0;
      if (!parse_double(field, value) || !std::isfinite(value)) {
        throw DataError(where + "non-numeric field '" + std::string(field) + "'");
      }
      flat.push_back(value);
      ++count;
    }
    if (count == 0) throw DataError(where + "no values");
    if (ids.empty()) {
      dim = count;
    } else if (count != dim) {
      throw DataError(where + "dimension " + std::to_string(count) + " differs from " +
                      std::to_string(dim));
    }
    ids.push_back(id);
  }
  if (ids.empty()) throw DataError(source + ": no feature vectors found");

  FeatureTable table;
  table.values = Matrix(ids.size(), dim);
  std::copy(flat.begin(), flat.end(), table.values.data().begin());
  table.ids = std::move(ids);
  return table;
}

FeatureTable load_features(const std::filesystem::path& path,
                           std::span<const std::string> known_ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_features(in, path.string(), known_ids);
}

void write_features(std::ostream& out, const FeatureTable& table) {
  for (std::size_t r = 0; r < table.ids.size(); ++r) {
    out << table.ids[r] << '\t';
    const auto row = table.values.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      out << format_double(row[c]);
    }
    out << '\n';
  }
}

// ---- standardization -----------------------------------------------------

Vector Standardization::apply(std::span<const double> row) const {
  require_same_size(row.size(), mean.size(), "standardize");
  Vector out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = (row[i] - mean[i]) / stddev[i];
  return out;
}

Vector Standardization::invert(std::span<const double> row) const {
  require_same_size(row.size(), mean.size(), "unstandardize");
  Vector out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = mean[i] + stddev[i] * row[i];
  return out;
}

StandardizedFeatures standardize(const Matrix& features, std::span<const std::size_t> fit_rows) {
  if (fit_rows.empty()) throw DataError("standardize: empty fit split");
  const std::size_t dim = features.cols();
  const double n = static_cast<double>(fit_rows.size());

  Standardization stats;
  stats.mean.assign(dim, 0.0);
  stats.stddev.assign(dim, 0.0);
  for (std::size_t r : fit_rows) {
    if (r >= features.rows()) throw DataError("standardize: fit row out of range");
    axpy(1.0, features.row(r), stats.mean);
  }
  for (double& m : stats.mean) m /= n;
  for (std::size_t r : fit_rows) {
    const auto row = features.row(r);
    for (std::size_t c = 0; c < dim; ++c) {
      const double dev = row[c] - stats.mean[c];
      stats.stddev[c] += dev * dev;
    }
  }
  std::string degenerate;
  for (std::size_t c = 0; c < dim; ++c) {
    stats.stddev[c] = std::sqrt(stats.stddev[c] / n);
    if (!(stats.stddev[c] > 0.0)) {
      degenerate += (degenerate.empty() ? "" : ", ") + std::to_string(c);
    }
  }
  if (!degenerate.empty()) {
    throw DataError("standardize: zero variance in dimension(s) " + degenerate);
  }

  StandardizedFeatures out;
  out.values = Matrix(features.rows(), dim);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const Vector z = stats.apply(features.row(r));
    std::copy(z.begin(), z.end(), out.values.row(r).begin());
  }
  out.stats = std::move(stats);
  return out;
}

// ---- corpus --------------------------------------------------------------

std::vector<Example> Corpus::examples() const {
  if (features.ids.size() != sentences.size()) {
    throw DataError("corpus has no feature vectors for training");
  }
  std::vector<Example> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto row = features.values.row(i);
    out.push_back({vocabulary.encode(sentences[i]), Vector(row.begin(), row.end())});
  }
  return out;
}

const AnnotatedSentence* Corpus::find(std::string_view id) const {
  for (const auto& s : sentences) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

Corpus assemble_corpus(std::vector<AnnotatedSentence> sentences, const FeatureTable* raw,
                       Vocabulary vocabulary) {
  Corpus corpus;
  corpus.vocabulary = std::move(vocabulary);
  if (raw != nullptr) {
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < raw->ids.size(); ++i) row_of.emplace(raw->ids[i], i);
    Matrix ordered(sentences.size(), raw->dim());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      const auto it = row_of.find(sentences[i].id);
      if (it == row_of.end()) {
        throw DataError("sentence " + sentences[i].id + " has no feature vector");
      }
      const auto src = raw->values.row(it->second);
      std::copy(src.begin(), src.end(), ordered.row(i).begin());
    }
    std::vector<std::size_t> all(sentences.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    StandardizedFeatures z = standardize(ordered, all);
    corpus.features.values = std::move(z.values);
    corpus.stats = std::move(z.stats);
    for (const auto& s : sentences) corpus.features.ids.push_back(s.id);
  }
  corpus.sentences = std::move(sentences);
  return corpus;
}

// ---- micro-world ---------------------------------------------------------

const std::vector<std::string>& microworld_colors() {
  static const std::vector<std::string> colors = {"red",   "green", "blue",
                                                  "yellow", "white", "black"};
  return colors;
}

const std::vector<std::string>& microworld_shapes() {
  static const std::vector<std::string> shapes = {"circle", "square", "triangle",
                                                  "star",   "cube",   "ring"};
  return shapes;
}

Microworld gen_microworld(std::uint64_t seed, std::size_t n_scenes) {
  if (n_scenes == 0) throw DataError("gen_microworld: n_scenes must be at least 1");
  const auto& colors = microworld_colors();
  const auto& shapes = microworld_shapes();

  Microworld world;
  world.attributes = colors;
  world.attributes.insert(world.attributes.end(), shapes.begin(), shapes.end());
  world.features.values = Matrix(n_scenes, world.attributes.size());

  const std::size_t width = std::max<std::size_t>(5, std::to_string(n_scenes - 1).size());
  Rng rng(seed);
  for (std::size_t scene = 0; scene < n_scenes; ++scene) {
    const std::size_t objects = 2 + uniform_index(rng, 2);
    std::vector<std::pair<std::size_t, std::size_t>> drawn;
    for (std::size_t o = 0; o < objects; ++o) {
      const std::size_t c = uniform_index(rng, colors.size());
      const std::size_t s = uniform_index(rng, shapes.size());
      drawn.emplace_back(c, s);
    }

    std::vector<TokenFields> fields;
    auto np = [&](std::string det, std::string det_pos, std::size_t obj, std::string head_rel) {
      fields.push_back({std::move(det), std::move(det_pos), "det"});
      fields.push_back({colors[drawn[obj].first], "JJ", "amod"});
      fields.push_back({shapes[drawn[obj].second], "NN", std::move(head_rel)});
    };
    np("the", "DT", 0, "nsubj");
    if (objects == 3) {
      fields.push_back({"and", "CC", "cc"});
      np("the", "DT", 1, "conj");
    }
    fields.push_back({"is", "VBZ", "root"});
    fields.push_back({"near", "IN", "prep"});
    np("a", "DT", objects - 1, "pobj");

    std::string id = std::to_string(scene);
    id = "scene-" + std::string(width - id.size(), '0') + id;
    world.sentences.push_back(make_sentence(id, fields));
    world.features.ids.push_back(std::move(id));

    auto row = world.features.values.row(scene);
    for (const auto& [c, s] : drawn) {
      row[c] = 1.0;
      row[colors.size() + s] = 1.0;
    }
  }
  return world;
}

}  // namespace gruscope
