#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gruscope/errors.hpp"
#include "gruscope/omission.hpp"
#include "support.hpp"

using namespace gruscope;
using testsupport::sentence;
using testsupport::small_dims;

namespace {

struct Fixture {
  std::vector<AnnotatedSentence> sentences{
      sentence("s1", {"the/DT/det", "red/JJ/amod", "ball/NN/nsubj", "rolls/VBZ/root"}),
      sentence("s2", {"a/DT/det", "ball/NN/root"}),
      sentence("s3", {"red/JJ/amod", "red/JJ/amod", "ball/NN/root", "rolls/VBZ/root",
                      "the/DT/det"})};
  Vocabulary vocab = Vocabulary::build(sentences, 1);
  ImaginetParams params = init_params(small_dims(vocab.size()), 0.5, 31);
};

double one_minus_cos(const Vector& a, const Vector& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return 1.0 - ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("omission scores equal one minus cosine of full and reduced end states") {
  Fixture f;
  const auto& s = f.sentences[0];
  const auto records = omission_scores(f.params, f.vocab, s);
  REQUIRE(records.size() == s.content_size());
  const auto ids = f.vocab.encode(s);
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::vector<TokenId> reduced;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (t != i) reduced.push_back(ids[t]);
    }
    for (Pathway p : {Pathway::kVisual, Pathway::kTextual}) {
      const double expect = one_minus_cos(encode(f.params, p, ids).final_state(),
                                          encode(f.params, p, reduced).final_state());
      const double got = p == Pathway::kVisual ? records[i].score_visual : records[i].score_textual;
      CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(records[i].token_index == i);
    CHECK(records[i].form == s.tokens[i].form);
    CHECK(records[i].position_bin == *s.tokens[i].position_bin);
  }
}

TEST_CASE("scores lie in [0, 2] and never include the end marker") {
  Fixture f;
  const auto records = omission_scores(f.params, f.vocab, f.sentences);
  CHECK(records.size() == 4 + 2 + 5);
  for (const auto& r : records) {
    CHECK(r.form != kEndForm);
    CHECK(r.score_visual >= 0.0);
    CHECK(r.score_visual <= 2.0);
    CHECK(r.score_textual >= 0.0);
    CHECK(r.score_textual <= 2.0);
  }
}

TEST_CASE("under the SUM baseline repeated words get identical visual scores") {
  Fixture f;
  ModelDims dims = small_dims(f.vocab.size());
  dims.visual_encoder = VisualEncoder::kSum;
  const ImaginetParams p = init_params(dims, 0.5, 8);
  const auto records = omission_scores(p, f.vocab, f.sentences[2]);
  // tokens 0 and 1 are both "red": removing either leaves the same sum.
  CHECK(records[0].score_visual == doctest::Approx(records[1].score_visual).epsilon(1e-12));
}

TEST_CASE("parallel scoring matches serial scoring exactly and keeps corpus order") {
  Fixture f;
  const auto serial = omission_scores(f.params, f.vocab, f.sentences, 1);
  const auto parallel = omission_scores(f.params, f.vocab, f.sentences, 4);
  CHECK(serial == parallel);
  CHECK(serial.front().sentence_id == "s1");
  CHECK(serial.back().sentence_id == "s3");
}

TEST_CASE("omission CSV round trip and header check") {
  Fixture f;
  const auto records = omission_scores(f.params, f.vocab, f.sentences);
  std::ostringstream out;
  write_omission_csv(out, records);
  std::istringstream in(out.str());
  CHECK(read_omission_csv(in, "o.csv") == records);

  std::istringstream bad("a,b\n");
  CHECK_THROWS_AS(read_omission_csv(bad, "o.csv"), DataError);
  std::istringstream short_row(
      "sentence_id,token_index,form,pos,deprel,position_bin,score_visual,score_textual\n"
      "s,0,x,NN\n");
  CHECK_THROWS_AS(read_omission_csv(short_row, "o.csv"), DataError);
}

namespace {

OmissionRecord rec(const std::string& pos, const std::string& deprel, double v, double t) {
  OmissionRecord r;
  r.sentence_id = "s";
  r.form = "w";
  r.pos = pos;
  r.deprel = deprel;
  r.score_visual = v;
  r.score_textual = t;
  return r;
}

}  // namespace

TEST_CASE("per-label summaries match brute-force quartiles") {
  std::vector<OmissionRecord> rs;
  const double nn[] = {0.4, 0.1, 0.3, 0.2};
  for (double v : nn) rs.push_back(rec("NN", "nsubj", v, v / 2));
  rs.push_back(rec("DT", "det", 0.01, 0.02));

  const auto dist = aggregate_by_label(rs, LabelKind::kPos, 2);
  REQUIRE(dist.size() == 1);
  CHECK(dist[0].label == "NN");
  CHECK(dist[0].visual.count == 4);
  CHECK(dist[0].visual.min == 0.1);
  CHECK(dist[0].visual.max == 0.4);
  // sorted 0.1 0.2 0.3 0.4; linear interpolation at 0.75 and 2.25
  CHECK(dist[0].visual.q1 == doctest::Approx(0.175));
  CHECK(dist[0].visual.median == doctest::Approx(0.25));
  CHECK(dist[0].visual.q3 == doctest::Approx(0.325));
  CHECK(dist[0].textual.median == doctest::Approx(0.125));

  CHECK(aggregate_by_label(rs, LabelKind::kDeprel, 1).size() == 2);
  CHECK_THROWS_AS(aggregate_by_label(rs, LabelKind::kPos, 0), DataError);
}

TEST_CASE("log ratios by label with exclusion of vanishing scores") {
  std::vector<OmissionRecord> rs{rec("NN", "nsubj", 0.2, 0.1), rec("NN", "nsubj", 0.1, 0.4),
                                 rec("NN", "nsubj", 0.0, 0.3), rec("DT", "det", 0.5, 0.5)};
  const auto report = log_ratio_by_label(rs, LabelKind::kPos, 2);
  REQUIRE(report.labels.size() == 1);
  const auto& nn = report.labels[0];
  CHECK(nn.excluded == 1);
  CHECK(report.excluded == 1);
  REQUIRE(nn.log_ratios.size() == 2);
  CHECK(nn.log_ratios[0] == doctest::Approx(std::log(2.0)));
  CHECK(nn.log_ratios[1] == doctest::Approx(std::log(0.25)));
  CHECK(nn.summary.median == doctest::Approx((std::log(2.0) + std::log(0.25)) / 2));
}

TEST_CASE("retrieval ranks by cosine distance with ties broken by id") {
  FeatureTable db;
  db.ids = {"c", "a", "b", "d"};
  db.values = Matrix(4, 2);
  const double rows[][2] = {{1, 0}, {2, 0}, {0, 1}, {1, 1}};
  for (std::size_t i = 0; i < 4; ++i) {
    db.values(i, 0) = rows[i][0];
    db.values(i, 1) = rows[i][1];
  }
  const auto hits = retrieve_nearest(db, Vector{3.0, 0.0}, 3);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].id == "a");  // distance 0, tied with "c"
  CHECK(hits[1].id == "c");
  CHECK(hits[2].id == "d");
  CHECK(hits[2].distance == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)));
  CHECK(retrieve_nearest(db, Vector{0.0, 1.0}, 10).size() == 4);
  CHECK_THROWS_AS(retrieve_nearest(db, Vector{1.0, 0.0}, 0), DataError);
}
