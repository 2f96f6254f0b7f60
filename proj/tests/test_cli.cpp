#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <sys/wait.h>

#include "gruscope/omission.hpp"
#include "gruscope/textio.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using testsupport::slurp;
using testsupport::TempDir;

namespace {

const fs::path kFixtures = GRUSCOPE_FIXTURES;

struct Run {
  int code = -1;
  std::string err;
};

// Runs the CLI with cwd set to `dir`; stderr is captured.
Run cli(const fs::path& dir, const std::string& args) {
  const fs::path err = dir / ".stderr";
  const std::string cmd = "cd '" + dir.string() + "' && '" + std::string(GRUSCOPE_CLI) + "' " +
                          args + " > /dev/null 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  fs::remove(err);
  return r;
}

std::string fixture(const std::string& name) { return "'" + (kFixtures / name).string() + "'"; }

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
  return out;
}

std::string first_line(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_CASE("usage errors exit with 1 and a one-line message") {
  TempDir d("usage");
  for (const std::string args : {"", "bogus", "gen", "gen --out x --n 0", "train --out x",
                                 "topk --checkpoint nowhere --corpus c --out x"}) {
    CAPTURE(args);
    const Run r = cli(d.path(), args);
    CHECK(r.code == 1);
    CHECK(r.err.rfind("gruscope: error[usage]: ", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }
}

TEST_CASE("data errors exit with 2, numeric failures with 3") {
  TempDir d("errors");
  Run r = cli(d.path(), "train --corpus " + fixture("bad_corpus.tsv") + " --features " +
                            fixture("tiny_features.tsv") + " --out ck");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("gruscope: error[data]: ", 0) == 0);
  CHECK(r.err.find("bad_corpus.tsv:3") != std::string::npos);

  r = cli(d.path(), "reglab --omission " + fixture("flat_omission.csv") + " --out rl");
  CHECK(r.code == 3);
  CHECK(r.err.rfind("gruscope: error[numeric]: ", 0) == 0);
}

TEST_CASE("gen is byte-identical across runs and writes only into --out") {
  TempDir d("gen");
  REQUIRE(cli(d.path(), "gen --seed 4 --n 30 --out a").code == 0);
  REQUIRE(cli(d.path(), "gen --seed 4 --n 30 --out b").code == 0);
  CHECK(listing(d.path()) == std::set<std::string>{"a", "b"});
  CHECK(listing(d / "a") ==
        std::set<std::string>{"attributes.txt", "corpus.tsv", "features.tsv", "run.json"});
  for (const char* f : {"attributes.txt", "corpus.tsv", "features.tsv"}) {
    CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
  }
  REQUIRE(cli(d.path(), "gen --seed 5 --n 30 --out c").code == 0);
  CHECK(slurp(d / "a" / "corpus.tsv") != slurp(d / "c" / "corpus.tsv"));

  const auto run = nlohmann::json::parse(slurp(d / "a" / "run.json"));
  CHECK(run.at("subcommand") == "gen");
  CHECK(run.at("seed") == 4);
  CHECK(run.at("out") == "a");
  CHECK(run.contains("toolkit_version"));
  CHECK(run.contains("inputs"));
  CHECK(run.contains("config"));
}

TEST_CASE("omit on an untrained checkpoint emits well-formed reports") {
  TempDir d("omit");
  const std::string corpus = fixture("tiny_corpus.tsv");
  const std::string features = fixture("tiny_features.tsv");
  REQUIRE(cli(d.path(), "train --corpus " + corpus + " --features " + features +
                            " --out ck --hidden 5 --embedding 4 --epochs 0")
              .code == 0);
  CHECK(first_line(d / "ck" / "loss.csv") == "epoch,L,LT,LV");
  REQUIRE(cli(d.path(), "omit --checkpoint ck --corpus " + corpus + " --features " + features +
                            " --out om --min-count 1")
              .code == 0);
  CHECK(listing(d / "om") == std::set<std::string>{"distribution_deprel.csv", "distribution_pos.csv",
                                                   "log_ratio_deprel.csv", "log_ratio_pos.csv",
                                                   "omission.csv", "retrieval.csv", "run.json"});
  std::ifstream in(d / "om" / "omission.csv");
  const auto records = gruscope::read_omission_csv(in, "omission.csv");
  CHECK(records.size() == 4 + 3 + 5 + 3);
  for (const auto& r : records) {
    CHECK(r.score_visual >= 0.0);
    CHECK(r.score_visual <= 2.0);
  }
  CHECK(first_line(d / "om" / "retrieval.csv") == "sentence_id,rank,image_id,distance");
}

TEST_CASE("analysis subcommands on a tiny corpus") {
  TempDir d("analyses");
  const std::string corpus = fixture("tiny_corpus.tsv");
  REQUIRE(cli(d.path(), "train --corpus " + corpus + " --features " +
                            fixture("tiny_features.tsv") +
                            " --out ck --hidden 5 --embedding 4 --epochs 3")
              .code == 0);

  REQUIRE(cli(d.path(), "topk --checkpoint ck --corpus " + corpus + " --out tk --k 3 --n 2").code ==
          0);
  const auto topk = nlohmann::json::parse(slurp(d / "tk" / "topk_visual.json"));
  REQUIRE(topk.is_array());
  CHECK(topk.size() == 5 * 3);
  for (const auto& e : topk) {
    for (const char* key : {"unit", "rank", "activation", "context", "sentence_id", "position"}) {
      CHECK(e.contains(key));
    }
    CHECK(e.at("context").size() <= 2);
  }

  const Run bad_unit = cli(d.path(), "trace --checkpoint ck --corpus " + corpus +
                                         " --out tr --unit 5 --sentence t1");
  CHECK(bad_unit.code == 2);
  CHECK(cli(d.path(), "trace --checkpoint ck --corpus " + corpus +
                          " --out tr2 --unit 1 --sentence ../t1")
            .code == 2);
  REQUIRE(cli(d.path(), "trace --checkpoint ck --corpus " + corpus +
                            " --out tr3 --unit 4 --sentence t3 --sentence t1 --pathway visual")
              .code == 0);
  CHECK(listing(d / "tr3") == std::set<std::string>{"run.json", "trace_t1.csv", "trace_t1.svg",
                                                    "trace_t3.csv", "trace_t3.svg"});
  CHECK(first_line(d / "tr3" / "trace_t3.csv") ==
        "sentence_id,unit,position,token,activation,top_decile");

  REQUIRE(cli(d.path(), "mi --checkpoint ck --corpus " + corpus +
                            " --out mi --bins 3 --replicates 20 --seed 2")
              .code == 0);
  CHECK(first_line(d / "mi" / "mi_summary.csv") ==
        "context_type,median_mi_textual,median_mi_visual,excluded,q2.5,q25,q50,q75,q97.5");
  CHECK(first_line(d / "mi" / "mi_replicates.csv") == "context_type,replicate,log_ratio");

  REQUIRE(cli(d.path(), "probe --checkpoint ck --corpus " + corpus +
                            " --out pr --min-feature-count 1")
              .code == 0);
  const auto summary = nlohmann::json::parse(slurp(d / "pr" / "probe_textual_summary.json"));
  CHECK(summary.at("units") == 5);
  CHECK(summary.at("gradient_inf_norm").get<double>() < 1e-6);
  CHECK(fs::exists(d / "pr" / "probe_visual_top_units.csv"));
  CHECK(fs::exists(d / "pr" / "probe_visual_coefficients.csv"));

  CHECK(listing(d.path()) ==
        std::set<std::string>{"ck", "mi", "pr", "tk", "tr", "tr2", "tr3"});
}
