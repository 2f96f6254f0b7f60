#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "gruscope/errors.hpp"
#include "gruscope/trainer.hpp"
#include "support.hpp"

using namespace gruscope;

namespace {

Corpus small_corpus(std::uint64_t seed, std::size_t n) {
  const Microworld w = gen_microworld(seed, n);
  return assemble_corpus(w.sentences, &w.features, Vocabulary::build(w.sentences, 1));
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden = 8;
  c.embedding = 8;
  c.epochs = 2;
  c.seed = 3;
  return c;
}

bool same_tensors(const GruParams& a, const GruParams& b) { return a == b; }

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), DataError);
  c = small_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), DataError);
  c = small_config();
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), DataError);
  c = small_config();
  c.clip = 0.0;
  CHECK_THROWS_AS(c.validate(), DataError);
}

TEST_CASE("clipping bounds the global norm and reports the original") {
  const auto p = init_params(testsupport::small_dims(), 0.5, 1);
  ImaginetGrads g = p;  // any tensors of the right shape
  const double before = std::sqrt(g.squared_norm());
  REQUIRE(before > 1.0);
  CHECK(clip_gradients(g, 1.0) == doctest::Approx(before));
  CHECK(std::sqrt(g.squared_norm()) == doctest::Approx(1.0));
  ImaginetGrads h = p;
  CHECK(clip_gradients(h, 2.0 * before) == doctest::Approx(before));
  CHECK(h == static_cast<const ImaginetTensors&>(p));
}

TEST_CASE("a small SGD step along the gradient lowers the loss") {
  const Corpus c = small_corpus(2, 20);
  ImaginetParams p =
      init_params(testsupport::small_dims(c.vocabulary.size(), 8, 8, c.features.dim()), 0.5, 5);
  const auto batch = c.examples();
  const LossResult before = loss(p, batch, true);
  sgd_step(p, before.grads, 1e-4);
  CHECK(loss(p, batch, false).total < before.total);
}

TEST_CASE("the logged loss is the alpha-weighted sum of its parts") {
  const Corpus c = small_corpus(4, 30);
  TrainConfig cfg = small_config();
  cfg.alpha = 0.3;
  const TrainResult r = train(cfg, c);
  REQUIRE(r.log.size() == cfg.epochs + 1);
  for (std::size_t e = 0; e < r.log.size(); ++e) {
    const auto& l = r.log[e];
    CHECK(l.epoch == e);
    CHECK(l.total == doctest::Approx(0.3 * l.textual + 0.7 * l.visual).epsilon(1e-12));
  }
  const LossResult final_loss = loss(r.params, c.examples(), false);
  CHECK(final_loss.total == doctest::Approx(r.log.back().total).epsilon(1e-12));
}

TEST_CASE("training is deterministic in the seed") {
  const Corpus c = small_corpus(4, 30);
  const TrainResult a = train(small_config(), c);
  const TrainResult b = train(small_config(), c);
  CHECK(a.params == b.params);
  TrainConfig other = small_config();
  other.seed = 4;
  CHECK_FALSE(train(other, c).params == a.params);
}

TEST_CASE("with alpha = 1 the visual pathway is never updated") {
  const Corpus c = small_corpus(6, 24);
  TrainConfig cfg = small_config();
  cfg.alpha = 1.0;
  const TrainResult r = train(cfg, c);
  ModelDims dims{c.vocabulary.size(), 8, 8, c.features.dim(), VisualEncoder::kGru};
  const auto init = init_params(dims, 1.0, cfg.seed);
  CHECK(same_tensors(r.params.visual, init.visual));
  CHECK(r.params.image_proj == init.image_proj);
  CHECK_FALSE(r.params.textual == init.textual);
}

TEST_CASE("the epoch callback sees every log entry") {
  const Corpus c = small_corpus(6, 24);
  std::vector<std::size_t> seen;
  const TrainResult r = train(small_config(), c, [&](const EpochLog& l) { seen.push_back(l.epoch); });
  CHECK(seen == std::vector<std::size_t>{0, 1, 2});
  std::ostringstream out;
  write_loss_log(out, r.log);
  CHECK(out.str().rfind("epoch,L,LT,LV\n0,", 0) == 0);
}

TEST_CASE("a diverging run keeps the last finite parameters") {
  const Corpus c = small_corpus(6, 24);
  testsupport::TempDir dir("diverge");
  TrainConfig cfg = small_config();
  cfg.learning_rate = 1e300;
  cfg.clip = 1e300;
  cfg.checkpoint_dir = (dir / "ck").string();
  ModelDims dims{c.vocabulary.size(), 8, 8, c.features.dim(), VisualEncoder::kGru};
  try {
    train(cfg, c);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() == 0);  // the last epoch whose loss was finite
    CHECK(e.last_good() == init_params(dims, cfg.alpha, cfg.seed));
    const Checkpoint saved = load_checkpoint(dir / "ck");
    CHECK(saved.params == round_to_float(e.last_good()));
  }
}

TEST_CASE("checkpoints round-trip byte for byte") {
  const Corpus c = small_corpus(7, 20);
  const TrainConfig cfg = small_config();
  const TrainResult r = train(cfg, c);
  testsupport::TempDir dir("ckpt");
  save_checkpoint(dir / "a", r.params, cfg, c.vocabulary);
  const Checkpoint loaded = load_checkpoint(dir / "a");
  CHECK(loaded.config == cfg);
  CHECK(loaded.vocabulary == c.vocabulary);
  CHECK(loaded.params == round_to_float(r.params));
  save_checkpoint(dir / "b", loaded.params, loaded.config, loaded.vocabulary);
  CHECK(testsupport::slurp(dir / "a" / "manifest.txt") ==
        testsupport::slurp(dir / "b" / "manifest.txt"));
  CHECK(testsupport::slurp(dir / "a" / "params.bin") ==
        testsupport::slurp(dir / "b" / "params.bin"));

  // Forward passes survive the float32 round trip.
  for (const auto& s : c.sentences) {
    const auto ids = c.vocabulary.encode(s);
    for (Pathway p : {Pathway::kVisual, Pathway::kTextual}) {
      const auto x = encode(r.params, p, ids).final_state();
      const auto y = encode(loaded.params, p, ids).final_state();
      for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(x[k] - y[k]) < 1e-6);
    }
  }
}

TEST_CASE("damaged checkpoints are rejected with a useful message") {
  const Corpus c = small_corpus(7, 20);
  const TrainConfig cfg = small_config();
  const auto params =
      init_params(ModelDims{c.vocabulary.size(), 8, 8, c.features.dim(), VisualEncoder::kGru},
                  0.5, 1);
  testsupport::TempDir dir("damaged");
  save_checkpoint(dir.path(), params, cfg, c.vocabulary);

  const std::string blob = testsupport::slurp(dir / "params.bin");
  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size() - 4));
  }
  const std::string last_tensor = params.named().back().name;
  try {
    load_checkpoint(dir.path());
    FAIL("expected a truncation error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("'" + last_tensor + "'") != std::string::npos);
  }
  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    out << blob << "xx";
  }
  CHECK_THROWS_AS(load_checkpoint(dir.path()), DataError);

  std::string manifest = testsupport::slurp(dir / "manifest.txt");
  manifest.replace(manifest.find("version\t1"), 9, "version\t2");
  {
    std::ofstream out(dir / "manifest.txt", std::ios::trunc);
    out << manifest;
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(dir.path()), doctest::Contains("version 2"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), DataError);
}
