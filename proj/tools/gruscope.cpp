// gruscope: train the two-pathway caption encoder and run the analyses.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numeric failure. Failures print one line on stderr:
//   gruscope: error[<kind>]: <message>

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "gruscope/errors.hpp"
#include "gruscope/parallel.hpp"

namespace {

using namespace gruscope;
using namespace gruscope::cli;

int fail(const char* kind, std::string message, int code) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "gruscope: error[" << kind << "]: " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent caption encoder training and interpretation toolkit"};
  app.require_subcommand(1);
  const std::size_t hw = default_threads();

  GenOptions gen;
  auto* sc_gen = app.add_subcommand("gen", "Write a synthetic scene/caption corpus");
  sc_gen->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  sc_gen->add_option("--n", gen.n, "Number of scenes")->capture_default_str()->check(CLI::PositiveNumber);
  sc_gen->add_option("--out", gen.out, "Output directory")->required();

  TrainOptions tr;
  auto* sc_train = app.add_subcommand("train", "Train and write a checkpoint");
  sc_train->add_option("--corpus", tr.corpus, "Annotated corpus")->required()->check(CLI::ExistingFile);
  sc_train->add_option("--features", tr.features, "Image feature table")->required()->check(CLI::ExistingFile);
  sc_train->add_option("--out", tr.out, "Checkpoint directory")->required();
  sc_train->add_option("--seed", tr.config.seed)->capture_default_str();
  sc_train->add_option("--hidden", tr.config.hidden, "Hidden size d")->capture_default_str();
  sc_train->add_option("--embedding", tr.config.embedding, "Embedding size e")->capture_default_str();
  sc_train->add_option("--alpha", tr.config.alpha, "Weight of the textual loss")->capture_default_str();
  sc_train->add_option("--learning-rate", tr.config.learning_rate)->capture_default_str();
  sc_train->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
  sc_train->add_option("--epochs", tr.config.epochs)->capture_default_str();
  sc_train->add_option("--clip", tr.config.clip, "Gradient-norm threshold")->capture_default_str();
  sc_train->add_option("--min-count", tr.config.min_count, "Vocabulary cut-off")->capture_default_str();
  sc_train->add_option("--visual-encoder", tr.visual_encoder, "gru or sum")
      ->capture_default_str()
      ->check(CLI::IsMember({"gru", "sum"}));

  OmitOptions om;
  om.threads = hw;
  auto* sc_omit = app.add_subcommand("omit", "Omission scores and per-label reports");
  sc_omit->add_option("--checkpoint", om.checkpoint)->required()->check(CLI::ExistingDirectory);
  sc_omit->add_option("--corpus", om.corpus)->required()->check(CLI::ExistingFile);
  sc_omit->add_option("--features", om.features, "Enables retrieval.csv")->check(CLI::ExistingFile);
  sc_omit->add_option("--out", om.out)->required();
  sc_omit->add_option("--min-count", om.min_count, "Minimum label count")->capture_default_str();
  sc_omit->add_option("--retrieve-k", om.retrieve_k)->capture_default_str();
  sc_omit->add_option("--threads", om.threads)->capture_default_str();

  ReglabOptions rl;
  auto* sc_reglab = app.add_subcommand("reglab", "Regressions on omission scores");
  sc_reglab->add_option("--omission", rl.omission)->required()->check(CLI::ExistingFile);
  sc_reglab->add_option("--out", rl.out)->required();
  sc_reglab->add_option("--lambda", rl.lambda, "Ridge penalty")->capture_default_str();
  sc_reglab->add_option("--seed", rl.seed, "Sentence split seed")->capture_default_str();
  sc_reglab->add_option("--evaluate-on", rl.evaluate_on, "heldout or training")
      ->capture_default_str()
      ->check(CLI::IsMember({"heldout", "training"}));
  sc_reglab->add_option("--min-count", rl.min_count, "Minimum word count for the gain ranking")
      ->capture_default_str();

  ProbeCmdOptions pr;
  auto* sc_probe = app.add_subcommand("probe", "Logistic deprel probes on hidden states");
  sc_probe->add_option("--checkpoint", pr.checkpoint)->required()->check(CLI::ExistingDirectory);
  sc_probe->add_option("--corpus", pr.corpus)->required()->check(CLI::ExistingFile);
  sc_probe->add_option("--out", pr.out)->required();
  sc_probe->add_option("--window", pr.window)->capture_default_str();
  sc_probe->add_option("--lambda", pr.lambda)->capture_default_str();
  sc_probe->add_option("--min-feature-count", pr.min_feature_count)->capture_default_str();
  sc_probe->add_option("--top-k", pr.top_k)->capture_default_str();
  sc_probe->add_option("--max-iterations", pr.max_iterations)->capture_default_str();

  TopkOptions tk;
  tk.threads = hw;
  auto* sc_topk = app.add_subcommand("topk", "Top-K contexts per hidden unit");
  sc_topk->add_option("--checkpoint", tk.checkpoint)->required()->check(CLI::ExistingDirectory);
  sc_topk->add_option("--corpus", tk.corpus)->required()->check(CLI::ExistingFile);
  sc_topk->add_option("--out", tk.out)->required();
  sc_topk->add_option("--k", tk.k)->capture_default_str();
  sc_topk->add_option("--n", tk.n, "Context length 1..5")->capture_default_str();
  sc_topk->add_option("--unit-type", tk.unit_type, "word or deprel")
      ->capture_default_str()
      ->check(CLI::IsMember({"word", "deprel"}));
  sc_topk->add_flag("--abs", tk.absolute, "Rank by absolute activation");
  sc_topk->add_option("--threads", tk.threads)->capture_default_str();

  MiOptions mi;
  mi.threads = hw;
  auto* sc_mi = app.add_subcommand("mi", "Mutual information between units and contexts");
  sc_mi->add_option("--checkpoint", mi.checkpoint)->required()->check(CLI::ExistingDirectory);
  sc_mi->add_option("--corpus", mi.corpus)->required()->check(CLI::ExistingFile);
  sc_mi->add_option("--out", mi.out)->required();
  sc_mi->add_option("--bins", mi.bins)->capture_default_str();
  sc_mi->add_option("--replicates", mi.replicates)->capture_default_str();
  sc_mi->add_option("--seed", mi.seed)->capture_default_str();
  sc_mi->add_option("--threads", mi.threads)->capture_default_str();

  TraceOptions tc;
  tc.threads = hw;
  auto* sc_trace = app.add_subcommand("trace", "Per-token activation of one unit");
  sc_trace->add_option("--checkpoint", tc.checkpoint)->required()->check(CLI::ExistingDirectory);
  sc_trace->add_option("--corpus", tc.corpus)->required()->check(CLI::ExistingFile);
  sc_trace->add_option("--out", tc.out)->required();
  sc_trace->add_option("--unit", tc.unit)->required();
  sc_trace->add_option("--sentence", tc.sentences, "Sentence id (repeatable)")->required();
  sc_trace->add_option("--pathway", tc.pathway, "visual or textual")
      ->capture_default_str()
      ->check(CLI::IsMember({"visual", "textual"}));
  sc_trace->add_option("--threads", tc.threads)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 1);
  }

  try {
    if (*sc_gen) cmd_gen(gen);
    if (*sc_train) cmd_train(tr);
    if (*sc_omit) cmd_omit(om);
    if (*sc_reglab) cmd_reglab(rl);
    if (*sc_probe) cmd_probe(pr);
    if (*sc_topk) cmd_topk(tk);
    if (*sc_mi) cmd_mi(mi);
    if (*sc_trace) cmd_trace(tc);
  } catch (const DataError& e) {
    return fail("data", e.what(), 2);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), 3);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("data", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 3);
  }
  return 0;
}
