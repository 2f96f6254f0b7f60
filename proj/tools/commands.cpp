#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gruscope/corpus.hpp"
#include "gruscope/inspector.hpp"
#include "gruscope/omission.hpp"
#include "gruscope/problab.hpp"
#include "gruscope/textio.hpp"

namespace gruscope::cli {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kToolkitVersion = "0.1.0";

// Creates the output directory and records the run before anything else.
void begin_run(const fs::path& out, const std::string& subcommand, Json config, Json inputs,
               std::uint64_t seed) {
  if (out.empty()) throw DataError("--out is required");
  fs::create_directories(out);
  Json manifest;
  manifest["subcommand"] = subcommand;
  manifest["toolkit_version"] = kToolkitVersion;
  manifest["seed"] = seed;
  manifest["out"] = out.string();
  manifest["inputs"] = std::move(inputs);
  manifest["config"] = std::move(config);
  write_file(out / "run.json", manifest.dump(2) + "\n");
}

template <typename Fn>
void write_text(const fs::path& path, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_file(path, ss.str());
}

void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

std::vector<std::string> sentence_ids(std::span<const AnnotatedSentence> sentences) {
  std::vector<std::string> ids;
  for (const auto& s : sentences) ids.push_back(s.id);
  return ids;
}

Corpus load_corpus(const fs::path& corpus, const fs::path& features, const Vocabulary& vocab) {
  auto sentences = load_annotated(corpus);
  if (features.empty()) return assemble_corpus(std::move(sentences), nullptr, vocab);
  const FeatureTable raw = load_features(features, sentence_ids(sentences));
  return assemble_corpus(std::move(sentences), &raw, vocab);
}

const char* pathway_file_tag(Pathway p) { return p == Pathway::kVisual ? "visual" : "textual"; }

}  // namespace

void cmd_gen(const GenOptions& o) {
  begin_run(o.out, "gen", Json{{"n", o.n}}, Json::object(), o.seed);
  const Microworld world = gen_microworld(o.seed, o.n);
  write_text(o.out / "corpus.tsv", [&](std::ostream& s) { write_annotated(s, world.sentences); });
  write_text(o.out / "features.tsv", [&](std::ostream& s) { write_features(s, world.features); });
  std::string attrs;
  for (const auto& a : world.attributes) attrs += a + "\n";
  write_file(o.out / "attributes.txt", attrs);
}

void cmd_train(TrainOptions o) {
  o.config.visual_encoder = parse_visual_encoder(o.visual_encoder);
  o.config.checkpoint_dir = o.out.string();
  const TrainConfig& c = o.config;
  c.validate();
  Json config{{"hidden", c.hidden},
              {"embedding", c.embedding},
              {"alpha", c.alpha},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"clip", c.clip},
              {"min_count", c.min_count},
              {"visual_encoder", to_string(c.visual_encoder)}};
  begin_run(o.out, "train", config,
            Json{{"corpus", o.corpus.string()}, {"features", o.features.string()}}, c.seed);
  if (o.features.empty()) throw DataError("train needs --features");

  auto sentences = load_annotated(o.corpus);
  const Vocabulary vocab = Vocabulary::build(sentences, c.min_count);
  const FeatureTable raw = load_features(o.features, sentence_ids(sentences));
  const Corpus corpus = assemble_corpus(std::move(sentences), &raw, vocab);
  train(c, corpus);
}

void cmd_omit(const OmitOptions& o) {
  begin_run(o.out, "omit", Json{{"min_count", o.min_count}, {"retrieve_k", o.retrieve_k}},
            Json{{"checkpoint", o.checkpoint.string()},
                 {"corpus", o.corpus.string()},
                 {"features", o.features.string()}},
            0);
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const Corpus corpus = load_corpus(o.corpus, o.features, cp.vocabulary);

  const auto records = omission_scores(cp.params, cp.vocabulary, corpus.sentences, o.threads);
  write_text(o.out / "omission.csv", [&](std::ostream& s) { write_omission_csv(s, records); });

  for (LabelKind kind : {LabelKind::kPos, LabelKind::kDeprel}) {
    const std::string tag = to_string(kind);
    write_text(o.out / ("distribution_" + tag + ".csv"), [&](std::ostream& s) {
      s << "label,pathway,count,min,q1,median,q3,max\n";
      for (const auto& d : aggregate_by_label(records, kind, o.min_count)) {
        for (const auto& [name, sum] : {std::pair{"visual", d.visual}, std::pair{"textual", d.textual}}) {
          s << csv_field(d.label) << ',' << name << ',' << sum.count << ','
            << format_double(sum.min) << ',' << format_double(sum.q1) << ','
            << format_double(sum.median) << ',' << format_double(sum.q3) << ','
            << format_double(sum.max) << '\n';
        }
      }
    });
    write_text(o.out / ("log_ratio_" + tag + ".csv"), [&](std::ostream& s) {
      const LogRatioReport report = log_ratio_by_label(records, kind, o.min_count);
      s << "label,count,excluded,min,q1,median,q3,max\n";
      for (const auto& d : report.labels) {
        s << csv_field(d.label) << ',' << d.summary.count << ',' << d.excluded << ','
          << format_double(d.summary.min) << ',' << format_double(d.summary.q1) << ','
          << format_double(d.summary.median) << ',' << format_double(d.summary.q3) << ','
          << format_double(d.summary.max) << '\n';
      }
    });
  }

  if (!o.features.empty()) {
    write_text(o.out / "retrieval.csv", [&](std::ostream& s) {
      s << "sentence_id,rank,image_id,distance\n";
      for (const auto& sentence : corpus.sentences) {
        const auto h = encode(cp.params, Pathway::kVisual, cp.vocabulary.encode(sentence));
        const Vector query = predict_image(cp.params, h.final_state());
        const auto hits = retrieve_nearest(corpus.features, query, o.retrieve_k);
        for (std::size_t r = 0; r < hits.size(); ++r) {
          s << csv_field(sentence.id) << ',' << r + 1 << ',' << csv_field(hits[r].id) << ','
            << format_double(hits[r].distance) << '\n';
        }
      }
    });
  }
}

void cmd_reglab(const ReglabOptions& o) {
  LmSuiteOptions opt;
  opt.lambda = o.lambda;
  opt.split_seed = o.seed;
  if (o.evaluate_on == "heldout") {
    opt.evaluate_on = EvalSplit::kHeldOut;
  } else if (o.evaluate_on == "training") {
    opt.evaluate_on = EvalSplit::kTraining;
  } else {
    throw DataError("--evaluate-on must be heldout or training");
  }
  // Without a penalty the one-hot blocks are collinear with the intercept.
  opt.singular = o.lambda > 0.0 ? RankPolicy::kError : RankPolicy::kMinimumNorm;
  begin_run(o.out, "reglab",
            Json{{"lambda", o.lambda}, {"evaluate_on", o.evaluate_on}, {"min_count", o.min_count}},
            Json{{"omission", o.omission.string()}}, o.seed);

  std::ifstream in(o.omission);
  if (!in) throw DataError("cannot open " + o.omission.string());
  const auto records = read_omission_csv(in, o.omission.string());

  std::vector<LmSeries> series{{"visual", lm_rows(records, Pathway::kVisual)},
                               {"textual", lm_rows(records, Pathway::kTextual)}};
  const LmSuiteReport report = run_lm_suite(series, opt);

  write_text(o.out / "r2.csv", [&](std::ostream& s) {
    s << "series,model,r2,delta_r2,fit_rows,eval_rows\n";
    for (const auto& e : report.entries) {
      for (std::size_t m = 0; m < kAllLmModels.size(); ++m) {
        s << e.series << ',' << to_string(kAllLmModels[m]) << ',' << format_double(e.r2[m]) << ','
          << format_double(e.delta[m]) << ',' << e.fit_rows << ',' << e.eval_rows << '\n';
      }
    }
  });
  write_text(o.out / "position_coefficients.csv", [&](std::ostream& s) {
    s << "series,position,coefficient\n";
    for (const auto& e : report.entries) {
      for (std::size_t b = 0; b < kPositionBinCount; ++b) {
        s << e.series << ',' << to_string(kAllPositionBins[b]) << ','
          << format_double(e.position_coefficients[b]) << '\n';
      }
    }
  });
  write_text(o.out / "deprel_gain.csv", [&](std::ostream& s) {
    s << "series,rank,word,count,mean_gain\n";
    for (const auto& sr : series) {
      const auto gains = rank_words_by_deprel_gain(sr.rows, o.min_count, o.lambda);
      for (std::size_t r = 0; r < gains.size(); ++r) {
        s << sr.name << ',' << r + 1 << ',' << csv_field(gains[r].word) << ',' << gains[r].count
          << ',' << format_double(gains[r].mean_gain) << '\n';
      }
    }
  });
  write_text(o.out / "split.csv", [&](std::ostream& s) {
    s << "sentence_id,half\n";
    for (const auto& id : report.fit_sentences) s << csv_field(id) << ",fit\n";
    for (const auto& id : report.eval_sentences) s << csv_field(id) << ",eval\n";
  });
}

void cmd_probe(const ProbeCmdOptions& o) {
  ProbeOptions opt;
  opt.window = o.window;
  opt.lambda = o.lambda;
  opt.min_feature_count = o.min_feature_count;
  opt.top_k = o.top_k;
  opt.max_iterations = o.max_iterations;
  begin_run(o.out, "probe",
            Json{{"window", o.window},
                 {"lambda", o.lambda},
                 {"min_feature_count", o.min_feature_count},
                 {"top_k", o.top_k},
                 {"max_iterations", o.max_iterations}},
            Json{{"checkpoint", o.checkpoint.string()}, {"corpus", o.corpus.string()}}, 0);
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const Corpus corpus = load_corpus(o.corpus, {}, cp.vocabulary);

  for (Pathway p : {Pathway::kVisual, Pathway::kTextual}) {
    const std::string tag = pathway_file_tag(p);
    const ProbeResult r = fit_logistic_probe(cp.params, corpus, p, opt);
    write_text(o.out / ("probe_" + tag + "_top_units.csv"), [&](std::ostream& s) {
      s << "label,rank,unit,coefficient\n";
      for (std::size_t l = 0; l < r.labels.size(); ++l) {
        const auto coef = r.activation_coefficients(l);
        for (std::size_t k = 0; k < r.top_units[l].size(); ++k) {
          const std::size_t u = r.top_units[l][k];
          s << csv_field(r.labels[l]) << ',' << k + 1 << ',' << u << ','
            << format_double(coef[u]) << '\n';
        }
      }
    });
    write_text(o.out / ("probe_" + tag + "_coefficients.csv"), [&](std::ostream& s) {
      s << "label,kind,feature,coefficient\n";
      for (std::size_t l = 0; l < r.labels.size(); ++l) {
        s << csv_field(r.labels[l]) << ",intercept,," << format_double(r.intercepts[l]) << '\n';
        const auto ng = r.ngram_coefficients(l);
        for (std::size_t f = 0; f < ng.size(); ++f) {
          s << csv_field(r.labels[l]) << ",ngram," << csv_field(r.ngram_features[f]) << ','
            << format_double(ng[f]) << '\n';
        }
        const auto act = r.activation_coefficients(l);
        for (std::size_t u = 0; u < act.size(); ++u) {
          s << csv_field(r.labels[l]) << ",unit," << u << ',' << format_double(act[u]) << '\n';
        }
      }
    });
    write_json(o.out / ("probe_" + tag + "_summary.json"),
               Json{{"pathway", tag},
                    {"labels", r.labels},
                    {"ngram_features", r.ngram_features.size()},
                    {"units", r.units},
                    {"training_accuracy", r.training_accuracy},
                    {"iterations", r.iterations},
                    {"gradient_inf_norm", r.gradient_norm},
                    {"final_loss", r.loss_history.back()}});
  }
}

void cmd_topk(const TopkOptions& o) {
  const ContextUnit unit_type = parse_context_unit(o.unit_type);
  begin_run(o.out, "topk",
            Json{{"k", o.k}, {"n", o.n}, {"unit_type", o.unit_type}, {"absolute", o.absolute}},
            Json{{"checkpoint", o.checkpoint.string()}, {"corpus", o.corpus.string()}}, 0);
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const Corpus corpus = load_corpus(o.corpus, {}, cp.vocabulary);

  for (Pathway p : {Pathway::kVisual, Pathway::kTextual}) {
    const ActivationMatrix m = capture(cp.params, p, corpus, o.threads);
    Json out = Json::array();
    for (std::size_t u = 0; u < m.units(); ++u) {
      for (const auto& tc : top_k_contexts(m, corpus.sentences, u, o.k, o.n, unit_type,
                                           o.absolute ? RankMode::kAbsolute : RankMode::kSigned)) {
        out.push_back(Json{{"unit", tc.unit},
                           {"rank", tc.rank},
                           {"activation", tc.activation},
                           {"context", tc.context},
                           {"sentence_id", tc.sentence_id},
                           {"position", tc.position}});
      }
    }
    write_json(o.out / (std::string("topk_") + pathway_file_tag(p) + ".json"), out);
  }
}

void cmd_mi(const MiOptions& o) {
  begin_run(o.out, "mi", Json{{"bins", o.bins}, {"replicates", o.replicates}},
            Json{{"checkpoint", o.checkpoint.string()}, {"corpus", o.corpus.string()}}, o.seed);
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const Corpus corpus = load_corpus(o.corpus, {}, cp.vocabulary);

  const ActivationMatrix textual = capture(cp.params, Pathway::kTextual, corpus, o.threads);
  const ActivationMatrix visual = capture(cp.params, Pathway::kVisual, corpus, o.threads);
  MiSuiteOptions opt;
  opt.bins = o.bins;
  opt.replicates = o.replicates;
  opt.seed = o.seed;
  opt.threads = o.threads;
  const MiSuiteReport report = run_mi_suite(textual, visual, corpus.sentences, opt);
  write_text(o.out / "mi_replicates.csv",
             [&](std::ostream& s) { write_mi_replicates_csv(s, report); });
  write_text(o.out / "mi_summary.csv", [&](std::ostream& s) { write_mi_summary_csv(s, report); });
}

void cmd_trace(const TraceOptions& o) {
  const Pathway pathway = parse_pathway(o.pathway);
  if (o.sentences.empty()) throw DataError("trace needs at least one --sentence");
  begin_run(o.out, "trace",
            Json{{"unit", o.unit}, {"pathway", o.pathway}, {"sentences", o.sentences}},
            Json{{"checkpoint", o.checkpoint.string()}, {"corpus", o.corpus.string()}}, 0);
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const Corpus corpus = load_corpus(o.corpus, {}, cp.vocabulary);

  const ActivationMatrix m = capture(cp.params, pathway, corpus, o.threads);
  if (o.unit >= m.units()) {
    throw DataError("unit " + std::to_string(o.unit) + " out of range (" +
                    std::to_string(m.units()) + " units)");
  }
  const Vector thresholds = decile_thresholds(m);
  const auto row = m.values.row(o.unit);
  const double lo = *std::min_element(row.begin(), row.end());
  const double hi = *std::max_element(row.begin(), row.end());

  for (const auto& id : o.sentences) {
    const AnnotatedSentence* s = corpus.find(id);
    if (s == nullptr) throw DataError("sentence '" + id + "' not in the corpus");
    if (id.find_first_of("/\\") != std::string::npos || id == "." || id == "..") {
      throw DataError("sentence id '" + id + "' cannot name an output file");
    }
    const UnitTrace t = trace(cp.params, pathway, cp.vocabulary, *s, o.unit, thresholds);
    write_text(o.out / ("trace_" + id + ".csv"), [&](std::ostream& os) { write_trace_csv(os, t); });
    write_file(o.out / ("trace_" + id + ".svg"), trace_svg(t, lo, hi));
  }
}

}  // namespace gruscope::cli
