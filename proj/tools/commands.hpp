#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gruscope/trainer.hpp"

namespace gruscope::cli {

namespace fs = std::filesystem;

struct GenOptions {
  std::uint64_t seed = 1;
  std::size_t n = 500;
  fs::path out;
};

struct TrainOptions {
  fs::path corpus;
  fs::path features;
  fs::path out;
  TrainConfig config;
  std::string visual_encoder = "gru";
};

struct OmitOptions {
  fs::path checkpoint;
  fs::path corpus;
  fs::path features;  // optional; enables retrieval.csv
  fs::path out;
  std::size_t min_count = 1;
  std::size_t retrieve_k = 5;
  std::size_t threads = 1;
};

struct ReglabOptions {
  fs::path omission;
  fs::path out;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  std::string evaluate_on = "heldout";
  std::size_t min_count = 5;
};

struct ProbeCmdOptions {
  fs::path checkpoint;
  fs::path corpus;
  fs::path out;
  std::size_t window = 4;
  double lambda = 0.01;
  std::size_t min_feature_count = 5;
  std::size_t top_k = 5;
  std::size_t max_iterations = 20000;
};

struct TopkOptions {
  fs::path checkpoint;
  fs::path corpus;
  fs::path out;
  std::size_t k = 20;
  std::size_t n = 3;
  std::string unit_type = "word";
  bool absolute = false;
  std::size_t threads = 1;
};

struct MiOptions {
  fs::path checkpoint;
  fs::path corpus;
  fs::path out;
  std::size_t bins = 20;
  std::size_t replicates = 5000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct TraceOptions {
  fs::path checkpoint;
  fs::path corpus;
  fs::path out;
  std::size_t unit = 0;
  std::vector<std::string> sentences;
  std::string pathway = "textual";
  std::size_t threads = 1;
};

void cmd_gen(const GenOptions& o);
void cmd_train(TrainOptions o);
void cmd_omit(const OmitOptions& o);
void cmd_reglab(const ReglabOptions& o);
void cmd_probe(const ProbeCmdOptions& o);
void cmd_topk(const TopkOptions& o);
void cmd_mi(const MiOptions& o);
void cmd_trace(const TraceOptions& o);

}  // namespace gruscope::cli
