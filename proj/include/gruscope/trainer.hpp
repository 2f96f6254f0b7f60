#pragma once

// Mini-batch SGD for the two-pathway encoder, plus checkpoint files.
//
// A checkpoint is a directory holding
//   manifest.txt  tab-separated key/value lines: format version, the
//                 training configuration, the vocabulary in id order and
//                 one "tensor" line per parameter (name, rows, cols, offset)
//   params.bin    every tensor as little-endian float32, row-major, in
//                 manifest order

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gruscope/corpus.hpp"
#include "gruscope/errors.hpp"
#include "gruscope/model.hpp"

namespace gruscope {

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t hidden = 256;
  std::size_t embedding = 256;
  double alpha = 0.5;
  double learning_rate = 1.0;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double clip = 5.0;  // global gradient-norm threshold
  std::string checkpoint_dir;  // empty: nothing is written
  std::size_t min_count = 1;   // vocabulary cut-off
  VisualEncoder visual_encoder = VisualEncoder::kGru;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochLog {
  std::size_t epoch = 0;  // 0 is the untrained model
  double total = 0.0;
  double textual = 0.0;
  double visual = 0.0;
};

struct TrainResult {
  ImaginetParams params;
  std::vector<EpochLog> log;
};

// Thrown when a batch or epoch loss stops being finite. Carries the
// parameters at the end of the last finite epoch, and that epoch's number.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, ImaginetParams last_good, std::size_t epoch)
      : NumericError(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const ImaginetParams& last_good() const { return last_good_; }
  std::size_t epoch() const { return epoch_; }

 private:
  ImaginetParams last_good_;
  std::size_t epoch_;
};

// Rescales grads so their global L2 norm is at most threshold. Returns the
// norm before clipping.
double clip_gradients(ImaginetGrads& grads, double threshold);

void sgd_step(ImaginetParams& params, const ImaginetGrads& grads, double learning_rate);

// Parameters initialized from config.seed; batches follow a seeded shuffle
// each epoch. The loss over the full corpus is logged before training and
// after every epoch. With a checkpoint directory set, the final model (or,
// on divergence, the last good one) and loss.csv are written there.
TrainResult train(const TrainConfig& config, const Corpus& corpus,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// epoch,L,LT,LV
void write_loss_log(std::ostream& out, std::span<const EpochLog> log);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ImaginetParams params;
  TrainConfig config;
  Vocabulary vocabulary;
};

void save_checkpoint(const std::filesystem::path& dir, const ImaginetParams& params,
                     const TrainConfig& config, const Vocabulary& vocabulary);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Values as stored: every parameter rounded through float32.
ImaginetParams round_to_float(const ImaginetParams& params);

}  // namespace gruscope
