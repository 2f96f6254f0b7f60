#include "gruscope/trainer.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gruscope/random.hpp"
#include "gruscope/textio.hpp"

namespace gruscope {

void TrainConfig::validate() const {
  if (hidden == 0 || embedding == 0) throw DataError("hidden and embedding sizes must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DataError("alpha must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw DataError("learning rate must be positive");
  if (batch_size == 0) throw DataError("batch size must be positive");
  if (!(clip > 0.0)) throw DataError("clip threshold must be positive");
  if (min_count == 0) throw DataError("min_count must be at least 1");
}

double clip_gradients(ImaginetGrads& grads, double threshold) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > threshold) grads.scale(threshold / norm);
  return norm;
}

void sgd_step(ImaginetParams& params, const ImaginetGrads& grads, double learning_rate) {
  params.add_scaled(grads, -learning_rate);
}

namespace {

EpochLog evaluate(const ImaginetParams& params, std::span<const Example> data, std::size_t epoch) {
  const LossResult r = loss(params, data, false);
  return {epoch, r.total, r.textual, r.visual};
}

bool finite(const EpochLog& e) {
  return std::isfinite(e.total) && std::isfinite(e.textual) && std::isfinite(e.visual);
}

void write_outputs(const TrainConfig& config, const ImaginetParams& params,
                   const Vocabulary& vocab, std::span<const EpochLog> log) {
  if (config.checkpoint_dir.empty()) return;
  save_checkpoint(config.checkpoint_dir, params, config, vocab);
  std::ostringstream csv;
  write_loss_log(csv, log);
  write_file(std::filesystem::path(config.checkpoint_dir) / "loss.csv", csv.str());
}

}  // namespace

TrainResult train(const TrainConfig& config, const Corpus& corpus,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  const std::vector<Example> data = corpus.examples();
  if (data.empty()) throw DataError("training corpus is empty");

  ModelDims dims;
  dims.vocab = corpus.vocabulary.size();
  dims.embedding = config.embedding;
  dims.hidden = config.hidden;
  dims.image = corpus.features.dim();
  dims.visual_encoder = config.visual_encoder;

  TrainResult result;
  result.params = init_params(dims, config.alpha, config.seed);
  ImaginetParams& params = result.params;

  auto record = [&](const EpochLog& e) {
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
  };
  auto diverge = [&](const std::string& what, const ImaginetParams& good, std::size_t epoch) {
    write_outputs(config, good, corpus.vocabulary, result.log);
    throw DivergenceError(what, good, epoch);
  };

  const EpochLog initial = evaluate(params, data, 0);
  if (!finite(initial)) throw NumericError("initial loss is not finite");
  record(initial);

  // Batch order uses its own stream so that it does not shift with the
  // number of draws made by initialization.
  Rng order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;
  ImaginetParams last_good = params;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), order_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      LossResult r = loss(params, batch, true);
      if (!std::isfinite(r.total)) {
        diverge("training diverged in epoch " + std::to_string(epoch) + " (batch loss not finite)",
                last_good, epoch - 1);
      }
      clip_gradients(r.grads, config.clip);
      sgd_step(params, r.grads, config.learning_rate);
    }
    const EpochLog e = evaluate(params, data, epoch);
    if (!finite(e)) {
      diverge("training diverged in epoch " + std::to_string(epoch) + " (epoch loss not finite)",
              last_good, epoch - 1);
    }
    record(e);
    last_good = params;
  }

  write_outputs(config, params, corpus.vocabulary, result.log);
  return result;
}

void write_loss_log(std::ostream& out, std::span<const EpochLog> log) {
  out << "epoch,L,LT,LV\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_double(e.total) << ',' << format_double(e.textual) << ','
        << format_double(e.visual) << '\n';
  }
}

}  // namespace gruscope
