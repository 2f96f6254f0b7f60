#include <algorithm>
#include <cmath>
#include <map>

#include "gruscope/errors.hpp"
#include "gruscope/problab.hpp"

namespace gruscope {

std::vector<std::string> ngram_features(std::span<const std::string> forms, std::size_t t,
                                        std::size_t window) {
  if (window == 0) throw DataError("n-gram window must be at least 1");
  if (t >= forms.size()) throw DataError("n-gram position out of range");
  const std::size_t start = t + 1 >= window ? t + 1 - window : 0;
  std::vector<std::string> out;
  for (std::size_t a = start; a <= t; ++a) {
    std::string feature;
    for (std::size_t b = a; b <= t; ++b) {
      if (b > a) feature += ' ';
      feature += forms[b] + "_" + std::to_string(t - b);
      out.push_back(feature);
    }
  }
  return out;
}

std::vector<ProbeToken> probe_tokens(std::span<const AnnotatedSentence> sentences,
                                     std::span<const EncodeTrace> traces, std::size_t window) {
  require_same_size(sentences.size(), traces.size(), "probe_tokens traces");
  std::vector<ProbeToken> out;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& sentence = sentences[s];
    if (traces[s].hidden.size() != sentence.tokens.size()) {
      throw ShapeError("trace length differs from sentence " + sentence.id);
    }
    std::vector<std::string> forms;
    for (const Token& t : sentence.content()) forms.push_back(t.form);
    for (std::size_t t = 0; t < forms.size(); ++t) {
      out.push_back({ngram_features(forms, t, window), traces[s].hidden[t],
                     sentence.tokens[t].deprel});
    }
  }
  return out;
}

std::span<const double> ProbeResult::activation_coefficients(std::size_t label) const {
  return coefficients.row(label).subspan(ngram_features.size(), units);
}

std::span<const double> ProbeResult::ngram_coefficients(std::size_t label) const {
  return coefficients.row(label).first(ngram_features.size());
}

namespace {

struct ProbeData {
  std::size_t n = 0;
  std::size_t features = 0;  // n-gram columns
  std::size_t units = 0;
  std::size_t classes = 0;
  std::vector<std::vector<std::size_t>> active;
  std::vector<const Vector*> activations;
  std::vector<std::size_t> labels;

  std::size_t width() const { return features + units; }
  std::size_t params() const { return classes * width() + classes; }
};

// theta = [W row-major (classes x width), bias (classes)].
double objective(const ProbeData& data, double lambda, std::span<const double> theta,
                 std::span<double> grad, std::vector<std::size_t>* predictions = nullptr) {
  const std::size_t k = data.classes;
  const std::size_t w = data.width();
  const auto weights = theta.first(k * w);
  const auto bias = theta.subspan(k * w, k);
  std::fill(grad.begin(), grad.end(), 0.0);

  Vector logits(k);
  double nll = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const Vector& act = *data.activations[i];
    for (std::size_t c = 0; c < k; ++c) {
      const double* row = weights.data() + c * w;
      double z = bias[c];
      for (std::size_t f : data.active[i]) z += row[f];
      for (std::size_t j = 0; j < data.units; ++j) z += row[data.features + j] * act[j];
      logits[c] = z;
    }
    Vector p = softmax(logits);
    const std::size_t y = data.labels[i];
    nll -= std::log(std::max(p[y], 1e-300));
    if (predictions != nullptr) {
      (*predictions)[i] = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    }
    p[y] -= 1.0;
    for (std::size_t c = 0; c < k; ++c) {
      double* g = grad.data() + c * w;
      const double pc = p[c];
      for (std::size_t f : data.active[i]) g[f] += pc;
      for (std::size_t j = 0; j < data.units; ++j) g[data.features + j] += pc * act[j];
      grad[k * w + c] += pc;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(data.n);
  double penalty = 0.0;
  for (std::size_t i = 0; i < k * w; ++i) {
    grad[i] = grad[i] * inv_n + lambda * theta[i];
    penalty += theta[i] * theta[i];
  }
  for (std::size_t c = 0; c < k; ++c) grad[k * w + c] *= inv_n;
  return nll * inv_n + 0.5 * lambda * penalty;
}

}  // namespace

ProbeResult fit_logistic_probe(std::span<const ProbeToken> tokens, const ProbeOptions& options) {
  if (tokens.empty()) throw DataError("probe: no tokens");
  if (!(options.lambda >= 0.0)) throw DataError("probe: lambda must be non-negative");
  if (options.min_feature_count == 0) throw DataError("probe: min_feature_count must be >= 1");

  ProbeResult result;
  result.options = options;
  result.units = tokens.front().activations.size();

  std::map<std::string, std::size_t> feature_counts;
  std::map<std::string, std::size_t> label_index;
  for (const auto& t : tokens) {
    require_same_size(t.activations.size(), result.units, "probe activations");
    for (const auto& f : t.ngrams) ++feature_counts[f];
    label_index.emplace(t.label, 0);
  }
  for (auto& [label, idx] : label_index) {
    idx = result.labels.size();
    result.labels.push_back(label);
  }
  std::map<std::string, std::size_t> feature_index;
  for (const auto& [f, count] : feature_counts) {
    if (count >= options.min_feature_count) {
      feature_index.emplace(f, result.ngram_features.size());
      result.ngram_features.push_back(f);
    }
  }

  ProbeData data;
  data.n = tokens.size();
  data.features = result.ngram_features.size();
  data.units = result.units;
  data.classes = result.labels.size();
  for (const auto& t : tokens) {
    std::vector<std::size_t> active;
    for (const auto& f : t.ngrams) {
      if (const auto it = feature_index.find(f); it != feature_index.end()) {
        active.push_back(it->second);
      }
    }
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());
    data.active.push_back(std::move(active));
    data.activations.push_back(&t.activations);
    data.labels.push_back(label_index.at(t.label));
  }

  const std::size_t dim = data.params();
  Vector theta(dim, 0.0);
  Vector grad(dim);
  Vector trial(dim);
  Vector trial_grad(dim);
  double value = objective(data, options.lambda, theta, grad);
  result.loss_history.push_back(value);

  constexpr double kArmijo = 1e-4;
  double step = 1.0;
  std::size_t it = 0;
  for (;; ++it) {
    const double gnorm = max_abs(grad);
    result.gradient_norm = gnorm;
    if (gnorm < options.tolerance) break;
    if (it >= options.max_iterations) {
      throw NumericError("probe did not converge in " + std::to_string(it) +
                         " iterations; gradient inf-norm " + std::to_string(gnorm));
    }
    const double gg = dot(grad, grad);
    double trial_value = 0.0;
    while (true) {
      for (std::size_t i = 0; i < dim; ++i) trial[i] = theta[i] - step * grad[i];
      trial_value = objective(data, options.lambda, trial, trial_grad);
      if (trial_value <= value - kArmijo * step * gg) break;
      step *= 0.5;
      if (step < 1e-20) {
        throw NumericError("probe line search failed; gradient inf-norm " +
                           std::to_string(gnorm));
      }
    }
    // Barzilai-Borwein trial step for the next iteration.
    double ss = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double s = trial[i] - theta[i];
      ss += s * s;
      sy += s * (trial_grad[i] - grad[i]);
    }
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : step * 2.0;
    theta.swap(trial);
    grad.swap(trial_grad);
    value = trial_value;
    result.loss_history.push_back(value);
  }
  result.iterations = it;

  const std::size_t k = data.classes;
  const std::size_t w = data.width();
  result.coefficients = Matrix(k, w);
  std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(k * w),
            result.coefficients.data().begin());
  result.intercepts.assign(theta.begin() + static_cast<std::ptrdiff_t>(k * w), theta.end());

  std::vector<std::size_t> predictions(data.n);
  objective(data, options.lambda, theta, grad, &predictions);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.n; ++i) correct += predictions[i] == data.labels[i] ? 1 : 0;
  result.training_accuracy = static_cast<double>(correct) / static_cast<double>(data.n);

  for (std::size_t c = 0; c < k; ++c) {
    const auto coef = result.activation_coefficients(c);
    std::vector<std::size_t> order(coef.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(coef[a]) > std::abs(coef[b]);
    });
    order.resize(std::min(options.top_k, order.size()));
    result.top_units.push_back(std::move(order));
  }
  return result;
}

ProbeResult fit_logistic_probe(const ImaginetParams& params, const Corpus& corpus,
                               Pathway pathway, const ProbeOptions& options) {
  std::vector<EncodeTrace> traces;
  traces.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) {
    traces.push_back(encode(params, pathway, corpus.vocabulary.encode(s)));
  }
  const auto tokens = probe_tokens(corpus.sentences, traces, options.window);
  return fit_logistic_probe(tokens, options);
}

}  // namespace gruscope
