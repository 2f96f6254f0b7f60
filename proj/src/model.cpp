#include "gruscope/model.hpp"

#include <algorithm>
#include <cmath>

#include "gruscope/errors.hpp"
#include "gruscope/random.hpp"

namespace gruscope {

const char* to_string(Pathway p) {
  return p == Pathway::kVisual ? "visual" : "textual";
}

const char* to_string(VisualEncoder e) {
  return e == VisualEncoder::kGru ? "gru" : "sum";
}

Pathway parse_pathway(const std::string& text) {
  if (text == "visual") return Pathway::kVisual;
  if (text == "textual") return Pathway::kTextual;
  throw DataError("unknown pathway '" + text + "' (expected visual or textual)");
}

VisualEncoder parse_visual_encoder(const std::string& text) {
  if (text == "gru") return VisualEncoder::kGru;
  if (text == "sum") return VisualEncoder::kSum;
  throw DataError("unknown visual encoder '" + text + "' (expected gru or sum)");
}

GruParams GruParams::zeros(std::size_t hidden, std::size_t input) {
  GruParams p;
  p.W = Matrix(hidden, input);
  p.W_z = Matrix(hidden, input);
  p.W_r = Matrix(hidden, input);
  p.U = Matrix(hidden, hidden);
  p.U_z = Matrix(hidden, hidden);
  p.U_r = Matrix(hidden, hidden);
  return p;
}

void GruParams::validate() const {
  const std::size_t d = hidden_size();
  const std::size_t e = input_size();
  for (const Matrix* m : {&W, &W_z, &W_r}) {
    if (m->rows() != d || m->cols() != e) throw ShapeError("GRU input weights must be d x e");
  }
  for (const Matrix* m : {&U, &U_z, &U_r}) {
    if (m->rows() != d || m->cols() != d) throw ShapeError("GRU recurrent weights must be d x d");
  }
}

GruStep gru_step(const GruParams& p, std::span<const double> h_prev,
                 std::span<const double> x) {
  require_same_size(h_prev.size(), p.hidden_size(), "gru_step h_prev");
  require_same_size(x.size(), p.input_size(), "gru_step x");

  GruStep out;
  out.gates.z = sigmoid(add(matvec(p.W_z, x), matvec(p.U_z, h_prev)));
  out.gates.r = sigmoid(add(matvec(p.W_r, x), matvec(p.U_r, h_prev)));
  const Vector reset_h = hadamard(out.gates.r, h_prev);
  out.gates.candidate = tanh_act(add(matvec(p.W, x), matvec(p.U, reset_h)));

  const std::size_t d = h_prev.size();
  out.h.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double z = out.gates.z[i];
    out.h[i] = (1.0 - z) * h_prev[i] + z * out.gates.candidate[i];
  }
  return out;
}

// ---- parameter containers ------------------------------------------------

std::vector<NamedTensor> ImaginetTensors::named() {
  return {
      {"embedding", &embedding},    {"visual.W", &visual.W},
      {"visual.U", &visual.U},      {"visual.W_z", &visual.W_z},
      {"visual.U_z", &visual.U_z},  {"visual.W_r", &visual.W_r},
      {"visual.U_r", &visual.U_r},  {"textual.W", &textual.W},
      {"textual.U", &textual.U},    {"textual.W_z", &textual.W_z},
      {"textual.U_z", &textual.U_z}, {"textual.W_r", &textual.W_r},
      {"textual.U_r", &textual.U_r}, {"image_proj", &image_proj},
      {"word_proj", &word_proj},
  };
}

std::vector<ConstNamedTensor> ImaginetTensors::named() const {
  auto& self = const_cast<ImaginetTensors&>(*this);
  std::vector<ConstNamedTensor> out;
  for (auto& t : self.named()) out.push_back({std::move(t.name), t.tensor});
  return out;
}

ImaginetTensors ImaginetTensors::zeros_like() const {
  ImaginetTensors z;
  auto dst = z.named();
  const auto src = named();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    *dst[i].tensor = Matrix(src[i].tensor->rows(), src[i].tensor->cols());
  }
  return z;
}

double ImaginetTensors::squared_norm() const {
  double acc = 0.0;
  for (const auto& t : named()) {
    for (double v : t.tensor->data()) acc += v * v;
  }
  return acc;
}

void ImaginetTensors::scale(double s) {
  for (auto& t : named()) {
    for (double& v : t.tensor->data()) v *= s;
  }
}

void ImaginetTensors::add_scaled(const ImaginetTensors& other, double alpha) {
  auto dst = named();
  const auto src = other.named();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    axpy(alpha, src[i].tensor->data(), dst[i].tensor->data());
  }
}

ModelDims ImaginetParams::dims() const {
  return {vocab_size(), embedding_size(), hidden_size(), image_size(), visual_encoder};
}

std::size_t ImaginetParams::visual_state_size() const {
  return visual_encoder == VisualEncoder::kSum ? embedding_size()
                                               : visual.hidden_size();
}

void ImaginetParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DataError("alpha must lie in [0, 1]");
  textual.validate();
  if (textual.input_size() != embedding_size()) {
    throw ShapeError("textual GRU input size must equal the embedding size");
  }
  if (visual_encoder == VisualEncoder::kGru) {
    visual.validate();
    if (visual.input_size() != embedding_size()) {
      throw ShapeError("visual GRU input size must equal the embedding size");
    }
  }
  if (image_proj.cols() != visual_state_size()) {
    throw ShapeError("image projection width must equal the visual state size");
  }
  if (word_proj.rows() != vocab_size() || word_proj.cols() != hidden_size()) {
    throw ShapeError("word projection must be vocab x d");
  }
}

ImaginetParams ImaginetParams::zeros(const ModelDims& dims, double alpha) {
  ImaginetParams p;
  p.alpha = alpha;
  p.visual_encoder = dims.visual_encoder;
  p.embedding = Matrix(dims.vocab, dims.embedding);
  if (dims.visual_encoder == VisualEncoder::kGru) {
    p.visual = GruParams::zeros(dims.hidden, dims.embedding);
  }
  p.textual = GruParams::zeros(dims.hidden, dims.embedding);
  p.image_proj = Matrix(dims.image, p.visual_state_size());
  p.word_proj = Matrix(dims.vocab, dims.hidden);
  p.validate();
  return p;
}

ImaginetParams init_params(const ModelDims& dims, double alpha, std::uint64_t seed) {
  if (dims.vocab == 0 || dims.embedding == 0 || dims.hidden == 0 || dims.image == 0) {
    throw DataError("model sizes must be positive");
  }
  ImaginetParams p = ImaginetParams::zeros(dims, alpha);
  Rng rng(seed);
  for (auto& t : p.named()) {
    if (t.tensor->empty()) continue;
    // Embedding rows are inputs, so their fan-in is taken as e.
    const double fan_in = static_cast<double>(t.tensor->cols());
    const double s = 1.0 / std::sqrt(fan_in);
    for (double& v : t.tensor->data()) v = uniform_real(rng, -s, s);
  }
  return p;
}

// ---- forward -------------------------------------------------------------

namespace {

void check_ids(const ImaginetParams& p, std::span<const TokenId> ids) {
  if (ids.empty()) throw DataError("cannot encode an empty sentence");
  for (TokenId id : ids) {
    if (id >= p.vocab_size()) {
      throw DataError("token id " + std::to_string(id) + " outside the vocabulary");
    }
  }
}

}  // namespace

EncodeTrace encode(const ImaginetParams& p, Pathway pathway,
                   std::span<const TokenId> ids, bool keep_gates) {
  check_ids(p, ids);
  EncodeTrace trace;
  trace.hidden.reserve(ids.size());

  if (pathway == Pathway::kVisual && p.visual_encoder == VisualEncoder::kSum) {
    Vector running(p.embedding_size(), 0.0);
    for (TokenId id : ids) {
      axpy(1.0, p.embedding.row(id), running);
      trace.hidden.push_back(running);
    }
    return trace;
  }

  const GruParams& gru = pathway == Pathway::kVisual ? p.visual : p.textual;
  Vector h(gru.hidden_size(), 0.0);
  if (keep_gates) trace.gates.reserve(ids.size());
  for (TokenId id : ids) {
    GruStep step = gru_step(gru, h, p.embedding.row(id));
    h = std::move(step.h);
    trace.hidden.push_back(h);
    if (keep_gates) trace.gates.push_back(std::move(step.gates));
  }
  return trace;
}

Vector sum_encode(const ImaginetParams& p, std::span<const TokenId> ids) {
  check_ids(p, ids);
  Vector out(p.embedding_size(), 0.0);
  for (TokenId id : ids) axpy(1.0, p.embedding.row(id), out);
  return out;
}

Vector predict_image(const ImaginetParams& p, std::span<const double> h_last) {
  return matvec(p.image_proj, h_last);
}

Vector next_word_dist(const ImaginetParams& p, std::span<const double> h_t) {
  return softmax(matvec(p.word_proj, h_t));
}

// ---- loss and gradients --------------------------------------------------

namespace {

// Backpropagates external per-step gradients dh_ext through one GRU pathway.
void gru_backward(const GruParams& p, const Matrix& embedding,
                  std::span<const TokenId> ids, const EncodeTrace& trace,
                  const std::vector<Vector>& dh_ext, GruParams& g, Matrix& d_embedding) {
  const std::size_t d = p.hidden_size();
  const Vector zero(d, 0.0);
  Vector dh_next(d, 0.0);
  Vector dz(d), dac(d), dr(d), daz(d), dar(d), dh_prev(d), reset_h(d);

  for (std::size_t step = ids.size(); step-- > 0;) {
    const Vector& h_prev = step > 0 ? trace.hidden[step - 1] : zero;
    const auto x = embedding.row(ids[step]);
    const GruGates& gates = trace.gates[step];

    for (std::size_t i = 0; i < d; ++i) {
      const double dh = dh_ext[step][i] + dh_next[i];
      const double z = gates.z[i];
      const double c = gates.candidate[i];
      dz[i] = dh * (c - h_prev[i]);
      dac[i] = dh * z * (1.0 - c * c);
      dh_prev[i] = dh * (1.0 - z);
      reset_h[i] = gates.r[i] * h_prev[i];
    }

    add_outer(g.W, dac, x);
    add_outer(g.U, dac, reset_h);
    const Vector d_reset_h = matvec_transposed(p.U, dac);
    Vector dx = matvec_transposed(p.W, dac);
    for (std::size_t i = 0; i < d; ++i) {
      dr[i] = d_reset_h[i] * h_prev[i];
      dh_prev[i] += d_reset_h[i] * gates.r[i];
      daz[i] = dz[i] * gates.z[i] * (1.0 - gates.z[i]);
    }

    add_outer(g.W_z, daz, x);
    add_outer(g.U_z, daz, h_prev);
    axpy(1.0, matvec_transposed(p.U_z, daz), dh_prev);
    axpy(1.0, matvec_transposed(p.W_z, daz), dx);

    for (std::size_t i = 0; i < d; ++i) dar[i] = dr[i] * gates.r[i] * (1.0 - gates.r[i]);
    add_outer(g.W_r, dar, x);
    add_outer(g.U_r, dar, h_prev);
    axpy(1.0, matvec_transposed(p.U_r, dar), dh_prev);
    axpy(1.0, matvec_transposed(p.W_r, dar), dx);

    axpy(1.0, dx, d_embedding.row(ids[step]));
    dh_next = dh_prev;
  }
}

}  // namespace

LossResult loss(const ImaginetParams& p, std::span<const Example> batch,
                bool with_gradients) {
  p.validate();
  if (batch.empty()) throw DataError("loss over an empty batch");

  LossResult result;
  if (with_gradients) result.grads = p.zeros_like();
  const double batch_scale = 1.0 / static_cast<double>(batch.size());
  const double w_text = p.alpha * batch_scale;
  const double w_vis = (1.0 - p.alpha) * batch_scale;

  for (const Example& ex : batch) {
    if (ex.ids.size() < 2) {
      throw DataError("training sentence needs at least one token before the end marker");
    }
    require_same_size(ex.image.size(), p.image_size(), "image target");

    // TEXTUAL: h_t predicts ids[t + 1].
    const EncodeTrace text_trace = encode(p, Pathway::kTextual, ex.ids, with_gradients);
    const std::size_t predictions = ex.ids.size() - 1;
    const double step_scale = w_text / static_cast<double>(predictions);
    double nll = 0.0;
    std::vector<Vector> dh_text;
    if (with_gradients) dh_text.assign(ex.ids.size(), Vector(p.hidden_size(), 0.0));
    for (std::size_t t = 0; t < predictions; ++t) {
      const Vector& h = text_trace.hidden[t];
      Vector probs = next_word_dist(p, h);
      const TokenId target = ex.ids[t + 1];
      nll -= std::log(probs[target]);
      if (with_gradients) {
        probs[target] -= 1.0;
        add_outer(result.grads.word_proj, probs, h, step_scale);
        axpy(step_scale, matvec_transposed(p.word_proj, probs), dh_text[t]);
      }
    }
    result.textual += nll / static_cast<double>(predictions);

    // VISUAL: cosine distance at the final state.
    const EncodeTrace vis_trace = encode(p, Pathway::kVisual, ex.ids, with_gradients);
    const Vector& h_last = vis_trace.final_state();
    const Vector predicted = predict_image(p, h_last);
    const double cos = cosine_similarity(predicted, ex.image);
    result.visual += std::clamp(1.0 - cos, 0.0, 2.0);

    if (with_gradients) {
      gru_backward(p.textual, p.embedding, ex.ids, text_trace, dh_text,
                   result.grads.textual, result.grads.embedding);

      const double n_pred = norm(predicted);
      const double n_target = norm(ex.image);
      Vector d_pred(predicted.size());
      for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double dcos = ex.image[i] / (n_pred * n_target) -
                            cos * predicted[i] / (n_pred * n_pred);
        d_pred[i] = -w_vis * dcos;
      }
      add_outer(result.grads.image_proj, d_pred, h_last);
      const Vector d_state = matvec_transposed(p.image_proj, d_pred);

      if (p.visual_encoder == VisualEncoder::kSum) {
        for (TokenId id : ex.ids) axpy(1.0, d_state, result.grads.embedding.row(id));
      } else {
        std::vector<Vector> dh_vis(ex.ids.size(), Vector(p.visual.hidden_size(), 0.0));
        dh_vis.back() = d_state;
        gru_backward(p.visual, p.embedding, ex.ids, vis_trace, dh_vis,
                     result.grads.visual, result.grads.embedding);
      }
    }
  }

  result.textual *= batch_scale;
  result.visual *= batch_scale;
  result.total = p.alpha * result.textual + (1.0 - p.alpha) * result.visual;
  return result;
}

}  // namespace gruscope
