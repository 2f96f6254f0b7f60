#pragma once

// Two-pathway recurrent sentence encoder with a shared embedding table.
//
//   TEXTUAL: GRU over the embeddings; at each step the hidden state is
//            mapped through the word projection to a next-word softmax.
//   VISUAL:  GRU (or, for the order-insensitive baseline, a running sum of
//            embeddings); the final state is mapped through the image
//            projection and scored by cosine distance to a target vector.
//
// GRU cell, no biases:
//   z  = logistic(W_z x + U_z h_prev)
//   r  = logistic(W_r x + U_r h_prev)
//   h~ = tanh(W x + U (r * h_prev))
//   h  = (1 - z) * h_prev + z * h~

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gruscope/numkernel.hpp"

namespace gruscope {

using TokenId = std::uint32_t;

enum class Pathway { kVisual, kTextual };
enum class VisualEncoder { kGru, kSum };

const char* to_string(Pathway p);
const char* to_string(VisualEncoder e);
Pathway parse_pathway(const std::string& text);
VisualEncoder parse_visual_encoder(const std::string& text);

struct GruParams {
  Matrix W, U;      // candidate
  Matrix W_z, U_z;  // update gate
  Matrix W_r, U_r;  // reset gate

  static GruParams zeros(std::size_t hidden, std::size_t input);
  std::size_t hidden_size() const { return U.rows(); }
  std::size_t input_size() const { return W.cols(); }
  void validate() const;

  bool operator==(const GruParams&) const = default;
};

struct GruGates {
  Vector z;
  Vector r;
  Vector candidate;
};

struct GruStep {
  Vector h;
  GruGates gates;
};

GruStep gru_step(const GruParams& p, std::span<const double> h_prev,
                 std::span<const double> x);

struct NamedTensor {
  std::string name;
  Matrix* tensor;
};

struct ConstNamedTensor {
  std::string name;
  const Matrix* tensor;
};

// Every trainable tensor. Also the layout of gradients.
struct ImaginetTensors {
  Matrix embedding;   // vocab x e, read by both pathways
  GruParams visual;   // empty when the visual encoder is the SUM baseline
  GruParams textual;
  Matrix image_proj;  // image-dim x visual state size
  Matrix word_proj;   // vocab x d

  // Fixed order: embedding, visual.{W,U,W_z,U_z,W_r,U_r}, textual.{...},
  // image_proj, word_proj.
  std::vector<NamedTensor> named();
  std::vector<ConstNamedTensor> named() const;

  ImaginetTensors zeros_like() const;
  double squared_norm() const;
  void scale(double s);
  // this += alpha * other
  void add_scaled(const ImaginetTensors& other, double alpha);
  bool operator==(const ImaginetTensors&) const = default;
};

using ImaginetGrads = ImaginetTensors;

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embedding = 0;
  std::size_t hidden = 0;
  std::size_t image = 0;
  VisualEncoder visual_encoder = VisualEncoder::kGru;
};

struct ImaginetParams : ImaginetTensors {
  double alpha = 0.5;  // weight of the textual loss
  VisualEncoder visual_encoder = VisualEncoder::kGru;

  ModelDims dims() const;
  std::size_t vocab_size() const { return embedding.rows(); }
  std::size_t embedding_size() const { return embedding.cols(); }
  std::size_t hidden_size() const { return textual.hidden_size(); }
  std::size_t image_size() const { return image_proj.rows(); }
  std::size_t visual_state_size() const;
  void validate() const;

  static ImaginetParams zeros(const ModelDims& dims, double alpha);
  bool operator==(const ImaginetParams&) const = default;
};

// Uniform in [-s, s] with s = 1/sqrt(fan-in) for every tensor.
ImaginetParams init_params(const ModelDims& dims, double alpha, std::uint64_t seed);

struct EncodeTrace {
  std::vector<Vector> hidden;   // h_1 .. h_tau
  std::vector<GruGates> gates;  // filled only when requested (GRU pathways)
  const Vector& final_state() const { return hidden.back(); }
};

// ids must end with the end marker. h_0 is the zero vector. For the SUM
// visual encoder the trace holds running sums of embeddings.
EncodeTrace encode(const ImaginetParams& p, Pathway pathway,
                   std::span<const TokenId> ids, bool keep_gates = false);

// Sum of the embeddings of every id (end marker included).
Vector sum_encode(const ImaginetParams& p, std::span<const TokenId> ids);

Vector predict_image(const ImaginetParams& p, std::span<const double> h_last);
Vector next_word_dist(const ImaginetParams& p, std::span<const double> h_t);

struct Example {
  std::vector<TokenId> ids;  // content tokens followed by the end marker
  Vector image;              // standardized target features
};

struct LossResult {
  double total = 0.0;
  double textual = 0.0;
  double visual = 0.0;
  ImaginetGrads grads;  // empty tensors when gradients were not requested
};

// total = alpha * textual + (1 - alpha) * visual, where
//   textual = batch mean of per-sentence mean next-word NLL (h_t predicts
//             token t+1, t = 1..tau-1, so the end marker is predicted last)
//   visual  = batch mean of cosine distance between V h_tau and the target.
// Gradients are exact (BPTT through both pathways into the shared table).
LossResult loss(const ImaginetParams& p, std::span<const Example> batch,
                bool with_gradients = true);

}  // namespace gruscope
