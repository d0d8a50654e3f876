#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "trgame/core.hpp"
#include "trgame/rng.hpp"

namespace trgame {

enum class ModelKind { Linear, Mlp };

/// Architecture: layer_dims = {input, hidden..., classes};
/// representation_cut = number of leading layers forming the feature map phi.
struct ModelSpec {
  std::vector<int> layer_dims;
  int representation_cut = 0;

  int depth() const { return static_cast<int>(layer_dims.size()) - 1; }
  void validate() const;
};

/// Fully-connected classifier with ReLU between layers and raw logits at the
/// output. The representation cut splits F = c(phi(x)): phi applies the first
/// `representation_cut` layers (with their activations), c the rest.
struct Model {
  std::vector<Mat> weights;  // layer l: out x in
  std::vector<Vec> biases;
  int representation_cut = 0;

  int depth() const { return static_cast<int>(weights.size()); }
  Eigen::Index input_dim() const { return weights.front().cols(); }
  Eigen::Index num_classes() const { return weights.back().rows(); }
  ModelKind kind() const { return depth() == 1 ? ModelKind::Linear : ModelKind::Mlp; }
  ModelSpec spec() const;

  void validate() const;
  bool equals(const Model& other) const;  // bit-level parameter equality
};

/// Seeded uniform init in [-a, a], a = sqrt(6 / (fan_in + fan_out)).
Model init_model(const ModelSpec& spec, RngStream rng);

/// Convenience constructor for a binary linear model with logits
/// (-theta.x - b, +theta.x + b).
Model make_binary_linear(const Vec& theta, double bias = 0.0);

struct ForwardResult {
  Vec logits;
  int label = 0;  // argmax, ties to the smallest class index
};

ForwardResult forward(const Model& f, const Vec& x);

/// Activations after `representation_cut` layers (the input itself for cut 0,
/// logits when the cut equals the depth).
Vec representation(const Model& f, const Vec& x);

/// Apply layers [from, to) to an activation vector. forward() and
/// representation() are both thin wrappers over this, so composing
/// representation with the remaining layers reproduces forward bit-exactly.
Vec apply_layers(const Model& f, const Vec& a, int from, int to);

struct GradientBundle {
  double loss = 0.0;
  std::optional<Vec> input_grad;
  std::optional<std::vector<Mat>> weight_grads;
  std::optional<std::vector<Vec>> bias_grads;
};

/// Exact reverse-mode gradients of the cross-entropy at (x, y).
/// ZeroOne has no gradient and is rejected.
GradientBundle loss_gradients(const Model& f, const Vec& x, int y, LossKind kind,
                              bool want_input, bool want_params);

/// Per-example loss (stable log-sum-exp cross-entropy, or the 0/1 indicator).
double example_loss(const Model& f, const Vec& x, int y, LossKind kind);

/// Softmax probability of class `cls` and its input gradient.
double class_probability(const Model& f, const Vec& x, int cls);
Vec class_probability_input_grad(const Model& f, const Vec& x, int cls);

// Self-describing binary serialization (magic, version, dims, cut,
// row-major doubles). Round-trips bit-exactly.
void save_model(const Model& f, std::ostream& out);
Model load_model(std::istream& in);
void save_model_file(const Model& f, const std::string& path);
Model load_model_file(const std::string& path);

}  // namespace trgame
