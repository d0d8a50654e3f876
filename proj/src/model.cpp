#include "trgame/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace trgame {

namespace {

constexpr int kMaxDepth = 4;
constexpr int kMaxWidth = 1024;

Vec relu(const Vec& z) { return z.cwiseMax(0.0); }

/// Stable softmax probabilities via max subtraction.
Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

double log_sum_exp(const Vec& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

int argmax_smallest(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

void ModelSpec::validate() const {
  if (layer_dims.size() < 2) throw BadParams("ModelSpec: need at least input and output dims");
  if (depth() > kMaxDepth) throw BadParams("ModelSpec: depth exceeds cap");
  for (int d : layer_dims) {
    if (d < 1) throw BadParams("ModelSpec: non-positive layer dim");
    if (d > kMaxWidth) throw BadParams("ModelSpec: width exceeds cap");
  }
  if (representation_cut < 0 || representation_cut > depth())
    throw BadParams("ModelSpec: representation cut out of range");
}

ModelSpec Model::spec() const {
  ModelSpec s;
  s.layer_dims.push_back(static_cast<int>(input_dim()));
  for (const Mat& w : weights) s.layer_dims.push_back(static_cast<int>(w.rows()));
  s.representation_cut = representation_cut;
  return s;
}

void Model::validate() const {
  if (weights.empty() || weights.size() != biases.size())
    throw BadParams("Model: inconsistent layer count");
  spec().validate();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != biases[l].size())
      throw DimMismatch("Model: bias size != layer output");
    if (l + 1 < weights.size() && weights[l + 1].cols() != weights[l].rows())
      throw DimMismatch("Model: layer shapes do not chain");
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw NumericError("Model: non-finite parameter");
  }
}

bool Model::equals(const Model& other) const {
  if (weights.size() != other.weights.size()) return false;
  if (representation_cut != other.representation_cut) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols())
      return false;
    if (std::memcmp(weights[l].data(), other.weights[l].data(),
                    sizeof(double) * weights[l].size()) != 0)
      return false;
    if (std::memcmp(biases[l].data(), other.biases[l].data(),
                    sizeof(double) * biases[l].size()) != 0)
      return false;
  }
  return true;
}

Model init_model(const ModelSpec& spec, RngStream rng) {
  spec.validate();
  Model f;
  f.representation_cut = spec.representation_cut;
  for (int l = 0; l < spec.depth(); ++l) {
    const int fan_in = spec.layer_dims[l];
    const int fan_out = spec.layer_dims[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Mat w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-a, a);
    f.weights.push_back(std::move(w));
    f.biases.push_back(Vec::Zero(fan_out));
  }
  return f;
}

Model make_binary_linear(const Vec& theta, double bias) {
  Model f;
  Mat w(2, theta.size());
  w.row(0) = -theta.transpose();
  w.row(1) = theta.transpose();
  Vec b(2);
  b << -bias, bias;
  f.weights.push_back(std::move(w));
  f.biases.push_back(std::move(b));
  f.representation_cut = 0;
  return f;
}

Vec apply_layers(const Model& f, const Vec& a, int from, int to) {
  Vec v = a;
  for (int l = from; l < to; ++l) {
    v = f.weights[l] * v + f.biases[l];
    if (l + 1 < f.depth()) v = relu(v);
  }
  return v;
}

ForwardResult forward(const Model& f, const Vec& x) {
  if (x.size() != f.input_dim()) throw DimMismatch("forward: input dim mismatch");
  ForwardResult r;
  r.logits = apply_layers(f, x, 0, f.depth());
  if (!r.logits.allFinite()) throw NumericError("forward: non-finite activation");
  r.label = argmax_smallest(r.logits);
  return r;
}

Vec representation(const Model& f, const Vec& x) {
  if (x.size() != f.input_dim()) throw DimMismatch("representation: input dim mismatch");
  return apply_layers(f, x, 0, f.representation_cut);
}

double example_loss(const Model& f, const Vec& x, int y, LossKind kind) {
  if (y < 0 || y >= f.num_classes()) throw BadParams("example_loss: label out of range");
  ForwardResult r = forward(f, x);
  if (kind == LossKind::ZeroOne) return r.label == y ? 0.0 : 1.0;
  return log_sum_exp(r.logits) - r.logits[y];
}

GradientBundle loss_gradients(const Model& f, const Vec& x, int y, LossKind kind,
                              bool want_input, bool want_params) {
  if (kind != LossKind::CrossEntropy)
    throw NonDifferentiableLoss("loss_gradients: zero-one loss has no gradient");
  if (x.size() != f.input_dim()) throw DimMismatch("loss_gradients: input dim mismatch");
  if (y < 0 || y >= f.num_classes()) throw BadParams("loss_gradients: label out of range");

  const int depth = f.depth();
  std::vector<Vec> acts(depth + 1);  // acts[l] = input of layer l
  std::vector<Vec> pre(depth);       // pre[l]  = W a + b
  acts[0] = x;
  for (int l = 0; l < depth; ++l) {
    pre[l] = f.weights[l] * acts[l] + f.biases[l];
    acts[l + 1] = (l + 1 < depth) ? relu(pre[l]) : pre[l];
  }
  const Vec& logits = acts[depth];
  if (!logits.allFinite()) throw NumericError("loss_gradients: non-finite activation");

  GradientBundle out;
  out.loss = log_sum_exp(logits) - logits[y];

  Vec delta = softmax(logits);
  delta[y] -= 1.0;

  std::vector<Mat> wg;
  std::vector<Vec> bg;
  if (want_params) {
    wg.resize(depth);
    bg.resize(depth);
  }
  for (int l = depth - 1; l >= 0; --l) {
    if (want_params) {
      wg[l] = delta * acts[l].transpose();
      bg[l] = delta;
    }
    if (l > 0 || want_input) {
      Vec da = f.weights[l].transpose() * delta;
      if (l > 0) {
        // ReLU subgradient at 0 is 0
        for (Eigen::Index j = 0; j < da.size(); ++j)
          if (pre[l - 1][j] <= 0.0) da[j] = 0.0;
      }
      delta = std::move(da);
    }
  }
  if (want_input) out.input_grad = delta;
  if (want_params) {
    out.weight_grads = std::move(wg);
    out.bias_grads = std::move(bg);
  }
  return out;
}

double class_probability(const Model& f, const Vec& x, int cls) {
  ForwardResult r = forward(f, x);
  if (cls < 0 || cls >= r.logits.size()) throw BadParams("class_probability: class out of range");
  Vec p = softmax(r.logits);
  return p[cls];
}

Vec class_probability_input_grad(const Model& f, const Vec& x, int cls) {
  if (x.size() != f.input_dim()) throw DimMismatch("class_probability_input_grad: dim mismatch");
  const int depth = f.depth();
  std::vector<Vec> acts(depth + 1);
  std::vector<Vec> pre(depth);
  acts[0] = x;
  for (int l = 0; l < depth; ++l) {
    pre[l] = f.weights[l] * acts[l] + f.biases[l];
    acts[l + 1] = (l + 1 < depth) ? relu(pre[l]) : pre[l];
  }
  Vec p = softmax(acts[depth]);
  if (cls < 0 || cls >= p.size()) throw BadParams("class_probability_input_grad: class range");
  // d p_c / d z_j = p_c (delta_cj - p_j)
  Vec delta = -p[cls] * p;
  delta[cls] += p[cls];
  for (int l = depth - 1; l >= 0; --l) {
    Vec da = f.weights[l].transpose() * delta;
    if (l > 0)
      for (Eigen::Index j = 0; j < da.size(); ++j)
        if (pre[l - 1][j] <= 0.0) da[j] = 0.0;
    delta = std::move(da);
  }
  return delta;
}

namespace {

constexpr std::uint32_t kModelMagic = 0x54524d42;  // "TRMB"
constexpr std::uint32_t kModelVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataFormatError("model blob truncated");
  return v;
}

}  // namespace

void save_model(const Model& f, std::ostream& out) {
  write_pod(out, kModelMagic);
  write_pod(out, kModelVersion);
  write_pod(out, static_cast<std::uint32_t>(f.depth()));
  write_pod(out, static_cast<std::int32_t>(f.representation_cut));
  for (int l = 0; l < f.depth(); ++l) {
    write_pod(out, static_cast<std::uint32_t>(f.weights[l].rows()));
    write_pod(out, static_cast<std::uint32_t>(f.weights[l].cols()));
    // row-major parameter order
    for (Eigen::Index r = 0; r < f.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < f.weights[l].cols(); ++c) write_pod(out, f.weights[l](r, c));
    for (Eigen::Index r = 0; r < f.biases[l].size(); ++r) write_pod(out, f.biases[l][r]);
  }
  if (!out) throw IoError("save_model: write failed");
}

Model load_model(std::istream& in) {
  if (read_pod<std::uint32_t>(in) != kModelMagic) throw DataFormatError("model blob: bad magic");
  if (read_pod<std::uint32_t>(in) != kModelVersion)
    throw DataFormatError("model blob: unsupported version");
  const auto depth = read_pod<std::uint32_t>(in);
  Model f;
  f.representation_cut = read_pod<std::int32_t>(in);
  for (std::uint32_t l = 0; l < depth; ++l) {
    const auto rows = read_pod<std::uint32_t>(in);
    const auto cols = read_pod<std::uint32_t>(in);
    Mat w(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) w(r, c) = read_pod<double>(in);
    Vec b(rows);
    for (std::uint32_t r = 0; r < rows; ++r) b[r] = read_pod<double>(in);
    f.weights.push_back(std::move(w));
    f.biases.push_back(std::move(b));
  }
  f.validate();
  return f;
}

void save_model_file(const Model& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_model_file: cannot open " + path);
  save_model(f, out);
}

Model load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_model_file: cannot open " + path);
  return load_model(in);
}

}  // namespace trgame
