#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vigil/error.hpp"
#include "vigil/io.hpp"
#include "vigil/matrix.hpp"
#include "vigil/rng.hpp"

namespace vigil {

enum class Activation { identity, relu, tanh, sigmoid };

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

// Derivative expressed through the activation output y = f(z).
inline double activation_grad(Activation a, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

inline void apply_activation(Activation a, Matrix& m) {
  if (a == Activation::identity) return;
  for (double& v : m.data) v = activate(a, v);
}

// ---------------------------------------------------------------------------
// Dense layer

struct DenseLayer {
  Matrix weights;            // in x out
  std::vector<double> bias;  // out
  Activation activation = Activation::identity;
  double l2 = 0.0;  // weight penalty coefficient; biases are exempt

  int in_dim() const { return weights.rows; }
  int out_dim() const { return weights.cols; }
};

inline Matrix glorot_uniform(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  double limit = std::sqrt(6.0 / (rows + cols));
  for (double& v : m.data) v = rng.uniform(-limit, limit);
  return m;
}

inline DenseLayer make_dense(int in, int out, Activation act, Rng& rng, double l2 = 0.0) {
  DenseLayer layer;
  layer.weights = glorot_uniform(in, out, rng);
  layer.bias.assign(out, 0.0);
  layer.activation = act;
  layer.l2 = l2;
  return layer;
}

// output = activation(input * W + b), batched over input rows
inline Matrix dense_forward(const DenseLayer& layer, const Matrix& input) {
  if (input.cols != layer.in_dim()) throw Error("dense_forward: shape mismatch");
  Matrix out = matmul(input, layer.weights);
  add_row_vector(out, layer.bias);
  apply_activation(layer.activation, out);
  return out;
}

struct DenseGrads {
  Matrix d_weights;
  std::vector<double> d_bias;
};

// Backward from pre-activation gradients. Accumulates parameter gradients and
// returns the gradient with respect to the layer input.
inline Matrix dense_backward_preact(const DenseLayer& layer, const Matrix& input,
                                    const Matrix& d_preact, DenseGrads& grads) {
  if (grads.d_weights.empty()) {
    grads.d_weights = Matrix(layer.weights.rows, layer.weights.cols);
    grads.d_bias.assign(layer.bias.size(), 0.0);
  }
  Matrix dw = matmul_tn(input, d_preact);
  for (std::size_t i = 0; i < dw.data.size(); ++i) grads.d_weights.data[i] += dw.data[i];
  for (int r = 0; r < d_preact.rows; ++r) {
    for (int c = 0; c < d_preact.cols; ++c) grads.d_bias[c] += d_preact(r, c);
  }
  return matmul_nt(d_preact, layer.weights);
}

// Backward from post-activation gradients, using the cached layer output.
inline Matrix dense_backward(const DenseLayer& layer, const Matrix& input, const Matrix& output,
                             const Matrix& d_output, DenseGrads& grads) {
  Matrix d_preact = d_output;
  for (std::size_t i = 0; i < d_preact.data.size(); ++i) {
    d_preact.data[i] *= activation_grad(layer.activation, output.data[i]);
  }
  return dense_backward_preact(layer, input, d_preact, grads);
}

// ---------------------------------------------------------------------------
// Recurrent cell:  h' = tanh(x * W_in + h * W_h + b)

struct RecurrentCell {
  Matrix input_weights;   // in x hidden
  Matrix hidden_weights;  // hidden x hidden
  std::vector<double> bias;

  int in_dim() const { return input_weights.rows; }
  int hidden_dim() const { return input_weights.cols; }
};

// Random orthogonal matrix (QR of a Gaussian matrix with sign-fixed diagonal).
inline Matrix orthogonal_init(int n, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < n; ++c) {
    if (r(c, c) < 0) q.col(c) *= -1.0;
  }
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = q(i, j);
  }
  return m;
}

inline RecurrentCell make_recurrent(int in, int hidden, Rng& rng) {
  RecurrentCell cell;
  cell.input_weights = glorot_uniform(in, hidden, rng);
  cell.hidden_weights = orthogonal_init(hidden, rng);
  cell.bias.assign(hidden, 0.0);
  return cell;
}

inline std::vector<double> cell_forward(const RecurrentCell& cell, std::span<const double> x,
                                        std::span<const double> h_prev) {
  const int in = cell.in_dim();
  const int hidden = cell.hidden_dim();
  std::vector<double> h(hidden);
  for (int j = 0; j < hidden; ++j) {
    double z = cell.bias[j];
    for (int i = 0; i < in; ++i) z += x[i] * cell.input_weights(i, j);
    for (int i = 0; i < hidden; ++i) z += h_prev[i] * cell.hidden_weights(i, j);
    h[j] = std::tanh(z);
  }
  return h;
}

// Stacked recurrent forward over a sequence (rows = time steps). h_0 = 0 for
// every layer; returns the last layer's final hidden state.
inline std::vector<double> rnn_forward(const std::vector<RecurrentCell>& cells,
                                       const Matrix& sequence) {
  if (sequence.rows == 0) throw Error("rnn_forward: empty sequence");
  if (cells.empty()) throw Error("rnn_forward: no cells");
  if (sequence.cols != cells.front().in_dim()) throw Error("rnn_forward: shape mismatch");
  std::vector<double> layer_input;
  std::vector<std::vector<double>> inputs(sequence.rows);
  for (int t = 0; t < sequence.rows; ++t) {
    auto row = sequence.row(t);
    inputs[t].assign(row.begin(), row.end());
  }
  for (const auto& cell : cells) {
    std::vector<double> h(cell.hidden_dim(), 0.0);
    for (auto& x : inputs) {
      h = cell_forward(cell, x, h);
      x = h;  // becomes the next layer's input
    }
  }
  return inputs.back();
}

// ---------------------------------------------------------------------------
// Adam optimizer

class Adam {
 public:
  explicit Adam(double learning_rate) : lr_(learning_rate) {}

  double learning_rate() const { return lr_; }
  long step_count() const { return t_; }

  // One optimization step may touch several tensors; call begin_step() once,
  // then update() each tensor under a stable slot id.
  void begin_step() {
    ++t_;
    bias1_ = 1.0 - std::pow(beta1_, t_);
    bias2_ = 1.0 - std::pow(beta2_, t_);
  }

  void update(std::size_t slot, std::span<double> param, std::span<const double> grad) {
    if (slot >= m_.size()) {
      m_.resize(slot + 1);
      v_.resize(slot + 1);
    }
    if (m_[slot].size() != param.size()) {
      m_[slot].assign(param.size(), 0.0);
      v_[slot].assign(param.size(), 0.0);
    }
    auto& m = m_[slot];
    auto& v = v_[slot];
    for (std::size_t i = 0; i < param.size(); ++i) {
      double g = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bias1_;
      double vhat = v[i] / bias2_;
      param[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  double bias1_ = 1.0;
  double bias2_ = 1.0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Multilayer perceptron

struct Mlp {
  std::vector<DenseLayer> layers;

  Matrix forward(const Matrix& x) const {
    Matrix h = x;
    for (const auto& layer : layers) h = dense_forward(layer, h);
    return h;
  }
};

struct MlpCache {
  std::vector<Matrix> outputs;  // post-activation, one per layer
};

inline Matrix mlp_forward_cached(const Mlp& mlp, const Matrix& x, MlpCache& cache) {
  cache.outputs.clear();
  cache.outputs.reserve(mlp.layers.size());
  const Matrix* in = &x;
  for (const auto& layer : mlp.layers) {
    cache.outputs.push_back(dense_forward(layer, *in));
    in = &cache.outputs.back();
  }
  return cache.outputs.empty() ? x : cache.outputs.back();
}

struct MlpGrads {
  std::vector<DenseGrads> layers;
};

// d_output is the gradient with respect to the network output (post-activation).
// Returns the gradient with respect to the input.
inline Matrix mlp_backward(const Mlp& mlp, const Matrix& x, const MlpCache& cache,
                           const Matrix& d_output, MlpGrads& grads) {
  grads.layers.resize(mlp.layers.size());
  Matrix d = d_output;
  for (int l = static_cast<int>(mlp.layers.size()) - 1; l >= 0; --l) {
    const Matrix& input = l == 0 ? x : cache.outputs[l - 1];
    d = dense_backward(mlp.layers[l], input, cache.outputs[l], d, grads.layers[l]);
  }
  return d;
}

// Adds L2 penalties into the loss and gradients (2*l2*w per weight, biases exempt).
inline double apply_l2(const std::vector<DenseLayer>& layers, std::vector<DenseGrads>& grads) {
  double penalty = 0.0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].l2 == 0.0) continue;
    double sq = 0.0;
    for (std::size_t i = 0; i < layers[l].weights.data.size(); ++i) {
      sq += layers[l].weights.data[i] * layers[l].weights.data[i];
      grads[l].d_weights.data[i] += 2.0 * layers[l].l2 * layers[l].weights.data[i];
    }
    penalty += layers[l].l2 * sq;
  }
  return penalty;
}

inline void adam_update_dense(Adam& adam, std::size_t& slot, DenseLayer& layer,
                              DenseGrads& grads) {
  adam.update(slot++, layer.weights.data, grads.d_weights.data);
  adam.update(slot++, layer.bias, grads.d_bias);
}

enum class LossKind { mse, binary_cross_entropy };

// Supervised batch update for an MLP: reverse accumulation through the layers,
// optional L2, one Adam step. Returns the pre-update loss.
inline double backward_and_step(Mlp& mlp, const Matrix& inputs, const Matrix& targets,
                                LossKind loss_kind, Adam& adam) {
  if (inputs.rows == 0) throw Error("backward_and_step: empty batch");
  MlpCache cache;
  Matrix pred = mlp_forward_cached(mlp, inputs, cache);
  if (pred.rows != targets.rows || pred.cols != targets.cols) {
    throw Error("backward_and_step: target shape mismatch");
  }
  const double n = double(pred.rows) * pred.cols;
  double loss = 0.0;
  MlpGrads grads;
  if (loss_kind == LossKind::mse) {
    Matrix d(pred.rows, pred.cols);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      double e = pred.data[i] - targets.data[i];
      loss += e * e;
      d.data[i] = 2.0 * e / n;
    }
    loss /= n;
    mlp_backward(mlp, inputs, cache, d, grads);
  } else {
    // binary cross-entropy through a sigmoid output: d_preact = (p - y) / n
    if (mlp.layers.empty() || mlp.layers.back().activation != Activation::sigmoid) {
      throw Error("binary_cross_entropy requires a sigmoid output layer");
    }
    Matrix d_preact(pred.rows, pred.cols);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      double p = std::clamp(pred.data[i], 1e-12, 1.0 - 1e-12);
      double y = targets.data[i];
      loss += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
      d_preact.data[i] = (pred.data[i] - y) / n;
    }
    loss /= n;
    grads.layers.resize(mlp.layers.size());
    const int last = static_cast<int>(mlp.layers.size()) - 1;
    const Matrix& last_in = last == 0 ? inputs : cache.outputs[last - 1];
    Matrix d = dense_backward_preact(mlp.layers[last], last_in, d_preact, grads.layers[last]);
    for (int l = last - 1; l >= 0; --l) {
      const Matrix& input = l == 0 ? inputs : cache.outputs[l - 1];
      d = dense_backward(mlp.layers[l], input, cache.outputs[l], d, grads.layers[l]);
    }
  }
  loss += apply_l2(mlp.layers, grads.layers);
  if (!std::isfinite(loss)) throw DivergenceError("backward_and_step: non-finite loss");
  adam.begin_step();
  std::size_t slot = 0;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    adam_update_dense(adam, slot, mlp.layers[l], grads.layers[l]);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Recurrent sequence classifier (stacked cells + sigmoid dense head)

struct RnnClassifier {
  std::vector<RecurrentCell> cells;
  DenseLayer head;       // hidden -> 1, sigmoid
  double dropout = 0.0;  // applied to recurrent layer outputs during training

  // Inference path; dropout is the identity map here.
  double predict(const Matrix& sequence) const {
    std::vector<double> h = rnn_forward(cells, sequence);
    Matrix hm(1, static_cast<int>(h.size()));
    hm.data = h;
    return dense_forward(head, hm)(0, 0);
  }
};

inline RnnClassifier make_rnn_classifier(int in_dim, int units, int layers, double dropout,
                                         double head_l2, Rng& rng) {
  RnnClassifier model;
  model.cells.reserve(layers);
  for (int l = 0; l < layers; ++l) {
    model.cells.push_back(make_recurrent(l == 0 ? in_dim : units, units, rng));
  }
  model.head = make_dense(units, 1, Activation::sigmoid, rng, head_l2);
  model.dropout = dropout;
  return model;
}

struct RecurrentGrads {
  Matrix d_input_weights;
  Matrix d_hidden_weights;
  std::vector<double> d_bias;
};

struct RnnClassifierGrads {
  std::vector<RecurrentGrads> cells;
  DenseGrads head;
};

namespace detail {

// Forward with stored states, BPTT backward, gradient accumulation for one
// sequence. Returns (probability, loss contribution without L2).
inline std::pair<double, double> rnn_classifier_accumulate(const RnnClassifier& model,
                                                           const Matrix& sequence, double target,
                                                           RnnClassifierGrads& grads, Rng* drop_rng,
                                                           double loss_scale) {
  const int steps = sequence.rows;
  const int n_layers = static_cast<int>(model.cells.size());
  const bool training_dropout = drop_rng != nullptr && model.dropout > 0.0;
  const double keep = 1.0 - model.dropout;

  // inputs[l][t]: input to layer l at step t (after dropout of the layer below)
  std::vector<std::vector<std::vector<double>>> inputs(n_layers + 1);
  std::vector<std::vector<std::vector<double>>> states(n_layers);  // h per layer per step
  std::vector<std::vector<std::vector<double>>> masks(n_layers);   // inverted dropout
  inputs[0].resize(steps);
  for (int t = 0; t < steps; ++t) {
    auto row = sequence.row(t);
    inputs[0][t].assign(row.begin(), row.end());
  }
  for (int l = 0; l < n_layers; ++l) {
    const auto& cell = model.cells[l];
    states[l].resize(steps);
    masks[l].resize(steps);
    inputs[l + 1].resize(steps);
    std::vector<double> h(cell.hidden_dim(), 0.0);
    for (int t = 0; t < steps; ++t) {
      h = cell_forward(cell, inputs[l][t], h);
      states[l][t] = h;
      std::vector<double> out = h;
      if (training_dropout) {
        auto& mask = masks[l][t];
        mask.assign(h.size(), 0.0);
        for (std::size_t j = 0; j < h.size(); ++j) {
          mask[j] = drop_rng->uniform() < keep ? 1.0 / keep : 0.0;
          out[j] *= mask[j];
        }
      }
      inputs[l + 1][t] = std::move(out);
    }
  }

  // head on the final output of the top layer
  const auto& final_out = inputs[n_layers][steps - 1];
  Matrix head_in(1, static_cast<int>(final_out.size()));
  head_in.data = final_out;
  Matrix prob_m = dense_forward(model.head, head_in);
  double p = prob_m(0, 0);
  double pc = std::clamp(p, 1e-12, 1.0 - 1e-12);
  double loss = -(target * std::log(pc) + (1.0 - target) * std::log(1.0 - pc));

  // BCE + sigmoid: pre-activation gradient is (p - y)
  Matrix d_preact(1, 1);
  d_preact(0, 0) = (p - target) * loss_scale;
  Matrix d_head_in = dense_backward_preact(model.head, head_in, d_preact, grads.head);

  // d on each layer's (post-dropout) outputs
  std::vector<std::vector<std::vector<double>>> d_out(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    d_out[l].assign(steps, std::vector<double>(model.cells[l].hidden_dim(), 0.0));
  }
  for (int j = 0; j < d_head_in.cols; ++j) d_out[n_layers - 1][steps - 1][j] = d_head_in(0, j);

  for (int l = n_layers - 1; l >= 0; --l) {
    const auto& cell = model.cells[l];
    const int hidden = cell.hidden_dim();
    const int in_dim = cell.in_dim();
    auto& g = grads.cells[l];
    if (g.d_input_weights.empty()) {
      g.d_input_weights = Matrix(in_dim, hidden);
      g.d_hidden_weights = Matrix(hidden, hidden);
      g.d_bias.assign(hidden, 0.0);
    }
    std::vector<double> dh_next(hidden, 0.0);  // through-time carry
    for (int t = steps - 1; t >= 0; --t) {
      std::vector<double> dh = dh_next;
      for (int j = 0; j < hidden; ++j) {
        double m = training_dropout ? masks[l][t][j] : 1.0;
        dh[j] += d_out[l][t][j] * m;
      }
      const auto& h = states[l][t];
      std::vector<double> dz(hidden);
      for (int j = 0; j < hidden; ++j) dz[j] = dh[j] * (1.0 - h[j] * h[j]);
      const auto& x = inputs[l][t];
      for (int i = 0; i < in_dim; ++i) {
        for (int j = 0; j < hidden; ++j) g.d_input_weights(i, j) += x[i] * dz[j];
      }
      const std::vector<double>* h_prev = t > 0 ? &states[l][t - 1] : nullptr;
      if (h_prev) {
        for (int i = 0; i < hidden; ++i) {
          for (int j = 0; j < hidden; ++j) g.d_hidden_weights(i, j) += (*h_prev)[i] * dz[j];
        }
      }
      for (int j = 0; j < hidden; ++j) g.d_bias[j] += dz[j];
      if (l > 0) {
        auto& dx = d_out[l - 1][t];
        for (int i = 0; i < in_dim; ++i) {
          double acc = 0.0;
          for (int j = 0; j < hidden; ++j) acc += dz[j] * cell.input_weights(i, j);
          dx[i] += acc;
        }
      }
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      for (int i = 0; i < hidden; ++i) {
        double acc = 0.0;
        for (int j = 0; j < hidden; ++j) acc += dz[j] * cell.hidden_weights(i, j);
        dh_next[i] = acc;
      }
    }
  }
  return {p, loss};
}

}  // namespace detail

// One minibatch update over sequences with binary targets. Gradients are
// accumulated over the unrolled graphs of all sequences, then a single Adam
// step is taken. Returns the pre-update mean loss (L2 penalty included).
inline double backward_and_step(RnnClassifier& model, std::span<const Matrix> sequences,
                                std::span<const double> targets, Adam& adam,
                                Rng* dropout_rng = nullptr) {
  if (sequences.empty()) throw Error("backward_and_step: empty batch");
  RnnClassifierGrads grads;
  grads.cells.resize(model.cells.size());
  const double scale = 1.0 / double(sequences.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    auto [p, l] =
        detail::rnn_classifier_accumulate(model, sequences[i], targets[i], grads, dropout_rng,
                                          scale);
    loss += l * scale;
  }
  std::vector<DenseGrads> head_grads{grads.head};
  std::vector<DenseLayer> head_layers{model.head};
  loss += apply_l2(head_layers, head_grads);
  grads.head = head_grads[0];
  if (!std::isfinite(loss)) throw DivergenceError("backward_and_step: non-finite loss");
  adam.begin_step();
  std::size_t slot = 0;
  for (std::size_t l = 0; l < model.cells.size(); ++l) {
    adam.update(slot++, model.cells[l].input_weights.data, grads.cells[l].d_input_weights.data);
    adam.update(slot++, model.cells[l].hidden_weights.data, grads.cells[l].d_hidden_weights.data);
    adam.update(slot++, model.cells[l].bias, grads.cells[l].d_bias);
  }
  adam_update_dense(adam, slot, model.head, grads.head);
  return loss;
}

// ---------------------------------------------------------------------------
// Weight files: text header plus one row-major tensor per block, written at
// 17 significant digits so loads round-trip bit-exactly.

struct TensorRef {
  std::string name;
  double* data;
  long rows;
  long cols;
};

inline TensorRef tensor_ref(const std::string& name, Matrix& m) {
  return {name, m.data.data(), m.rows, m.cols};
}

inline TensorRef tensor_ref(const std::string& name, std::vector<double>& v) {
  return {name, v.data(), 1, static_cast<long>(v.size())};
}

inline void save_tensors(const std::filesystem::path& path, const std::vector<TensorRef>& refs) {
  std::string out = "format_version=1\n";
  out += "tensors=" + std::to_string(refs.size()) + "\n";
  for (const auto& ref : refs) {
    out += "tensor " + ref.name + " " + std::to_string(ref.rows) + " " + std::to_string(ref.cols) +
           "\n";
    for (long r = 0; r < ref.rows; ++r) {
      for (long c = 0; c < ref.cols; ++c) {
        if (c > 0) out += ' ';
        out += format_double(ref.data[r * ref.cols + c], 17);
      }
      out += '\n';
    }
  }
  write_file_atomic(path, out);
}

inline void load_tensors(const std::filesystem::path& path, const std::vector<TensorRef>& refs) {
  auto lines = read_lines(path);
  std::size_t i = 0;
  auto next = [&]() -> const std::string& {
    if (i >= lines.size()) throw IoError(path.string() + ": truncated weight file");
    return lines[i++];
  };
  if (next() != "format_version=1") throw IoError(path.string() + ": unsupported format");
  if (next() != "tensors=" + std::to_string(refs.size())) {
    throw IoError(path.string() + ": tensor count mismatch");
  }
  for (const auto& ref : refs) {
    std::istringstream header(next());
    std::string kw, name;
    long rows = 0, cols = 0;
    header >> kw >> name >> rows >> cols;
    if (kw != "tensor" || name != ref.name || rows != ref.rows || cols != ref.cols) {
      throw IoError(path.string() + ": tensor header mismatch for " + ref.name);
    }
    for (long r = 0; r < rows; ++r) {
      std::istringstream row(next());
      for (long c = 0; c < cols; ++c) {
        if (!(row >> ref.data[r * cols + c])) {
          throw IoError(path.string() + ": bad value in tensor " + ref.name);
        }
      }
    }
  }
}

inline std::vector<TensorRef> tensor_refs(Mlp& mlp, const std::string& prefix = "dense") {
  std::vector<TensorRef> refs;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    refs.push_back(tensor_ref(prefix + std::to_string(l) + ".w", mlp.layers[l].weights));
    refs.push_back(tensor_ref(prefix + std::to_string(l) + ".b", mlp.layers[l].bias));
  }
  return refs;
}

inline std::vector<TensorRef> tensor_refs(RnnClassifier& model) {
  std::vector<TensorRef> refs;
  for (std::size_t l = 0; l < model.cells.size(); ++l) {
    auto p = "cell" + std::to_string(l);
    refs.push_back(tensor_ref(p + ".w_in", model.cells[l].input_weights));
    refs.push_back(tensor_ref(p + ".w_h", model.cells[l].hidden_weights));
    refs.push_back(tensor_ref(p + ".b", model.cells[l].bias));
  }
  refs.push_back(tensor_ref("head.w", model.head.weights));
  refs.push_back(tensor_ref("head.b", model.head.bias));
  return refs;
}

}  // namespace vigil
