#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>

#include "support/oracles.hpp"
#include "vigil/nn.hpp"

using namespace vigil;

TEST_CASE("dense forward examples") {
  DenseLayer layer;
  layer.weights = Matrix(2, 2);
  layer.weights.data = {1, 0, 0, 1};
  layer.bias = {0, 0};
  layer.activation = Activation::identity;

  Matrix x(1, 2);
  x.data = {3.5, -2.0};
  Matrix y = dense_forward(layer, x);
  CHECK(y(0, 0) == 3.5);  // identity weights, zero bias
  CHECK(y(0, 1) == -2.0);

  layer.bias = {1, 1};
  x.data = {1, 2};
  y = dense_forward(layer, x);
  CHECK(y(0, 0) == 2.0);
  CHECK(y(0, 1) == 3.0);

  layer.activation = Activation::relu;
  layer.bias = {0, 0};
  x.data = {-1, -5};
  y = dense_forward(layer, x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 0.0);

  Matrix bad(1, 3);
  CHECK_THROWS_AS(dense_forward(layer, bad), Error);
}

TEST_CASE("rnn forward matches a manual unrolled evaluation") {
  RecurrentCell cell;
  cell.input_weights = Matrix(1, 2);
  cell.input_weights.data = {0.5, -0.25};
  cell.hidden_weights = Matrix(2, 2);
  cell.hidden_weights.data = {0.1, 0.2, -0.3, 0.4};
  cell.bias = {0.05, -0.05};

  Matrix seq(2, 1);
  seq.data = {1.0, -2.0};

  // manual unroll
  double h1a = std::tanh(1.0 * 0.5 + 0.05);
  double h1b = std::tanh(1.0 * -0.25 - 0.05);
  double h2a = std::tanh(-2.0 * 0.5 + h1a * 0.1 + h1b * -0.3 + 0.05);
  double h2b = std::tanh(-2.0 * -0.25 + h1a * 0.2 + h1b * 0.4 - 0.05);

  auto h = rnn_forward({cell}, seq);
  REQUIRE(h.size() == 2);
  CHECK_THAT(h[0], Catch::Matchers::WithinAbs(h2a, 1e-15));
  CHECK_THAT(h[1], Catch::Matchers::WithinAbs(h2b, 1e-15));

  SECTION("all-zero weights give a zero hidden state") {
    RecurrentCell zero;
    zero.input_weights = Matrix(1, 3);
    zero.hidden_weights = Matrix(3, 3);
    zero.bias = {0, 0, 0};
    auto hz = rnn_forward({zero}, seq);
    for (double v : hz) CHECK(v == 0.0);
  }

  SECTION("length-1 sequence has no recurrence contribution") {
    Matrix one(1, 1);
    one.data = {1.0};
    auto h1 = rnn_forward({cell}, one);
    CHECK_THAT(h1[0], Catch::Matchers::WithinAbs(h1a, 1e-15));
    CHECK_THAT(h1[1], Catch::Matchers::WithinAbs(h1b, 1e-15));
  }

  SECTION("empty sequence is an error") {
    Matrix empty(0, 1);
    CHECK_THROWS_AS(rnn_forward({cell}, empty), Error);
  }
}

namespace {

// numeric gradient of a scalar loss with respect to every parameter tensor
template <class LossFn>
void check_gradients(std::vector<TensorRef> refs, const LossFn& loss,
                     const std::vector<const Matrix*>& analytic, double tol = 1e-4) {
  std::size_t checked = 0;
  for (std::size_t t = 0; t < refs.size(); ++t) {
    long count = refs[t].rows * refs[t].cols;
    for (long i = 0; i < count; ++i) {
      double numeric = oracles::central_difference(loss, refs[t].data[i]);
      double a = analytic[t]->data[i];
      INFO("tensor " << refs[t].name << " index " << i << " analytic " << a << " numeric "
                     << numeric);
      REQUIRE(oracles::relative_error(a, numeric) < tol);
      ++checked;
    }
  }
  REQUIRE(checked > 0);
}

}  // namespace

TEST_CASE("dense gradients match central finite differences") {
  Rng rng(17);
  Mlp mlp;
  mlp.layers.push_back(make_dense(4, 6, Activation::tanh, rng));
  mlp.layers.push_back(make_dense(6, 5, Activation::relu, rng));
  mlp.layers.push_back(make_dense(5, 3, Activation::identity, rng));

  Matrix x(7, 4);
  for (double& v : x.data) v = rng.normal();
  Matrix target(7, 3);
  for (double& v : target.data) v = rng.normal();

  auto loss = [&]() {
    Matrix pred = mlp.forward(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      double e = pred.data[i] - target.data[i];
      acc += e * e;
    }
    return acc / double(pred.data.size());
  };

  MlpCache cache;
  Matrix pred = mlp_forward_cached(mlp, x, cache);
  Matrix d(pred.rows, pred.cols);
  const double n = double(pred.rows) * pred.cols;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    d.data[i] = 2.0 * (pred.data[i] - target.data[i]) / n;
  }
  MlpGrads grads;
  mlp_backward(mlp, x, cache, d, grads);

  std::vector<TensorRef> refs;
  std::vector<const Matrix*> analytic;
  std::vector<Matrix> bias_as_matrix;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    refs.push_back(tensor_ref("w" + std::to_string(l), mlp.layers[l].weights));
    analytic.push_back(&grads.layers[l].d_weights);
  }
  // biases via the same oracle, wrapping the vectors
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    Matrix bm(1, static_cast<int>(mlp.layers[l].bias.size()));
    bm.data = grads.layers[l].d_bias;
    bias_as_matrix.push_back(bm);
  }
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    refs.push_back(tensor_ref("b" + std::to_string(l), mlp.layers[l].bias));
    analytic.push_back(&bias_as_matrix[l]);
  }
  check_gradients(refs, loss, analytic);
}

TEST_CASE("recurrent classifier gradients match central finite differences") {
  Rng rng(23);
  RnnClassifier model = make_rnn_classifier(3, 4, 2, 0.0, 0.0, rng);
  std::vector<Matrix> seqs;
  std::vector<double> targets{1.0, 0.0};
  for (int s = 0; s < 2; ++s) {
    Matrix seq(5, 3);
    for (double& v : seq.data) v = rng.normal();
    seqs.push_back(seq);
  }

  auto loss = [&]() {
    double acc = 0.0;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      double p = std::clamp(model.predict(seqs[s]), 1e-12, 1.0 - 1e-12);
      acc += -(targets[s] * std::log(p) + (1.0 - targets[s]) * std::log(1.0 - p));
    }
    return acc / double(seqs.size());
  };

  RnnClassifierGrads grads;
  grads.cells.resize(model.cells.size());
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    detail::rnn_classifier_accumulate(model, seqs[s], targets[s], grads, nullptr,
                                      1.0 / double(seqs.size()));
  }

  std::vector<TensorRef> refs;
  std::vector<const Matrix*> analytic;
  std::vector<Matrix> wrapped;
  wrapped.reserve(model.cells.size() * 2 + 2);
  for (std::size_t l = 0; l < model.cells.size(); ++l) {
    refs.push_back(tensor_ref("w_in" + std::to_string(l), model.cells[l].input_weights));
    analytic.push_back(&grads.cells[l].d_input_weights);
    refs.push_back(tensor_ref("w_h" + std::to_string(l), model.cells[l].hidden_weights));
    analytic.push_back(&grads.cells[l].d_hidden_weights);
  }
  refs.push_back(tensor_ref("head.w", model.head.weights));
  analytic.push_back(&grads.head.d_weights);
  Matrix head_bias(1, 1);
  head_bias.data = grads.head.d_bias;
  refs.push_back(tensor_ref("head.b", model.head.bias));
  analytic.push_back(&head_bias);
  for (std::size_t l = 0; l < model.cells.size(); ++l) {
    Matrix bm(1, static_cast<int>(model.cells[l].bias.size()));
    bm.data = grads.cells[l].d_bias;
    wrapped.push_back(bm);
    refs.push_back(tensor_ref("b" + std::to_string(l), model.cells[l].bias));
    analytic.push_back(&wrapped.back());
  }
  check_gradients(refs, loss, analytic);
}

TEST_CASE("adam and the update path behave per contract") {
  SECTION("zero learning rate leaves parameters unchanged") {
    Rng rng(5);
    Mlp mlp;
    mlp.layers.push_back(make_dense(2, 2, Activation::identity, rng));
    auto before = mlp.layers[0].weights.data;
    Adam adam(0.0);
    Matrix x(3, 2), t(3, 2);
    for (double& v : x.data) v = rng.normal();
    for (double& v : t.data) v = rng.normal();
    double loss = backward_and_step(mlp, x, t, LossKind::mse, adam);
    CHECK(loss > 0.0);
    CHECK(mlp.layers[0].weights.data == before);
  }

  SECTION("a 1-D quadratic descends monotonically") {
    // single parameter w, loss (w*1 - 3)^2, via a 1x1 identity layer
    Mlp mlp;
    DenseLayer l;
    l.weights = Matrix(1, 1);
    l.weights.data = {10.0};
    l.bias = {0.0};
    mlp.layers.push_back(l);
    Adam adam(0.1);
    Matrix x(1, 1), t(1, 1);
    x.data = {1.0};
    t.data = {3.0};
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100; ++i) {
      double loss = backward_and_step(mlp, x, t, LossKind::mse, adam);
      REQUIRE(loss <= prev + 1e-12);
      prev = loss;
    }
    CHECK(prev < 1e-2);
  }

  SECTION("same seed and data give bit-identical trajectories") {
    auto run = [&]() {
      Rng rng(11);
      Mlp mlp;
      mlp.layers.push_back(make_dense(3, 4, Activation::tanh, rng));
      mlp.layers.push_back(make_dense(4, 1, Activation::identity, rng));
      Adam adam(0.01);
      Matrix x(8, 3), t(8, 1);
      for (double& v : x.data) v = rng.normal();
      for (double& v : t.data) v = rng.normal();
      for (int i = 0; i < 50; ++i) backward_and_step(mlp, x, t, LossKind::mse, adam);
      std::vector<double> flat;
      for (auto& layer : mlp.layers) {
        flat.insert(flat.end(), layer.weights.data.begin(), layer.weights.data.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
      }
      return flat;
    };
    CHECK(run() == run());
  }

  SECTION("divergent loss raises") {
    Mlp mlp;
    DenseLayer l;
    l.weights = Matrix(1, 1);
    l.weights.data = {std::numeric_limits<double>::quiet_NaN()};
    l.bias = {0.0};
    mlp.layers.push_back(l);
    Adam adam(0.1);
    Matrix x(1, 1), t(1, 1);
    x.data = {1.0};
    t.data = {0.0};
    CHECK_THROWS_AS(backward_and_step(mlp, x, t, LossKind::mse, adam), DivergenceError);
  }
}

TEST_CASE("l2 penalty adds lambda*w^2 to the loss and 2*lambda*w to gradients") {
  Mlp mlp;
  DenseLayer l;
  l.weights = Matrix(1, 1);
  l.weights.data = {2.0};
  l.bias = {0.0};
  l.l2 = 0.28;
  mlp.layers.push_back(l);

  // with input 0 the data term contributes loss target^2 and no weight grad,
  // isolating the penalty
  Matrix x(1, 1), t(1, 1);
  x.data = {0.0};
  t.data = {0.0};
  Adam adam(0.0);
  double loss = backward_and_step(mlp, x, t, LossKind::mse, adam);
  CHECK_THAT(loss, Catch::Matchers::WithinAbs(0.28 * 4.0, 1e-12));

  std::vector<DenseGrads> grads(1);
  grads[0].d_weights = Matrix(1, 1);
  grads[0].d_bias = {0.0};
  std::vector<DenseLayer> layers{mlp.layers[0]};
  apply_l2(layers, grads);
  CHECK_THAT(grads[0].d_weights(0, 0),
             Catch::Matchers::WithinAbs(2.0 * 0.28 * layers[0].weights(0, 0), 1e-12));
  CHECK(grads[0].d_bias[0] == 0.0);  // biases exempt
}

TEST_CASE("dropout at inference is the identity map") {
  Rng rng(31);
  RnnClassifier with_dropout = make_rnn_classifier(3, 5, 2, 0.5, 0.0, rng);
  RnnClassifier no_dropout = with_dropout;
  no_dropout.dropout = 0.0;
  Matrix seq(6, 3);
  for (double& v : seq.data) v = rng.normal();
  CHECK(with_dropout.predict(seq) == no_dropout.predict(seq));
}

TEST_CASE("weight files round-trip bit-exactly") {
  Rng rng(41);
  RnnClassifier model = make_rnn_classifier(7, 4, 3, 0.25, 0.28, rng);
  auto path = std::filesystem::temp_directory_path() / "vigil_weights_test.txt";
  save_tensors(path, tensor_refs(model));

  RnnClassifier loaded = make_rnn_classifier(7, 4, 3, 0.25, 0.28, rng);  // different init
  load_tensors(path, tensor_refs(loaded));
  for (std::size_t l = 0; l < model.cells.size(); ++l) {
    REQUIRE(loaded.cells[l].input_weights.data == model.cells[l].input_weights.data);
    REQUIRE(loaded.cells[l].hidden_weights.data == model.cells[l].hidden_weights.data);
    REQUIRE(loaded.cells[l].bias == model.cells[l].bias);
  }
  REQUIRE(loaded.head.weights.data == model.head.weights.data);

  SECTION("shape mismatch is rejected") {
    RnnClassifier other = make_rnn_classifier(7, 5, 3, 0.0, 0.0, rng);
    CHECK_THROWS_AS(load_tensors(path, tensor_refs(other)), IoError);
  }
}

TEST_CASE("orthogonal init produces an orthogonal matrix") {
  Rng rng(55);
  Matrix q = orthogonal_init(6, rng);
  Matrix qtq = matmul_tn(q, q);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      CHECK_THAT(qtq(r, c), Catch::Matchers::WithinAbs(r == c ? 1.0 : 0.0, 1e-12));
    }
  }
}
