#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "cbamc/cbmodel.hpp"
#include "cbamc/error.hpp"
#include "cbamc/nn/adam.hpp"
#include "cbamc/nn/checkpoint.hpp"
#include "cbamc/nn/fit.hpp"
#include "cbamc/nn/gradcheck.hpp"
#include "cbamc/nn/loss.hpp"
#include "cbamc/nn/network.hpp"
#include "oracles.hpp"

using namespace cbamc;
using namespace cbamc::nn;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no throw");
  return ErrorCode::InvalidParameter;
}

// Conv2d with its input gradient sign-flipped: the gradient check must
// notice and name the culprit.
class BrokenConv2d : public Conv2d<double> {
 public:
  using Conv2d<double>::Conv2d;
  Tensor<double> backward(const Tensor<double>& g) override {
    auto out = Conv2d<double>::backward(g);
    for (auto& v : out.values()) v = -v;
    return out;
  }
};

}  // namespace

TEST_CASE("regressor shape chain") {
  CHECK(layer_output_shape(Conv2dSpec{96, 1, 21, Padding::symmetric(0, 10)}, {1, 2, 128}) == Shape{96, 2, 128});
  CHECK(layer_output_shape(Conv2dSpec{96, 2, 21, Padding::symmetric(0, 10)}, {96, 2, 128}) == Shape{96, 1, 128});
  CHECK(layer_output_shape(Conv2dSpec{96, 2, 21, Padding{0, 1, 10, 10}}, {96, 2, 128}) == Shape{96, 2, 128});
  CHECK(layer_output_shape(FlattenSpec{}, {96, 2, 128}) == Shape{96 * 256});
  CHECK_THROWS_AS(layer_output_shape(LinearSpec{4}, {3, 2}), Error);
  CHECK_THROWS_AS(layer_output_shape(Conv2dSpec{4, 3, 1, {}}, {1, 2, 128}), Error);
}

TEST_CASE("conv2d matches a direct cross-correlation") {
  const Conv2dSpec spec{3, 2, 5, Padding{0, 1, 2, 2}};
  Conv2d<double> conv(2, spec);
  Rng init(1);
  conv.initialize(init, true);
  const auto x = random_tensor({2, 2, 3, 9}, 2);
  const auto y = conv.infer(x);
  REQUIRE(y.shape() == Shape{2, 3, 3, 9});

  const auto& w = conv.params()[0]->value;
  const auto& b = conv.params()[1]->value;
  auto at = [&](int n, int c, int h, int ww) -> double {
    if (h < 0 || h >= 3 || ww < 0 || ww >= 9) return 0.0;
    return x[((n * 2 + c) * 3 + h) * 9 + ww];
  };
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o)
      for (int h = 0; h < 3; ++h)
        for (int ww = 0; ww < 9; ++ww) {
          double acc = b[o];
          for (int c = 0; c < 2; ++c)
            for (int i = 0; i < 2; ++i)
              for (int j = 0; j < 5; ++j) acc += w[((o * 2 + c) * 2 + i) * 5 + j] * at(n, c, h + i, ww + j - 2);
          CHECK(y[((n * 3 + o) * 3 + h) * 9 + ww] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("linear matches a direct matrix product") {
  Linear<double> lin(4, LinearSpec{3});
  Rng init(3);
  lin.initialize(init, false);
  const auto x = random_tensor({5, 4}, 4);
  const auto y = lin.infer(x);
  const auto& w = lin.params()[0]->value;
  const auto& b = lin.params()[1]->value;
  for (int n = 0; n < 5; ++n)
    for (int o = 0; o < 3; ++o) {
      double acc = b[o];
      for (int f = 0; f < 4; ++f) acc += w[o * 4 + f] * x[n * 4 + f];
      CHECK(y[n * 3 + o] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("dropout: eval identity, train statistics, mask reuse") {
  Dropout<double> d(0.5);
  const auto x = random_tensor({4, 1000}, 5);
  CHECK(d.forward(x, Mode::Eval, nullptr) == x);
  CHECK_THROWS_AS(d.forward(x, Mode::Train, nullptr), Error);

  Rng rng(6);
  const Tensor<double> ones({1, 20000}, 1.0);
  const auto y = d.forward(ones, Mode::Train, &rng);
  int zeros = 0;
  for (double v : y.values()) {
    CHECK((v == 0.0 || v == 2.0));
    zeros += v == 0.0;
  }
  CHECK(std::abs(zeros - 10000) < 4 * std::sqrt(20000 * 0.25));
  const auto g = d.backward(ones);
  CHECK(g == y);
}

TEST_CASE("relu blocks gradient at negative pre-activation") {
  Relu<double> r;
  const Tensor<double> x({1, 3}, std::vector<double>{-1.0, 0.5, 2.0});
  r.forward(x, Mode::Train, nullptr);
  const auto g = r.backward(Tensor<double>({1, 3}, 1.0));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("softmax rows are a distribution") {
  auto x = random_tensor({6, 9}, 7);
  x[0] = 500.0;
  const auto p = softmax_rows(x);
  for (int n = 0; n < 6; ++n) {
    double s = 0.0;
    for (int k = 0; k < 9; ++k) {
      CHECK(p[n * 9 + k] >= 0.0);
      s += p[n * 9 + k];
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("backward is linear and zero-preserving") {
  NetworkSpec spec{{1, 2, 16}, {Conv2dSpec{3, 1, 5, Padding::symmetric(0, 2)}, ReluSpec{}, FlattenSpec{}, LinearSpec{4}}};
  Network<double> net(spec, 8);
  const auto x = random_tensor({2, 1, 2, 16}, 9);
  const auto g = random_tensor({2, 4}, 10);

  net.zero_grad();
  net.forward(x, Mode::Train, nullptr);
  const auto gin1 = net.backward(g);
  const auto grads1 = net.flat_gradients();

  auto g3 = g;
  for (auto& v : g3.values()) v *= 3.0;
  net.zero_grad();
  net.forward(x, Mode::Train, nullptr);
  const auto gin3 = net.backward(g3);
  const auto grads3 = net.flat_gradients();
  for (std::size_t i = 0; i < grads1.size(); ++i) CHECK(grads3[i] == doctest::Approx(3.0 * grads1[i]).epsilon(1e-10));
  for (std::size_t i = 0; i < gin1.size(); ++i) CHECK(gin3[i] == doctest::Approx(3.0 * gin1[i]).epsilon(1e-10));

  net.zero_grad();
  net.forward(x, Mode::Train, nullptr);
  net.backward(Tensor<double>({2, 4}, 0.0));
  for (double v : net.flat_gradients()) CHECK(v == 0.0);
}

TEST_CASE("backward without forward is an error") {
  Linear<double> lin(3, LinearSpec{2});
  CHECK(code_of([&] { lin.backward(Tensor<double>({1, 2}, 1.0)); }) == ErrorCode::NoCachedForward);
  Relu<double> r;
  CHECK(code_of([&] { r.backward(Tensor<double>({1, 2}, 1.0)); }) == ErrorCode::NoCachedForward);
  Linear<double> lin2(3, LinearSpec{2});
  CHECK(code_of([&] { lin2.forward(Tensor<double>({1, 4}, 1.0), Mode::Eval, nullptr); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("gradient check suite passes for every layer and loss") {
  const auto reports = standard_gradcheck_suite(3, 2024);
  CHECK(reports.size() >= 9);
  for (const auto& r : reports) {
    CAPTURE(r.subject);
    CAPTURE(r.worst_entry);
    CHECK(r.entries_checked > 0);
    CHECK(r.passed);
    CHECK(r.max_rel_error < kGradcheckTolerance);
  }
}

TEST_CASE("gradient check catches a corrupted backward") {
  BrokenConv2d broken(2, Conv2dSpec{2, 2, 3, Padding::symmetric(0, 1)});
  Rng init(1);
  broken.initialize(init, true);
  const auto report = gradcheck_layer(broken, {2, 2, 2, 6}, 11);
  CHECK(report.subject == "Conv2d");
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_error > 0.5);
}

TEST_CASE("whole-network gradient check on a small regressor") {
  NetworkSpec spec{{1, 2, 12},
                   {Conv2dSpec{3, 1, 5, Padding::symmetric(0, 2)}, ReluSpec{}, DropoutSpec{0.5},
                    Conv2dSpec{3, 2, 5, Padding{0, 1, 2, 2}}, ReluSpec{}, DropoutSpec{0.5}, FlattenSpec{},
                    LinearSpec{6}, ReluSpec{}, LinearSpec{5}}};
  Network<double> net(spec, 12);
  const auto report = gradcheck_network(net, 2, 13, 200);
  CAPTURE(report.worst_entry);
  CHECK(report.passed);
}

TEST_CASE("mse loss values and gradient") {
  const auto a = random_tensor({3, 5}, 14);
  CHECK(mse_loss(a, a).value == 0.0);
  auto b = a;
  for (auto& v : b.values()) v -= 1.0;
  const auto r = mse_loss(a, b);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-14));
  for (double g : r.grad.values()) CHECK(g == doctest::Approx(2.0 / 15.0));
  CHECK(code_of([&] { mse_loss(a, Tensor<double>({5, 3})); }) == ErrorCode::ShapeMismatch);

  const auto t = random_tensor({3, 5}, 15);
  const auto base = mse_loss(a, t);
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto up = a, down = a;
    up[i] += 1e-5;
    down[i] -= 1e-5;
    const double numeric = (mse_loss(up, t).value - mse_loss(down, t).value) / 2e-5;
    CHECK(gradcheck_relative_error(base.grad[i], numeric) < 1e-6);
  }
}

TEST_CASE("cross entropy values and gradient") {
  const Tensor<double> uniform({9}, 0.0);
  CHECK(cross_entropy_loss(uniform, 4).value == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  CHECK(std::log(9.0) == doctest::Approx(2.19722).epsilon(1e-5));

  Tensor<double> confident({1, 9}, 0.0);
  confident[2] = 1000.0;
  const auto c = cross_entropy_loss(confident, 2);
  CHECK(std::isfinite(c.value));
  CHECK(c.value < 1e-6);
  CHECK(c.grad.all_finite());

  const auto logits = random_tensor({4, 7}, 16);
  const std::vector<int> labels = {0, 6, 3, 3};
  const auto r = cross_entropy_loss(logits, std::span<const int>(labels));
  for (int n = 0; n < 4; ++n) {
    double s = 0.0;
    for (int k = 0; k < 7; ++k) s += r.grad[n * 7 + k];
    CHECK(std::abs(s) < 1e-12);
  }
  CHECK(code_of([&] { cross_entropy_loss(uniform, 9); }) == ErrorCode::LabelOutOfRange);
  CHECK(code_of([&] { cross_entropy_loss(uniform, -1); }) == ErrorCode::LabelOutOfRange);
}

TEST_CASE("adam first step and zero-gradient fixpoint") {
  Param<double> p{"w", Tensor<double>({1}, 0.5), Tensor<double>({1}, 1.0)};
  Adam<double> adam(AdamConfig{}, {&p});
  adam.step();
  // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
  CHECK(p.value[0] - 0.5 == doctest::Approx(-1e-4 / (1.0 + 1e-8)).epsilon(1e-9));
  CHECK(p.value[0] - 0.5 == doctest::Approx(-9.99999e-5).epsilon(1e-6));
  CHECK(adam.step_count() == 1);

  Param<double> q{"z", Tensor<double>({3}, 0.25), Tensor<double>({3}, 0.0)};
  Adam<double> still(AdamConfig{}, {&q});
  for (int i = 0; i < 10; ++i) still.step();
  for (double v : q.value.values()) CHECK(v == 0.25);
}

TEST_CASE("fit on a separable toy problem") {
  NetworkSpec spec{{2}, {LinearSpec{8}, ReluSpec{}, LinearSpec{2}}};
  auto run = [&](int epochs) {
    Network<float> net(spec, 17);
    Rng data_rng(18);
    std::vector<float> xs;
    std::vector<int> ys;
    for (int i = 0; i < 200; ++i) {
      const int y = i % 2;
      xs.push_back(static_cast<float>(data_rng.normal() * 0.3 + (y ? 1.5 : -1.5)));
      xs.push_back(static_cast<float>(data_rng.normal() * 0.3));
      ys.push_back(y);
    }
    FitProblem<float> problem;
    problem.train_size = 200;
    problem.params = net.params();
    problem.train_batch = [&](std::span<const std::size_t> batch, Rng&) {
      Tensor<float> x({static_cast<int>(batch.size()), 2});
      std::vector<int> labels;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        x[2 * k] = xs[2 * batch[k]];
        x[2 * k + 1] = xs[2 * batch[k] + 1];
        labels.push_back(ys[batch[k]]);
      }
      auto loss = cross_entropy_loss(net.forward(x, Mode::Train, nullptr), std::span<const int>(labels));
      net.backward(loss.grad);
      return loss.value;
    };
    problem.validation_loss = [&] {
      Tensor<float> x({200, 2}, std::vector<float>(xs));
      return cross_entropy_loss(net.infer(x), std::span<const int>(ys)).value;
    };
    FitOptions opts;
    opts.epochs = epochs;
    opts.batch_size = 20;
    opts.seed = 19;
    opts.adam.learning_rate = 1e-2;
    auto history = fit(problem, opts);
    return std::make_pair(history, net.flat_parameters());
  };

  const auto [history, params] = run(50);
  REQUIRE(history.epochs.size() == 50);
  for (int e = 1; e < 5; ++e) CHECK(history.epochs[e].train_loss < history.epochs[e - 1].train_loss);
  CHECK(history.best_val_loss < 0.1);

  const auto [again, params_again] = run(50);
  CHECK(params == params_again);

  const auto [one, one_params] = run(1);
  CHECK(one.best_epoch == 1);
  CHECK(one.epochs.size() == 1);
}

TEST_CASE("fit keeps the earliest minimum of the validation loss") {
  CHECK(best_epoch_index(std::vector<double>{3, 2, 2, 4}) == 1);

  Param<double> p{"w", Tensor<double>({1}, 0.0), Tensor<double>({1}, 0.0)};
  std::vector<double> snapshots;
  const std::vector<double> script = {3, 2, 2, 4};
  FitProblem<double> problem;
  problem.train_size = 1;
  problem.params = {&p};
  problem.train_batch = [&](std::span<const std::size_t>, Rng&) {
    p.grad[0] = 1.0;
    return 1.0;
  };
  problem.validation_loss = [&] {
    snapshots.push_back(p.value[0]);
    return script[snapshots.size() - 1];
  };
  FitOptions opts;
  opts.epochs = 4;
  const auto history = fit(problem, opts);
  CHECK(history.best_epoch == 2);
  CHECK(history.best_val_loss == 2.0);
  CHECK(p.value[0] == snapshots[1]);
  CHECK(snapshots[1] != snapshots[2]);
}

TEST_CASE("fit errors") {
  FitProblem<double> empty;
  CHECK(code_of([&] { fit(empty, FitOptions{}); }) == ErrorCode::EmptyDataset);

  Param<double> p{"w", Tensor<double>({1}, 0.0), Tensor<double>({1}, 0.0)};
  FitProblem<double> nan_problem;
  nan_problem.train_size = 4;
  nan_problem.params = {&p};
  nan_problem.train_batch = [](std::span<const std::size_t>, Rng&) { return std::numeric_limits<double>::quiet_NaN(); };
  nan_problem.validation_loss = [] { return 0.0; };
  CHECK(code_of([&] { fit(nan_problem, FitOptions{}); }) == ErrorCode::Divergence);
}

TEST_CASE("parameter counts of the two architectures") {
  CHECK(parameter_count(cbm::classifier_spec(9)) == 5129);
  const std::size_t height_preserving = (96 * 21 + 96) + (96 * 96 * 2 * 21 + 96) + (96 * 2 * 128 * 384 + 384) + (384 * 5 + 5);
  CHECK(parameter_count(cbm::regressor_spec(cbm::ArchitectureOptions{})) == height_preserving);
  CHECK(height_preserving == 9828773);

  cbm::ArchitectureOptions valid;
  valid.preserve_height = false;
  const std::size_t valid_count = (96 * 21 + 96) + (96 * 96 * 2 * 21 + 96) + (96 * 128 * 384 + 384) + (384 * 5 + 5);
  CHECK(parameter_count(cbm::regressor_spec(valid)) == valid_count);

  Network<float> net(cbm::classifier_spec(9), 1);
  CHECK(net.parameter_count() == 5129);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = oracle::scratch_dir("nn_checkpoint");
  Network<float> net(cbm::classifier_spec(4), 21);
  save_checkpoint(dir, "clf", net, nlohmann::json{{"note", "unit"}});
  CHECK(std::filesystem::file_size(dir / "clf.f32") == net.parameter_count() * 4);
  const auto ck = load_checkpoint(dir, "clf");
  CHECK(ck.spec == net.spec());
  CHECK(ck.provenance.at("note") == "unit");
  const auto back = to_network(ck);
  CHECK(back.flat_parameters() == net.flat_parameters());
  CHECK(code_of([&] { load_checkpoint(dir, "absent"); }) == ErrorCode::IoError);
}

TEST_CASE("eval forward is pure") {
  Network<float> net(cbm::classifier_spec(9), 22);
  Tensor<float> x({3, 5}, 0.3f);
  const auto a = net.infer(x);
  const auto b = net.forward(x, Mode::Eval, nullptr);
  const auto c = net.infer(x);
  CHECK(a == b);
  CHECK(a == c);

  const auto d = net.cast<double>();
  const auto ad = d.infer(Tensor<double>({3, 5}, 0.3));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(ad[i] == doctest::Approx(a[i]).epsilon(1e-5));
}
