#include "cbamc/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "cbamc/nn/loss.hpp"

namespace cbamc::nn {

namespace {

Tensor<double> random_input(const Shape& shape, Rng& rng) {
  // Magnitudes in [0.05, 1] keep ReLU inputs away from the kink.
  Tensor<double> x(shape);
  for (auto& v : x.values()) {
    const double magnitude = rng.uniform(0.05, 1.0);
    v = rng.coin() ? magnitude : -magnitude;
  }
  return x;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

/// A perturbable scalar slot: pointer into a tensor plus a label.
struct Entry {
  double* value;
  double analytic;
  std::string label;
};

std::vector<std::size_t> choose(std::size_t total, std::size_t max_entries, Rng& rng) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_entries == 0 || max_entries >= total) return idx;
  for (std::size_t i = 0; i < max_entries; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(total - i) - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_entries);
  std::sort(idx.begin(), idx.end());
  return idx;
}

GradcheckReport compare(const std::string& subject, std::vector<Entry>& entries, const std::function<double()>& objective,
                        std::size_t max_entries, Rng& rng) {
  GradcheckReport report;
  report.subject = subject;
  for (std::size_t i : choose(entries.size(), max_entries, rng)) {
    Entry& e = entries[i];
    const double saved = *e.value;
    *e.value = saved + kGradcheckStep;
    const double plus = objective();
    *e.value = saved - kGradcheckStep;
    const double minus = objective();
    *e.value = saved;
    const double numeric = (plus - minus) / (2.0 * kGradcheckStep);
    const double err = gradcheck_relative_error(e.analytic, numeric);
    ++report.entries_checked;
    if (report.worst_entry.empty() || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_entry = e.label;
    }
  }
  report.passed = report.max_rel_error < kGradcheckTolerance;
  return report;
}

void merge_into(GradcheckReport& total, const GradcheckReport& one) {
  if (total.subject.empty()) total.subject = one.subject;
  total.entries_checked += one.entries_checked;
  if (one.max_rel_error >= total.max_rel_error) {
    total.max_rel_error = one.max_rel_error;
    total.worst_entry = one.worst_entry;
  }
  total.passed = total.max_rel_error < kGradcheckTolerance;
}

}  // namespace

double gradcheck_relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  return std::abs(analytic - numeric) / scale;
}

GradcheckReport gradcheck_layer(Layer<double>& layer, const Shape& batch_input_shape, std::uint64_t seed,
                                std::size_t max_entries) {
  Rng rng(seed);
  Tensor<double> x = random_input(batch_input_shape, rng);
  const std::uint64_t mask_seed = rng.next_u64();

  Rng mask_rng(mask_seed);
  const Tensor<double> y0 = layer.forward(x, Mode::Train, &mask_rng);
  Tensor<double> projection(y0.shape());
  for (auto& v : projection.values()) v = rng.normal();

  for (auto* p : layer.params()) p->grad.fill(0.0);
  const Tensor<double> grad_x = layer.backward(projection);

  std::vector<Entry> entries;
  for (std::size_t i = 0; i < x.size(); ++i) entries.push_back({&x[i], grad_x[i], "input[" + std::to_string(i) + "]"});
  for (auto* p : layer.params()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      entries.push_back({&p->value[i], p->grad[i], p->name + "[" + std::to_string(i) + "]"});
    }
  }

  auto objective = [&] {
    Rng r(mask_seed);
    return dot(layer.forward(x, Mode::Train, &r), projection);
  };
  return compare(layer.name(), entries, objective, max_entries, rng);
}

GradcheckReport gradcheck_network(Network<double>& net, int batch, std::uint64_t seed, std::size_t max_entries) {
  Rng rng(seed);
  Shape shape{batch};
  shape.insert(shape.end(), net.spec().input_shape.begin(), net.spec().input_shape.end());
  Tensor<double> x = random_input(shape, rng);
  const std::uint64_t mask_seed = rng.next_u64();

  Rng mask_rng(mask_seed);
  const Tensor<double> y0 = net.forward(x, Mode::Train, &mask_rng);
  Tensor<double> projection(y0.shape());
  for (auto& v : projection.values()) v = rng.normal();
  net.zero_grad();
  const Tensor<double> grad_x = net.backward(projection);

  std::vector<Entry> entries;
  for (std::size_t i = 0; i < x.size(); ++i) entries.push_back({&x[i], grad_x[i], "input[" + std::to_string(i) + "]"});
  std::size_t layer_index = 0;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (auto* p : net.layer(l).params()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        entries.push_back({&p->value[i], p->grad[i],
                           net.layer(l).name() + "#" + std::to_string(layer_index) + "." + p->name + "[" +
                               std::to_string(i) + "]"});
      }
    }
    ++layer_index;
  }
  auto objective = [&] {
    Rng r(mask_seed);
    return dot(net.forward(x, Mode::Train, &r), projection);
  };
  return compare("Network", entries, objective, max_entries, rng);
}

GradcheckReport gradcheck_mse(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> pred = random_input(shape, rng);
  const Tensor<double> target = random_input(shape, rng);
  const auto analytic = mse_loss(pred, target);
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    entries.push_back({&pred[i], analytic.grad[i], "pred[" + std::to_string(i) + "]"});
  }
  auto objective = [&] { return mse_loss(pred, target).value; };
  return compare("MSELoss", entries, objective, 0, rng);
}

GradcheckReport gradcheck_cross_entropy(int batch, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> logits({batch, classes});
  for (auto& v : logits.values()) v = 3.0 * rng.normal();
  std::vector<int> labels(batch);
  for (auto& l : labels) l = rng.uniform_int(0, classes - 1);
  const auto analytic = cross_entropy_loss(logits, std::span<const int>(labels));
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    entries.push_back({&logits[i], analytic.grad[i], "logit[" + std::to_string(i) + "]"});
  }
  auto objective = [&] { return cross_entropy_loss(logits, std::span<const int>(labels)).value; };
  return compare("CrossEntropyLoss", entries, objective, 0, rng);
}

std::vector<GradcheckReport> standard_gradcheck_suite(int instances, std::uint64_t seed) {
  struct Case {
    std::string subject;
    std::function<GradcheckReport(std::uint64_t)> run;
  };
  const std::vector<Case> cases{
      {"Conv2d(1x21, pad 0/10)",
       [](std::uint64_t s) {
         Conv2d<double> conv(1, Conv2dSpec{3, 1, 21, Padding::symmetric(0, 10)});
         Rng init(s ^ 0x1);
         conv.initialize(init, true);
         return gradcheck_layer(conv, {2, 1, 2, 32}, s);
       }},
      {"Conv2d(2x21, pad 0/10)",
       [](std::uint64_t s) {
         Conv2d<double> conv(3, Conv2dSpec{2, 2, 21, Padding::symmetric(0, 10)});
         Rng init(s ^ 0x2);
         conv.initialize(init, true);
         return gradcheck_layer(conv, {2, 3, 2, 32}, s);
       }},
      {"Conv2d(2x21, height-preserving pad)",
       [](std::uint64_t s) {
         Conv2d<double> conv(3, Conv2dSpec{2, 2, 21, Padding{0, 1, 10, 10}});
         Rng init(s ^ 0x3);
         conv.initialize(init, true);
         return gradcheck_layer(conv, {2, 3, 2, 32}, s);
       }},
      {"Linear",
       [](std::uint64_t s) {
         Linear<double> linear(7, LinearSpec{4});
         Rng init(s ^ 0x4);
         linear.initialize(init, true);
         return gradcheck_layer(linear, {3, 7}, s);
       }},
      {"ReLU",
       [](std::uint64_t s) {
         Relu<double> relu;
         return gradcheck_layer(relu, {3, 10}, s);
       }},
      {"Dropout(0.5, train mode)",
       [](std::uint64_t s) {
         Dropout<double> dropout(0.5);
         return gradcheck_layer(dropout, {3, 10}, s);
       }},
      {"Flatten",
       [](std::uint64_t s) {
         Flatten<double> flatten;
         return gradcheck_layer(flatten, {2, 3, 2, 4}, s);
       }},
      {"Softmax",
       [](std::uint64_t s) {
         Softmax<double> softmax;
         return gradcheck_layer(softmax, {3, 9}, s);
       }},
      {"MSELoss", [](std::uint64_t s) { return gradcheck_mse({4, 5}, s); }},
      {"CrossEntropyLoss", [](std::uint64_t s) { return gradcheck_cross_entropy(4, 9, s); }},
  };

  std::vector<GradcheckReport> reports;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradcheckReport total;
    for (int i = 0; i < instances; ++i) {
      merge_into(total, cases[c].run(derive_seed(seed, c * 1000 + static_cast<std::uint64_t>(i))));
    }
    total.subject = cases[c].subject;
    total.passed = total.max_rel_error < kGradcheckTolerance && total.entries_checked > 0;
    reports.push_back(std::move(total));
  }
  return reports;
}

}  // namespace cbamc::nn
