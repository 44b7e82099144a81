#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "remake/autodiff.hpp"
#include "remake/rng.hpp"

using namespace remake;
using ad::TensorPtr;

namespace {

using GraphFn = std::function<TensorPtr(const std::vector<TensorPtr>&)>;

// Central-difference check of every input coordinate against the analytic
// gradient of a scalar-valued graph.
void check_gradients(const GraphFn& fn, const std::vector<std::vector<int>>& shapes,
                     uint64_t seed, double tol = 1e-6) {
  Rng rng(seed);
  std::vector<std::vector<double>> values;
  for (const auto& shape : shapes) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(-1.2, 1.2);
    values.push_back(std::move(v));
  }

  auto eval = [&](const std::vector<std::vector<double>>& vals, bool want_grad)
      -> std::pair<double, std::vector<std::vector<double>>> {
    std::vector<TensorPtr> leaves;
    for (size_t i = 0; i < shapes.size(); ++i) {
      leaves.push_back(ad::leaf(shapes[i], vals[i], want_grad));
    }
    TensorPtr out = fn(leaves);
    REQUIRE(out->numel() == 1);
    std::vector<std::vector<double>> grads;
    if (want_grad) {
      ad::backward(out);
      for (auto& leaf : leaves) grads.push_back(leaf->grad);
    }
    return {out->value[0], grads};
  };

  const auto [loss, grads] = eval(values, true);
  CHECK(std::isfinite(loss));

  const double h = 1e-6;
  for (size_t t = 0; t < shapes.size(); ++t) {
    for (size_t i = 0; i < values[t].size(); ++i) {
      auto perturbed = values;
      perturbed[t][i] += h;
      ad::NoGradGuard guard;
      const double up = eval(perturbed, false).first;
      perturbed[t][i] -= 2 * h;
      const double down = eval(perturbed, false).first;
      const double fd = (up - down) / (2 * h);
      const double analytic = grads[t][i];
      if (std::abs(fd - analytic) <= 1e-9) continue;  // below FD noise floor
      const double err =
          std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
      if (err > tol) {
        CAPTURE(t);
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(analytic);
        CHECK(err <= tol);
      }
    }
  }
}

std::vector<double> zeros(int64_t n) { return std::vector<double>(n, 0.0); }
std::vector<double> ones(int64_t n) { return std::vector<double>(n, 1.0); }

}  // namespace

TEST_CASE("linear layer gradients match finite differences") {
  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::linear(in[0], in[1], in[2]);
        return ad::sq_loss(y, zeros(y->numel()), ones(y->numel()));
      },
      {{3, 4}, {4, 5}, {5}}, 1);
}

TEST_CASE("bmm gradients match finite differences, both layouts") {
  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::bmm(in[0], in[1], false);
        return ad::sq_loss(y, zeros(y->numel()), ones(y->numel()));
      },
      {{2, 3, 4}, {2, 4, 2}}, 2);
  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::bmm(in[0], in[1], true);
        return ad::sq_loss(y, zeros(y->numel()), ones(y->numel()));
      },
      {{2, 3, 4}, {2, 5, 4}}, 3);
}

TEST_CASE("softmax, layernorm and gelu gradients match finite differences") {
  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::softmax_last(in[0]);
        // Random-ish fixed projection makes the scalar sensitive to all rows.
        std::vector<double> target(static_cast<size_t>(y->numel()));
        for (size_t i = 0; i < target.size(); ++i) target[i] = 0.1 * (i % 5);
        return ad::sq_loss(y, target, ones(y->numel()));
      },
      {{4, 6}}, 4);
  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::layer_norm(in[0], in[1], in[2]);
        std::vector<double> target(static_cast<size_t>(y->numel()));
        for (size_t i = 0; i < target.size(); ++i) target[i] = 0.05 * (i % 7);
        return ad::sq_loss(y, target, ones(y->numel()));
      },
      {{5, 8}, {8}, {8}}, 5);
  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::gelu(in[0]);
        return ad::sq_loss(y, zeros(y->numel()), ones(y->numel()));
      },
      {{6, 3}}, 6);
}

TEST_CASE("structural ops route gradients exactly") {
  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::concat_cols({in[0], in[1]});
        y = ad::slice_cols(y, 1, 4);
        return ad::sq_loss(y, zeros(y->numel()), ones(y->numel()));
      },
      {{3, 2}, {3, 4}}, 7);

  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        // Duplicate-and-permute gather: scatter-add must accumulate.
        auto idx = std::make_shared<std::vector<int64_t>>(
            std::vector<int64_t>{0, 3, 3, 2, 1, 0});
        auto y = ad::gather(in[0], idx, {6});
        return ad::sq_loss(y, zeros(6), ones(6));
      },
      {{4}}, 8);

  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::mean_axis1(in[0]);
        return ad::sq_loss(y, zeros(y->numel()), ones(y->numel()));
      },
      {{3, 4, 2}}, 9);

  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        auto y = ad::add(ad::scale(in[0], 2.5), in[1]);
        y = ad::reshape(y, {6});
        return ad::sq_loss(y, zeros(6), ones(6));
      },
      {{2, 3}, {2, 3}}, 10);
}

TEST_CASE("l1 loss gradient matches finite differences away from kinks") {
  // Keep |pred - target| well away from zero so the derivative is smooth at
  // the finite-difference scale.
  check_gradients(
      [](const std::vector<TensorPtr>& in) {
        std::vector<double> target(6);
        for (size_t i = 0; i < 6; ++i) target[i] = (i % 2) ? 5.0 : -5.0;
        std::vector<double> weights{1, 0, 1, 1, 0, 1};
        return ad::l1_loss(in[0], target, weights);
      },
      {{6}}, 11);
}

TEST_CASE("loss values and validity checks") {
  auto pred = ad::leaf({4}, {1.0, 2.0, 3.0, 4.0}, false);
  // Weighted mean of |p - t|.
  auto l1 = ad::l1_loss(pred, {0.9, 2.3, 3.0, 5.0}, {1, 1, 0, 1});
  CHECK(l1->value[0] == doctest::Approx((0.1 + 0.3 + 1.0) / 3.0));
  auto sq = ad::sq_loss(pred, {0.0, 0.0, 0.0, 0.0}, {1, 1, 1, 1});
  CHECK(sq->value[0] == doctest::Approx((1.0 + 4.0 + 9.0 + 16.0) / 4.0));
  CHECK_THROWS_AS(ad::l1_loss(pred, {0, 0, 0, 0}, {0, 0, 0, 0}), DataError);
}

TEST_CASE("softmax rows are normalized and stable for large logits") {
  auto x = ad::leaf({2, 3}, {1000.0, 1000.0, 1000.0, -1000.0, 0.0, 1000.0},
                    false);
  auto y = ad::softmax_last(x);
  for (int r = 0; r < 2; ++r) {
    double sum = 0;
    for (int c = 0; c < 3; ++c) sum += y->value[r * 3 + c];
    CHECK(sum == doctest::Approx(1.0));
  }
  for (double v : y->value) CHECK(std::isfinite(v));
}

TEST_CASE("NoGradGuard suppresses graph construction") {
  auto w = ad::leaf({2, 2}, {1, 2, 3, 4}, true);
  ad::NoGradGuard guard;
  auto x = ad::leaf({1, 2}, {1, 1}, true);
  auto y = ad::linear(x, w, nullptr);
  CHECK_FALSE(y->requires_grad);
  CHECK(y->parents.empty());
  CHECK(y->value[0] == 4.0);
  CHECK(y->value[1] == 6.0);
}

TEST_CASE("backward accumulates through shared subgraphs") {
  auto x = ad::leaf({2}, {3.0, -2.0}, true);
  auto doubled = ad::add(x, x);  // y = 2x
  auto y = ad::add(doubled, x);  // y = 3x
  auto loss = ad::sq_loss(y, {0.0, 0.0}, {1.0, 1.0});
  ad::backward(loss);
  // d/dx mean((3x)^2) = 9x
  CHECK(x->grad[0] == doctest::Approx(9.0 * 3.0));
  CHECK(x->grad[1] == doctest::Approx(9.0 * -2.0));
}
