#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "neuroverb/ad/adam.hpp"
#include "neuroverb/ad/gradcheck.hpp"
#include "neuroverb/ad/ops.hpp"
#include "neuroverb/ad/tape.hpp"
#include "support.hpp"

using namespace neuroverb;
using namespace neuroverb::ad;
using Catch::Matchers::WithinAbs;
using testing::random_tensor;
using T64 = Tensor<double>;

namespace {

constexpr int kPoints = 5;
constexpr double kTol = 1e-4;

// Contracts an op's output with fixed random weights so every output
// coordinate carries a distinct upstream gradient.
T64 contract(const T64& y, std::uint64_t seed) {
  Rng rng(seed ^ 0x5eed);
  auto w = random_tensor<double>(y.shape(), rng);
  return sum(mul(y, w));
}

// Worst finite-difference error of `op` over kPoints random draws of its inputs.
double check_op(const std::vector<Shape>& shapes, const std::function<T64(const std::vector<T64>&)>& op,
                double lo = -1.0, double hi = 1.0) {
  double worst = 0.0;
  for (int point = 0; point < kPoints; ++point) {
    Rng rng(1000 + point);
    std::vector<T64> in;
    for (const auto& s : shapes) in.push_back(random_tensor<double>(s, rng, lo, hi));
    worst = std::max(worst, finite_diff_check<double>([&] { return contract(op(in), point); }, in));
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise primitives match finite differences", "[autodiff]") {
  CHECK(check_op({{4, 3}}, [](auto& v) { return tanh(v[0]); }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto& v) { return sigmoid(v[0]); }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto& v) { return softplus(v[0]); }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto& v) { return relu(v[0]); }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto& v) { return abs(v[0]); }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto& v) { return square(v[0]); }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto& v) { return scale(v[0], -2.5); }) < kTol);
  CHECK(check_op({{4, 3}, {4, 3}}, [](auto& v) { return add(v[0], v[1]); }) < kTol);
  CHECK(check_op({{4, 3}, {4, 3}}, [](auto& v) { return sub(v[0], v[1]); }) < kTol);
  CHECK(check_op({{4, 3}, {4, 3}}, [](auto& v) { return mul(v[0], v[1]); }) < kTol);
  CHECK(check_op({{4, 3}, {3}}, [](auto& v) { return add_row_bias(v[0], v[1]); }) < kTol);
  CHECK(check_op({{4, 3}, {4}}, [](auto& v) { return scale_rows(v[0], v[1]); }) < kTol);
}

TEST_CASE("layout and reduction primitives match finite differences", "[autodiff]") {
  CHECK(check_op({{3, 4}, {4, 2}}, [](auto& v) { return matmul(v[0], v[1]); }) < kTol);
  CHECK(check_op({{3, 4}}, [](auto& v) { return transpose(v[0]); }) < kTol);
  CHECK(check_op({{3, 4}}, [](auto& v) { return reshape(v[0], {2, 6}); }) < kTol);
  CHECK(check_op({{5, 3}}, [](auto& v) { return slice_rows(v[0], 1, 3); }) < kTol);
  CHECK(check_op({{3, 5}}, [](auto& v) { return slice_cols(v[0], 2, 2); }) < kTol);
  CHECK(check_op({{2, 3}, {1, 3}}, [](auto& v) { return concat_rows<double>({v[0], v[1]}); }) < kTol);
  CHECK(check_op({{2, 3}, {2, 1}}, [](auto& v) { return concat_cols<double>({v[0], v[1]}); }) < kTol);
  CHECK(check_op({{3, 4}}, [](auto& v) { return sum(v[0]); }) < kTol);
  CHECK(check_op({{3, 4}}, [](auto& v) { return mean(v[0]); }) < kTol);
  CHECK(check_op({{3, 4}}, [](auto& v) { return row_mean(v[0]); }) < kTol);
  CHECK(check_op({{3, 8}}, [](auto& v) { return maxpool_with_indices(v[0], 4).pooled; }) < kTol);
  CHECK(check_op({{2, 2}}, [](auto& v) { return unpool(v[0], {1, 6, 0, 7}, 8); }) < kTol);
  CHECK(check_op({{6}, {6}}, [](auto& v) { return mean_abs_error(v[0], v[1]); }) < kTol);
  CHECK(check_op({{6}, {6}}, [](auto& v) { return mean_squared_error(v[0], v[1]); }) < kTol);
}

TEST_CASE("convolution primitives match finite differences", "[autodiff]") {
  CHECK(check_op({{10}, {3, 4}}, [](auto& v) { return conv1d(v[0], v[1], 1, 10); }) < kTol);
  CHECK(check_op({{10}, {2, 3}}, [](auto& v) { return conv1d(v[0], v[1], 0, 8); }) < kTol);
  CHECK(check_op({{3, 9}, {3, 4}}, [](auto& v) { return depthwise_conv1d(v[0], v[1], 1); }) < kTol);
  CHECK(check_op({{3, 10}, {3, 4}}, [](auto& v) { return conv_transpose1d(v[0], v[1], 1, 10); }) < kTol);
  CHECK(check_op({{3, 9}, {3, 12}}, [](auto& v) { return causal_conv_rows(v[0], v[1]); }) < kTol);
}

TEST_CASE("primitive forward values", "[autodiff]") {
  SECTION("tanh at zero") {
    auto x = T64::scalar(0.0, true);
    Tape<double> tape;
    auto y = tanh(x);
    CHECK(y.item() == 0.0);
    tape.backward(y);
    CHECK(x.grad()[0] == 1.0);
  }
  SECTION("valid conv1d against a direct sum") {
    auto x = T64::from({3}, {1, 2, 3});
    auto k = T64::from({1, 2}, {1, 0});
    auto y = conv1d(x, k, 0, 2);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 2.0);

    Rng rng(4);
    auto xr = random_tensor<double>({12}, rng);
    auto kr = random_tensor<double>({2, 5}, rng);
    auto yr = conv1d(xr, kr, 2, 12);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t t = 0; t < 12; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
          const auto src = static_cast<long>(t + j) - 2;
          if (src >= 0 && src < 12) acc += kr.at(c, j) * xr[static_cast<std::size_t>(src)];
        }
        CHECK_THAT(yr.at(c, t), WithinAbs(acc, 1e-12));
      }
  }
  SECTION("maxpool ties and ramps") {
    auto flat = T64::full({1, 8}, 2.0);
    CHECK(maxpool_with_indices(flat, 4).indices == std::vector<std::size_t>{0, 4});
    auto ramp = T64::from({1, 8}, {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(maxpool_with_indices(ramp, 4).indices == std::vector<std::size_t>{3, 7});
    CHECK_THROWS_AS(maxpool_with_indices(ramp, 3), ShapeError);
  }
  SECTION("shape mismatches") {
    CHECK_THROWS_AS(add(T64::zeros({2}), T64::zeros({3})), ShapeError);
    CHECK_THROWS_AS(matmul(T64::zeros({2, 3}), T64::zeros({2, 3})), ShapeError);
  }
}

TEST_CASE("backward semantics", "[autodiff]") {
  SECTION("grad of sum(w*x) is x") {
    auto w = T64::from({3}, {0.1, 0.2, 0.3}, true);
    auto x = T64::from({3}, {4, 5, 6});
    Tape<double> tape;
    tape.backward(sum(mul(w, x)));
    CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{4, 5, 6});
    CHECK_FALSE(x.has_grad());
  }
  SECTION("two uses accumulate") {
    auto w = T64::scalar(3.0, true);
    Tape<double> tape;
    tape.backward(add(mul(w, w), w));
    CHECK(w.grad()[0] == 7.0);
  }
  SECTION("random three-layer composition") {
    Rng rng(9);
    auto x = random_tensor<double>({4, 3}, rng);
    auto w1 = random_tensor<double>({3, 5}, rng);
    auto b1 = random_tensor<double>({5}, rng);
    auto w2 = random_tensor<double>({5, 5}, rng);
    auto w3 = random_tensor<double>({5, 2}, rng);
    auto f = [&] {
      auto h = tanh(add_row_bias(matmul(x, w1), b1));
      h = sigmoid(matmul(h, w2));
      return mean(square(matmul(h, w3)));
    };
    CHECK(finite_diff_check<double>(f, {x, w1, b1, w2, w3}) < kTol);
  }
  SECTION("x squared at 3") {
    const double err = finite_diff_check<double>([](const T64& x) { return mul(x, x); }, T64::scalar(3.0));
    CHECK(err < 1e-8);
  }
  SECTION("errors") {
    auto w = T64::from({2}, {1, 2}, true);
    Tape<double> tape;
    auto y = mul(w, w);
    CHECK_THROWS_AS(tape.backward(y), InvalidArgument);
    Tape<double> t2;
    auto s = sum(mul(w, w));
    t2.backward(s);
    CHECK_THROWS_AS(t2.backward(s), StateError);
  }
}

TEST_CASE("adam", "[autodiff]") {
  SECTION("zero gradient leaves parameters and counts the step") {
    auto w = T64::from({2}, {1.5, -2.0}, true);
    w.ensure_grad();
    std::vector<T64> params{w};
    AdamState<double> st;
    adam_step(params, st);
    CHECK(w[0] == 1.5);
    CHECK(w[1] == -2.0);
    CHECK(st.t == 1);
  }
  SECTION("closed-form first step") {
    auto w = T64::scalar(0.0, true);
    w.ensure_grad()[0] = 1.0;
    std::vector<T64> params{w};
    AdamState<double> st(AdamConfig{1e-4});
    adam_step(params, st);
    CHECK_THAT(w[0], WithinAbs(-1e-4 / (1.0 + 1e-8), 1e-18));
    CHECK(w.grad()[0] == 0.0);
  }
  SECTION("minimizes a quadratic") {
    auto w = T64::scalar(0.0, true);
    std::vector<T64> params{w};
    AdamState<double> st(AdamConfig{0.1});
    for (int i = 0; i < 100; ++i) {
      Tape<double> tape;
      tape.backward(square(sub(w, T64::scalar(3.0))));
      adam_step(params, st);
    }
    CHECK(std::abs(w[0] - 3.0) < 0.05);
  }
  SECTION("missing gradient") {
    std::vector<T64> params{T64::scalar(1.0, true)};
    AdamState<double> st;
    CHECK_THROWS_AS(adam_step(params, st), StateError);
  }
}
