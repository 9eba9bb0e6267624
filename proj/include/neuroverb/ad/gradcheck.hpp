#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "neuroverb/ad/tape.hpp"
#include "neuroverb/ad/tensor.hpp"

namespace neuroverb::ad {

// Worst relative error between tape gradients and central differences over
// every coordinate of every listed parameter. `f` must rebuild the scalar
// output from the current parameter values each time it is called.
// Relative error uses the denominator max(|a|, |b|, 1e-6): coordinates with
// smaller gradients are compared absolutely, since central differences carry
// about 1e-11 of rounding noise there.
//
// Functions containing the SFIR slot rounding are piecewise constant in the
// slot input, so central differences see zero where the straight-through
// backward pass reports the upstream gradient; such discrepancies are expected.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> params,
                         double h = 1e-5) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  {
    Tape<T> tape;
    auto out = f();
    tape.backward(out);
  }
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<T> analytic(p.size(), T(0));
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T saved = w[i];
      w[i] = static_cast<T>(saved + h);
      const double up = static_cast<double>(f().item());
      w[i] = static_cast<T>(saved - h);
      const double down = static_cast<double>(f().item());
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    p.clear_grad();
  }
  return worst;
}

// Single-point form: f is a function of `point` alone.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> point,
                         double h = 1e-5) {
  return finite_diff_check<T>([&f, point]() { return f(point); }, {point}, h);
}

}  // namespace neuroverb::ad
