#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sinet/ops.hpp"

namespace sinet {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_location;
};

// Central finite differences against the recorded backward pass, in 64-bit.
// The op output is contracted with a fixed random tensor so arbitrary output
// shapes reduce to a scalar. Relative error per element is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline GradCheckResult grad_check(
    const std::function<TensorD(const std::vector<TensorD>&)>& op,
    std::vector<TensorD> inputs, double eps = 1e-4, uint64_t probe_seed = 0x5eed) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }

  TensorD out = op(inputs);
  Rng rng(probe_seed);
  TensorD probe = TensorD::rand_uniform(out.shape(), rng, -1.0, 1.0);
  TensorD scalar = sum_all(mul(out, probe));
  scalar.backward();

  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) {
    if (!detail::all_finite(in.mut_grad())) {
      throw Error("grad_check: non-finite analytic gradient");
    }
    analytic.push_back(in.mut_grad());
  }

  auto eval = [&]() {
    NoGradGuard ng;
    TensorD o = op(inputs);
    double acc = 0.0;
    const auto& ov = o.data();
    const auto& pv = probe.data();
    for (size_t i = 0; i < ov.size(); ++i) acc += ov[i] * pv[i];
    return acc;
  };

  GradCheckResult result;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto& vals = inputs[k].mut_data();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      // Central difference plus the resolution of that estimate: rounding in
      // the scalar evaluations propagates to the quotient as noise/(2e), and
      // differences inside that band carry no information about the gradient.
      auto fd_at = [&](double e) -> std::pair<double, double> {
        vals[i] = keep + e;
        const double hi = eval();
        vals[i] = keep - e;
        const double lo = eval();
        vals[i] = keep;
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                             (std::abs(hi) + std::abs(lo));
        return {(hi - lo) / (2.0 * e), noise / (2.0 * e)};
      };
      const double a = analytic[k][i];
      auto measure = [&](double numeric, double resolution) {
        if (std::abs(a - numeric) <= resolution) return 0.0;
        return std::abs(a - numeric) /
               std::max({std::abs(a), std::abs(numeric), 1e-8});
      };
      auto [numeric, resolution] = fd_at(eps);
      double rel = measure(numeric, resolution);
      // A surviving mismatch is either a wrong gradient or a non-smooth point
      // (PReLU kink, argmax tie) inside the probe window. Shrinking the step
      // separates the two: estimates at different steps agree for a genuine
      // mismatch and move when the window straddled a kink.
      double step = eps;
      for (int refine = 0; refine < 2 && rel > 1e-6; ++refine) {
        step /= 16.0;
        const auto [finer, finer_resolution] = fd_at(step);
        if (std::abs(finer - numeric) <= finer_resolution) break;
        numeric = finer;
        resolution = finer_resolution;
        rel = measure(numeric, resolution);
      }
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_location =
            "input " + std::to_string(k) + " element " + std::to_string(i);
      }
    }
  }
  return result;
}

}  // namespace sinet
