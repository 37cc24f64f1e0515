#pragma once

// Finite-difference gradient oracle shared by the unit and acceptance suites.
// Independent of the reverse pass: it only perturbs leaf data and re-runs the
// forward closure.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "coordflow/tensor.hpp"

namespace coordflow::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int64_t checked = 0;
};

// loss_fn must rebuild the graph from the live param values each call.
inline GradCheckResult gradcheck(std::vector<Tensor> params,
                                 const std::function<Tensor()>& loss_fn,
                                 float h = 1e-3f) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);

  std::vector<std::vector<float>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    std::vector<float> g(static_cast<size_t>(p.numel()), 0.0f);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }

  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi].mutable_data();
    for (size_t i = 0; i < data.size(); ++i) {
      const float orig = data[i];
      data[i] = orig + h;
      const double lp = loss_fn().scalar();
      data[i] = orig - h;
      const double lm = loss_fn().scalar();
      data[i] = orig;
      const double fd = (lp - lm) / (2.0 * double(h));
      const double an = analytic[pi][i];
      const double denom = std::max({std::fabs(fd), std::fabs(an), 0.05});
      res.max_rel_error = std::max(res.max_rel_error, std::fabs(fd - an) / denom);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace coordflow::testing
