// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/errors.hpp"
#include "msplat/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace msplat {

void AdamState::gather(std::span<const std::size_t> origin, std::size_t stride) {
  if (m.empty()) return;
  std::vector<double> m2(origin.size() * stride), v2(origin.size() * stride);
  for (std::size_t k = 0; k < origin.size(); ++k) {
    for (std::size_t j = 0; j < stride; ++j) {
      m2[k * stride + j] = m[origin[k] * stride + j];
      v2[k * stride + j] = v[origin[k] * stride + j];
    }
  }
  m = std::move(m2);
  v = std::move(v2);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size()) {
    throw ContractError("adam_step: parameter and gradient sizes differ");
  }
  if (state.m.size() != params.size()) state.resize(params.size());
  if (std::all_of(grads.begin(), grads.end(), [](double g) { return g == 0.0; })) return;

  ++state.steps;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.steps));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g;
    state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g;
    const double mh = state.m[k] / bc1;
    const double vh = state.v[k] / bc2;
    params[k] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

}  // namespace msplat
