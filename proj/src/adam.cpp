#include "topoforge/adam.hpp"

#include <cmath>

#include "topoforge/error.hpp"

namespace topoforge::nn {

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state) {
  if (params.size() != grads.size()) fail(ErrorCode::ShapeMismatch, "parameter/gradient group count");
  if (state.step == 0 && state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) fail(ErrorCode::ShapeMismatch, "optimizer state group count");
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g].size() != grads[g].size() || state.m[g].size() != params[g].size()) {
      fail(ErrorCode::ShapeMismatch, "parameter group " + std::to_string(g) + " changed size");
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t g = 0; g < params.size(); ++g) {
    std::span<double> p = params[g];
    std::span<const double> gr = grads[g];
    auto& m = state.m[g];
    auto& v = state.v[g];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gr[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gr[i] * gr[i];
      p[i] -= c.alpha * (m[i] / correct1) / (std::sqrt(v[i] / correct2) + c.epsilon);
    }
  }
}

}  // namespace topoforge::nn
