#include "stars/adam.hpp"

#include <cmath>

#include "stars/error.hpp"

namespace stars {

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr,
               const std::set<std::string>* frozen) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    if (frozen && frozen->count(name)) continue;
    const Tensor g = grads.get(name, p.shape);
    if (static_cast<int64_t>(p.values.size()) != g.size()) {
      throw ContractError("adam_step: gradient for '" + name + "' has " +
                          std::to_string(g.size()) + " entries, parameter has " +
                          std::to_string(p.values.size()));
    }
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.values.size()) m.assign(p.values.size(), 0.0);
    if (v.size() != p.values.size()) v.assign(p.values.size(), 0.0);
    const auto gv = g.values();
    for (size_t i = 0; i < p.values.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gv[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gv[i] * gv[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.values[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace stars
