#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "stars/tensor.hpp"

namespace stars {

// ADAM with bias correction. Moment arrays are allocated lazily per parameter
// and stay shape-congruent with it; the step counter advances once per call.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// Applies one update to every parameter in `params` using grads.get(...), so
// parameters absent from the gradient map see a zero gradient. Parameters
// listed in `frozen` are skipped entirely.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr,
               const std::set<std::string>* frozen = nullptr);

}  // namespace stars
