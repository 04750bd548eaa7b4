#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stars/tensor.hpp"

namespace stars {

using ScalarFn = std::function<double(const ParamStore&)>;

// Central-difference gradient estimate, (f(p+h) - f(p-h)) / (2h) per
// coordinate. Independent of the tape; this is the verification oracle the
// analytic adjoints are checked against.
std::map<std::string, Tensor> finite_difference_gradient(const ScalarFn& f,
                                                         const ParamStore& params, double h);

struct BlockCheck {
  std::string name;
  double max_abs_diff = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t worst_index = -1;
  bool pass = true;
};

// Per-coordinate criterion: |analytic - numeric| <= atol + rtol * max(|analytic|, |numeric|).
std::vector<BlockCheck> compare_gradients(const GradMap& analytic,
                                          const std::map<std::string, Tensor>& numeric,
                                          const ParamStore& params, double rtol, double atol);

struct PrimitiveCheck {
  std::string primitive;
  uint64_t seed = 0;
  double max_abs_diff = 0.0;
  bool pass = true;
};

// Checks every differentiable primitive's adjoint against central differences
// on `seeds` random shapes and inputs (inputs nudged away from relu/l1 kinks).
std::vector<PrimitiveCheck> run_primitive_adjoint_checks(int seeds, double rtol, double atol);

}  // namespace stars
