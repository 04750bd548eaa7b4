#include "stars/gradcheck.hpp"

#include <cmath>

#include "stars/error.hpp"
#include "stars/rng.hpp"

namespace stars {

std::map<std::string, Tensor> finite_difference_gradient(const ScalarFn& f,
                                                         const ParamStore& params, double h) {
  if (!(h > 0.0)) {
    throw ParameterError("finite_difference_gradient: step h must be positive");
  }
  std::map<std::string, Tensor> out;
  ParamStore work = params;
  for (auto& [name, p] : work) {
    std::vector<double> grad(p.values.size(), 0.0);
    for (size_t i = 0; i < p.values.size(); ++i) {
      const double saved = p.values[i];
      p.values[i] = saved + h;
      const double fp = f(work);
      p.values[i] = saved - h;
      const double fm = f(work);
      p.values[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw OracleError("finite_difference_gradient: non-finite value at '" + name +
                          "' coordinate " + std::to_string(i));
      }
      grad[i] = (fp - fm) / (2.0 * h);
    }
    out.emplace(name, Tensor(p.shape, std::move(grad)));
  }
  return out;
}

std::vector<BlockCheck> compare_gradients(const GradMap& analytic,
                                          const std::map<std::string, Tensor>& numeric,
                                          const ParamStore& params, double rtol, double atol) {
  std::vector<BlockCheck> checks;
  for (const auto& [name, p] : params) {
    BlockCheck c;
    c.name = name;
    const Tensor a = analytic.get(name, p.shape);
    auto it = numeric.find(name);
    if (it == numeric.end()) {
      throw ParameterError("compare_gradients: no numeric gradient for '" + name + "'");
    }
    const auto av = a.values();
    const auto nv = it->second.values();
    for (size_t i = 0; i < av.size(); ++i) {
      const double diff = std::abs(av[i] - nv[i]);
      const double bound = atol + rtol * std::max(std::abs(av[i]), std::abs(nv[i]));
      if (diff > c.max_abs_diff) {
        c.max_abs_diff = diff;
        c.worst_analytic = av[i];
        c.worst_numeric = nv[i];
        c.worst_index = static_cast<int64_t>(i);
      }
      if (diff > bound) c.pass = false;
    }
    checks.push_back(std::move(c));
  }
  return checks;
}

namespace {

struct PrimitiveCase {
  std::string name;
  ParamStore params;
  std::function<Tensor(Tape&, const ParamStore&)> build;
};

std::vector<PrimitiveCase> primitive_cases(Rng& rng) {
  const int64_t n = 2 + static_cast<int64_t>(rng.next_u64() % 3);
  const int64_t m = 2 + static_cast<int64_t>(rng.next_u64() % 3);
  const int64_t p = 2 + static_cast<int64_t>(rng.next_u64() % 3);
  auto block = [](Shape shape) {
    return Parameter{shape, std::vector<double>(static_cast<size_t>(shape_size(shape)))};
  };
  auto leaf = [](Tape& t, const ParamStore& ps, const char* id) {
    return t.param(id, param_tensor(ps.at(id)));
  };

  std::vector<PrimitiveCase> cases;
  cases.push_back({"matmul",
                   {{"a", block({n, m})}, {"b", block({2, m, p})}},
                   [leaf](Tape& t, const ParamStore& ps) {
                     return matmul(leaf(t, ps, "a"), leaf(t, ps, "b"));
                   }});
  cases.push_back({"add",
                   {{"a", block({2, n, m})}, {"b", block({n, m})}},
                   [leaf](Tape& t, const ParamStore& ps) {
                     return add(leaf(t, ps, "a"), leaf(t, ps, "b"));
                   }});
  cases.push_back({"elementwise_mul",
                   {{"a", block({n, 1, m})}, {"b", block({n, p, m})}},
                   [leaf](Tape& t, const ParamStore& ps) {
                     return elementwise_mul(leaf(t, ps, "a"), leaf(t, ps, "b"));
                   }});
  cases.push_back({"concat_last_axis",
                   {{"a", block({n, m})}, {"b", block({n, p})}},
                   [leaf](Tape& t, const ParamStore& ps) {
                     return concat_last_axis(leaf(t, ps, "a"), leaf(t, ps, "b"));
                   }});
  cases.push_back({"relu",
                   {{"a", block({n, m})}},
                   [leaf](Tape& t, const ParamStore& ps) { return relu(leaf(t, ps, "a")); }});
  cases.push_back({"batch_norm",
                   {{"x", block({4, m})}, {"gamma", block({m})}, {"beta", block({m})}},
                   [leaf, m](Tape& t, const ParamStore& ps) {
                     BatchNormStats stats = BatchNormStats::fresh(m);
                     return batch_norm(leaf(t, ps, "x"), leaf(t, ps, "gamma"),
                                       leaf(t, ps, "beta"), stats, true);
                   }});
  cases.push_back({"reshape",
                   {{"a", block({n, m})}},
                   [leaf, n, m](Tape& t, const ParamStore& ps) {
                     return reshape(leaf(t, ps, "a"), {m * n});
                   }});
  cases.push_back({"sum",
                   {{"a", block({n, m})}},
                   [leaf](Tape& t, const ParamStore& ps) { return sum(leaf(t, ps, "a")); }});
  cases.push_back({"l1_norm",
                   {{"a", block({n, m})}},
                   [leaf](Tape& t, const ParamStore& ps) { return l1_norm(leaf(t, ps, "a")); }});
  cases.push_back({"l2_norm",
                   {{"a", block({n, m})}},
                   [leaf](Tape& t, const ParamStore& ps) { return l2_norm(leaf(t, ps, "a")); }});
  cases.push_back({"exp",
                   {{"a", block({n, m})}},
                   [leaf](Tape& t, const ParamStore& ps) { return exp(leaf(t, ps, "a")); }});
  cases.push_back({"min_over_set",
                   {{"a", block({n, m})}, {"b", block({n, m})}, {"c", block({n, m})}},
                   [leaf](Tape& t, const ParamStore& ps) {
                     const Tensor xs[] = {leaf(t, ps, "a"), leaf(t, ps, "b"), leaf(t, ps, "c")};
                     return min_over_set(xs);
                   }});
  cases.push_back({"slice_axis0",
                   {{"a", block({n + 2, m})}},
                   [leaf, n](Tape& t, const ParamStore& ps) {
                     return slice_axis0(leaf(t, ps, "a"), 1, n + 1);
                   }});
  return cases;
}

}  // namespace

std::vector<PrimitiveCheck> run_primitive_adjoint_checks(int seeds, double rtol, double atol) {
  std::vector<PrimitiveCheck> results;
  for (int seed = 1; seed <= seeds; ++seed) {
    Rng rng(static_cast<uint64_t>(seed));
    auto cases = primitive_cases(rng);
    for (auto& c : cases) {
      for (auto& [name, p] : c.params) {
        for (double& x : p.values) {
          x = rng.uniform(-1.0, 1.0);
          if (std::abs(x) < 0.05) x += x >= 0.0 ? 0.1 : -0.1;  // keep off the kinks
        }
      }
      if (c.name == "min_over_set") {
        // spread operands so the argmin is differentiable
        size_t k = 0;
        for (auto& [name, p] : c.params) {
          for (double& x : p.values) x += 0.37 * static_cast<double>(k);
          ++k;
        }
      }

      std::vector<double> probe;
      {
        Tape tape;
        const Tensor out = c.build(tape, c.params);
        probe.resize(static_cast<size_t>(out.size()));
        Rng prng(static_cast<uint64_t>(seed) * 131 + 7);
        for (double& w : probe) w = prng.uniform(0.5, 1.5);
      }
      const auto scalar_fn = [&](const ParamStore& ps) {
        Tape tape;
        const Tensor out = c.build(tape, ps);
        double acc = 0.0;
        for (size_t i = 0; i < probe.size(); ++i) acc += out.values()[i] * probe[i];
        return acc;
      };

      Tape tape;
      const Tensor out = c.build(tape, c.params);
      const Tensor weighted = elementwise_mul(out, Tensor(out.shape(), probe));
      const GradMap analytic = tape.backward(sum(weighted));
      const auto numeric = finite_difference_gradient(scalar_fn, c.params, 1e-6);
      const auto checks = compare_gradients(analytic, numeric, c.params, rtol, atol);

      PrimitiveCheck r;
      r.primitive = c.name;
      r.seed = static_cast<uint64_t>(seed);
      for (const auto& chk : checks) {
        r.max_abs_diff = std::max(r.max_abs_diff, chk.max_abs_diff);
        r.pass = r.pass && chk.pass;
      }
      results.push_back(std::move(r));
    }
  }
  return results;
}

}  // namespace stars
