#include "stars/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "stars/error.hpp"

namespace stars {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

// --- Tensor --------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  for (int64_t d : shape_) {
    if (d < 0) throw ParameterError("tensor: negative dimension in " + shape_str(shape_));
  }
  if (shape_size(shape_) != static_cast<int64_t>(values.size())) {
    throw ContractError("tensor: shape " + shape_str(shape_) + " expects " +
                        std::to_string(shape_size(shape_)) + " values, got " +
                        std::to_string(values.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) {
  const int64_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  const int64_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

int64_t Tensor::size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

int64_t Tensor::dim(int64_t axis) const {
  if (axis < 0 || axis >= rank()) {
    throw ParameterError("tensor: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

std::span<const double> Tensor::values() const {
  static const std::vector<double> kEmpty;
  return data_ ? std::span<const double>(*data_) : std::span<const double>(kEmpty);
}

double Tensor::value() const {
  if (size() != 1) {
    throw ContractError("tensor: scalar accessor on shape " + shape_str(shape_));
  }
  return (*data_)[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int64_t>(index.size()) != rank()) {
    throw ParameterError("tensor: index rank mismatch for " + shape_str(shape_));
  }
  int64_t flat = 0;
  size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape_[axis]) {
      throw ParameterError("tensor: index out of bounds for " + shape_str(shape_));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return (*data_)[static_cast<size_t>(flat)];
}

bool Tensor::same_values(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  if (size() == 0) return true;
  return std::memcmp(data_->data(), other.data_->data(), sizeof(double) * data_->size()) == 0;
}

bool Tensor::all_finite() const {
  for (double v : values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const char* prim_name(Prim op) {
  switch (op) {
    case Prim::leaf: return "leaf";
    case Prim::matmul: return "matmul";
    case Prim::add: return "add";
    case Prim::elementwise_mul: return "elementwise_mul";
    case Prim::concat_last_axis: return "concat_last_axis";
    case Prim::relu: return "relu";
    case Prim::batch_norm: return "batch_norm";
    case Prim::reshape: return "reshape";
    case Prim::sum: return "sum";
    case Prim::l1_norm: return "l1_norm";
    case Prim::l2_norm: return "l2_norm";
    case Prim::exp: return "exp";
    case Prim::min_over_set: return "min_over_set";
    case Prim::slice_axis0: return "slice_axis0";
  }
  return "?";
}

// --- GradMap ---------------------------------------------------------------

void GradMap::add(const std::string& id, Tensor grad) { grads_[id] = std::move(grad); }

bool GradMap::contains(const std::string& id) const { return grads_.count(id) != 0; }

Tensor GradMap::get(const std::string& id, const Shape& shape) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) return Tensor::zeros(shape);
  if (it->second.shape() != shape) {
    throw ContractError("gradient for '" + id + "' has shape " + shape_str(it->second.shape()) +
                        ", expected " + shape_str(shape));
  }
  return it->second;
}

BatchNormStats BatchNormStats::fresh(int64_t features) {
  BatchNormStats s;
  s.mean.assign(static_cast<size_t>(features), 0.0);
  s.var.assign(static_cast<size_t>(features), 1.0);
  return s;
}

// --- broadcasting helpers ----------------------------------------------------

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const size_t ra = a.size(), rb = b.size();
  const size_t r = std::max(ra, rb);
  Shape out(r, 1);
  for (size_t i = 1; i <= r; ++i) {
    const int64_t da = i <= ra ? a[ra - i] : 1;
    const int64_t db = i <= rb ? b[rb - i] : 1;
    if (da == db || db == 1) {
      out[r - i] = da;
    } else if (da == 1) {
      out[r - i] = db;
    } else {
      throw ContractError(std::string(op) + ": shapes not broadcastable: " + shape_str(a) +
                          " vs " + shape_str(b));
    }
  }
  return out;
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> strides(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    strides[static_cast<size_t>(i)] =
        strides[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
  }
  return strides;
}

// Per-out-axis stride into `in`, 0 on broadcast axes.
std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  const auto in_strides = row_major_strides(in);
  const size_t off = out.size() - in.size();
  for (size_t i = 0; i < in.size(); ++i) {
    strides[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : in_strides[i];
  }
  return strides;
}

// Walks every coordinate of `out_shape` and hands the two input offsets to fn.
template <typename Fn>
void for_each_broadcast(const Shape& out_shape, const std::vector<int64_t>& sa,
                        const std::vector<int64_t>& sb, Fn&& fn) {
  const int64_t n = shape_size(out_shape);
  const size_t r = out_shape.size();
  if (r == 0) {
    if (n > 0) fn(0, 0, 0);
    return;
  }
  std::vector<int64_t> idx(r, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t o = 0; o < n; ++o) {
    fn(o, oa, ob);
    // odometer increment
    for (int ax = static_cast<int>(r) - 1; ax >= 0; --ax) {
      const size_t u = static_cast<size_t>(ax);
      oa += sa[u];
      ob += sb[u];
      if (++idx[u] < out_shape[u]) break;
      oa -= sa[u] * out_shape[u];
      ob -= sb[u] * out_shape[u];
      idx[u] = 0;
    }
  }
}

void matmul_2d(const double* a, const double* b, double* out, int64_t n, int64_t m, int64_t p) {
  // ikj ordering, out must be zeroed
  for (int64_t i = 0; i < n; ++i) {
    const double* arow = a + i * m;
    double* orow = out + i * p;
    for (int64_t k = 0; k < m; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b + k * p;
      for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
    }
  }
}

#ifndef NDEBUG
bool span_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}
#endif

struct EvalResult {
  Shape shape;
  std::vector<double> values;
  std::vector<double> ctx;
  std::vector<int64_t> ictx;
};

struct InputView {
  Shape shape;
  std::span<const double> values;
};

EvalResult eval_matmul(const InputView& a, const InputView& b) {
  EvalResult r;
  if (a.shape.size() == 2 && b.shape.size() == 2) {
    const int64_t n = a.shape[0], m = a.shape[1], p = b.shape[1];
    if (b.shape[0] != m) {
      throw ContractError("matmul: inner dimensions differ: " + shape_str(a.shape) + " vs " +
                          shape_str(b.shape));
    }
    r.shape = {n, p};
    r.values.assign(static_cast<size_t>(n * p), 0.0);
    matmul_2d(a.values.data(), b.values.data(), r.values.data(), n, m, p);
  } else if (a.shape.size() == 2 && b.shape.size() == 3) {
    const int64_t n = a.shape[0], m = a.shape[1];
    const int64_t batch = b.shape[0], p = b.shape[2];
    if (b.shape[1] != m) {
      throw ContractError("matmul: inner dimensions differ: " + shape_str(a.shape) + " vs " +
                          shape_str(b.shape));
    }
    r.shape = {batch, n, p};
    r.values.assign(static_cast<size_t>(batch * n * p), 0.0);
    for (int64_t bi = 0; bi < batch; ++bi) {
      matmul_2d(a.values.data(), b.values.data() + bi * m * p, r.values.data() + bi * n * p, n,
                m, p);
    }
  } else if (a.shape.size() == 3 && b.shape.size() == 2) {
    const int64_t batch = a.shape[0], n = a.shape[1], m = a.shape[2];
    const int64_t p = b.shape[1];
    if (b.shape[0] != m) {
      throw ContractError("matmul: inner dimensions differ: " + shape_str(a.shape) + " vs " +
                          shape_str(b.shape));
    }
    r.shape = {batch, n, p};
    r.values.assign(static_cast<size_t>(batch * n * p), 0.0);
    for (int64_t bi = 0; bi < batch; ++bi) {
      matmul_2d(a.values.data() + bi * n * m, b.values.data(), r.values.data() + bi * n * p, n,
                m, p);
    }
  } else {
    throw ContractError("matmul: unsupported ranks: " + shape_str(a.shape) + " vs " +
                        shape_str(b.shape));
  }
  return r;
}

EvalResult eval_binary_pointwise(Prim op, const InputView& a, const InputView& b) {
  EvalResult r;
  r.shape = broadcast_shape(a.shape, b.shape, prim_name(op));
  r.values.assign(static_cast<size_t>(shape_size(r.shape)), 0.0);
  if (a.shape == b.shape) {
    const size_t n = r.values.size();
    if (op == Prim::add) {
      for (size_t i = 0; i < n; ++i) r.values[i] = a.values[i] + b.values[i];
    } else {
      for (size_t i = 0; i < n; ++i) r.values[i] = a.values[i] * b.values[i];
    }
    return r;
  }
  const auto sa = bcast_strides(a.shape, r.shape);
  const auto sb = bcast_strides(b.shape, r.shape);
  if (op == Prim::add) {
    for_each_broadcast(r.shape, sa, sb, [&](int64_t o, int64_t oa, int64_t ob) {
      r.values[static_cast<size_t>(o)] = a.values[static_cast<size_t>(oa)] +
                                         b.values[static_cast<size_t>(ob)];
    });
  } else {
    for_each_broadcast(r.shape, sa, sb, [&](int64_t o, int64_t oa, int64_t ob) {
      r.values[static_cast<size_t>(o)] = a.values[static_cast<size_t>(oa)] *
                                         b.values[static_cast<size_t>(ob)];
    });
  }
  return r;
}

EvalResult eval_concat_last(const InputView& a, const InputView& b) {
  if (a.shape.empty() || b.shape.empty() || a.shape.size() != b.shape.size()) {
    throw ContractError("concat_last_axis: ranks differ or are zero: " + shape_str(a.shape) +
                        " vs " + shape_str(b.shape));
  }
  for (size_t i = 0; i + 1 < a.shape.size(); ++i) {
    if (a.shape[i] != b.shape[i]) {
      throw ContractError("concat_last_axis: leading dimensions differ: " + shape_str(a.shape) +
                          " vs " + shape_str(b.shape));
    }
  }
  EvalResult r;
  r.shape = a.shape;
  const int64_t la = a.shape.back(), lb = b.shape.back();
  r.shape.back() = la + lb;
  const int64_t rows = shape_size(a.shape) / std::max<int64_t>(la, 1);
  r.values.resize(static_cast<size_t>(rows * (la + lb)));
  for (int64_t row = 0; row < rows; ++row) {
    std::copy_n(a.values.data() + row * la, la, r.values.data() + row * (la + lb));
    std::copy_n(b.values.data() + row * lb, lb, r.values.data() + row * (la + lb) + la);
  }
  return r;
}

EvalResult eval_relu(const InputView& x) {
  EvalResult r;
  r.shape = x.shape;
  r.values.resize(x.values.size());
  for (size_t i = 0; i < x.values.size(); ++i) r.values[i] = x.values[i] > 0.0 ? x.values[i] : 0.0;
  return r;
}

EvalResult eval_exp(const InputView& x) {
  EvalResult r;
  r.shape = x.shape;
  r.values.resize(x.values.size());
  for (size_t i = 0; i < x.values.size(); ++i) r.values[i] = std::exp(x.values[i]);
  return r;
}

EvalResult eval_sum(const InputView& x) {
  EvalResult r;
  r.shape = {};
  r.values = {std::accumulate(x.values.begin(), x.values.end(), 0.0)};
  return r;
}

EvalResult eval_lp_norm(Prim op, const InputView& x) {
  if (x.shape.empty()) {
    throw ContractError(std::string(prim_name(op)) + ": requires rank >= 1, got scalar");
  }
  const int64_t d = x.shape.back();
  const int64_t rows = shape_size(x.shape) / std::max<int64_t>(d, 1);
  EvalResult r;
  r.shape.assign(x.shape.begin(), x.shape.end() - 1);
  r.values.assign(static_cast<size_t>(rows), 0.0);
  for (int64_t row = 0; row < rows; ++row) {
    const double* v = x.values.data() + row * d;
    double acc = 0.0;
    if (op == Prim::l1_norm) {
      for (int64_t i = 0; i < d; ++i) acc += std::abs(v[i]);
    } else {
      for (int64_t i = 0; i < d; ++i) acc += v[i] * v[i];
      acc = std::sqrt(acc);
    }
    r.values[static_cast<size_t>(row)] = acc;
  }
  return r;
}

EvalResult eval_min_over_set(const std::vector<InputView>& xs) {
  if (xs.empty()) throw ContractError("min_over_set: needs at least one input");
  for (const auto& x : xs) {
    if (x.shape != xs[0].shape) {
      throw ContractError("min_over_set: mismatched shapes: " + shape_str(xs[0].shape) + " vs " +
                          shape_str(x.shape));
    }
  }
  EvalResult r;
  r.shape = xs[0].shape;
  r.values.assign(xs[0].values.begin(), xs[0].values.end());
  for (size_t k = 1; k < xs.size(); ++k) {
    for (size_t i = 0; i < r.values.size(); ++i) {
      r.values[i] = std::min(r.values[i], xs[k].values[i]);
    }
  }
  return r;
}

EvalResult eval_slice_axis0(const InputView& x, int64_t begin, int64_t end) {
  if (x.shape.empty()) throw ContractError("slice_axis0: requires rank >= 1, got scalar");
  if (begin < 0 || end > x.shape[0] || begin >= end) {
    throw ParameterError("slice_axis0: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_str(x.shape));
  }
  const int64_t row = shape_size(x.shape) / std::max<int64_t>(x.shape[0], 1);
  EvalResult r;
  r.shape = x.shape;
  r.shape[0] = end - begin;
  r.values.assign(x.values.begin() + begin * row, x.values.begin() + end * row);
  r.ictx = {begin, end};
  return r;
}

// training: ctx receives [mean, invstd] computed from the batch, and the
// running statistics are updated with momentum using the unbiased variance.
// eval: ctx receives [running mean, invstd from running var].
EvalResult eval_batch_norm(const InputView& x, const InputView& gamma, const InputView& beta,
                           BatchNormStats* stats, bool training, double momentum, double eps,
                           bool update_stats) {
  if (x.shape.size() < 2) {
    throw ContractError("batch_norm: input must have a batch axis plus features, got " +
                        shape_str(x.shape));
  }
  const int64_t n = x.shape[0];
  const int64_t d = shape_size(x.shape) / n;
  Shape feat(x.shape.begin() + 1, x.shape.end());
  if (shape_size(gamma.shape) != d || shape_size(beta.shape) != d) {
    throw ContractError("batch_norm: scale/shift shape " + shape_str(gamma.shape) +
                        " does not cover features " + shape_str(feat));
  }
  if (training && n < 2) {
    throw ContractError("batch_norm: degenerate variance: training mode needs batch >= 2, got " +
                        std::to_string(n));
  }
  if (static_cast<int64_t>(stats->mean.size()) != d) {
    throw ContractError("batch_norm: running stats track " + std::to_string(stats->mean.size()) +
                        " features, input has " + std::to_string(d));
  }
  EvalResult r;
  r.shape = x.shape;
  r.values.resize(x.values.size());
  r.ctx.resize(static_cast<size_t>(2 * d));
  r.ictx = {training ? 1 : 0, n, d};
  double* mean_ctx = r.ctx.data();
  double* invstd_ctx = r.ctx.data() + d;
  if (training) {
    for (int64_t j = 0; j < d; ++j) {
      double mu = 0.0;
      for (int64_t i = 0; i < n; ++i) mu += x.values[static_cast<size_t>(i * d + j)];
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double c = x.values[static_cast<size_t>(i * d + j)] - mu;
        var += c * c;
      }
      var /= static_cast<double>(n);
      mean_ctx[j] = mu;
      invstd_ctx[j] = 1.0 / std::sqrt(var + eps);
      if (update_stats) {
        const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
        stats->mean[static_cast<size_t>(j)] =
            (1.0 - momentum) * stats->mean[static_cast<size_t>(j)] + momentum * mu;
        stats->var[static_cast<size_t>(j)] =
            (1.0 - momentum) * stats->var[static_cast<size_t>(j)] + momentum * unbiased;
      }
    }
  } else {
    for (int64_t j = 0; j < d; ++j) {
      mean_ctx[j] = stats->mean[static_cast<size_t>(j)];
      invstd_ctx[j] = 1.0 / std::sqrt(stats->var[static_cast<size_t>(j)] + eps);
    }
  }
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      const size_t o = static_cast<size_t>(i * d + j);
      const double xhat = (x.values[o] - mean_ctx[j]) * invstd_ctx[j];
      r.values[o] = gamma.values[static_cast<size_t>(j)] * xhat +
                    beta.values[static_cast<size_t>(j)];
    }
  }
  return r;
}

}  // namespace

// --- recording ---------------------------------------------------------------

Tensor record_op(Prim op, std::span<const Tensor* const> inputs, Shape shape,
                 std::vector<double> values, std::vector<double> ctx,
                 std::vector<int64_t> ictx) {
  Tape* tape = nullptr;
  bool needs_grad = false;
  for (const Tensor* t : inputs) {
    if (t->tape() != nullptr) {
      if (tape != nullptr && tape != t->tape()) {
        throw StateError(std::string(prim_name(op)) + ": operands recorded on different tapes");
      }
      tape = t->tape();
    }
    needs_grad = needs_grad || t->requires_grad();
  }

#ifndef NDEBUG
  {
    bool inputs_finite = true;
    for (const Tensor* t : inputs) inputs_finite = inputs_finite && span_finite(t->values());
    if (inputs_finite) {
      assert(span_finite(values) && "forward primitive produced NaN/Inf from finite inputs");
    }
  }
#endif

  Tensor out(std::move(shape), std::move(values));
  if (tape == nullptr || !needs_grad) {
    return out;
  }

  Tape::Node node;
  node.op = op;
  node.shape = out.shape_;
  node.out = out.data_;
  node.ctx = std::move(ctx);
  node.ictx = std::move(ictx);
  node.inputs.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    node.inputs.push_back(tape->ensure_leaf(*t, false, ""));
  }
  out.tape_ = tape;
  out.requires_grad_ = true;
  out.node_ = tape->push(std::move(node));
  return out;
}

int Tape::ensure_leaf(const Tensor& t, bool requires_grad, const std::string& id) {
  if (t.tape_ == this && t.node_ >= 0) return t.node_;
  if (t.tape_ != nullptr && t.tape_ != this) {
    throw StateError("tape: tensor belongs to a different tape");
  }
  Node node;
  node.op = Prim::leaf;
  node.shape = t.shape_;
  node.out = t.data_;
  node.param_id = id;
  (void)requires_grad;
  return push(std::move(node));
}

int Tape::push(Node node) {
  if (consumed_) {
    throw StateError("tape: recording on a consumed tape");
  }
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::param(const std::string& id, const Tensor& value) {
  if (id.empty()) throw ParameterError("tape: parameter id must be nonempty");
  auto it = param_nodes_.find(id);
  if (it != param_nodes_.end()) {
    const Node& node = nodes_[static_cast<size_t>(it->second)];
    Tensor out;
    out.data_ = node.out;
    out.shape_ = node.shape;
    out.tape_ = this;
    out.node_ = it->second;
    out.requires_grad_ = true;
    if (!(value.shape() == node.shape &&
          std::memcmp(value.values().data(), node.out->data(),
                      sizeof(double) * node.out->size()) == 0)) {
      throw StateError("tape: parameter '" + id + "' redeclared with different contents");
    }
    return out;
  }
  Tensor out = value;
  out.tape_ = this;
  out.requires_grad_ = true;
  out.node_ = ensure_leaf(value, true, id);
  param_nodes_[id] = out.node_;
  return out;
}

GradMap Tape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("tape: backward on a consumed tape");
  if (loss.tape_ != this || loss.node_ < 0) {
    throw StateError("tape: loss was not produced on this tape");
  }
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  consumed_ = true;

  std::vector<std::vector<double>> adjoint(nodes_.size());
  auto adj = [&](int i) -> std::vector<double>& {
    auto& a = adjoint[static_cast<size_t>(i)];
    if (a.empty()) a.assign(nodes_[static_cast<size_t>(i)].out->size(), 0.0);
    return a;
  };
  adj(loss.node_)[0] = 1.0;

  auto input_view = [&](const Node& node, size_t slot) {
    const Node& in = nodes_[static_cast<size_t>(node.inputs[slot])];
    return InputView{in.shape, std::span<const double>(*in.out)};
  };

  // reverse sweep: creation order is topological, so one pass visits every
  // node exactly once with its full adjoint available
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    const Node& node = nodes_[static_cast<size_t>(i)];
    if (node.op == Prim::leaf) continue;
    std::vector<double>& g_ref = adj(i);
    std::vector<double> g_local;
    const std::vector<double>* gp = &g_ref;
    if (node.op == corrupt_op_) {
      g_local = g_ref;
      for (double& v : g_local) v *= 1.5;  // deliberate corruption for self-tests
      gp = &g_local;
    }
    const std::vector<double>& g = *gp;

    switch (node.op) {
      case Prim::matmul: {
        const InputView a = input_view(node, 0);
        const InputView b = input_view(node, 1);
        std::vector<double>& da = adj(node.inputs[0]);
        std::vector<double>& db = adj(node.inputs[1]);
        if (a.shape.size() == 2 && b.shape.size() == 2) {
          const int64_t n = a.shape[0], m = a.shape[1], p = b.shape[1];
          for (int64_t r = 0; r < n; ++r) {
            for (int64_t k = 0; k < m; ++k) {
              double acc = 0.0;
              for (int64_t c = 0; c < p; ++c)
                acc += g[static_cast<size_t>(r * p + c)] * b.values[static_cast<size_t>(k * p + c)];
              da[static_cast<size_t>(r * m + k)] += acc;
            }
          }
          for (int64_t k = 0; k < m; ++k) {
            for (int64_t c = 0; c < p; ++c) {
              double acc = 0.0;
              for (int64_t r = 0; r < n; ++r)
                acc += a.values[static_cast<size_t>(r * m + k)] * g[static_cast<size_t>(r * p + c)];
              db[static_cast<size_t>(k * p + c)] += acc;
            }
          }
        } else if (a.shape.size() == 2 && b.shape.size() == 3) {
          const int64_t n = a.shape[0], m = a.shape[1];
          const int64_t batch = b.shape[0], p = b.shape[2];
          for (int64_t bi = 0; bi < batch; ++bi) {
            const double* gb = g.data() + bi * n * p;
            const double* xb = b.values.data() + bi * m * p;
            double* dxb = db.data() + bi * m * p;
            for (int64_t r = 0; r < n; ++r) {
              for (int64_t k = 0; k < m; ++k) {
                double acc = 0.0;
                for (int64_t c = 0; c < p; ++c) acc += gb[r * p + c] * xb[k * p + c];
                da[static_cast<size_t>(r * m + k)] += acc;
              }
            }
            for (int64_t k = 0; k < m; ++k) {
              for (int64_t c = 0; c < p; ++c) {
                double acc = 0.0;
                for (int64_t r = 0; r < n; ++r)
                  acc += a.values[static_cast<size_t>(r * m + k)] * gb[r * p + c];
                dxb[k * p + c] += acc;
              }
            }
          }
        } else {  // 3D x 2D
          const int64_t batch = a.shape[0], n = a.shape[1], m = a.shape[2];
          const int64_t p = b.shape[1];
          for (int64_t bi = 0; bi < batch; ++bi) {
            const double* gb = g.data() + bi * n * p;
            const double* xb = a.values.data() + bi * n * m;
            double* dxb = da.data() + bi * n * m;
            for (int64_t r = 0; r < n; ++r) {
              for (int64_t k = 0; k < m; ++k) {
                double acc = 0.0;
                for (int64_t c = 0; c < p; ++c) acc += gb[r * p + c] * b.values[static_cast<size_t>(k * p + c)];
                dxb[r * m + k] += acc;
              }
            }
            for (int64_t k = 0; k < m; ++k) {
              for (int64_t c = 0; c < p; ++c) {
                double acc = 0.0;
                for (int64_t r = 0; r < n; ++r) acc += xb[r * m + k] * gb[r * p + c];
                db[static_cast<size_t>(k * p + c)] += acc;
              }
            }
          }
        }
        break;
      }
      case Prim::add:
      case Prim::elementwise_mul: {
        const InputView a = input_view(node, 0);
        const InputView b = input_view(node, 1);
        std::vector<double>& da = adj(node.inputs[0]);
        std::vector<double>& db = adj(node.inputs[1]);
        const auto sa = bcast_strides(a.shape, node.shape);
        const auto sb = bcast_strides(b.shape, node.shape);
        if (node.op == Prim::add) {
          for_each_broadcast(node.shape, sa, sb, [&](int64_t o, int64_t oa, int64_t ob) {
            da[static_cast<size_t>(oa)] += g[static_cast<size_t>(o)];
            db[static_cast<size_t>(ob)] += g[static_cast<size_t>(o)];
          });
        } else {
          for_each_broadcast(node.shape, sa, sb, [&](int64_t o, int64_t oa, int64_t ob) {
            da[static_cast<size_t>(oa)] +=
                g[static_cast<size_t>(o)] * b.values[static_cast<size_t>(ob)];
            db[static_cast<size_t>(ob)] +=
                g[static_cast<size_t>(o)] * a.values[static_cast<size_t>(oa)];
          });
        }
        break;
      }
      case Prim::concat_last_axis: {
        const InputView a = input_view(node, 0);
        const InputView b = input_view(node, 1);
        std::vector<double>& da = adj(node.inputs[0]);
        std::vector<double>& db = adj(node.inputs[1]);
        const int64_t la = a.shape.back(), lb = b.shape.back();
        const int64_t rows = shape_size(a.shape) / std::max<int64_t>(la, 1);
        for (int64_t row = 0; row < rows; ++row) {
          for (int64_t c = 0; c < la; ++c)
            da[static_cast<size_t>(row * la + c)] += g[static_cast<size_t>(row * (la + lb) + c)];
          for (int64_t c = 0; c < lb; ++c)
            db[static_cast<size_t>(row * lb + c)] +=
                g[static_cast<size_t>(row * (la + lb) + la + c)];
        }
        break;
      }
      case Prim::relu: {
        const InputView x = input_view(node, 0);
        std::vector<double>& dx = adj(node.inputs[0]);
        for (size_t o = 0; o < g.size(); ++o) {
          if (x.values[o] > 0.0) dx[o] += g[o];
        }
        break;
      }
      case Prim::batch_norm: {
        const InputView x = input_view(node, 0);
        const InputView gamma = input_view(node, 1);
        std::vector<double>& dx = adj(node.inputs[0]);
        std::vector<double>& dgamma = adj(node.inputs[1]);
        std::vector<double>& dbeta = adj(node.inputs[2]);
        const bool training = node.ictx[0] != 0;
        const int64_t n = node.ictx[1], d = node.ictx[2];
        const double* mean = node.ctx.data();
        const double* invstd = node.ctx.data() + d;
        for (int64_t j = 0; j < d; ++j) {
          const double gam = gamma.values[static_cast<size_t>(j)];
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t i = 0; i < n; ++i) {
            const size_t o = static_cast<size_t>(i * d + j);
            const double xhat = (x.values[o] - mean[j]) * invstd[j];
            sum_g += g[o];
            sum_gx += g[o] * xhat;
          }
          dbeta[static_cast<size_t>(j)] += sum_g;
          dgamma[static_cast<size_t>(j)] += sum_gx;
          if (training) {
            const double inv_n = 1.0 / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i) {
              const size_t o = static_cast<size_t>(i * d + j);
              const double xhat = (x.values[o] - mean[j]) * invstd[j];
              dx[o] += gam * invstd[j] * (g[o] - inv_n * sum_g - xhat * inv_n * sum_gx);
            }
          } else {
            for (int64_t i = 0; i < n; ++i) {
              const size_t o = static_cast<size_t>(i * d + j);
              dx[o] += gam * invstd[j] * g[o];
            }
          }
        }
        break;
      }
      case Prim::reshape: {
        std::vector<double>& dx = adj(node.inputs[0]);
        for (size_t o = 0; o < g.size(); ++o) dx[o] += g[o];
        break;
      }
      case Prim::sum: {
        std::vector<double>& dx = adj(node.inputs[0]);
        for (size_t o = 0; o < dx.size(); ++o) dx[o] += g[0];
        break;
      }
      case Prim::l1_norm: {
        const InputView x = input_view(node, 0);
        std::vector<double>& dx = adj(node.inputs[0]);
        const int64_t d = x.shape.back();
        const int64_t rows = shape_size(x.shape) / std::max<int64_t>(d, 1);
        for (int64_t row = 0; row < rows; ++row) {
          const double gr = g[static_cast<size_t>(row)];
          for (int64_t c = 0; c < d; ++c) {
            const double v = x.values[static_cast<size_t>(row * d + c)];
            if (v > 0.0) {
              dx[static_cast<size_t>(row * d + c)] += gr;
            } else if (v < 0.0) {
              dx[static_cast<size_t>(row * d + c)] -= gr;
            }
          }
        }
        break;
      }
      case Prim::l2_norm: {
        const InputView x = input_view(node, 0);
        std::vector<double>& dx = adj(node.inputs[0]);
        const int64_t d = x.shape.back();
        const int64_t rows = shape_size(x.shape) / std::max<int64_t>(d, 1);
        for (int64_t row = 0; row < rows; ++row) {
          const double norm = (*node.out)[static_cast<size_t>(row)];
          if (norm == 0.0) continue;  // subgradient 0 at the kink
          const double gr = g[static_cast<size_t>(row)] / norm;
          for (int64_t c = 0; c < d; ++c) {
            dx[static_cast<size_t>(row * d + c)] += gr * x.values[static_cast<size_t>(row * d + c)];
          }
        }
        break;
      }
      case Prim::exp: {
        std::vector<double>& dx = adj(node.inputs[0]);
        for (size_t o = 0; o < g.size(); ++o) dx[o] += g[o] * (*node.out)[o];
        break;
      }
      case Prim::min_over_set: {
        const size_t n_in = node.inputs.size();
        for (size_t o = 0; o < g.size(); ++o) {
          size_t best = 0;
          double bv = nodes_[static_cast<size_t>(node.inputs[0])].out->at(o);
          for (size_t k = 1; k < n_in; ++k) {
            const double v = nodes_[static_cast<size_t>(node.inputs[k])].out->at(o);
            if (v < bv) {
              bv = v;
              best = k;
            }
          }
          adj(node.inputs[best])[o] += g[o];
        }
        break;
      }
      case Prim::slice_axis0: {
        const InputView x = input_view(node, 0);
        std::vector<double>& dx = adj(node.inputs[0]);
        const int64_t row = shape_size(x.shape) / std::max<int64_t>(x.shape[0], 1);
        const int64_t begin = node.ictx[0];
        for (size_t o = 0; o < g.size(); ++o) {
          dx[static_cast<size_t>(begin * row) + o] += g[o];
        }
        break;
      }
      case Prim::leaf:
        break;
    }
  }

  GradMap grads;
  for (const auto& [id, idx] : param_nodes_) {
    const Node& node = nodes_[static_cast<size_t>(idx)];
    auto& a = adjoint[static_cast<size_t>(idx)];
    if (a.empty()) a.assign(node.out->size(), 0.0);
    grads.add(id, Tensor(node.shape, std::move(a)));
  }
  return grads;
}

bool Tape::replay_matches() const {
  for (const Node& node : nodes_) {
    if (node.op == Prim::leaf) continue;
    std::vector<InputView> ins;
    ins.reserve(node.inputs.size());
    for (int idx : node.inputs) {
      const Node& in = nodes_[static_cast<size_t>(idx)];
      ins.push_back({in.shape, std::span<const double>(*in.out)});
    }
    EvalResult r;
    switch (node.op) {
      case Prim::matmul: r = eval_matmul(ins[0], ins[1]); break;
      case Prim::add:
      case Prim::elementwise_mul: r = eval_binary_pointwise(node.op, ins[0], ins[1]); break;
      case Prim::concat_last_axis: r = eval_concat_last(ins[0], ins[1]); break;
      case Prim::relu: r = eval_relu(ins[0]); break;
      case Prim::batch_norm: {
        // re-derive the output from saved statistics; stats side effects are
        // not part of the recorded data flow
        const int64_t n = node.ictx[1], d = node.ictx[2];
        const double* mean = node.ctx.data();
        const double* invstd = node.ctx.data() + d;
        r.shape = node.shape;
        r.values.resize(node.out->size());
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < d; ++j) {
            const size_t o = static_cast<size_t>(i * d + j);
            r.values[o] = ins[1].values[static_cast<size_t>(j)] *
                              ((ins[0].values[o] - mean[j]) * invstd[j]) +
                          ins[2].values[static_cast<size_t>(j)];
          }
        }
        break;
      }
      case Prim::reshape: {
        r.shape = node.shape;
        r.values.assign(ins[0].values.begin(), ins[0].values.end());
        break;
      }
      case Prim::sum: r = eval_sum(ins[0]); break;
      case Prim::l1_norm:
      case Prim::l2_norm: r = eval_lp_norm(node.op, ins[0]); break;
      case Prim::exp: r = eval_exp(ins[0]); break;
      case Prim::min_over_set: r = eval_min_over_set(ins); break;
      case Prim::slice_axis0: r = eval_slice_axis0(ins[0], node.ictx[0], node.ictx[1]); break;
      case Prim::leaf: break;
    }
    if (r.values.size() != node.out->size() ||
        std::memcmp(r.values.data(), node.out->data(), sizeof(double) * r.values.size()) != 0) {
      return false;
    }
  }
  return true;
}

// --- public ops ------------------------------------------------------------

namespace {
InputView view(const Tensor& t) { return {t.shape(), t.values()}; }
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  EvalResult r = eval_matmul(view(a), view(b));
  const Tensor* ins[] = {&a, &b};
  return record_op(Prim::matmul, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor add(const Tensor& a, const Tensor& b) {
  EvalResult r = eval_binary_pointwise(Prim::add, view(a), view(b));
  const Tensor* ins[] = {&a, &b};
  return record_op(Prim::add, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
  EvalResult r = eval_binary_pointwise(Prim::elementwise_mul, view(a), view(b));
  const Tensor* ins[] = {&a, &b};
  return record_op(Prim::elementwise_mul, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor concat_last_axis(const Tensor& a, const Tensor& b) {
  EvalResult r = eval_concat_last(view(a), view(b));
  const Tensor* ins[] = {&a, &b};
  return record_op(Prim::concat_last_axis, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor relu(const Tensor& x) {
  EvalResult r = eval_relu(view(x));
  const Tensor* ins[] = {&x};
  return record_op(Prim::relu, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, bool training, double momentum, double eps) {
  EvalResult r =
      eval_batch_norm(view(x), view(gamma), view(beta), &stats, training, momentum, eps, true);
  const Tensor* ins[] = {&x, &gamma, &beta};
  return record_op(Prim::batch_norm, ins, std::move(r.shape), std::move(r.values),
                   std::move(r.ctx), std::move(r.ictx));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ContractError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                        shape_str(shape));
  }
  std::vector<double> values(x.values().begin(), x.values().end());
  const Tensor* ins[] = {&x};
  return record_op(Prim::reshape, ins, std::move(shape), std::move(values), {}, {});
}

Tensor sum(const Tensor& x) {
  EvalResult r = eval_sum(view(x));
  const Tensor* ins[] = {&x};
  return record_op(Prim::sum, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor l1_norm(const Tensor& x) {
  EvalResult r = eval_lp_norm(Prim::l1_norm, view(x));
  const Tensor* ins[] = {&x};
  return record_op(Prim::l1_norm, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor l2_norm(const Tensor& x) {
  EvalResult r = eval_lp_norm(Prim::l2_norm, view(x));
  const Tensor* ins[] = {&x};
  return record_op(Prim::l2_norm, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor exp(const Tensor& x) {
  EvalResult r = eval_exp(view(x));
  const Tensor* ins[] = {&x};
  return record_op(Prim::exp, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor min_over_set(std::span<const Tensor> xs) {
  std::vector<InputView> views;
  views.reserve(xs.size());
  for (const Tensor& t : xs) views.push_back(view(t));
  EvalResult r = eval_min_over_set(views);
  std::vector<const Tensor*> ins;
  ins.reserve(xs.size());
  for (const Tensor& t : xs) ins.push_back(&t);
  return record_op(Prim::min_over_set, ins, std::move(r.shape), std::move(r.values), {}, {});
}

Tensor slice_axis0(const Tensor& x, int64_t begin, int64_t end) {
  EvalResult r = eval_slice_axis0(view(x), begin, end);
  const Tensor* ins[] = {&x};
  return record_op(Prim::slice_axis0, ins, std::move(r.shape), std::move(r.values), {},
                   std::move(r.ictx));
}

Tensor scale(const Tensor& x, double factor) {
  return elementwise_mul(x, Tensor::scalar(factor));
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor param_tensor(const Parameter& p) { return Tensor(p.shape, p.values); }

}  // namespace stars
