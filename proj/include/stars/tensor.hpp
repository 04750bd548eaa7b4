#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stars {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

enum class Prim {
  leaf,
  matmul,
  add,
  elementwise_mul,
  concat_last_axis,
  relu,
  batch_norm,
  reshape,
  sum,
  l1_norm,
  l2_norm,
  exp,
  min_over_set,
  slice_axis0,
};

const char* prim_name(Prim op);

// Dense row-major float64 tensor. Values are immutable once constructed and
// shared by reference, so copies are cheap and tensors are safe to read from
// multiple threads. A tensor may be bound to the tape that produced it; the
// binding is only valid while that tape is alive.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t size() const;
  int64_t dim(int64_t axis) const;

  std::span<const double> values() const;
  // Scalar accessor; requires size() == 1.
  double value() const;
  double at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const { return requires_grad_; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  bool same_values(const Tensor& other) const;  // bitwise comparison
  bool all_finite() const;

 private:
  friend class Tape;
  friend Tensor record_op(Prim, std::span<const Tensor* const>, Shape, std::vector<double>,
                          std::vector<double>, std::vector<int64_t>);
  std::shared_ptr<const std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
};

// Gradients keyed by parameter id. Parameters that never reached the loss
// report zero tensors of their declared shape.
class GradMap {
 public:
  void add(const std::string& id, Tensor grad);
  bool contains(const std::string& id) const;
  // Zero tensor of `shape` when the parameter is absent.
  Tensor get(const std::string& id, const Shape& shape) const;
  const std::map<std::string, Tensor>& entries() const { return grads_; }

 private:
  std::map<std::string, Tensor> grads_;
};

// Running statistics owned by a batch-norm site. Training-mode applications
// update them in place; evaluation mode reads them.
struct BatchNormStats {
  std::vector<double> mean;  // one entry per feature
  std::vector<double> var;
  static BatchNormStats fresh(int64_t features);
};

// Record of primitive applications in execution order. Execution order is a
// topological order of the data flow, so the backward sweep is a single
// reverse pass that visits every node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Declare a differentiable leaf. Repeated calls with the same id return the
  // original node, so shared-storage parameters accumulate gradients from
  // every use site.
  Tensor param(const std::string& id, const Tensor& value);

  // Reverse sweep from a scalar loss. Consumes the tape: a second call is a
  // state error. The tape remains replayable afterwards.
  GradMap backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  size_t node_count() const { return nodes_.size(); }

  // Re-executes every recorded primitive from leaf values and compares with
  // the recorded outputs bitwise.
  bool replay_matches() const;

  // Self-test hook: deliberately corrupt the adjoint rule of one primitive so
  // verification harnesses can prove they detect a broken gradient.
  void corrupt_adjoint_for_test(Prim op) { corrupt_op_ = op; }

 private:
  friend Tensor record_op(Prim, std::span<const Tensor* const>, Shape,
                          std::vector<double>, std::vector<double>,
                          std::vector<int64_t>);

  struct Node {
    Prim op = Prim::leaf;
    std::vector<int> inputs;
    Shape shape;
    std::shared_ptr<const std::vector<double>> out;
    std::vector<double> ctx;    // op-specific saved values
    std::vector<int64_t> ictx;  // op-specific saved integers
    std::string param_id;       // nonempty for named leaves
  };

  int ensure_leaf(const Tensor& t, bool requires_grad, const std::string& id);
  int push(Node node);

  std::vector<Node> nodes_;
  std::map<std::string, int> param_nodes_;
  bool consumed_ = false;
  Prim corrupt_op_ = Prim::leaf;  // leaf means "none"
};

// --- primitives --------------------------------------------------------
// Each returns a fresh tensor and records itself on the tape reachable from
// its operands whenever any operand requires gradients. Without such an
// operand they are plain evaluations.

Tensor matmul(const Tensor& a, const Tensor& b);
// NumPy-style broadcasting (trailing axes aligned, size-1 expanded).
Tensor add(const Tensor& a, const Tensor& b);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
Tensor concat_last_axis(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, bool training, double momentum = 0.1,
                  double eps = 1e-5);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
// Reduce the last axis: sum of absolute values / Euclidean norm.
Tensor l1_norm(const Tensor& x);
Tensor l2_norm(const Tensor& x);
Tensor exp(const Tensor& x);
// Element-wise minimum over two or more same-shape tensors. The adjoint is
// routed to the first tensor attaining the minimum, so losses built on it
// train only the selected branch.
Tensor min_over_set(std::span<const Tensor> xs);
Tensor slice_axis0(const Tensor& x, int64_t begin, int64_t end);

// Composites (no dedicated tape nodes of their own).
Tensor scale(const Tensor& x, double factor);
Tensor sub(const Tensor& a, const Tensor& b);

// --- parameters --------------------------------------------------------

struct Parameter {
  Shape shape;
  std::vector<double> values;
};

// Ordered so that iteration (init, optimizer sweeps, checkpoints) is
// deterministic.
using ParamStore = std::map<std::string, Parameter>;

Tensor param_tensor(const Parameter& p);

}  // namespace stars
