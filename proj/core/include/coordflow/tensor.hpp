#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace coordflow {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the define-by-run graph. Data is 32-bit float, row-major.
// The grad buffer is empty until a backward pass touches the node.
struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  // Accumulates this node's grad into its parents. Captures raw pointers;
  // the graph's shared_ptrs keep everything alive for the pass.
  std::function<void()> backprop;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

// Value-semantic handle to a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar_value(float v);

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  // Row/col view of the (at most 2-d) shapes the model uses.
  int64_t rows() const;
  int64_t cols() const;
  bool requires_grad() const { return node_->requires_grad; }
  float scalar() const;

  std::span<const float> data() const { return node_->data; }
  std::span<float> mutable_data() { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> mutable_grad() { return node_->grad; }
  void ensure_grad();  // allocate zero-filled grad if absent
  void zero_grad();    // drop the grad buffer ("no grad" state)

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// ---- differentiable op set ----------------------------------------------
// Shape errors throw std::invalid_argument naming the op and both shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
// add/sub/mul accept equal shapes, a [1,n] row operand or a [m,1] column
// operand (broadcast over the other axis).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor offset(const Tensor& a, float c);
Tensor neg(const Tensor& a);

Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);

// Softmax along the trailing axis, computed with max subtraction.
Tensor softmax_lastdim(const Tensor& a);

// Full reductions to a [1] scalar; accumulation runs in double.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int64_t first, int64_t count);

// Fused Fourier feature map of a [m,1] column: for k = 0..bands-1 emits
// sin(f_k*pi*v), cos(f_k*pi*v) with f_k = base_frequency * 2^k, optionally
// prefixed with v itself. Output is [m, 2*bands + include_input].
Tensor fourier_features(const Tensor& a, int bands, bool include_input,
                        float base_frequency);

// Reverse pass from a scalar loss. Populates (accumulates into) the grad of
// every requires_grad tensor reachable from `loss`; anything else is left
// untouched. Throws if loss is not scalar or not on the tape.
void backward(const Tensor& loss);

// While alive, ops produce plain values: no parents, no backprop closures.
// Inference paths use this so activations are freed as they go.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

}  // namespace coordflow
