#include "coordflow/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace coordflow {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a) + " vs " + shape_str(b));
}

void check_rank(const char* op, const Tensor& t) {
  if (!t.valid()) throw std::invalid_argument(std::string(op) + ": empty tensor");
  if (t.shape().size() > 2)
    throw std::invalid_argument(std::string(op) + ": rank > 2 unsupported, got " +
                                shape_str(t.shape()));
}

thread_local bool g_grad_enabled = true;

NodePtr new_node(Shape shape, const char* op, std::vector<NodePtr> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data.resize(static_cast<size_t>(shape_numel(n->shape)));
  n->op = op;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->parents = std::move(parents);
  }
  return n;
}

void ensure_grad_of(TensorNode* n) {
  if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0f);
}

// ---- gemm kernels (serial, cache-friendly i-k-j order) -------------------

void gemm(const float* __restrict a, const float* __restrict b,
          float* __restrict c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    float* __restrict crow = c + i * n;
    const float* __restrict arow = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const float av = arow[kk];
      const float* __restrict brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA += dC * B^T
void gemm_bt(const float* __restrict dc, const float* __restrict b,
             float* __restrict da, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const float* __restrict dcrow = dc + i * n;
    float* __restrict darow = da + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const float* __restrict brow = b + kk * n;
      float acc = 0.0f;
      for (int64_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      darow[kk] += acc;
    }
  }
}

// dB += A^T * dC
void gemm_at(const float* __restrict a, const float* __restrict dc,
             float* __restrict db, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const float* __restrict arow = a + i * k;
    const float* __restrict dcrow = dc + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const float av = arow[kk];
      float* __restrict dbrow = db + kk * n;
      for (int64_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

}  // namespace

// ---- Tensor basics -------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0f);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (float& v : t.node()->data) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("from_data: " + std::to_string(data.size()) +
                                " values for shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar_value(float v) { return from_data({1}, {v}); }

int64_t Tensor::rows() const {
  const Shape& s = node_->shape;
  return s.size() == 2 ? s[0] : 1;
}

int64_t Tensor::cols() const {
  const Shape& s = node_->shape;
  if (s.empty()) return 1;
  return s.back();
}

float Tensor::scalar() const {
  if (numel() != 1)
    throw std::invalid_argument("scalar: tensor has shape " + shape_str(shape()));
  return node_->data[0];
}

void Tensor::ensure_grad() { ensure_grad_of(node_.get()); }
void Tensor::zero_grad() { node_->grad.clear(); }

// ---- elementwise binary ops ----------------------------------------------

namespace {

// Operand layout relative to the [m,n] output.
enum class Bcast { kFull, kRow, kCol, kScalar };

Bcast classify(const Tensor& t, int64_t m, int64_t n, const char* op,
               const Tensor& other) {
  const int64_t r = t.rows(), c = t.cols();
  if (r == m && c == n) return Bcast::kFull;
  if (t.numel() == 1) return Bcast::kScalar;
  if (r == 1 && c == n) return Bcast::kRow;
  if (c == 1 && r == m) return Bcast::kCol;
  shape_error(op, t.shape(), other.shape());
}

inline int64_t map_index(Bcast b, int64_t i, int64_t j, int64_t n) {
  switch (b) {
    case Bcast::kFull: return i * n + j;
    case Bcast::kRow: return j;
    case Bcast::kCol: return i;
    default: return 0;
  }
}

enum class BinOp { kAdd, kSub, kMul };

Tensor binary_op(const char* name, BinOp kind, const Tensor& a, const Tensor& b) {
  check_rank(name, a);
  check_rank(name, b);
  const int64_t m = std::max(a.rows(), b.rows());
  const int64_t n = std::max(a.cols(), b.cols());
  const Bcast ba = classify(a, m, n, name, b);
  const Bcast bb = classify(b, m, n, name, a);
  Shape out_shape = (a.shape().size() >= 2 || b.shape().size() >= 2)
                        ? Shape{m, n}
                        : Shape{n};
  if (m > 1) out_shape = Shape{m, n};
  NodePtr node = new_node(out_shape, name, {a.node(), b.node()});

  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* po = node->data.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      const float va = pa[map_index(ba, i, j, n)];
      const float vb = pb[map_index(bb, i, j, n)];
      float r = 0.0f;
      switch (kind) {
        case BinOp::kAdd: r = va + vb; break;
        case BinOp::kSub: r = va - vb; break;
        case BinOp::kMul: r = va * vb; break;
      }
      po[i * n + j] = r;
    }
  }

  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    TensorNode* nb = b.node().get();
    node->backprop = [self, na, nb, kind, ba, bb, m, n]() {
      const float* g = self->grad.data();
      if (na->requires_grad) {
        ensure_grad_of(na);
        float* ga = na->grad.data();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            ga[map_index(ba, i, j, n)] +=
                (kind == BinOp::kMul)
                    ? g[i * n + j] * nb->data[map_index(bb, i, j, n)]
                    : g[i * n + j];
      }
      if (nb->requires_grad) {
        ensure_grad_of(nb);
        float* gb = nb->grad.data();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) {
            float gv = g[i * n + j];
            if (kind == BinOp::kMul)
              gv *= na->data[map_index(ba, i, j, n)];
            else if (kind == BinOp::kSub)
              gv = -gv;
            gb[map_index(bb, i, j, n)] += gv;
          }
      }
    };
  }
  return Tensor(node);
}

using UnaryFwd = float (*)(float);

Tensor unary_op(const char* name, const Tensor& a, UnaryFwd f,
                // dx = dfn(x, y, dy)
                float (*dfn)(float x, float y, float dy)) {
  check_rank(name, a);
  NodePtr node = new_node(a.shape(), name, {a.node()});
  const float* px = a.data().data();
  float* py = node->data.data();
  const int64_t count = node->numel();
  for (int64_t i = 0; i < count; ++i) py[i] = f(px[i]);

  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    node->backprop = [self, na, dfn, count]() {
      ensure_grad_of(na);
      const float* x = na->data.data();
      const float* y = self->data.data();
      const float* g = self->grad.data();
      float* gx = na->grad.data();
      for (int64_t i = 0; i < count; ++i) gx[i] += dfn(x[i], y[i], g[i]);
    };
  }
  return Tensor(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinOp::kMul, a, b); }

Tensor scale(const Tensor& a, float c) {
  check_rank("scale", a);
  NodePtr node = new_node(a.shape(), "scale", {a.node()});
  const float* px = a.data().data();
  float* py = node->data.data();
  const int64_t count = node->numel();
  for (int64_t i = 0; i < count; ++i) py[i] = c * px[i];
  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    node->backprop = [self, na, c, count]() {
      ensure_grad_of(na);
      for (int64_t i = 0; i < count; ++i) na->grad[i] += c * self->grad[i];
    };
  }
  return Tensor(node);
}

Tensor offset(const Tensor& a, float c) {
  check_rank("offset", a);
  NodePtr node = new_node(a.shape(), "offset", {a.node()});
  const float* px = a.data().data();
  float* py = node->data.data();
  const int64_t count = node->numel();
  for (int64_t i = 0; i < count; ++i) py[i] = px[i] + c;
  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    node->backprop = [self, na, count]() {
      ensure_grad_of(na);
      for (int64_t i = 0; i < count; ++i) na->grad[i] += self->grad[i];
    };
  }
  return Tensor(node);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0f); }

Tensor sin(const Tensor& a) {
  return unary_op("sin", a, [](float x) { return std::sin(x); },
                  [](float x, float, float dy) { return std::cos(x) * dy; });
}

Tensor cos(const Tensor& a) {
  return unary_op("cos", a, [](float x) { return std::cos(x); },
                  [](float x, float, float dy) { return -std::sin(x) * dy; });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a, [](float x) { return std::exp(x); },
                  [](float, float y, float dy) { return y * dy; });
}

Tensor relu(const Tensor& a) {
  return unary_op("relu", a, [](float x) { return x > 0.0f ? x : 0.0f; },
                  [](float x, float, float dy) { return x > 0.0f ? dy : 0.0f; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op("sigmoid", a,
                  [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
                  [](float, float y, float dy) { return y * (1.0f - y) * dy; });
}

Tensor abs(const Tensor& a) {
  return unary_op("abs", a, [](float x) { return std::fabs(x); },
                  [](float x, float, float dy) {
                    return x > 0.0f ? dy : (x < 0.0f ? -dy : 0.0f);
                  });
}

Tensor square(const Tensor& a) {
  return unary_op("square", a, [](float x) { return x * x; },
                  [](float x, float, float dy) { return 2.0f * x * dy; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank("matmul", a);
  check_rank("matmul", b);
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    shape_error("matmul", a.shape(), b.shape());
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  NodePtr node = new_node({m, n}, "matmul", {a.node(), b.node()});
  gemm(a.data().data(), b.data().data(), node->data.data(), m, k, n);

  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    TensorNode* nb = b.node().get();
    node->backprop = [self, na, nb, m, k, n]() {
      const float* g = self->grad.data();
      if (na->requires_grad) {
        ensure_grad_of(na);
        gemm_bt(g, nb->data.data(), na->grad.data(), m, k, n);
      }
      if (nb->requires_grad) {
        ensure_grad_of(nb);
        gemm_at(na->data.data(), g, nb->grad.data(), m, k, n);
      }
    };
  }
  return Tensor(node);
}

Tensor softmax_lastdim(const Tensor& a) {
  check_rank("softmax", a);
  const int64_t m = a.rows(), n = a.cols();
  NodePtr node = new_node(a.shape(), "softmax", {a.node()});
  const float* px = a.data().data();
  float* py = node->data.data();
  for (int64_t i = 0; i < m; ++i) {
    const float* row = px + i * n;
    float* out = py + i * n;
    float mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      out[j] = std::exp(row[j] - mx);
      total += out[j];
    }
    const float inv = static_cast<float>(1.0 / total);
    for (int64_t j = 0; j < n; ++j) out[j] *= inv;
  }

  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    node->backprop = [self, na, m, n]() {
      ensure_grad_of(na);
      const float* y = self->data.data();
      const float* g = self->grad.data();
      float* gx = na->grad.data();
      for (int64_t i = 0; i < m; ++i) {
        const float* yr = y + i * n;
        const float* gr = g + i * n;
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += double(gr[j]) * yr[j];
        for (int64_t j = 0; j < n; ++j)
          gx[i * n + j] += yr[j] * (gr[j] - static_cast<float>(dot));
      }
    };
  }
  return Tensor(node);
}

namespace {

Tensor reduce_op(const char* name, const Tensor& a, bool take_mean) {
  check_rank(name, a);
  NodePtr node = new_node({1}, name, {a.node()});
  const float* px = a.data().data();
  const int64_t count = a.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < count; ++i) acc += px[i];
  if (take_mean) acc /= double(count);
  node->data[0] = static_cast<float>(acc);

  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    const float w = take_mean ? 1.0f / float(count) : 1.0f;
    node->backprop = [self, na, w, count]() {
      ensure_grad_of(na);
      const float g = self->grad[0] * w;
      for (int64_t i = 0; i < count; ++i) na->grad[i] += g;
    };
  }
  return Tensor(node);
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_op("sum", a, false); }
Tensor mean(const Tensor& a) { return reduce_op("mean", a, true); }

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int64_t m = parts[0].rows();
  int64_t n = 0;
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const Tensor& p : parts) {
    check_rank("concat_cols", p);
    if (p.rows() != m) shape_error("concat_cols", parts[0].shape(), p.shape());
    n += p.cols();
    parents.push_back(p.node());
  }
  NodePtr node = new_node({m, n}, "concat_cols", parents);
  float* po = node->data.data();
  int64_t col0 = 0;
  for (const Tensor& p : parts) {
    const int64_t pc = p.cols();
    const float* pp = p.data().data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < pc; ++j) po[i * n + col0 + j] = pp[i * pc + j];
    col0 += pc;
  }

  if (node->requires_grad) {
    TensorNode* self = node.get();
    std::vector<TensorNode*> raw;
    std::vector<int64_t> widths;
    for (const Tensor& p : parts) {
      raw.push_back(p.node().get());
      widths.push_back(p.cols());
    }
    node->backprop = [self, raw, widths, m, n]() {
      const float* g = self->grad.data();
      int64_t col0 = 0;
      for (size_t pi = 0; pi < raw.size(); ++pi) {
        const int64_t pc = widths[pi];
        if (raw[pi]->requires_grad) {
          ensure_grad_of(raw[pi]);
          float* gp = raw[pi]->grad.data();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < pc; ++j)
              gp[i * pc + j] += g[i * n + col0 + j];
        }
        col0 += pc;
      }
    };
  }
  return Tensor(node);
}

Tensor slice_cols(const Tensor& a, int64_t first, int64_t count) {
  check_rank("slice_cols", a);
  const int64_t m = a.rows(), n = a.cols();
  if (first < 0 || count < 1 || first + count > n)
    throw std::invalid_argument("slice_cols: range [" + std::to_string(first) +
                                "," + std::to_string(first + count) +
                                ") out of " + shape_str(a.shape()));
  NodePtr node = new_node({m, count}, "slice_cols", {a.node()});
  const float* px = a.data().data();
  float* py = node->data.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < count; ++j) py[i * count + j] = px[i * n + first + j];

  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    node->backprop = [self, na, first, count, m, n]() {
      ensure_grad_of(na);
      const float* g = self->grad.data();
      float* gx = na->grad.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < count; ++j)
          gx[i * n + first + j] += g[i * count + j];
    };
  }
  return Tensor(node);
}

Tensor fourier_features(const Tensor& a, int bands, bool include_input,
                        float base_frequency) {
  check_rank("fourier_features", a);
  if (a.cols() != 1)
    throw std::invalid_argument("fourier_features: expects a [m,1] column, got " +
                                shape_str(a.shape()));
  if (bands < 0) throw std::invalid_argument("fourier_features: bands < 0");
  const int64_t m = a.rows();
  const int64_t inc = include_input ? 1 : 0;
  const int64_t n = 2 * bands + inc;
  NodePtr node = new_node({m, n}, "fourier_features", {a.node()});

  std::vector<float> freqs(static_cast<size_t>(bands));
  const float pi = 3.14159265358979323846f;
  float f = base_frequency;
  for (int k = 0; k < bands; ++k, f *= 2.0f) freqs[k] = f * pi;

  const float* px = a.data().data();
  float* py = node->data.data();
  for (int64_t i = 0; i < m; ++i) {
    const float v = px[i];
    float* row = py + i * n;
    if (inc) row[0] = v;
    for (int k = 0; k < bands; ++k) {
      const float fv = freqs[k] * v;
      row[inc + 2 * k] = std::sin(fv);
      row[inc + 2 * k + 1] = std::cos(fv);
    }
  }

  if (node->requires_grad) {
    TensorNode* self = node.get();
    TensorNode* na = a.node().get();
    node->backprop = [self, na, freqs, inc, m, n]() {
      ensure_grad_of(na);
      const float* y = self->data.data();
      const float* g = self->grad.data();
      float* gx = na->grad.data();
      const int bands = static_cast<int>(freqs.size());
      for (int64_t i = 0; i < m; ++i) {
        const float* yr = y + i * n;
        const float* gr = g + i * n;
        double acc = inc ? gr[0] : 0.0;
        for (int k = 0; k < bands; ++k) {
          const float s = yr[inc + 2 * k];
          const float c = yr[inc + 2 * k + 1];
          acc += double(freqs[k]) * (c * gr[inc + 2 * k] - s * gr[inc + 2 * k + 1]);
        }
        gx[i] += static_cast<float>(acc);
      }
    };
  }
  return Tensor(node);
}

NoGradScope::NoGradScope() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- backward pass --------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.valid()) throw std::invalid_argument("backward: empty tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw std::invalid_argument("backward: loss is not on the tape");

  // Iterative postorder DFS over the requires_grad subgraph. Parents are
  // stored in fixed creation order, so the schedule is deterministic.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  TensorNode* root = loss.node().get();
  ensure_grad_of(root);
  root->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

}  // namespace coordflow
