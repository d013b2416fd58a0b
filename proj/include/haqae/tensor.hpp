#ifndef HAQAE_TENSOR_HPP
#define HAQAE_TENSOR_HPP

// Dense 2-D tensors with reverse-mode differentiation over an explicit tape.
// All shapes are (rows, cols); vectors are (1, n) rows, scalars (1, 1).
// A tape and its tensors belong to one thread; parameters (leaves) may be
// shared read-only across threads.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace haqae {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

template <class Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // empty until first touched by backward
  bool requires_grad = false;
  const void* tape_id = nullptr;  // tape that produced this node, if any
};

template <class Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<Real>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape s) {
    auto n = std::make_shared<TensorNode<Real>>();
    n->shape = std::move(s);
    n->values.assign(numel(n->shape), Real(0));
    return Tensor(std::move(n));
  }
  static Tensor full(Shape s, Real v) {
    Tensor t = zeros(std::move(s));
    for (auto& x : t.node_->values) x = v;
    return t;
  }
  static Tensor from(Shape s, std::vector<Real> vals) {
    if (numel(s) != vals.size())
      throw std::invalid_argument("Tensor::from: shape " + shape_str(s) +
                                  " does not match " + std::to_string(vals.size()) + " values");
    auto n = std::make_shared<TensorNode<Real>>();
    n->shape = std::move(s);
    n->values = std::move(vals);
    return Tensor(std::move(n));
  }
  static Tensor scalar(Real v) { return from({1, 1}, {v}); }
  // Trainable leaf.
  static Tensor param(Shape s, std::vector<Real> vals) {
    Tensor t = from(std::move(s), std::move(vals));
    t.node_->requires_grad = true;
    return t;
  }
  static Tensor uniform(Shape s, Real lo, Real hi, std::mt19937_64& rng, bool requires_grad = true) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    Tensor t = zeros(std::move(s));
    for (auto& x : t.node_->values) x = static_cast<Real>(dist(rng));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape[0]; }
  std::size_t cols() const { return node_->shape[1]; }
  std::size_t size() const { return node_->values.size(); }
  std::vector<Real>& values() { return node_->values; }
  const std::vector<Real>& values() const { return node_->values; }
  std::vector<Real>& grad() { return node_->grad; }
  const std::vector<Real>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  Real value(std::size_t i) const { return node_->values[i]; }
  Real at(std::size_t r, std::size_t c) const { return node_->values[r * cols() + c]; }
  Real item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item: not a scalar, shape " + shape_str(shape()));
    return node_->values[0];
  }
  void zero_grad() { node_->grad.assign(node_->values.size(), Real(0)); }

  std::shared_ptr<TensorNode<Real>> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<Real>> node_;
};

template <class Real>
struct OpRecord {
  const char* kind;
  std::vector<std::shared_ptr<TensorNode<Real>>> inputs;
  std::shared_ptr<TensorNode<Real>> output;
  std::function<void()> backward;
};

template <class Real>
class Tape {
 public:
  std::vector<OpRecord<Real>> records;

  static Tape*& active() {
    thread_local Tape* t = nullptr;
    return t;
  }
};

// RAII activation of a tape for the current thread.
template <class Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& t) : prev_(Tape<Real>::active()) { Tape<Real>::active() = &t; }
  ~TapeScope() { Tape<Real>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Real>* prev_;
};

namespace detail {

// Gradient flows into a node iff it is a trainable leaf or was produced on
// the tape being replayed.
template <class Real>
inline bool needs_grad(const std::shared_ptr<TensorNode<Real>>& n, const void* tape) {
  return n->requires_grad || n->tape_id == tape;
}

template <class Real>
inline std::vector<Real>* grad_buffer(const std::shared_ptr<TensorNode<Real>>& n, const void* tape) {
  if (!needs_grad(n, tape)) return nullptr;
  if (n->grad.empty()) n->grad.assign(n->values.size(), Real(0));
  return &n->grad;
}

template <class Real>
inline void record(const char* kind, std::vector<std::shared_ptr<TensorNode<Real>>> inputs,
                   const Tensor<Real>& out, std::function<void()> bwd) {
  Tape<Real>* tape = Tape<Real>::active();
  if (!tape) return;
  out.node()->tape_id = tape;
  tape->records.push_back(OpRecord<Real>{kind, std::move(inputs), out.node(), std::move(bwd)});
}

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations. Each computes forward and, when a tape is active,
// records an adjoint closure.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, bool transpose_b = false) {
  const std::size_t m = a.rows(), k = a.cols();
  const std::size_t bk = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != bk) detail::shape_error("matmul", a.shape(), b.shape());
  Tensor<Real> out = Tensor<Real>::zeros({m, n});
  const Real* av = a.values().data();
  const Real* bv = b.values().data();
  Real* ov = out.values().data();
  if (!transpose_b) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const Real aip = av[i * k + p];
        for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += aip * bv[p * n + j];
      }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        Real acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
        ov[i * n + j] = acc;
      }
  }
  auto an = a.node(), bn = b.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("matmul", {an, bn}, out, [an, bn, on, tape, m, n, k, transpose_b]() {
    const Real* g = on->grad.data();
    if (auto* ga = detail::grad_buffer(an, tape)) {
      const Real* bv = bn->values.data();
      if (!transpose_b) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            Real acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
            (*ga)[i * k + p] += acc;
          }
      } else {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            Real acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[j * k + p];
            (*ga)[i * k + p] += acc;
          }
      }
    }
    if (auto* gb = detail::grad_buffer(bn, tape)) {
      const Real* av = an->values.data();
      if (!transpose_b) {
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t i = 0; i < m; ++i) {
            const Real aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * g[i * n + j];
          }
      } else {
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < m; ++i) {
            const Real gij = g[i * n + j];
            for (std::size_t p = 0; p < k; ++p) (*gb)[j * k + p] += gij * av[i * k + p];
          }
      }
    }
  });
  return out;
}

// Elementwise add; also accepts a (1, n) bias broadcast over the rows of a.
template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  const bool bias = (b.rows() == 1 && a.cols() == b.cols() && a.rows() != 1);
  if (!bias && a.shape() != b.shape()) detail::shape_error("add", a.shape(), b.shape());
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  const std::size_t rows = a.rows(), cols = a.cols();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out.values()[i * cols + j] = a.values()[i * cols + j] + b.values()[bias ? j : i * cols + j];
  auto an = a.node(), bn = b.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("add", {an, bn}, out, [an, bn, on, tape, rows, cols, bias]() {
    const Real* g = on->grad.data();
    if (auto* ga = detail::grad_buffer(an, tape))
      for (std::size_t i = 0; i < rows * cols; ++i) (*ga)[i] += g[i];
    if (auto* gb = detail::grad_buffer(bn, tape)) {
      if (bias) {
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) (*gb)[j] += g[i * cols + j];
      } else {
        for (std::size_t i = 0; i < rows * cols; ++i) (*gb)[i] += g[i];
      }
    }
  });
  return out;
}

template <class Real>
Tensor<Real> multiply(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) detail::shape_error("multiply", a.shape(), b.shape());
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  auto an = a.node(), bn = b.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("multiply", {an, bn}, out, [an, bn, on, tape]() {
    const Real* g = on->grad.data();
    if (auto* ga = detail::grad_buffer(an, tape))
      for (std::size_t i = 0; i < an->values.size(); ++i) (*ga)[i] += g[i] * bn->values[i];
    if (auto* gb = detail::grad_buffer(bn, tape))
      for (std::size_t i = 0; i < bn->values.size(); ++i) (*gb)[i] += g[i] * an->values[i];
  });
  return out;
}

// Multiply by a compile-time constant; recorded as a multiply with a frozen factor.
template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real c) {
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * c;
  auto an = a.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("multiply", {an}, out, [an, on, tape, c]() {
    if (auto* ga = detail::grad_buffer(an, tape))
      for (std::size_t i = 0; i < an->values.size(); ++i) (*ga)[i] += on->grad[i] * c;
  });
  return out;
}

template <class Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input list");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) detail::shape_error("concat_rows", parts[0].shape(), p.shape());
    rows += p.rows();
  }
  Tensor<Real> out = Tensor<Real>::zeros({rows, cols});
  std::size_t r = 0;
  std::vector<std::shared_ptr<TensorNode<Real>>> ins;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(r * cols);
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + r * cols);
    r += p.rows();
    ins.push_back(p.node());
  }
  auto on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("concat", ins, out, [ins, offsets, on, tape]() {
    for (std::size_t pi = 0; pi < ins.size(); ++pi) {
      if (auto* g = detail::grad_buffer(ins[pi], tape)) {
        const std::size_t off = offsets[pi];
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += on->grad[off + i];
      }
    }
  });
  return out;
}

template <class Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input list");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) detail::shape_error("concat_cols", parts[0].shape(), p.shape());
    cols += p.cols();
  }
  Tensor<Real> out = Tensor<Real>::zeros({rows, cols});
  std::vector<std::shared_ptr<TensorNode<Real>>> ins;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> widths;
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    offsets.push_back(c0);
    widths.push_back(p.cols());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j)
        out.values()[i * cols + c0 + j] = p.values()[i * p.cols() + j];
    c0 += p.cols();
    ins.push_back(p.node());
  }
  auto on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("concat", ins, out, [ins, offsets, widths, on, tape, rows, cols]() {
    for (std::size_t pi = 0; pi < ins.size(); ++pi) {
      if (auto* g = detail::grad_buffer(ins[pi], tape)) {
        const std::size_t off = offsets[pi], w = widths[pi];
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < w; ++j) (*g)[i * w + j] += on->grad[i * cols + off + j];
      }
    }
  });
  return out;
}

template <class Real>
Tensor<Real> slice_rows(const Tensor<Real>& t, std::size_t start, std::size_t len) {
  if (start + len > t.rows())
    throw std::invalid_argument("slice_rows: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") exceeds " + shape_str(t.shape()));
  const std::size_t cols = t.cols();
  Tensor<Real> out = Tensor<Real>::zeros({len, cols});
  std::copy(t.values().begin() + start * cols, t.values().begin() + (start + len) * cols,
            out.values().begin());
  auto tn = t.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("slice", {tn}, out, [tn, on, tape, start, len, cols]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < len * cols; ++i) (*g)[start * cols + i] += on->grad[i];
  });
  return out;
}

template <class Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, const std::vector<int>& ids) {
  const std::size_t d = table.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
      throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                  " out of range for table " + shape_str(table.shape()));
  Tensor<Real> out = Tensor<Real>::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(table.values().begin() + ids[i] * d, table.values().begin() + (ids[i] + 1) * d,
              out.values().begin() + i * d);
  auto tn = table.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("embedding_lookup", {tn}, out, [tn, on, tape, ids, d]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[ids[i] * d + j] += on->grad[i * d + j];
  });
  return out;
}

template <class Real>
Tensor<Real> tanh_op(const Tensor<Real>& t) {
  Tensor<Real> out = Tensor<Real>::zeros(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out.values()[i] = std::tanh(t.values()[i]);
  auto tn = t.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("tanh", {tn}, out, [tn, on, tape]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < tn->values.size(); ++i) {
        const Real y = on->values[i];
        (*g)[i] += on->grad[i] * (Real(1) - y * y);
      }
  });
  return out;
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& t) {
  Tensor<Real> out = Tensor<Real>::zeros(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out.values()[i] = Real(1) / (Real(1) + std::exp(-t.values()[i]));
  auto tn = t.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("sigmoid", {tn}, out, [tn, on, tape]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < tn->values.size(); ++i) {
        const Real y = on->values[i];
        (*g)[i] += on->grad[i] * y * (Real(1) - y);
      }
  });
  return out;
}

// Row-wise softmax with max subtraction.
template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& t) {
  const std::size_t rows = t.rows(), cols = t.cols();
  Tensor<Real> out = Tensor<Real>::zeros(t.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    Real mx = t.values()[i * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, t.values()[i * cols + j]);
    Real z = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const Real e = std::exp(t.values()[i * cols + j] - mx);
      out.values()[i * cols + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < cols; ++j) out.values()[i * cols + j] /= z;
  }
  auto tn = t.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("softmax_rows", {tn}, out, [tn, on, tape, rows, cols]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < rows; ++i) {
        Real dot = 0;
        for (std::size_t j = 0; j < cols; ++j) dot += on->grad[i * cols + j] * on->values[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
          (*g)[i * cols + j] += on->values[i * cols + j] * (on->grad[i * cols + j] - dot);
      }
  });
  return out;
}

template <class Real>
Tensor<Real> log_op(const Tensor<Real>& t) {
  Tensor<Real> out = Tensor<Real>::zeros(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t.values()[i] > Real(0)))
      throw std::domain_error("log: non-positive input " + std::to_string(static_cast<double>(t.values()[i])));
    out.values()[i] = std::log(t.values()[i]);
  }
  auto tn = t.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("log", {tn}, out, [tn, on, tape]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < tn->values.size(); ++i) (*g)[i] += on->grad[i] / tn->values[i];
  });
  return out;
}

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& t) {
  Real s = 0;
  for (Real v : t.values()) s += v;
  Tensor<Real> out = Tensor<Real>::scalar(s);
  auto tn = t.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("sum", {tn}, out, [tn, on, tape]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += on->grad[0];
  });
  return out;
}

template <class Real>
Tensor<Real> mean_all(const Tensor<Real>& t) {
  Real s = 0;
  for (Real v : t.values()) s += v;
  const Real inv = Real(1) / static_cast<Real>(t.size());
  Tensor<Real> out = Tensor<Real>::scalar(s * inv);
  auto tn = t.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("mean", {tn}, out, [tn, on, tape, inv]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += on->grad[0] * inv;
  });
  return out;
}

// Column means: (r, c) -> (1, c), the mean over rows.
template <class Real>
Tensor<Real> mean_rows(const Tensor<Real>& t) {
  const std::size_t rows = t.rows(), cols = t.cols();
  Tensor<Real> out = Tensor<Real>::zeros({1, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.values()[j] += t.values()[i * cols + j];
  const Real inv = Real(1) / static_cast<Real>(rows);
  for (std::size_t j = 0; j < cols; ++j) out.values()[j] *= inv;
  auto tn = t.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("mean", {tn}, out, [tn, on, tape, rows, cols, inv]() {
    if (auto* g = detail::grad_buffer(tn, tape))
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) (*g)[i * cols + j] += on->grad[j] * inv;
  });
  return out;
}

template <class Real>
Tensor<Real> squared_l2_distance(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) detail::shape_error("squared_l2_distance", a.shape(), b.shape());
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Real d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  Tensor<Real> out = Tensor<Real>::scalar(s);
  auto an = a.node(), bn = b.node(), on = out.node();
  const void* tape = Tape<Real>::active();
  detail::record<Real>("squared_l2_distance", {an, bn}, out, [an, bn, on, tape]() {
    const Real g = on->grad[0];
    if (auto* ga = detail::grad_buffer(an, tape))
      for (std::size_t i = 0; i < an->values.size(); ++i)
        (*ga)[i] += Real(2) * g * (an->values[i] - bn->values[i]);
    if (auto* gb = detail::grad_buffer(bn, tape))
      for (std::size_t i = 0; i < bn->values.size(); ++i)
        (*gb)[i] += Real(2) * g * (bn->values[i] - an->values[i]);
  });
  return out;
}

// ---------------------------------------------------------------------------
// stop_gradient: forward identity, no backward edge. During finite-difference
// checking the output is held at the values captured on the recording pass,
// which is exactly the "treated as a constant" semantics being differentiated.
// ---------------------------------------------------------------------------

template <class Real>
struct SgFreeze {
  enum class Mode { off, record, replay };
  Mode mode = Mode::off;
  std::vector<std::vector<Real>> store;
  std::size_t cursor = 0;

  static SgFreeze*& active() {
    thread_local SgFreeze* p = nullptr;
    return p;
  }
};

template <class Real>
Tensor<Real> stop_gradient(const Tensor<Real>& t) {
  auto* fz = SgFreeze<Real>::active();
  if (fz && fz->mode == SgFreeze<Real>::Mode::replay) {
    if (fz->cursor >= fz->store.size())
      throw std::logic_error("stop_gradient: freeze replay ran past recorded values");
    Tensor<Real> out = Tensor<Real>::from(t.shape(), fz->store[fz->cursor++]);
    return out;
  }
  Tensor<Real> out = Tensor<Real>::from(t.shape(), t.values());
  if (fz && fz->mode == SgFreeze<Real>::Mode::record) fz->store.push_back(out.values());
  return out;  // fresh constant leaf: no producer, no requires_grad
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class Real>
void backward(Tape<Real>& tape, const Tensor<Real>& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (loss.node()->tape_id != &tape)
    throw std::invalid_argument("backward: loss was not produced on this tape");
  // Intermediates get fresh zero grads; leaves keep (and accumulate into) theirs.
  for (auto& rec : tape.records) rec.output->grad.assign(rec.output->values.size(), Real(0));
  loss.node()->grad[0] = Real(1);
  for (auto it = tape.records.rbegin(); it != tape.records.rend(); ++it)
    if (it->backward) it->backward();
}

}  // namespace haqae

#endif  // HAQAE_TENSOR_HPP
