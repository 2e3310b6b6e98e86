#pragma once

// Tape-based reverse-mode differentiation over small dense tensors.
//
// Every op appends a node holding its value and, when recording, a closure that
// pushes the node's gradient into its inputs. Parameters are bound by pointer,
// so gradients accumulate straight into Parameter::grad.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "natlog/error.hpp"

namespace natlog::ad {

template <class T>
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, T(0)), grad(r * c, T(0)) {}

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  std::uint32_t id() const noexcept { return id_; }
  Tape<T>* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  std::size_t rows() const { return tape_->rows(id_); }
  std::size_t cols() const { return tape_->cols(id_); }
  std::size_t size() const { return rows() * cols(); }
  std::span<const T> value() const { return tape_->value(id_); }
  T operator[](std::size_t i) const { return tape_->value(id_)[i]; }
  T scalar() const { return tape_->value(id_)[0]; }
  std::span<const T> grad() const { return tape_->grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  /// With recording off, ops compute values only and build no closures.
  explicit Tape(bool recording = true) : recording_(recording) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  std::size_t rows(std::uint32_t id) const { return nodes_[id].rows; }
  std::size_t cols(std::uint32_t id) const { return nodes_[id].cols; }
  std::span<const T> value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return {n.vp, n.rows * n.cols};
  }
  std::span<T> grad_mut(std::uint32_t id) {
    Node& n = nodes_[id];
    return {n.gp, n.gp ? n.rows * n.cols : 0};
  }
  std::span<const T> grad(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return {n.gp, n.gp ? n.rows * n.cols : 0};
  }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].gp != nullptr; }

  // -- leaves -------------------------------------------------------------

  Var<T> constant(std::size_t rows, std::size_t cols, std::vector<T> data) {
    if (data.size() != rows * cols) throw ContractViolation("constant: shape mismatch");
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.val = std::move(data);
    n.vp = n.val.data();
    return push(std::move(n));
  }

  Var<T> constant(std::span<const T> data) {
    return constant(data.size(), 1, std::vector<T>(data.begin(), data.end()));
  }

  Var<T> param(Parameter<T>& p) {
    Node n;
    n.rows = p.rows;
    n.cols = p.cols;
    n.vp = p.value.data();
    if (recording_) n.gp = p.grad.data();
    return push(std::move(n));
  }

  /// Row `row` of a matrix parameter as a column vector (embedding lookup).
  Var<T> param_row(Parameter<T>& p, std::size_t row) {
    if (row >= p.rows) throw ContractViolation("param_row: index out of range");
    Node n;
    n.rows = p.cols;
    n.cols = 1;
    n.vp = p.value.data() + row * p.cols;
    if (recording_) n.gp = p.grad.data() + row * p.cols;
    return push(std::move(n));
  }

  // -- backward -----------------------------------------------------------

  /// Seeds d(out)/d(out) = 1 for a scalar output and runs every closure in reverse.
  void backward(Var<T> out) {
    if (!recording_) throw ContractViolation("backward on a non-recording tape");
    if (out.size() != 1) throw ContractViolation("backward expects a scalar output");
    if (!needs_grad(out.id())) return;
    grad_mut(out.id())[0] += T(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(*this);
    }
  }

  // Used by op implementations.
  Var<T> make(std::size_t rows, std::size_t cols, std::vector<T> value, bool needs_grad,
              Backward bw) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.val = std::move(value);
    n.vp = n.val.data();
    if (recording_ && needs_grad) {
      n.own_grad.assign(rows * cols, T(0));
      n.gp = n.own_grad.data();
      n.backward = std::move(bw);
    }
    return push(std::move(n));
  }

 private:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 1;
    std::vector<T> val;
    std::vector<T> own_grad;
    T* vp = nullptr;
    T* gp = nullptr;
    Backward backward;
  };

  Var<T> push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  bool recording_;
  std::vector<Node> nodes_;
};

// ===========================================================================
// Ops. Shapes are row-major; a vector is an (n x 1) matrix.

namespace detail {

template <class T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape() != b.tape()) throw ContractViolation("vars live on different tapes");
}

template <class T>
bool any_grad(Tape<T>& t, std::initializer_list<Var<T>> vs) {
  for (const auto& v : vs)
    if (t.needs_grad(v.id())) return true;
  return false;
}

}  // namespace detail

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape();
  if (a.size() != b.size()) throw ContractViolation("add: size mismatch");
  auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const auto ia = a.id(), ib = b.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(a.rows(), a.cols(), std::move(out), detail::any_grad(t, {a, b}),
                [ia, ib, self](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  for (auto id : {ia, ib}) {
                    if (!tp.needs_grad(id)) continue;
                    auto ga = tp.grad_mut(id);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }
                });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape();
  if (a.size() != b.size()) throw ContractViolation("sub: size mismatch");
  auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const auto ia = a.id(), ib = b.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(a.rows(), a.cols(), std::move(out), detail::any_grad(t, {a, b}),
                [ia, ib, self](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  if (tp.needs_grad(ia)) {
                    auto ga = tp.grad_mut(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }
                  if (tp.needs_grad(ib)) {
                    auto gb = tp.grad_mut(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                  }
                });
}

/// Elementwise product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape();
  if (a.size() != b.size()) throw ContractViolation("mul: size mismatch");
  auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(a.rows(), a.cols(), std::move(out), detail::any_grad(t, {a, b}),
                [ia, ib, self](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  auto av = tp.value(ia), bv = tp.value(ib);
                  if (tp.needs_grad(ia)) {
                    auto ga = tp.grad_mut(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                  }
                  if (tp.needs_grad(ib)) {
                    auto gb = tp.grad_mut(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                  }
                });
}

template <class T>
Var<T> scale(Var<T> a, T c) {
  Tape<T>& t = *a.tape();
  auto av = a.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  const auto ia = a.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(a.rows(), a.cols(), std::move(out), t.needs_grad(ia), [ia, self, c](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

/// y = W x for W (r x c), x (c).
template <class T>
Var<T> matvec(Var<T> w, Var<T> x) {
  detail::require_same_tape(w, x);
  Tape<T>& t = *w.tape();
  const std::size_t r = w.rows(), c = w.cols();
  if (x.size() != c) throw ContractViolation("matvec: dimension mismatch");
  auto wv = w.value(), xv = x.value();
  std::vector<T> out(r, T(0));
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = wv.data() + i * c;
    T acc = T(0);
    for (std::size_t k = 0; k < c; ++k) acc += row[k] * xv[k];
    out[i] = acc;
  }
  const auto iw = w.id(), ix = x.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(r, 1, std::move(out), detail::any_grad(t, {w, x}),
                [iw, ix, self, r, c](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  auto wv = tp.value(iw);
                  auto xv = tp.value(ix);
                  if (tp.needs_grad(iw)) {
                    auto gw = tp.grad_mut(iw);
                    for (std::size_t i = 0; i < r; ++i) {
                      const T gi = g[i];
                      if (gi == T(0)) continue;
                      T* row = gw.data() + i * c;
                      for (std::size_t k = 0; k < c; ++k) row[k] += gi * xv[k];
                    }
                  }
                  if (tp.needs_grad(ix)) {
                    auto gx = tp.grad_mut(ix);
                    for (std::size_t i = 0; i < r; ++i) {
                      const T gi = g[i];
                      if (gi == T(0)) continue;
                      const T* row = wv.data() + i * c;
                      for (std::size_t k = 0; k < c; ++k) gx[k] += gi * row[k];
                    }
                  }
                });
}

/// C = A B^T for A (n x k), B (m x k); C is (n x m).
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape();
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) throw ContractViolation("matmul_nt: inner dimension mismatch");
  auto av = a.value(), bv = b.value();
  std::vector<T> out(n * m, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      T acc = T(0);
      const T* ar = av.data() + i * k;
      const T* br = bv.data() + j * k;
      for (std::size_t q = 0; q < k; ++q) acc += ar[q] * br[q];
      out[i * m + j] = acc;
    }
  const auto ia = a.id(), ib = b.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(n, m, std::move(out), detail::any_grad(t, {a, b}),
                [ia, ib, self, n, k, m](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  auto av = tp.value(ia);
                  auto bv = tp.value(ib);
                  if (tp.needs_grad(ia)) {
                    auto ga = tp.grad_mut(ia);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j) {
                        const T gij = g[i * m + j];
                        if (gij == T(0)) continue;
                        const T* br = bv.data() + j * k;
                        T* gr = ga.data() + i * k;
                        for (std::size_t q = 0; q < k; ++q) gr[q] += gij * br[q];
                      }
                  }
                  if (tp.needs_grad(ib)) {
                    auto gb = tp.grad_mut(ib);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j) {
                        const T gij = g[i * m + j];
                        if (gij == T(0)) continue;
                        const T* ar = av.data() + i * k;
                        T* gr = gb.data() + j * k;
                        for (std::size_t q = 0; q < k; ++q) gr[q] += gij * ar[q];
                      }
                  }
                });
}

/// C = A^T B for A (k x n), B (k x m); C is (n x m).
template <class T>
Var<T> matmul_tn(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape();
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  if (b.rows() != k) throw ContractViolation("matmul_tn: inner dimension mismatch");
  auto av = a.value(), bv = b.value();
  std::vector<T> out(n * m, T(0));
  for (std::size_t q = 0; q < k; ++q)
    for (std::size_t i = 0; i < n; ++i) {
      const T aqi = av[q * n + i];
      if (aqi == T(0)) continue;
      const T* br = bv.data() + q * m;
      T* orow = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aqi * br[j];
    }
  const auto ia = a.id(), ib = b.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(n, m, std::move(out), detail::any_grad(t, {a, b}),
                [ia, ib, self, n, k, m](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  auto av = tp.value(ia);
                  auto bv = tp.value(ib);
                  // dA[q,i] = Σ_j B[q,j] G[i,j];  dB[q,j] = Σ_i A[q,i] G[i,j]
                  if (tp.needs_grad(ia)) {
                    auto ga = tp.grad_mut(ia);
                    for (std::size_t q = 0; q < k; ++q)
                      for (std::size_t i = 0; i < n; ++i) {
                        T acc = T(0);
                        const T* br = bv.data() + q * m;
                        const T* gr = g.data() + i * m;
                        for (std::size_t j = 0; j < m; ++j) acc += br[j] * gr[j];
                        ga[q * n + i] += acc;
                      }
                  }
                  if (tp.needs_grad(ib)) {
                    auto gb = tp.grad_mut(ib);
                    for (std::size_t q = 0; q < k; ++q)
                      for (std::size_t i = 0; i < n; ++i) {
                        const T aqi = av[q * n + i];
                        if (aqi == T(0)) continue;
                        const T* gr = g.data() + i * m;
                        T* gbr = gb.data() + q * m;
                        for (std::size_t j = 0; j < m; ++j) gbr[j] += aqi * gr[j];
                      }
                  }
                });
}

template <class T, class F, class DF>
Var<T> unary(Var<T> a, F f, DF df_from_output) {
  Tape<T>& t = *a.tape();
  auto av = a.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  const auto ia = a.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(a.rows(), a.cols(), std::move(out), t.needs_grad(ia),
                [ia, self, df_from_output](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  auto y = tp.value(self);
                  auto ga = tp.grad_mut(ia);
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df_from_output(y[i]);
                });
}

template <class T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
Var<T> tanh(Var<T> a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  return unary(a, [](T x) { return sigmoid_value(x); }, [](T y) { return y * (T(1) - y); });
}

/// log(max(x, floor)); entries at or below the floor get no gradient.
template <class T>
Var<T> log_floor(Var<T> a, T floor) {
  Tape<T>& t = *a.tape();
  auto av = a.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(av[i], floor));
  const auto ia = a.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(a.rows(), a.cols(), std::move(out), t.needs_grad(ia), [ia, self, floor](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto x = tp.value(ia);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > floor) ga[i] += g[i] / x[i];
  });
}

/// Vertical concatenation of column vectors.
template <class T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractViolation("concat: no inputs");
  Tape<T>& t = *parts[0].tape();
  std::vector<T> out;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> sizes;
  bool ng = false;
  for (const auto& p : parts) {
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id());
    sizes.push_back(v.size());
    ng = ng || t.needs_grad(p.id());
  }
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  const std::size_t total = out.size();
  return t.make(total, 1, std::move(out), ng,
                [ids = std::move(ids), sizes = std::move(sizes), self](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  std::size_t off = 0;
                  for (std::size_t p = 0; p < ids.size(); ++p) {
                    if (tp.needs_grad(ids[p])) {
                      auto gp = tp.grad_mut(ids[p]);
                      for (std::size_t i = 0; i < sizes[p]; ++i) gp[i] += g[off + i];
                    }
                    off += sizes[p];
                  }
                });
}

template <class T>
Var<T> concat(Var<T> a, Var<T> b) {
  const Var<T> parts[2] = {a, b};
  return concat<T>(std::span<const Var<T>>(parts));
}

/// Contiguous slice [offset, offset + len) of the flattened value, as a column vector.
template <class T>
Var<T> slice(Var<T> a, std::size_t offset, std::size_t len) {
  Tape<T>& t = *a.tape();
  if (offset + len > a.size()) throw ContractViolation("slice: out of range");
  auto av = a.value();
  std::vector<T> out(av.begin() + offset, av.begin() + offset + len);
  const auto ia = a.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(len, 1, std::move(out), t.needs_grad(ia), [ia, self, offset, len](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < len; ++i) ga[offset + i] += g[i];
  });
}

template <class T>
Var<T> row(Var<T> a, std::size_t i) {
  if (i >= a.rows()) throw ContractViolation("row: out of range");
  return slice(a, i * a.cols(), a.cols());
}

/// Column j of a matrix as a column vector.
template <class T>
Var<T> col(Var<T> a, std::size_t j) {
  Tape<T>& t = *a.tape();
  const std::size_t r = a.rows(), c = a.cols();
  if (j >= c) throw ContractViolation("col: out of range");
  auto av = a.value();
  std::vector<T> out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = av[i * c + j];
  const auto ia = a.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(r, 1, std::move(out), t.needs_grad(ia), [ia, self, r, c, j](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < r; ++i) ga[i * c + j] += g[i];
  });
}

/// Stack equally sized vectors as the rows of a matrix.
template <class T>
Var<T> stack_rows(std::span<const Var<T>> rows_in) {
  if (rows_in.empty()) throw ContractViolation("stack_rows: no inputs");
  const std::size_t c = rows_in[0].size();
  for (const auto& r : rows_in)
    if (r.size() != c) throw ContractViolation("stack_rows: ragged rows");
  Tape<T>& t = *rows_in[0].tape();
  Var<T> flat = concat(rows_in);
  // Reinterpret the concatenation as (n x c) with a shape-only node.
  auto fv = flat.value();
  std::vector<T> out(fv.begin(), fv.end());
  const auto iflat = flat.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(rows_in.size(), c, std::move(out), t.needs_grad(iflat), [iflat, self](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto gf = tp.grad_mut(iflat);
    for (std::size_t i = 0; i < g.size(); ++i) gf[i] += g[i];
  });
}

template <class T>
Var<T> dot(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape();
  if (a.size() != b.size()) throw ContractViolation("dot: size mismatch");
  auto av = a.value(), bv = b.value();
  T acc = T(0);
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(1, 1, std::vector<T>{acc}, detail::any_grad(t, {a, b}),
                [ia, ib, self](Tape<T>& tp) {
                  const T g = tp.grad(self)[0];
                  auto av = tp.value(ia), bv = tp.value(ib);
                  if (tp.needs_grad(ia)) {
                    auto ga = tp.grad_mut(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
                  }
                  if (tp.needs_grad(ib)) {
                    auto gb = tp.grad_mut(ib);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
                  }
                });
}

/// out[i] = <A[i,:], B[i,:]>.
template <class T>
Var<T> rowwise_dot(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape();
  const std::size_t n = a.rows(), k = a.cols();
  if (b.rows() != n || b.cols() != k) throw ContractViolation("rowwise_dot: shape mismatch");
  auto av = a.value(), bv = b.value();
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    T acc = T(0);
    for (std::size_t q = 0; q < k; ++q) acc += av[i * k + q] * bv[i * k + q];
    out[i] = acc;
  }
  const auto ia = a.id(), ib = b.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(n, 1, std::move(out), detail::any_grad(t, {a, b}),
                [ia, ib, self, n, k](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  auto av = tp.value(ia), bv = tp.value(ib);
                  if (tp.needs_grad(ia)) {
                    auto ga = tp.grad_mut(ia);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t q = 0; q < k; ++q) ga[i * k + q] += g[i] * bv[i * k + q];
                  }
                  if (tp.needs_grad(ib)) {
                    auto gb = tp.grad_mut(ib);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t q = 0; q < k; ++q) gb[i * k + q] += g[i] * av[i * k + q];
                  }
                });
}

namespace detail {
template <class T>
void softmax_inplace(T* x, std::size_t n, std::size_t stride) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i * stride]);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    x[i * stride] = std::exp(x[i * stride] - mx);
    total += x[i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) x[i * stride] /= total;
}
}  // namespace detail

/// Softmax over a flat vector.
template <class T>
Var<T> softmax(Var<T> a) {
  Tape<T>& t = *a.tape();
  auto av = a.value();
  std::vector<T> out(av.begin(), av.end());
  detail::softmax_inplace(out.data(), out.size(), 1);
  const auto ia = a.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(a.rows(), a.cols(), std::move(out), t.needs_grad(ia), [ia, self](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto y = tp.value(self);
    T s = T(0);
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * y[i];
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - s);
  });
}

/// Softmax down each column of a matrix.
template <class T>
Var<T> softmax_cols(Var<T> a) {
  Tape<T>& t = *a.tape();
  const std::size_t r = a.rows(), c = a.cols();
  auto av = a.value();
  std::vector<T> out(av.begin(), av.end());
  for (std::size_t j = 0; j < c; ++j) detail::softmax_inplace(out.data() + j, r, c);
  const auto ia = a.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(r, c, std::move(out), t.needs_grad(ia), [ia, self, r, c](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto y = tp.value(self);
    auto ga = tp.grad_mut(ia);
    for (std::size_t j = 0; j < c; ++j) {
      T s = T(0);
      for (std::size_t i = 0; i < r; ++i) s += g[i * c + j] * y[i * c + j];
      for (std::size_t i = 0; i < r; ++i) ga[i * c + j] += y[i * c + j] * (g[i * c + j] - s);
    }
  });
}

/// x * mask / Σ(x * mask). The mask is a constant 0/1 pattern.
template <class T>
Var<T> masked_normalize(Var<T> a, std::span<const T> mask) {
  Tape<T>& t = *a.tape();
  if (mask.size() != a.size()) throw ContractViolation("masked_normalize: mask size mismatch");
  auto av = a.value();
  std::vector<T> out(av.size());
  T total = T(0);
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] * mask[i];
    total += out[i];
  }
  if (!(total > T(0))) throw ContractViolation("normalize: zero total mass");
  for (auto& x : out) x /= total;
  const auto ia = a.id();
  std::vector<T> m(mask.begin(), mask.end());
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(a.rows(), a.cols(), std::move(out), t.needs_grad(ia),
                [ia, self, total, m = std::move(m)](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  auto y = tp.value(self);
                  T s = T(0);
                  for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * y[i];
                  auto ga = tp.grad_mut(ia);
                  for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += m[i] * (g[i] - s) / total;
                });
}

template <class T>
Var<T> normalize(Var<T> a) {
  std::vector<T> ones(a.size(), T(1));
  return masked_normalize<T>(a, std::span<const T>(ones));
}

/// Weighted sum Σ_t w[t] * xs[t] of equally sized vectors.
template <class T>
Var<T> weighted_sum(Var<T> w, std::span<const Var<T>> xs) {
  Tape<T>& t = *w.tape();
  if (w.size() != xs.size() || xs.empty()) throw ContractViolation("weighted_sum: size mismatch");
  const std::size_t d = xs[0].size();
  std::vector<T> out(d, T(0));
  auto wv = w.value();
  std::vector<std::uint32_t> ids;
  bool ng = t.needs_grad(w.id());
  for (std::size_t s = 0; s < xs.size(); ++s) {
    if (xs[s].size() != d) throw ContractViolation("weighted_sum: ragged inputs");
    auto xv = xs[s].value();
    for (std::size_t i = 0; i < d; ++i) out[i] += wv[s] * xv[i];
    ids.push_back(xs[s].id());
    ng = ng || t.needs_grad(xs[s].id());
  }
  const auto iw = w.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(d, 1, std::move(out), ng, [iw, ids = std::move(ids), self, d](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto wv = tp.value(iw);
    const bool gw_needed = tp.needs_grad(iw);
    for (std::size_t s = 0; s < ids.size(); ++s) {
      auto xv = tp.value(ids[s]);
      if (gw_needed) {
        T acc = T(0);
        for (std::size_t i = 0; i < d; ++i) acc += g[i] * xv[i];
        tp.grad_mut(iw)[s] += acc;
      }
      if (tp.needs_grad(ids[s])) {
        auto gx = tp.grad_mut(ids[s]);
        for (std::size_t i = 0; i < d; ++i) gx[i] += wv[s] * g[i];
      }
    }
  });
}

/// out[t] = <q, xs[t]>.
template <class T>
Var<T> dots(Var<T> q, std::span<const Var<T>> xs) {
  Tape<T>& t = *q.tape();
  const std::size_t d = q.size();
  auto qv = q.value();
  std::vector<T> out(xs.size(), T(0));
  std::vector<std::uint32_t> ids;
  bool ng = t.needs_grad(q.id());
  for (std::size_t s = 0; s < xs.size(); ++s) {
    if (xs[s].size() != d) throw ContractViolation("dots: size mismatch");
    auto xv = xs[s].value();
    T acc = T(0);
    for (std::size_t i = 0; i < d; ++i) acc += qv[i] * xv[i];
    out[s] = acc;
    ids.push_back(xs[s].id());
    ng = ng || t.needs_grad(xs[s].id());
  }
  const auto iq = q.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(xs.size(), 1, std::move(out), ng, [iq, ids = std::move(ids), self, d](Tape<T>& tp) {
    auto g = tp.grad(self);
    auto qv = tp.value(iq);
    for (std::size_t s = 0; s < ids.size(); ++s) {
      auto xv = tp.value(ids[s]);
      if (tp.needs_grad(iq)) {
        auto gq = tp.grad_mut(iq);
        for (std::size_t i = 0; i < d; ++i) gq[i] += g[s] * xv[i];
      }
      if (tp.needs_grad(ids[s])) {
        auto gx = tp.grad_mut(ids[s]);
        for (std::size_t i = 0; i < d; ++i) gx[i] += g[s] * qv[i];
      }
    }
  });
}

/// LSTM cell. `pre` holds the four gate pre-activations [i, f, g, o] (4h);
/// returns [h; c] (2h).
template <class T>
Var<T> lstm_cell(Var<T> pre, Var<T> c_prev) {
  detail::require_same_tape(pre, c_prev);
  Tape<T>& t = *pre.tape();
  const std::size_t h = c_prev.size();
  if (pre.size() != 4 * h) throw ContractViolation("lstm_cell: expected 4h pre-activations");
  auto pv = pre.value();
  auto cp = c_prev.value();
  std::vector<T> out(2 * h);
  // Cache gate activations after the [h; c] payload for the backward pass.
  std::vector<T> cache(5 * h);
  for (std::size_t k = 0; k < h; ++k) {
    const T ig = sigmoid_value(pv[k]);
    const T fg = sigmoid_value(pv[h + k]);
    const T gg = std::tanh(pv[2 * h + k]);
    const T og = sigmoid_value(pv[3 * h + k]);
    const T c = fg * cp[k] + ig * gg;
    const T tc = std::tanh(c);
    out[k] = og * tc;
    out[h + k] = c;
    cache[k] = ig;
    cache[h + k] = fg;
    cache[2 * h + k] = gg;
    cache[3 * h + k] = og;
    cache[4 * h + k] = tc;
  }
  const auto ip = pre.id(), ic = c_prev.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(2 * h, 1, std::move(out), detail::any_grad(t, {pre, c_prev}),
                [ip, ic, self, h, cache = std::move(cache)](Tape<T>& tp) {
                  auto g = tp.grad(self);
                  auto cp = tp.value(ic);
                  const bool gp = tp.needs_grad(ip), gc = tp.needs_grad(ic);
                  for (std::size_t k = 0; k < h; ++k) {
                    const T ig = cache[k], fg = cache[h + k], gg = cache[2 * h + k],
                            og = cache[3 * h + k], tc = cache[4 * h + k];
                    const T dh = g[k];
                    const T dc = g[h + k] + dh * og * (T(1) - tc * tc);
                    if (gp) {
                      auto gpre = tp.grad_mut(ip);
                      gpre[k] += dc * gg * ig * (T(1) - ig);
                      gpre[h + k] += dc * cp[k] * fg * (T(1) - fg);
                      gpre[2 * h + k] += dc * ig * (T(1) - gg * gg);
                      gpre[3 * h + k] += dh * tc * og * (T(1) - og);
                    }
                    if (gc) tp.grad_mut(ic)[k] += dc * fg;
                  }
                });
}

/// -log softmax(z)[target].
template <class T>
Var<T> softmax_nll(Var<T> z, std::size_t target) {
  Tape<T>& t = *z.tape();
  if (target >= z.size()) throw ContractViolation("softmax_nll: target out of range");
  auto zv = z.value();
  std::vector<T> p(zv.begin(), zv.end());
  detail::softmax_inplace(p.data(), p.size(), 1);
  const T loss = -std::log(p[target]);
  const auto iz = z.id();
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(1, 1, std::vector<T>{loss}, t.needs_grad(iz),
                [iz, self, target, p = std::move(p)](Tape<T>& tp) {
                  const T g = tp.grad(self)[0];
                  auto gz = tp.grad_mut(iz);
                  for (std::size_t i = 0; i < p.size(); ++i)
                    gz[i] += g * (p[i] - (i == target ? T(1) : T(0)));
                });
}

/// Sum of scalars (or of all entries of several vars).
template <class T>
Var<T> sum(std::span<const Var<T>> xs) {
  if (xs.empty()) throw ContractViolation("sum: no inputs");
  Tape<T>& t = *xs[0].tape();
  T acc = T(0);
  std::vector<std::uint32_t> ids;
  bool ng = false;
  for (const auto& x : xs) {
    for (T v : x.value()) acc += v;
    ids.push_back(x.id());
    ng = ng || t.needs_grad(x.id());
  }
  std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.make(1, 1, std::vector<T>{acc}, ng, [ids = std::move(ids), self](Tape<T>& tp) {
    const T g = tp.grad(self)[0];
    for (auto id : ids) {
      if (!tp.needs_grad(id)) continue;
      for (auto& x : tp.grad_mut(id)) x += g;
    }
  });
}

}  // namespace natlog::ad
