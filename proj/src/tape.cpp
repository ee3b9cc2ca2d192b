// SPDX-License-Identifier: Apache-2.0
#include "retr/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "retr/util/threading.hpp"

namespace retr::ad {

namespace {

enum BinKind { kAdd, kSub, kMul, kDiv };
enum UnKind { kExp, kLog, kSqrt, kRelu, kAbs, kSigmoid, kSoftplus };

// Elementwise broadcast plan: either same-shape, one side a single element,
// or equal-rank with size-1 axes expanded.
struct BcastPlan {
  Shape out;
  bool same = false;
  bool a_scalar = false;
  bool b_scalar = false;
  std::vector<int64_t> a_stride, b_stride;  // per out axis, 0 on broadcast axes
};

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

BcastPlan make_plan(const char* op, const Shape& a, const Shape& b) {
  BcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  if (shape_numel(a) == 1) {
    p.out = b;
    p.a_scalar = true;
    return p;
  }
  if (shape_numel(b) == 1) {
    p.out = a;
    p.b_scalar = true;
    return p;
  }
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
  }
  p.out.resize(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      p.out[i] = a[i];
    } else if (a[i] == 1 || b[i] == 1) {
      p.out[i] = std::max(a[i], b[i]);
    } else {
      throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                  shape_str(b));
    }
  }
  auto sa = row_major_strides(a), sb = row_major_strides(b);
  p.a_stride.resize(a.size());
  p.b_stride.resize(b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    p.a_stride[i] = (a[i] == 1 && p.out[i] != 1) ? 0 : sa[i];
    p.b_stride[i] = (b[i] == 1 && p.out[i] != 1) ? 0 : sb[i];
  }
  return p;
}

// Calls fn(out_flat, a_flat, b_flat) over the whole broadcast output.
template <typename F>
void walk(const BcastPlan& p, F&& fn) {
  int64_t n = shape_numel(p.out);
  if (p.same) {
    for (int64_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  if (p.a_scalar) {
    for (int64_t i = 0; i < n; ++i) fn(i, 0, i);
    return;
  }
  if (p.b_scalar) {
    for (int64_t i = 0; i < n; ++i) fn(i, i, 0);
    return;
  }
  int rank = static_cast<int>(p.out.size());
  std::vector<int> idx(rank, 0);
  int64_t ai = 0, bi = 0;
  for (int64_t o = 0; o < n; ++o) {
    fn(o, ai, bi);
    for (int ax = rank - 1; ax >= 0; --ax) {
      ++idx[ax];
      ai += p.a_stride[ax];
      bi += p.b_stride[ax];
      if (idx[ax] < p.out[ax]) break;
      idx[ax] = 0;
      ai -= p.a_stride[ax] * p.out[ax];
      bi -= p.b_stride[ax] * p.out[ax];
    }
  }
}

// Splits a shape around one axis for reductions: [outer, n, inner].
void axis_split(const Shape& s, int axis, int64_t* outer, int64_t* n, int64_t* inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= s[i];
  *n = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) *inner *= s[i];
}

void check_axis(const char* op, const Shape& s, int axis) {
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for " + shape_str(s));
  }
}

// C[m,n] += / = A[m,k] * B[k,n] (plain, row-major). Parallel over rows of C;
// each row is written by exactly one chunk, so results are identical for any
// thread budget.
void mm(const double* a, const double* b, int64_t m, int64_t k, int64_t n, double* c) {
  auto body = [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      double* ci = c + i * n;
      std::fill(ci, ci + n, 0.0);
      const double* ai = a + i * k;
      for (int64_t l = 0; l < k; ++l) {
        double av = ai[l];
        if (av == 0.0) continue;
        const double* bl = b + l * n;
        for (int64_t j = 0; j < n; ++j) ci[j] += av * bl[j];
      }
    }
  };
  if (m * k * n >= (int64_t{1} << 18) && thread_count() > 1) {
    parallel_chunks(m, thread_count() * 2, [&](int, int64_t b0, int64_t e0) { body(b0, e0); });
  } else {
    body(0, m);
  }
}

// dA[m,k] += G[m,n] * B^T  (dot of contiguous rows)
void mm_gbt_acc(const double* g, const double* b, int64_t m, int64_t k, int64_t n, double* da) {
  for (int64_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    double* di = da + i * k;
    for (int64_t l = 0; l < k; ++l) {
      const double* bl = b + l * n;
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j) s += gi[j] * bl[j];
      di[l] += s;
    }
  }
}

// dB[k,n] += A^T * G[m,n]
void mm_atg_acc(const double* a, const double* g, int64_t m, int64_t k, int64_t n, double* db) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * n;
    for (int64_t l = 0; l < k; ++l) {
      double av = ai[l];
      if (av == 0.0) continue;
      double* dl = db + l * n;
      for (int64_t j = 0; j < n; ++j) dl[j] += av * gi[j];
    }
  }
}

// Ascending-order sum; bit-identical under any permutation of the inputs.
double sorted_sum(double* vals, int m) {
  std::sort(vals, vals + m);
  double s = 0.0;
  for (int i = 0; i < m; ++i) s += vals[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gradients

Tensor Gradients::grad(const Tensor& t) const {
  if (!t.requires_grad()) {
    throw std::invalid_argument("Gradients::grad: tensor is a constant");
  }
  const auto& slot = slots_[t.vid()];
  if (slot.empty()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), slot);
}

const std::vector<double>* Gradients::find(const Tensor& t) const {
  if (!t.requires_grad()) return nullptr;
  const auto& slot = slots_[t.vid()];
  return slot.empty() ? nullptr : &slot;
}

// ---------------------------------------------------------------------------
// Tape plumbing

struct Tape::BackCtx {
  const Tape* tape;
  std::vector<std::vector<double>>* g;

  const std::vector<double>* out(int vid) const {
    const auto& v = (*g)[vid];
    return v.empty() ? nullptr : &v;
  }
  std::vector<double>& acc(int vid) {
    auto& v = (*g)[vid];
    if (v.empty()) v.assign(shape_numel(tape->value_shapes_[vid]), 0.0);
    return v;
  }
};

Tensor Tape::make_value(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.vid_ = static_cast<int>(value_shapes_.size());
  t.tape_ = this;
  value_shapes_.push_back(t.shape_);
  return t;
}

void Tape::record(std::vector<int> out_vids, BackFn back) {
  nodes_.push_back(Node{std::move(out_vids), std::move(back)});
}

bool Tape::on_tape(const Tensor& t) const { return t.vid_ >= 0 && t.tape_ == this; }

void Tape::check_input(const char* op, const Tensor& t) const {
  if (!t.defined()) {
    throw std::invalid_argument(std::string(op) + ": undefined tensor input");
  }
  if (t.vid_ >= 0 && t.tape_ != this) {
    throw std::invalid_argument(std::string(op) + ": input belongs to a different tape");
  }
  const auto& d = t.data();
  for (size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw std::domain_error(std::string(op) + ": non-finite input at flat index " +
                              std::to_string(i));
    }
  }
}

Tensor Tape::leaf(const Tensor& value) {
  check_input("leaf", value);
  if (on_tape(value)) {
    throw std::invalid_argument("leaf: tensor is already registered on this tape");
  }
  Tensor t;
  t.shape_ = value.shape_;
  t.data_ = value.data_;
  t.vid_ = static_cast<int>(value_shapes_.size());
  t.tape_ = this;
  value_shapes_.push_back(t.shape_);
  record({t.vid_}, nullptr);
  return t;
}

// ---------------------------------------------------------------------------
// Elementwise binary

Tensor Tape::binary_op(const char* name, const Tensor& a, const Tensor& b, int kind) {
  check_input(name, a);
  check_input(name, b);
  BcastPlan plan = make_plan(name, a.shape(), b.shape());
  std::vector<double> out(shape_numel(plan.out));
  const auto& da = a.data();
  const auto& db = b.data();
  switch (kind) {
    case kAdd: walk(plan, [&](int64_t o, int64_t i, int64_t j) { out[o] = da[i] + db[j]; }); break;
    case kSub: walk(plan, [&](int64_t o, int64_t i, int64_t j) { out[o] = da[i] - db[j]; }); break;
    case kMul: walk(plan, [&](int64_t o, int64_t i, int64_t j) { out[o] = da[i] * db[j]; }); break;
    case kDiv: walk(plan, [&](int64_t o, int64_t i, int64_t j) { out[o] = da[i] / db[j]; }); break;
  }
  bool rec = on_tape(a) || on_tape(b);
  if (!rec) return Tensor(plan.out, std::move(out));
  Tensor res = make_value(plan.out, std::move(out));
  int av = on_tape(a) ? a.vid_ : -1;
  int bv = on_tape(b) ? b.vid_ : -1;
  auto pa = a.data_;
  auto pb = b.data_;
  int ov = res.vid_;
  record({ov}, [plan, av, bv, pa, pb, ov, kind](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    std::vector<double>* ga = av >= 0 ? &ctx.acc(av) : nullptr;
    std::vector<double>* gb = bv >= 0 ? &ctx.acc(bv) : nullptr;
    const auto& da = *pa;
    const auto& db = *pb;
    walk(plan, [&](int64_t o, int64_t i, int64_t j) {
      double go = (*g)[o];
      switch (kind) {
        case kAdd:
          if (ga) (*ga)[i] += go;
          if (gb) (*gb)[j] += go;
          break;
        case kSub:
          if (ga) (*ga)[i] += go;
          if (gb) (*gb)[j] -= go;
          break;
        case kMul:
          if (ga) (*ga)[i] += go * db[j];
          if (gb) (*gb)[j] += go * da[i];
          break;
        case kDiv:
          if (ga) (*ga)[i] += go / db[j];
          if (gb) (*gb)[j] -= go * da[i] / (db[j] * db[j]);
          break;
      }
    });
  });
  return res;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return binary_op("add", a, b, kAdd); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return binary_op("sub", a, b, kSub); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return binary_op("mul", a, b, kMul); }
Tensor Tape::div(const Tensor& a, const Tensor& b) { return binary_op("div", a, b, kDiv); }

// ---------------------------------------------------------------------------
// Elementwise unary

Tensor Tape::unary_op(const char* name, const Tensor& x, int kind) {
  check_input(name, x);
  const auto& dx = x.data();
  if (kind == kLog) {
    for (size_t i = 0; i < dx.size(); ++i) {
      if (dx[i] <= 0.0) {
        throw std::domain_error(std::string(name) + ": non-positive input at flat index " +
                                std::to_string(i));
      }
    }
  }
  if (kind == kSqrt) {
    for (size_t i = 0; i < dx.size(); ++i) {
      if (dx[i] < 0.0) {
        throw std::domain_error(std::string(name) + ": negative input at flat index " +
                                std::to_string(i));
      }
    }
  }
  std::vector<double> out(dx.size());
  for (size_t i = 0; i < dx.size(); ++i) {
    double v = dx[i];
    switch (kind) {
      case kExp: out[i] = std::exp(v); break;
      case kLog: out[i] = std::log(v); break;
      case kSqrt: out[i] = std::sqrt(v); break;
      case kRelu: out[i] = v > 0.0 ? v : 0.0; break;
      case kAbs: out[i] = std::fabs(v); break;
      case kSigmoid:
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        break;
      case kSoftplus: out[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); break;
    }
  }
  if (!on_tape(x)) return Tensor(x.shape(), std::move(out));
  Tensor res = make_value(x.shape(), std::move(out));
  int xv = x.vid_, ov = res.vid_;
  auto px = x.data_;
  auto pout = res.data_;
  record({ov}, [xv, ov, px, pout, kind](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    const auto& xin = *px;
    const auto& y = *pout;
    for (size_t i = 0; i < gx.size(); ++i) {
      double go = (*g)[i];
      switch (kind) {
        case kExp: gx[i] += go * y[i]; break;
        case kLog: gx[i] += go / xin[i]; break;
        case kSqrt:
          // subgradient 0 at exactly zero; keeps losses like sqrt(sum sq)
          // finite when the residual vanishes
          if (y[i] != 0.0) gx[i] += go * 0.5 / y[i];
          break;
        case kRelu: gx[i] += xin[i] > 0.0 ? go : 0.0; break;
        case kAbs: gx[i] += xin[i] > 0.0 ? go : (xin[i] < 0.0 ? -go : 0.0); break;
        case kSigmoid: gx[i] += go * y[i] * (1.0 - y[i]); break;
        case kSoftplus: {
          double v = xin[i];
          double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
          gx[i] += go * s;
          break;
        }
      }
    }
  });
  return res;
}

Tensor Tape::exp(const Tensor& x) { return unary_op("exp", x, kExp); }
Tensor Tape::log(const Tensor& x) { return unary_op("log", x, kLog); }
Tensor Tape::sqrt(const Tensor& x) { return unary_op("sqrt", x, kSqrt); }
Tensor Tape::relu(const Tensor& x) { return unary_op("relu", x, kRelu); }
Tensor Tape::abs(const Tensor& x) { return unary_op("abs", x, kAbs); }
Tensor Tape::sigmoid(const Tensor& x) { return unary_op("sigmoid", x, kSigmoid); }
Tensor Tape::softplus(const Tensor& x) { return unary_op("softplus", x, kSoftplus); }

// ---------------------------------------------------------------------------
// Matmul / structure

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check_input("matmul", a);
  check_input("matmul", b);
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  mm(a.data().data(), b.data().data(), m, k, n, out.data());
  bool rec = on_tape(a) || on_tape(b);
  if (!rec) return Tensor({a.shape()[0], b.shape()[1]}, std::move(out));
  Tensor res = make_value({a.shape()[0], b.shape()[1]}, std::move(out));
  int av = on_tape(a) ? a.vid_ : -1;
  int bv = on_tape(b) ? b.vid_ : -1;
  auto pa = a.data_;
  auto pb = b.data_;
  int ov = res.vid_;
  record({ov}, [av, bv, pa, pb, ov, m, k, n](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    if (av >= 0) mm_gbt_acc(g->data(), pb->data(), m, k, n, ctx.acc(av).data());
    if (bv >= 0) mm_atg_acc(pa->data(), g->data(), m, k, n, ctx.acc(bv).data());
  });
  return res;
}

Tensor Tape::transpose(const Tensor& x) {
  check_input("transpose", x);
  if (x.rank() != 2) {
    throw std::invalid_argument("transpose: expected rank 2, got " + shape_str(x.shape()));
  }
  int64_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r * c);
  const auto& dx = x.data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[j * r + i] = dx[i * c + j];
  if (!on_tape(x)) return Tensor({x.shape()[1], x.shape()[0]}, std::move(out));
  Tensor res = make_value({x.shape()[1], x.shape()[0]}, std::move(out));
  int xv = x.vid_, ov = res.vid_;
  record({ov}, [xv, ov, r, c](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) gx[i * c + j] += (*g)[j * r + i];
  });
  return res;
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  check_input("reshape", x);
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  }
  if (!on_tape(x)) return Tensor(std::move(shape), x.data());
  Tensor res = make_value(std::move(shape), x.data());
  int xv = x.vid_, ov = res.vid_;
  record({ov}, [xv, ov](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i];
  });
  return res;
}

Tensor Tape::broadcast_to(const Tensor& x, const Shape& shape) {
  check_input("broadcast_to", x);
  if (x.rank() != static_cast<int>(shape.size())) {
    throw std::invalid_argument("broadcast_to: rank mismatch " + shape_str(x.shape()) + " to " +
                                shape_str(shape));
  }
  for (int i = 0; i < x.rank(); ++i) {
    if (x.shape()[i] != shape[i] && x.shape()[i] != 1) {
      throw std::invalid_argument("broadcast_to: cannot expand " + shape_str(x.shape()) + " to " +
                                  shape_str(shape));
    }
  }
  BcastPlan plan = make_plan("broadcast_to", x.shape(), shape);
  std::vector<double> out(shape_numel(shape));
  const auto& dx = x.data();
  walk(plan, [&](int64_t o, int64_t i, int64_t) { out[o] = dx[i]; });
  if (!on_tape(x)) return Tensor(shape, std::move(out));
  Tensor res = make_value(shape, std::move(out));
  int xv = x.vid_, ov = res.vid_;
  record({ov}, [plan, xv, ov](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    walk(plan, [&](int64_t o, int64_t i, int64_t) { gx[i] += (*g)[o]; });
  });
  return res;
}

Tensor Tape::concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input list");
  for (const auto& p : parts) check_input("concat", p);
  const Shape& s0 = parts[0].shape();
  check_axis("concat", s0, axis);
  Shape out_shape = s0;
  int axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(s0.size())) {
      throw std::invalid_argument("concat: rank mismatch " + shape_str(p.shape()) + " vs " +
                                  shape_str(s0));
    }
    for (int i = 0; i < p.rank(); ++i) {
      if (i != axis && p.shape()[i] != s0[i]) {
        throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                                    shape_str(s0));
      }
    }
    axis_total += p.shape()[axis];
  }
  out_shape[axis] = axis_total;
  int64_t outer, n_out, inner;
  axis_split(out_shape, axis, &outer, &n_out, &inner);
  std::vector<double> out(shape_numel(out_shape));
  int64_t offset = 0;
  for (const auto& p : parts) {
    int64_t np = p.shape()[axis];
    const auto& dp = p.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + (o * n_out + offset) * inner, dp.data() + o * np * inner,
                  sizeof(double) * np * inner);
    }
    offset += np;
  }
  bool rec = false;
  for (const auto& p : parts) rec = rec || on_tape(p);
  if (!rec) return Tensor(out_shape, std::move(out));
  Tensor res = make_value(out_shape, std::move(out));
  std::vector<int> vids;
  std::vector<int64_t> widths;
  for (const auto& p : parts) {
    vids.push_back(on_tape(p) ? p.vid_ : -1);
    widths.push_back(p.shape()[axis]);
  }
  int ov = res.vid_;
  record({ov}, [vids, widths, ov, outer, n_out, inner](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    int64_t offset = 0;
    for (size_t pi = 0; pi < vids.size(); ++pi) {
      int64_t np = widths[pi];
      if (vids[pi] >= 0) {
        auto& gx = ctx.acc(vids[pi]);
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = g->data() + (o * n_out + offset) * inner;
          double* dst = gx.data() + o * np * inner;
          for (int64_t i = 0; i < np * inner; ++i) dst[i] += src[i];
        }
      }
      offset += np;
    }
  });
  return res;
}

Tensor Tape::slice(const Tensor& x, int axis, int start, int len) {
  check_input("slice", x);
  check_axis("slice", x.shape(), axis);
  if (start < 0 || len <= 0 || start + len > x.shape()[axis]) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of bounds for " +
                                shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  int64_t outer, n_in, inner;
  axis_split(x.shape(), axis, &outer, &n_in, &inner);
  std::vector<double> out(shape_numel(out_shape));
  const auto& dx = x.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * len * inner, dx.data() + (o * n_in + start) * inner,
                sizeof(double) * len * inner);
  }
  if (!on_tape(x)) return Tensor(out_shape, std::move(out));
  Tensor res = make_value(out_shape, std::move(out));
  int xv = x.vid_, ov = res.vid_;
  record({ov}, [xv, ov, outer, n_in, inner, start, len](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = g->data() + o * len * inner;
      double* dst = gx.data() + (o * n_in + start) * inner;
      for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
  return res;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor Tape::sum(const Tensor& x) {
  check_input("sum", x);
  double s = 0.0;
  for (double v : x.data()) s += v;
  if (!on_tape(x)) return Tensor::scalar(s);
  Tensor res = make_value({1}, {s});
  int xv = x.vid_, ov = res.vid_;
  record({ov}, [xv, ov](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    for (auto& v : gx) v += (*g)[0];
  });
  return res;
}

Tensor Tape::mean(const Tensor& x) {
  Tensor s = sum(x);
  return mul(s, 1.0 / static_cast<double>(x.numel()));
}

Tensor Tape::reduce_op(const char* name, const Tensor& x, int axis, bool is_mean) {
  check_input(name, x);
  check_axis(name, x.shape(), axis);
  int64_t outer, n, inner;
  axis_split(x.shape(), axis, &outer, &n, &inner);
  Shape out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.shape()[i]);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(outer * inner, 0.0);
  const auto& dx = x.data();
  double scale = is_mean ? 1.0 / static_cast<double>(n) : 1.0;
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t a = 0; a < n; ++a)
      for (int64_t i = 0; i < inner; ++i) out[o * inner + i] += dx[(o * n + a) * inner + i];
  if (is_mean)
    for (auto& v : out) v *= scale;
  if (!on_tape(x)) return Tensor(out_shape, std::move(out));
  Tensor res = make_value(out_shape, std::move(out));
  int xv = x.vid_, ov = res.vid_;
  record({ov}, [xv, ov, outer, n, inner, scale](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t a = 0; a < n; ++a)
        for (int64_t i = 0; i < inner; ++i)
          gx[(o * n + a) * inner + i] += (*g)[o * inner + i] * scale;
  });
  return res;
}

Tensor Tape::sum_axis(const Tensor& x, int axis) { return reduce_op("sum_axis", x, axis, false); }
Tensor Tape::mean_axis(const Tensor& x, int axis) { return reduce_op("mean_axis", x, axis, true); }

Tensor Tape::max_reduce(const Tensor& x, int axis) {
  check_input("max_reduce", x);
  check_axis("max_reduce", x.shape(), axis);
  int64_t outer, n, inner;
  axis_split(x.shape(), axis, &outer, &n, &inner);
  Shape out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.shape()[i]);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(outer * inner);
  std::vector<int64_t> arg(outer * inner);
  const auto& dx = x.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      double best = dx[o * n * inner + i];
      int64_t bi = 0;
      for (int64_t a = 1; a < n; ++a) {
        double v = dx[(o * n + a) * inner + i];
        if (v > best) {
          best = v;
          bi = a;
        }
      }
      out[o * inner + i] = best;
      arg[o * inner + i] = (o * n + bi) * inner + i;
    }
  }
  if (!on_tape(x)) return Tensor(out_shape, std::move(out));
  Tensor res = make_value(out_shape, std::move(out));
  int xv = x.vid_, ov = res.vid_;
  record({ov}, [xv, ov, arg](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    for (size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += (*g)[i];
  });
  return res;
}

Tensor Tape::softmax(const Tensor& x, int axis) {
  check_input("softmax", x);
  check_axis("softmax", x.shape(), axis);
  int64_t outer, n, inner;
  axis_split(x.shape(), axis, &outer, &n, &inner);
  if (n == 0) throw std::invalid_argument("softmax: empty axis");
  std::vector<double> out(x.numel());
  const auto& dx = x.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      double mx = dx[o * n * inner + i];
      for (int64_t a = 1; a < n; ++a) mx = std::max(mx, dx[(o * n + a) * inner + i]);
      double z = 0.0;
      for (int64_t a = 0; a < n; ++a) {
        double e = std::exp(dx[(o * n + a) * inner + i] - mx);
        out[(o * n + a) * inner + i] = e;
        z += e;
      }
      for (int64_t a = 0; a < n; ++a) out[(o * n + a) * inner + i] /= z;
    }
  }
  if (!on_tape(x)) return Tensor(x.shape(), std::move(out));
  Tensor res = make_value(x.shape(), std::move(out));
  int xv = x.vid_, ov = res.vid_;
  auto py = res.data_;
  record({ov}, [xv, ov, py, outer, n, inner](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    const auto& y = *py;
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        double dot = 0.0;
        for (int64_t a = 0; a < n; ++a) {
          int64_t k = (o * n + a) * inner + i;
          dot += (*g)[k] * y[k];
        }
        for (int64_t a = 0; a < n; ++a) {
          int64_t k = (o * n + a) * inner + i;
          gx[k] += y[k] * ((*g)[k] - dot);
        }
      }
    }
  });
  return res;
}

// ---------------------------------------------------------------------------
// Sparse gathers

Tensor Tape::weighted_gather(const Tensor& x, const GatherTaps& taps) {
  check_input("weighted_gather", x);
  if (x.rank() != 2) {
    throw std::invalid_argument("weighted_gather: source must be rank 2, got " +
                                shape_str(x.shape()));
  }
  int64_t rows = x.shape()[0], C = x.shape()[1];
  if (static_cast<int64_t>(taps.index.size()) != taps.rows * taps.taps ||
      taps.weight.size() != taps.index.size()) {
    throw std::invalid_argument("weighted_gather: malformed tap table");
  }
  for (int32_t ix : taps.index) {
    if (ix >= rows) throw std::invalid_argument("weighted_gather: tap index out of range");
  }
  std::vector<double> out(taps.rows * C, 0.0);
  const auto& dx = x.data();
  auto fwd = [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      double* op = out.data() + p * C;
      for (int k = 0; k < taps.taps; ++k) {
        int32_t ix = taps.index[p * taps.taps + k];
        if (ix < 0) continue;
        double w = taps.weight[p * taps.taps + k];
        const double* row = dx.data() + static_cast<int64_t>(ix) * C;
        for (int64_t c = 0; c < C; ++c) op[c] += w * row[c];
      }
    }
  };
  if (taps.rows * taps.taps * C >= (int64_t{1} << 18) && thread_count() > 1) {
    parallel_chunks(taps.rows, thread_count() * 2,
                    [&](int, int64_t b, int64_t e) { fwd(b, e); });
  } else {
    fwd(0, taps.rows);
  }
  Shape out_shape{static_cast<int>(taps.rows), static_cast<int>(C)};
  if (!on_tape(x)) return Tensor(out_shape, std::move(out));
  Tensor res = make_value(out_shape, std::move(out));
  int xv = x.vid_, ov = res.vid_;
  auto tab = std::make_shared<GatherTaps>(taps);
  record({ov}, [xv, ov, tab, C](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    for (int64_t p = 0; p < tab->rows; ++p) {
      const double* gp = g->data() + p * C;
      for (int k = 0; k < tab->taps; ++k) {
        int32_t ix = tab->index[p * tab->taps + k];
        if (ix < 0) continue;
        double w = tab->weight[p * tab->taps + k];
        double* row = gx.data() + static_cast<int64_t>(ix) * C;
        for (int64_t c = 0; c < C; ++c) row[c] += w * gp[c];
      }
    }
  });
  return res;
}

Tensor Tape::gather_concat(const Tensor& x, const GatherIndex& idx) {
  check_input("gather_concat", x);
  if (x.rank() != 2) {
    throw std::invalid_argument("gather_concat: source must be rank 2, got " +
                                shape_str(x.shape()));
  }
  int64_t rows = x.shape()[0], C = x.shape()[1];
  if (static_cast<int64_t>(idx.index.size()) != idx.rows * idx.taps) {
    throw std::invalid_argument("gather_concat: malformed index table");
  }
  for (int32_t ix : idx.index) {
    if (ix >= rows) throw std::invalid_argument("gather_concat: index out of range");
  }
  std::vector<double> out(idx.rows * idx.taps * C, 0.0);
  const auto& dx = x.data();
  auto fwd = [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      for (int k = 0; k < idx.taps; ++k) {
        int32_t ix = idx.index[p * idx.taps + k];
        if (ix < 0) continue;
        std::memcpy(out.data() + (p * idx.taps + k) * C,
                    dx.data() + static_cast<int64_t>(ix) * C, sizeof(double) * C);
      }
    }
  };
  if (idx.rows * idx.taps * C >= (int64_t{1} << 18) && thread_count() > 1) {
    parallel_chunks(idx.rows, thread_count() * 2, [&](int, int64_t b, int64_t e) { fwd(b, e); });
  } else {
    fwd(0, idx.rows);
  }
  Shape out_shape{static_cast<int>(idx.rows), static_cast<int>(idx.taps * C)};
  if (!on_tape(x)) return Tensor(out_shape, std::move(out));
  Tensor res = make_value(out_shape, std::move(out));
  int xv = x.vid_, ov = res.vid_;
  auto tab = std::make_shared<GatherIndex>(idx);
  record({ov}, [xv, ov, tab, C](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    auto& gx = ctx.acc(xv);
    for (int64_t p = 0; p < tab->rows; ++p) {
      for (int k = 0; k < tab->taps; ++k) {
        int32_t ix = tab->index[p * tab->taps + k];
        if (ix < 0) continue;
        const double* src = g->data() + (p * tab->taps + k) * C;
        double* dst = gx.data() + static_cast<int64_t>(ix) * C;
        for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
      }
    }
  });
  return res;
}

// ---------------------------------------------------------------------------
// Fused attention

std::pair<Tensor, Tensor> Tape::masked_attention(const Tensor& q, const Tensor& k,
                                                 const Tensor& v, int heads,
                                                 const std::vector<uint8_t>* mask) {
  check_input("masked_attention", q);
  check_input("masked_attention", k);
  check_input("masked_attention", v);
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw std::invalid_argument("masked_attention: q/k/v must be rank 2");
  }
  int64_t Q = q.shape()[0], D = q.shape()[1], S = k.shape()[0];
  if (k.shape()[1] != D || v.shape()[0] != S || v.shape()[1] != D) {
    throw std::invalid_argument("masked_attention: shape mismatch q" + shape_str(q.shape()) +
                                " k" + shape_str(k.shape()) + " v" + shape_str(v.shape()));
  }
  if (heads <= 0 || D % heads != 0) {
    throw std::invalid_argument("masked_attention: model dim " + std::to_string(D) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (mask && static_cast<int64_t>(mask->size()) != Q * S) {
    throw std::invalid_argument("masked_attention: mask size mismatch");
  }
  if (mask) {
    for (int64_t i = 0; i < Q; ++i) {
      bool any = false;
      for (int64_t s = 0; s < S; ++s) any = any || (*mask)[i * S + s];
      if (!any) {
        throw std::invalid_argument("masked_attention: query row " + std::to_string(i) +
                                    " has no permitted keys");
      }
    }
  }
  int64_t hd = D / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> out(Q * D, 0.0);
  std::vector<double> attn(heads * Q * S, 0.0);
  const auto& dq = q.data();
  const auto& dk = k.data();
  const auto& dv = v.data();
  for (int h = 0; h < heads; ++h) {
    int64_t off = h * hd;
    for (int64_t i = 0; i < Q; ++i) {
      // logits over permitted keys only; masked pairs are never touched
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t s = 0; s < S; ++s) {
        if (mask && !(*mask)[i * S + s]) continue;
        double l = 0.0;
        for (int64_t d = 0; d < hd; ++d) l += dq[i * D + off + d] * dk[s * D + off + d];
        l *= scale;
        attn[(h * Q + i) * S + s] = l;
        mx = std::max(mx, l);
      }
      double z = 0.0;
      for (int64_t s = 0; s < S; ++s) {
        if (mask && !(*mask)[i * S + s]) continue;
        double e = std::exp(attn[(h * Q + i) * S + s] - mx);
        attn[(h * Q + i) * S + s] = e;
        z += e;
      }
      for (int64_t s = 0; s < S; ++s) {
        if (mask && !(*mask)[i * S + s]) continue;
        double a = attn[(h * Q + i) * S + s] / z;
        attn[(h * Q + i) * S + s] = a;
        const double* vs = dv.data() + s * D + off;
        double* oi = out.data() + i * D + off;
        for (int64_t d = 0; d < hd; ++d) oi[d] += a * vs[d];
      }
    }
  }
  bool rec = on_tape(q) || on_tape(k) || on_tape(v);
  Shape out_shape{static_cast<int>(Q), static_cast<int>(D)};
  Shape attn_shape{heads, static_cast<int>(Q), static_cast<int>(S)};
  if (!rec) return {Tensor(out_shape, std::move(out)), Tensor(attn_shape, std::move(attn))};
  Tensor res = make_value(out_shape, std::move(out));
  Tensor res_attn = make_value(attn_shape, std::move(attn));
  int qv = on_tape(q) ? q.vid_ : -1;
  int kv = on_tape(k) ? k.vid_ : -1;
  int vv = on_tape(v) ? v.vid_ : -1;
  auto pq = q.data_;
  auto pk = k.data_;
  auto pv = v.data_;
  auto pa = res_attn.data_;
  std::shared_ptr<std::vector<uint8_t>> pmask;
  if (mask) pmask = std::make_shared<std::vector<uint8_t>>(*mask);
  int ov = res.vid_, av = res_attn.vid_;
  record({ov, av}, [=](BackCtx& ctx) {
    const auto* g_out = ctx.out(ov);
    const auto* g_attn = ctx.out(av);
    if (!g_out && !g_attn) return;
    std::vector<double>* gq = qv >= 0 ? &ctx.acc(qv) : nullptr;
    std::vector<double>* gk = kv >= 0 ? &ctx.acc(kv) : nullptr;
    std::vector<double>* gv = vv >= 0 ? &ctx.acc(vv) : nullptr;
    const auto& dq = *pq;
    const auto& dk = *pk;
    const auto& dv = *pv;
    const auto& a = *pa;
    std::vector<double> ga(S);
    for (int h = 0; h < heads; ++h) {
      int64_t off = h * hd;
      for (int64_t i = 0; i < Q; ++i) {
        // d(out)/d(a) and direct attention-output gradients
        for (int64_t s = 0; s < S; ++s) {
          if (pmask && !(*pmask)[i * S + s]) continue;
          double gas = g_attn ? (*g_attn)[(h * Q + i) * S + s] : 0.0;
          if (g_out) {
            const double* vs = dv.data() + s * D + off;
            const double* go = g_out->data() + i * D + off;
            for (int64_t d = 0; d < hd; ++d) gas += go[d] * vs[d];
            if (gv) {
              double as = a[(h * Q + i) * S + s];
              double* gvs = gv->data() + s * D + off;
              for (int64_t d = 0; d < hd; ++d) gvs[d] += as * go[d];
            }
          }
          ga[s] = gas;
        }
        // softmax jacobian over the permitted set
        double dot = 0.0;
        for (int64_t s = 0; s < S; ++s) {
          if (pmask && !(*pmask)[i * S + s]) continue;
          dot += ga[s] * a[(h * Q + i) * S + s];
        }
        for (int64_t s = 0; s < S; ++s) {
          if (pmask && !(*pmask)[i * S + s]) continue;
          double gl = a[(h * Q + i) * S + s] * (ga[s] - dot) * scale;
          if (gq) {
            double* gqi = gq->data() + i * D + off;
            const double* ks = dk.data() + s * D + off;
            for (int64_t d = 0; d < hd; ++d) gqi[d] += gl * ks[d];
          }
          if (gk) {
            double* gks = gk->data() + s * D + off;
            const double* qi = dq.data() + i * D + off;
            for (int64_t d = 0; d < hd; ++d) gks[d] += gl * qi[d];
          }
        }
      }
    }
  });
  return {res, res_attn};
}

// ---------------------------------------------------------------------------
// Cross-view statistics

std::pair<Tensor, Tensor> Tape::view_stats(const std::vector<Tensor>& views,
                                           const std::vector<std::vector<uint8_t>>& valid) {
  if (views.empty()) throw std::invalid_argument("view_stats: empty view list");
  if (valid.size() != views.size()) {
    throw std::invalid_argument("view_stats: validity mask count mismatch");
  }
  const Shape& s0 = views[0].shape();
  if (s0.size() != 2) throw std::invalid_argument("view_stats: views must be rank 2");
  int64_t P = s0[0], C = s0[1];
  int M = static_cast<int>(views.size());
  for (int m = 0; m < M; ++m) {
    check_input("view_stats", views[m]);
    if (views[m].shape() != s0) {
      throw std::invalid_argument("view_stats: shape mismatch " + shape_str(views[m].shape()) +
                                  " vs " + shape_str(s0));
    }
    if (static_cast<int64_t>(valid[m].size()) != P) {
      throw std::invalid_argument("view_stats: validity mask length mismatch");
    }
  }
  std::vector<double> mean(P * C, 0.0), var(P * C, 0.0);
  std::vector<double> buf(M);
  for (int64_t p = 0; p < P; ++p) {
    int cnt = 0;
    for (int m = 0; m < M; ++m)
      if (valid[m][p]) ++cnt;
    if (cnt == 0) continue;
    for (int64_t c = 0; c < C; ++c) {
      int j = 0;
      for (int m = 0; m < M; ++m) {
        if (valid[m][p]) buf[j++] = views[m].data()[p * C + c];
      }
      double mu = sorted_sum(buf.data(), cnt) / cnt;
      mean[p * C + c] = mu;
      j = 0;
      for (int m = 0; m < M; ++m) {
        if (valid[m][p]) {
          double d = views[m].data()[p * C + c] - mu;
          buf[j++] = d * d;
        }
      }
      var[p * C + c] = sorted_sum(buf.data(), cnt) / cnt;
    }
  }
  bool rec = false;
  for (const auto& t : views) rec = rec || on_tape(t);
  Shape sh{static_cast<int>(P), static_cast<int>(C)};
  if (!rec) return {Tensor(sh, std::move(mean)), Tensor(sh, std::move(var))};
  Tensor t_mean = make_value(sh, std::move(mean));
  Tensor t_var = make_value(sh, std::move(var));
  std::vector<int> vids(M);
  std::vector<std::shared_ptr<const std::vector<double>>> datas(M);
  for (int m = 0; m < M; ++m) {
    vids[m] = on_tape(views[m]) ? views[m].vid_ : -1;
    datas[m] = views[m].data_;
  }
  auto pmean = t_mean.data_;
  auto pvalid = std::make_shared<std::vector<std::vector<uint8_t>>>(valid);
  int mv = t_mean.vid_, vv = t_var.vid_;
  record({mv, vv}, [=](BackCtx& ctx) {
    const auto* gm = ctx.out(mv);
    const auto* gv = ctx.out(vv);
    if (!gm && !gv) return;
    for (int64_t p = 0; p < P; ++p) {
      int cnt = 0;
      for (int m = 0; m < M; ++m)
        if ((*pvalid)[m][p]) ++cnt;
      if (cnt == 0) continue;
      double inv = 1.0 / cnt;
      for (int m = 0; m < M; ++m) {
        if (!(*pvalid)[m][p] || vids[m] < 0) continue;
        auto& gx = ctx.acc(vids[m]);
        for (int64_t c = 0; c < C; ++c) {
          double g = 0.0;
          if (gm) g += (*gm)[p * C + c] * inv;
          if (gv) g += (*gv)[p * C + c] * 2.0 * ((*datas[m])[p * C + c] - (*pmean)[p * C + c]) * inv;
          gx[p * C + c] += g;
        }
      }
    }
  });
  return {t_mean, t_var};
}

Tensor Tape::unary_custom(
    const Tensor& x,
    const std::function<std::vector<double>(const std::vector<double>&)>& fwd,
    const std::function<std::vector<double>(const std::vector<double>&,
                                            const std::vector<double>&)>& bwd) {
  check_input("unary_custom", x);
  std::vector<double> out = fwd(x.data());
  if (out.size() != x.data().size()) {
    throw std::invalid_argument("unary_custom: forward must preserve element count");
  }
  if (!on_tape(x)) return Tensor(x.shape(), std::move(out));
  Tensor res = make_value(x.shape(), std::move(out));
  int xv = x.vid_, ov = res.vid_;
  auto px = x.data_;
  record({ov}, [xv, ov, px, bwd](BackCtx& ctx) {
    const auto* g = ctx.out(ov);
    if (!g) return;
    std::vector<double> gin = bwd(*px, *g);
    auto& gx = ctx.acc(xv);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gin[i];
  });
  return res;
}

// ---------------------------------------------------------------------------
// Backward

Gradients Tape::backward(const Tensor& loss) const {
  if (!on_tape(loss)) {
    throw std::invalid_argument("backward: loss is not on this tape");
  }
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  return backward_seeded({{loss, {1.0}}});
}

Gradients Tape::backward_seeded(
    const std::vector<std::pair<Tensor, std::vector<double>>>& seeds) const {
  Gradients grads(value_shapes_.size());
  for (const auto& [t, seed] : seeds) {
    if (!on_tape(t)) throw std::invalid_argument("backward: seed tensor is not on this tape");
    if (static_cast<int64_t>(seed.size()) != t.numel()) {
      throw std::invalid_argument("backward: seed size mismatch for shape " +
                                  shape_str(t.shape()));
    }
    auto& slot = grads.slots()[t.vid()];
    if (slot.empty()) slot.assign(seed.size(), 0.0);
    for (size_t i = 0; i < seed.size(); ++i) slot[i] += seed[i];
  }
  BackCtx ctx{this, &grads.slots()};
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->back) continue;  // leaf
    it->back(ctx);
  }
  return grads;
}

}  // namespace retr::ad
