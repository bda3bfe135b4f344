// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "gambas/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace gambas {

namespace {

int default_threads() {
    if (const char* env = std::getenv("GAMBAS_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

int g_threads = 0; // resolved lazily

// Training reallocates the same large activation buffers every step; keep
// them in the main arena instead of round-tripping through mmap/munmap.
struct MallocTuning {
    MallocTuning() {
#ifdef __GLIBC__
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    }
};
const MallocTuning g_malloc_tuning;

bool g_finite_checks = true;

template <typename S>
using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
template <typename S>
using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

/// NaN and Inf both poison a sum of absolute values, so one vectorized
/// pass decides finiteness for the whole buffer.
template <typename S>
void check_finite(const Tensor<S>& t, const char* op) {
    if (!g_finite_checks) return;
    const S acc = ConstArrMap<S>(t.data(), t.numel()).abs().sum();
    if (!std::isfinite(static_cast<double>(acc)))
        fail(std::string("non-finite values produced by op '") + op + "'");
}

struct BcastPlan {
    Shape out;
    std::vector<int64_t> sa, sb; // strides aligned to out dims; 0 on broadcast axes
};

BcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    BcastPlan p;
    p.out = broadcast_shape(a, b);
    const int nd = static_cast<int>(p.out.size());
    p.sa.assign(nd, 0);
    p.sb.assign(nd, 0);
    int64_t stride = 1;
    for (int i = static_cast<int>(a.size()) - 1, j = nd - 1; i >= 0; --i, --j) {
        p.sa[j] = (a[i] == 1) ? 0 : stride;
        stride *= a[i];
    }
    stride = 1;
    for (int i = static_cast<int>(b.size()) - 1, j = nd - 1; i >= 0; --i, --j) {
        p.sb[j] = (b[i] == 1) ? 0 : stride;
        stride *= b[i];
    }
    return p;
}

/// f(a_elem, b_elem) -> out_elem over the broadcast iteration space.
template <typename S, typename F>
Tensor<S> ew_binary(const Tensor<S>& a, const Tensor<S>& b, F&& f) {
    if (a.shape() == b.shape()) {
        Tensor<S> out(a.shape());
        const S* pa = a.data();
        const S* pb = b.data();
        S* po = out.data();
        const int64_t n = a.numel();
        for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
        return out;
    }
    BcastPlan p = plan_broadcast(a.shape(), b.shape());
    Tensor<S> out(p.out);
    const int nd = static_cast<int>(p.out.size());
    const int64_t inner = p.out[nd - 1];
    const int64_t ia = p.sa[nd - 1], ib = p.sb[nd - 1];
    const int64_t rows = out.numel() / inner;
    std::vector<int64_t> idx(nd, 0);
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        int64_t oa = 0, ob = 0;
        for (int d = 0; d < nd - 1; ++d) {
            oa += idx[d] * p.sa[d];
            ob += idx[d] * p.sb[d];
        }
        S* dst = po + r * inner;
        if (ia == 1 && ib == 1) {
            for (int64_t i = 0; i < inner; ++i) dst[i] = f(pa[oa + i], pb[ob + i]);
        } else if (ia == 1 && ib == 0) {
            const S bv = pb[ob];
            for (int64_t i = 0; i < inner; ++i) dst[i] = f(pa[oa + i], bv);
        } else if (ia == 0 && ib == 1) {
            const S av = pa[oa];
            for (int64_t i = 0; i < inner; ++i) dst[i] = f(av, pb[ob + i]);
        } else {
            for (int64_t i = 0; i < inner; ++i) dst[i] = f(pa[oa + ia * i], pb[ob + ib * i]);
        }
        for (int d = nd - 2; d >= 0; --d) {
            if (++idx[d] < p.out[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

/// Sum `g` (broadcast-result shape) into `acc` (original operand shape),
/// scaled by `sign`. Inverse of the broadcast expansion.
template <typename S>
void reduce_into(const Tensor<S>& g, Tensor<S>& acc, double sign) {
    if (g.shape() == acc.shape()) {
        const S* pg = g.data();
        S* pa = acc.data();
        const int64_t n = g.numel();
        const S s = static_cast<S>(sign);
        for (int64_t i = 0; i < n; ++i) pa[i] += s * pg[i];
        return;
    }
    BcastPlan p = plan_broadcast(acc.shape(), g.shape());
    GB_CHECK(p.out == g.shape(), "reduce_into: gradient shape is not the broadcast result");
    const int nd = static_cast<int>(p.out.size());
    const int64_t inner = p.out[nd - 1];
    const int64_t ia = p.sa[nd - 1];
    const int64_t rows = g.numel() / inner;
    std::vector<int64_t> idx(nd, 0);
    const S* pg = g.data();
    S* pa = acc.data();
    const S s = static_cast<S>(sign);
    for (int64_t r = 0; r < rows; ++r) {
        int64_t oa = 0;
        for (int d = 0; d < nd - 1; ++d) oa += idx[d] * p.sa[d];
        const S* src = pg + r * inner;
        if (ia == 1) {
            for (int64_t i = 0; i < inner; ++i) pa[oa + i] += s * src[i];
        } else {
            S accv = S(0);
            for (int64_t i = 0; i < inner; ++i) accv += src[i];
            pa[oa] += s * accv;
        }
        for (int d = nd - 2; d >= 0; --d) {
            if (++idx[d] < p.out[d]) break;
            idx[d] = 0;
        }
    }
}

template <typename S, typename F>
Tensor<S> ew_unary(const Tensor<S>& a, F&& f) {
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    S* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
    return out;
}

template <typename S>
S sigmoid_scalar(S x) {
    // Evaluated via the positive branch for stability at large |x|.
    if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
    const S e = std::exp(x);
    return e / (S(1) + e);
}

template <typename S>
S softplus_scalar(S x) {
    // log(1 + e^x) without overflow.
    if (x > S(30)) return x;
    if (x < S(-30)) return std::exp(x);
    return std::log1p(std::exp(x));
}

} // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

void set_compute_threads(int n) {
    GB_CHECK(n >= 1, "compute thread count must be >= 1");
    g_threads = n;
    Eigen::setNbThreads(n);
}

int compute_threads() {
    if (g_threads == 0) set_compute_threads(default_threads());
    return g_threads;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const int nd = static_cast<int>(std::max(a.size(), b.size()));
    Shape out(nd);
    for (int i = 0; i < nd; ++i) {
        const int ai = static_cast<int>(a.size()) - 1 - i;
        const int bi = static_cast<int>(b.size()) - 1 - i;
        const int64_t da = ai >= 0 ? a[ai] : 1;
        const int64_t db = bi >= 0 ? b[bi] : 1;
        GB_CHECK(da == db || da == 1 || db == 1,
                 "shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
        out[nd - 1 - i] = std::max(da, db);
    }
    return out;
}

template <typename S>
bool all_finite(const Tensor<S>& t) {
    const S acc = ConstArrMap<S>(t.data(), t.numel()).abs().sum();
    return std::isfinite(static_cast<double>(acc));
}

// ---------------------------------------------------------------------------
// Binary ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = ew_binary(a.value(), b.value(), [](S x, S y) { return x + y; });
    check_finite(out, "add");
    return t.make(std::move(out), "add", {a, b},
                  [a, b](Tape<S>& tp, typename Tape<S>::Node& n) {
                      if (auto* ga = tp.grad_if_needed(a.id)) reduce_into(n.grad, *ga, 1.0);
                      if (auto* gb = tp.grad_if_needed(b.id)) reduce_into(n.grad, *gb, 1.0);
                  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = ew_binary(a.value(), b.value(), [](S x, S y) { return x - y; });
    check_finite(out, "sub");
    return t.make(std::move(out), "sub", {a, b},
                  [a, b](Tape<S>& tp, typename Tape<S>::Node& n) {
                      if (auto* ga = tp.grad_if_needed(a.id)) reduce_into(n.grad, *ga, 1.0);
                      if (auto* gb = tp.grad_if_needed(b.id)) reduce_into(n.grad, *gb, -1.0);
                  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    Tensor<S> av = a.value(), bv = b.value();
    Tensor<S> out = ew_binary(av, bv, [](S x, S y) { return x * y; });
    check_finite(out, "mul");
    return t.make(std::move(out), "mul", {a, b},
                  [a, b, av, bv](Tape<S>& tp, typename Tape<S>::Node& n) {
                      if (auto* ga = tp.grad_if_needed(a.id)) {
                          Tensor<S> gb_prod = ew_binary(n.grad, bv, [](S g, S y) { return g * y; });
                          reduce_into(gb_prod, *ga, 1.0);
                      }
                      if (auto* gb = tp.grad_if_needed(b.id)) {
                          Tensor<S> ga_prod = ew_binary(n.grad, av, [](S g, S x) { return g * x; });
                          reduce_into(ga_prod, *gb, 1.0);
                      }
                  });
}

// ---------------------------------------------------------------------------
// Unary ops
// ---------------------------------------------------------------------------

namespace {

/// Shared skeleton: forward functor + backward local-derivative functor of
/// (saved_input, saved_output) -> dy/dx.
template <typename S, typename Fwd, typename Bwd>
Var<S> unary_op(Var<S> a, const char* name, Fwd&& fwd, Bwd&& bwd) {
    Tape<S>& t = *a.tape;
    Tensor<S> av = a.value();
    Tensor<S> out = ew_unary(av, fwd);
    check_finite(out, name);
    Tensor<S> ov = out;
    return t.make(std::move(out), name, {a},
                  [a, av, ov, bwd](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      const S* px = av.data();
                      const S* py = ov.data();
                      const S* pg = n.grad.data();
                      S* pd = ga->data();
                      const int64_t k = av.numel();
                      for (int64_t i = 0; i < k; ++i) pd[i] += pg[i] * bwd(px[i], py[i]);
                  });
}

} // namespace

namespace {

/// Skeleton for ops whose forward and derivative evaluate as bulk Eigen
/// array expressions (vectorized exp/tanh/logistic).
template <typename S, typename FwdBulk, typename BwdBulk>
Var<S> bulk_unary(Var<S> a, const char* name, FwdBulk&& fwd, BwdBulk&& bwd) {
    Tape<S>& t = *a.tape;
    Tensor<S> av = a.value();
    Tensor<S> out(av.shape());
    fwd(ConstArrMap<S>(av.data(), av.numel()), ArrMap<S>(out.data(), out.numel()));
    check_finite(out, name);
    Tensor<S> ov = out;
    return t.make(std::move(out), name, {a},
                  [a, av, ov, bwd](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      const int64_t k = av.numel();
                      bwd(ConstArrMap<S>(av.data(), k), ConstArrMap<S>(ov.data(), k),
                          ConstArrMap<S>(n.grad.data(), k), ArrMap<S>(ga->data(), k));
                  });
}

} // namespace

template <typename S>
Var<S> neg(Var<S> a) {
    return unary_op(a, "neg", [](S x) { return -x; }, [](S, S) { return S(-1); });
}

template <typename S>
Var<S> vexp(Var<S> a) {
    return bulk_unary(
        a, "exp", [](auto x, auto y) { y = x.exp(); },
        [](auto, auto y, auto g, auto d) { d += g * y; });
}

template <typename S>
Var<S> vlog(Var<S> a) {
    return bulk_unary(
        a, "log", [](auto x, auto y) { y = x.log(); },
        [](auto x, auto, auto g, auto d) { d += g / x; });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
    return bulk_unary(
        a, "sigmoid", [](auto x, auto y) { y = x.logistic(); },
        [](auto, auto y, auto g, auto d) { d += g * y * (S(1) - y); });
}

template <typename S>
Var<S> vtanh(Var<S> a) {
    return bulk_unary(
        a, "tanh", [](auto x, auto y) { y = x.tanh(); },
        [](auto, auto y, auto g, auto d) { d += g * (S(1) - y.square()); });
}

template <typename S>
Var<S> relu(Var<S> a) {
    return unary_op(a, "relu", [](S x) { return x > S(0) ? x : S(0); },
                    [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Var<S> leaky_relu(Var<S> a, double slope) {
    const S sl = static_cast<S>(slope);
    return unary_op(a, "leaky_relu", [sl](S x) { return x > S(0) ? x : sl * x; },
                    [sl](S x, S) { return x > S(0) ? S(1) : sl; });
}

template <typename S>
Var<S> silu(Var<S> a) {
    return bulk_unary(
        a, "silu", [](auto x, auto y) { y = x * x.logistic(); },
        [](auto x, auto, auto g, auto d) {
            auto s = x.logistic();
            d += g * (s * (S(1) + x * (S(1) - s)));
        });
}

template <typename S>
Var<S> softplus(Var<S> a) {
    // log(1 + e^x) with saturation guards matching softplus_scalar.
    return bulk_unary(
        a, "softplus",
        [](auto x, auto y) {
            y = (x > S(30)).select(x, (x < S(-30)).select(x.exp(), x.exp().log1p()));
        },
        [](auto x, auto, auto g, auto d) { d += g * x.logistic(); });
}

template <typename S>
Var<S> vabs(Var<S> a) {
    return unary_op(a, "abs", [](S x) { return std::abs(x); },
                    [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Var<S> scale(Var<S> a, double c) {
    const S cs = static_cast<S>(c);
    return unary_op(a, "scale", [cs](S x) { return cs * x; }, [cs](S, S) { return cs; });
}

template <typename S>
Var<S> add_scalar(Var<S> a, double c) {
    const S cs = static_cast<S>(c);
    return unary_op(a, "add_scalar", [cs](S x) { return x + cs; }, [](S, S) { return S(1); });
}

template <typename S>
Var<S> elementwise(EwKind kind, Var<S> a, Var<S> b, double c) {
    switch (kind) {
        case EwKind::Add: return add(a, b);
        case EwKind::Sub: return sub(a, b);
        case EwKind::Mul: return mul(a, b);
        case EwKind::Neg: return neg(a);
        case EwKind::Exp: return vexp(a);
        case EwKind::Log: return vlog(a);
        case EwKind::Sigmoid: return sigmoid(a);
        case EwKind::Tanh: return vtanh(a);
        case EwKind::Relu: return relu(a);
        case EwKind::Silu: return silu(a);
        case EwKind::Softplus: return softplus(a);
        case EwKind::Scale: return scale(a, c);
    }
    fail("unknown elementwise kind");
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Var<S> sum(Var<S> a) {
    Tape<S>& t = *a.tape;
    const Tensor<S>& av = a.value();
    S acc = S(0);
    for (const S v : av) acc += v;
    Tensor<S> out = Tensor<S>::scalar(acc);
    check_finite(out, "sum");
    return t.make(std::move(out), "sum", {a},
                  [a](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      const S g = n.grad[0];
                      for (S& v : *ga) v += g;
                  });
}

template <typename S>
Var<S> mean(Var<S> a) {
    Tape<S>& t = *a.tape;
    const Tensor<S>& av = a.value();
    S acc = S(0);
    for (const S v : av) acc += v;
    const S inv = S(1) / static_cast<S>(av.numel());
    Tensor<S> out = Tensor<S>::scalar(acc * inv);
    check_finite(out, "mean");
    return t.make(std::move(out), "mean", {a},
                  [a, inv](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      const S g = n.grad[0] * inv;
                      for (S& v : *ga) v += g;
                  });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> reshape(Var<S> a, Shape shape) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.value().reshaped(std::move(shape));
    return t.make(std::move(out), "reshape", {a},
                  [a](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      const S* pg = n.grad.data();
                      S* pd = ga->data();
                      const int64_t k = ga->numel();
                      for (int64_t i = 0; i < k; ++i) pd[i] += pg[i];
                  });
}

namespace {

struct AxisSplit {
    int64_t outer, axis, inner;
};

AxisSplit split_at(const Shape& s, int axis) {
    AxisSplit r{1, s[axis], 1};
    for (int i = 0; i < axis; ++i) r.outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

} // namespace

template <typename S>
Var<S> concat(Var<S> a, Var<S> b, int axis) {
    Tape<S>& t = *a.tape;
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    GB_CHECK(sa.size() == sb.size(), "concat rank mismatch");
    for (size_t i = 0; i < sa.size(); ++i)
        GB_CHECK(static_cast<int>(i) == axis || sa[i] == sb[i],
                 "concat dim mismatch at axis " + std::to_string(i));
    Shape so = sa;
    so[axis] += sb[axis];
    Tensor<S> out(so);
    const AxisSplit pa = split_at(sa, axis);
    const AxisSplit pb = split_at(sb, axis);
    const int64_t blk_a = pa.axis * pa.inner;
    const int64_t blk_b = pb.axis * pb.inner;
    for (int64_t o = 0; o < pa.outer; ++o) {
        std::copy_n(a.value().data() + o * blk_a, blk_a, out.data() + o * (blk_a + blk_b));
        std::copy_n(b.value().data() + o * blk_b, blk_b, out.data() + o * (blk_a + blk_b) + blk_a);
    }
    return t.make(std::move(out), "concat", {a, b},
                  [a, b, pa, blk_a, blk_b](Tape<S>& tp, typename Tape<S>::Node& n) {
                      const S* pg = n.grad.data();
                      if (auto* ga = tp.grad_if_needed(a.id)) {
                          for (int64_t o = 0; o < pa.outer; ++o) {
                              const S* src = pg + o * (blk_a + blk_b);
                              S* dst = ga->data() + o * blk_a;
                              for (int64_t i = 0; i < blk_a; ++i) dst[i] += src[i];
                          }
                      }
                      if (auto* gb = tp.grad_if_needed(b.id)) {
                          for (int64_t o = 0; o < pa.outer; ++o) {
                              const S* src = pg + o * (blk_a + blk_b) + blk_a;
                              S* dst = gb->data() + o * blk_b;
                              for (int64_t i = 0; i < blk_b; ++i) dst[i] += src[i];
                          }
                      }
                  });
}

template <typename S>
Var<S> narrow(Var<S> a, int axis, int64_t start, int64_t len) {
    Tape<S>& t = *a.tape;
    const Shape& sa = a.shape();
    GB_CHECK(axis >= 0 && axis < static_cast<int>(sa.size()), "narrow: bad axis");
    GB_CHECK(start >= 0 && len > 0 && start + len <= sa[axis], "narrow: range out of bounds");
    Shape so = sa;
    so[axis] = len;
    Tensor<S> out(so);
    const AxisSplit p = split_at(sa, axis);
    for (int64_t o = 0; o < p.outer; ++o) {
        const S* src = a.value().data() + (o * p.axis + start) * p.inner;
        std::copy_n(src, len * p.inner, out.data() + o * len * p.inner);
    }
    return t.make(std::move(out), "narrow", {a},
                  [a, p, start, len](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      const S* pg = n.grad.data();
                      for (int64_t o = 0; o < p.outer; ++o) {
                          S* dst = ga->data() + (o * p.axis + start) * p.inner;
                          const S* src = pg + o * len * p.inner;
                          for (int64_t i = 0; i < len * p.inner; ++i) dst[i] += src[i];
                      }
                  });
}

namespace {

template <typename S>
Tensor<S> transpose_last2_raw(const Tensor<S>& a) {
    const Shape& s = a.shape();
    const int nd = static_cast<int>(s.size());
    const int64_t m = s[nd - 2], k = s[nd - 1];
    Shape so = s;
    std::swap(so[nd - 2], so[nd - 1]);
    Tensor<S> out(so);
    const int64_t batch = a.numel() / (m * k);
    constexpr int64_t T = 32; // cache tile
    for (int64_t b = 0; b < batch; ++b) {
        const S* src = a.data() + b * m * k;
        S* dst = out.data() + b * m * k;
        for (int64_t i0 = 0; i0 < m; i0 += T)
            for (int64_t j0 = 0; j0 < k; j0 += T) {
                const int64_t i1 = std::min(i0 + T, m), j1 = std::min(j0 + T, k);
                for (int64_t i = i0; i < i1; ++i)
                    for (int64_t j = j0; j < j1; ++j) dst[j * m + i] = src[i * k + j];
            }
    }
    return out;
}

} // namespace

template <typename S>
Var<S> transpose_last2(Var<S> a) {
    Tape<S>& t = *a.tape;
    GB_CHECK(a.shape().size() >= 2, "transpose_last2 needs rank >= 2");
    Tensor<S> out = transpose_last2_raw(a.value());
    return t.make(std::move(out), "transpose_last2", {a},
                  [a](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      Tensor<S> gt = transpose_last2_raw(n.grad);
                      const S* pg = gt.data();
                      S* pd = ga->data();
                      for (int64_t i = 0; i < gt.numel(); ++i) pd[i] += pg[i];
                  });
}

namespace {

template <typename S>
Tensor<S> reverse_axis_raw(const Tensor<S>& a, int axis) {
    const AxisSplit p = split_at(a.shape(), axis);
    Tensor<S> out(a.shape());
    for (int64_t o = 0; o < p.outer; ++o)
        for (int64_t i = 0; i < p.axis; ++i) {
            const S* src = a.data() + (o * p.axis + i) * p.inner;
            S* dst = out.data() + (o * p.axis + (p.axis - 1 - i)) * p.inner;
            std::copy_n(src, p.inner, dst);
        }
    return out;
}

} // namespace

template <typename S>
Var<S> reverse_axis(Var<S> a, int axis) {
    Tape<S>& t = *a.tape;
    GB_CHECK(axis >= 0 && axis < a.value().rank(), "reverse_axis: bad axis");
    Tensor<S> out = reverse_axis_raw(a.value(), axis);
    return t.make(std::move(out), "reverse_axis", {a},
                  [a, axis](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      Tensor<S> gr = reverse_axis_raw(n.grad, axis);
                      const S* pg = gr.data();
                      S* pd = ga->data();
                      for (int64_t i = 0; i < gr.numel(); ++i) pd[i] += pg[i];
                  });
}

// ---------------------------------------------------------------------------
// Permutation gather/scatter along the last axis
// ---------------------------------------------------------------------------

namespace {

void check_bijection(const std::vector<int64_t>& perm, int64_t len) {
    GB_CHECK(static_cast<int64_t>(perm.size()) == len,
             "permutation length " + std::to_string(perm.size()) + " != axis extent " + std::to_string(len));
    std::vector<char> seen(len, 0);
    for (const int64_t v : perm) {
        GB_CHECK(v >= 0 && v < len, "permutation value out of range");
        GB_CHECK(!seen[v], "permutation is not a bijection (duplicate index)");
        seen[v] = 1;
    }
}

template <typename S>
Tensor<S> gather_last_raw(const Tensor<S>& a, const std::vector<int64_t>& perm) {
    const int64_t l = a.shape().back();
    const int64_t rows = a.numel() / l;
    Tensor<S> out(a.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const S* src = a.data() + r * l;
        S* dst = out.data() + r * l;
        for (int64_t i = 0; i < l; ++i) dst[i] = src[perm[i]];
    }
    return out;
}

template <typename S>
Tensor<S> scatter_last_raw(const Tensor<S>& a, const std::vector<int64_t>& perm) {
    const int64_t l = a.shape().back();
    const int64_t rows = a.numel() / l;
    Tensor<S> out(a.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const S* src = a.data() + r * l;
        S* dst = out.data() + r * l;
        for (int64_t i = 0; i < l; ++i) dst[perm[i]] = src[i];
    }
    return out;
}

} // namespace

template <typename S>
Var<S> gather_permute(Var<S> a, const std::vector<int64_t>& perm) {
    Tape<S>& t = *a.tape;
    check_bijection(perm, a.shape().back());
    Tensor<S> out = gather_last_raw(a.value(), perm);
    auto saved = std::make_shared<std::vector<int64_t>>(perm);
    return t.make(std::move(out), "gather_permute", {a},
                  [a, saved](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      Tensor<S> gs = scatter_last_raw(n.grad, *saved);
                      const S* pg = gs.data();
                      S* pd = ga->data();
                      for (int64_t i = 0; i < gs.numel(); ++i) pd[i] += pg[i];
                  });
}

template <typename S>
Var<S> scatter_inverse(Var<S> a, const std::vector<int64_t>& perm) {
    Tape<S>& t = *a.tape;
    check_bijection(perm, a.shape().back());
    Tensor<S> out = scatter_last_raw(a.value(), perm);
    auto saved = std::make_shared<std::vector<int64_t>>(perm);
    return t.make(std::move(out), "scatter_inverse", {a},
                  [a, saved](Tape<S>& tp, typename Tape<S>::Node& n) {
                      auto* ga = tp.grad_if_needed(a.id);
                      if (!ga) return;
                      Tensor<S> gs = gather_last_raw(n.grad, *saved);
                      const S* pg = gs.data();
                      S* pd = ga->data();
                      for (int64_t i = 0; i < gs.numel(); ++i) pd[i] += pg[i];
                  });
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

#define GB_INSTANTIATE_EW(S)                                                            \
    template bool all_finite<S>(const Tensor<S>&);                                      \
    template Var<S> add<S>(Var<S>, Var<S>);                                             \
    template Var<S> sub<S>(Var<S>, Var<S>);                                             \
    template Var<S> mul<S>(Var<S>, Var<S>);                                             \
    template Var<S> neg<S>(Var<S>);                                                     \
    template Var<S> vexp<S>(Var<S>);                                                    \
    template Var<S> vlog<S>(Var<S>);                                                    \
    template Var<S> sigmoid<S>(Var<S>);                                                 \
    template Var<S> vtanh<S>(Var<S>);                                                   \
    template Var<S> relu<S>(Var<S>);                                                    \
    template Var<S> leaky_relu<S>(Var<S>, double);                                      \
    template Var<S> silu<S>(Var<S>);                                                    \
    template Var<S> softplus<S>(Var<S>);                                                \
    template Var<S> vabs<S>(Var<S>);                                                    \
    template Var<S> scale<S>(Var<S>, double);                                           \
    template Var<S> add_scalar<S>(Var<S>, double);                                      \
    template Var<S> elementwise<S>(EwKind, Var<S>, Var<S>, double);                     \
    template Var<S> sum<S>(Var<S>);                                                     \
    template Var<S> mean<S>(Var<S>);                                                    \
    template Var<S> reshape<S>(Var<S>, Shape);                                          \
    template Var<S> concat<S>(Var<S>, Var<S>, int);                                     \
    template Var<S> narrow<S>(Var<S>, int, int64_t, int64_t);                           \
    template Var<S> transpose_last2<S>(Var<S>);                                         \
    template Var<S> reverse_axis<S>(Var<S>, int);                                       \
    template Var<S> gather_permute<S>(Var<S>, const std::vector<int64_t>&);             \
    template Var<S> scatter_inverse<S>(Var<S>, const std::vector<int64_t>&);

GB_INSTANTIATE_EW(double)
GB_INSTANTIATE_EW(float)

} // namespace gambas
