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

#include <Eigen/Core>

#include <array>

#include "gambas/ops.hpp"

namespace gambas {

namespace {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Hard cap on the im2col workspace (elements) for explicit Im2col requests.
constexpr int64_t kIm2colCapElems = int64_t(32) << 20;
// Auto engine: above this workspace size the direct loops win (the packing
// traffic starts to dominate the GEMM).
constexpr int64_t kAutoGemmCap = int64_t(16) << 20;

struct ConvDims {
    int64_t B, Cin, D, H, W;
    int64_t Cout, k;
    int stride, pad;
    int64_t Dp, Hp, Wp; // padded input extents
    int64_t Do, Ho, Wo; // output extents
    int64_t K;          // Cin * k^3
    int64_t N;          // Do * Ho * Wo
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad) {
    GB_CHECK(xs.size() == 5, "conv3d input must be [B,C,D,H,W], got " + shape_str(xs));
    GB_CHECK(ws.size() == 5, "conv3d kernel must be [Cout,Cin,k,k,k], got " + shape_str(ws));
    GB_CHECK(ws[2] == ws[3] && ws[3] == ws[4], "conv3d kernel must be cubic");
    GB_CHECK(ws[1] == xs[1], "conv3d channel mismatch: input " + shape_str(xs) + " kernel " + shape_str(ws));
    GB_CHECK(stride == 1 || stride == 2, "conv3d stride must be 1 or 2");
    GB_CHECK(pad >= 0, "conv3d pad must be >= 0");
    GB_CHECK(ws[2] >= 1 && ws[2] <= 16, "conv3d kernel extent must lie in 1..16");
    ConvDims d;
    d.B = xs[0];
    d.Cin = xs[1];
    d.D = xs[2];
    d.H = xs[3];
    d.W = xs[4];
    d.Cout = ws[0];
    d.k = ws[2];
    d.stride = stride;
    d.pad = pad;
    d.Dp = d.D + 2 * pad;
    d.Hp = d.H + 2 * pad;
    d.Wp = d.W + 2 * pad;
    GB_CHECK(d.k <= d.Dp && d.k <= d.Hp && d.k <= d.Wp,
             "conv3d kernel larger than padded input");
    d.Do = (d.Dp - d.k) / stride + 1;
    d.Ho = (d.Hp - d.k) / stride + 1;
    d.Wo = (d.Wp - d.k) / stride + 1;
    d.K = d.Cin * d.k * d.k * d.k;
    d.N = d.Do * d.Ho * d.Wo;
    return d;
}

int64_t reflect_index(int64_t i, int64_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

/// Padded copy of one volume [C,D,H,W] -> [C,Dp,Hp,Wp].
template <typename S>
void pad_volume(const S* x, S* xp, const ConvDims& d, PadMode mode) {
    const int64_t p = d.pad;
    if (p == 0) {
        std::copy_n(x, d.Cin * d.D * d.H * d.W, xp);
        return;
    }
    if (mode == PadMode::Reflect)
        GB_CHECK(p < d.D && p < d.H && p < d.W, "reflection pad exceeds input extent");
    for (int64_t c = 0; c < d.Cin; ++c) {
        const S* xc = x + c * d.D * d.H * d.W;
        S* xpc = xp + c * d.Dp * d.Hp * d.Wp;
        for (int64_t z = 0; z < d.Dp; ++z)
            for (int64_t y = 0; y < d.Hp; ++y) {
                S* row = xpc + (z * d.Hp + y) * d.Wp;
                const int64_t zi = z - p, yi = y - p;
                if (mode == PadMode::Zero) {
                    if (zi < 0 || zi >= d.D || yi < 0 || yi >= d.H) {
                        std::fill_n(row, d.Wp, S(0));
                        continue;
                    }
                    const S* src = xc + (zi * d.H + yi) * d.W;
                    std::fill_n(row, p, S(0));
                    std::copy_n(src, d.W, row + p);
                    std::fill_n(row + p + d.W, p, S(0));
                } else {
                    const S* src = xc + (reflect_index(zi, d.D) * d.H + reflect_index(yi, d.H)) * d.W;
                    for (int64_t x2 = 0; x2 < d.Wp; ++x2) row[x2] = src[reflect_index(x2 - p, d.W)];
                }
            }
    }
}

/// Scatter a padded-volume gradient back onto the input, folding the
/// padding contributions (reflection) or dropping them (zero).
template <typename S>
void unpad_accumulate(const S* dxp, S* dx, const ConvDims& d, PadMode mode) {
    const int64_t p = d.pad;
    for (int64_t c = 0; c < d.Cin; ++c) {
        const S* gpc = dxp + c * d.Dp * d.Hp * d.Wp;
        S* gc = dx + c * d.D * d.H * d.W;
        if (mode == PadMode::Zero || p == 0) {
            for (int64_t z = 0; z < d.D; ++z)
                for (int64_t y = 0; y < d.H; ++y) {
                    const S* src = gpc + ((z + p) * d.Hp + (y + p)) * d.Wp + p;
                    S* dst = gc + (z * d.H + y) * d.W;
                    for (int64_t x = 0; x < d.W; ++x) dst[x] += src[x];
                }
        } else {
            for (int64_t z = 0; z < d.Dp; ++z)
                for (int64_t y = 0; y < d.Hp; ++y) {
                    const S* src = gpc + (z * d.Hp + y) * d.Wp;
                    S* dst = gc + (reflect_index(z - p, d.D) * d.H + reflect_index(y - p, d.H)) * d.W;
                    for (int64_t x = 0; x < d.Wp; ++x) dst[reflect_index(x - p, d.W)] += src[x];
                }
        }
    }
}

/// col is K x N row-major; row = (ci,kz,ky,kx), column = output voxel.
template <typename S>
void im2col(const S* xp, S* col, const ConvDims& d) {
    const int64_t s = d.stride;
    const int nth = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nth) if (nth > 1)
    for (int64_t ci = 0; ci < d.Cin; ++ci)
        for (int64_t kz = 0; kz < d.k; ++kz)
            for (int64_t ky = 0; ky < d.k; ++ky)
                for (int64_t kx = 0; kx < d.k; ++kx) {
                    const int64_t row = ((ci * d.k + kz) * d.k + ky) * d.k + kx;
                    S* dst = col + row * d.N;
                    for (int64_t zo = 0; zo < d.Do; ++zo)
                        for (int64_t yo = 0; yo < d.Ho; ++yo) {
                            const S* src =
                                xp + ((ci * d.Dp + zo * s + kz) * d.Hp + yo * s + ky) * d.Wp + kx;
                            if (s == 1) {
                                std::copy_n(src, d.Wo, dst);
                            } else {
                                for (int64_t xo = 0; xo < d.Wo; ++xo) dst[xo] = src[xo * 2];
                            }
                            dst += d.Wo;
                        }
                }
}

template <typename S>
void col2im_add(const S* col, S* dxp, const ConvDims& d) {
    const int64_t s = d.stride;
    const int nth = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nth) if (nth > 1)
    for (int64_t ci = 0; ci < d.Cin; ++ci)
        for (int64_t kz = 0; kz < d.k; ++kz)
            for (int64_t ky = 0; ky < d.k; ++ky)
                for (int64_t kx = 0; kx < d.k; ++kx) {
                    const int64_t row = ((ci * d.k + kz) * d.k + ky) * d.k + kx;
                    const S* src = col + row * d.N;
                    for (int64_t zo = 0; zo < d.Do; ++zo)
                        for (int64_t yo = 0; yo < d.Ho; ++yo) {
                            S* dst = dxp + ((ci * d.Dp + zo * s + kz) * d.Hp + yo * s + ky) * d.Wp + kx;
                            if (s == 1) {
                                for (int64_t xo = 0; xo < d.Wo; ++xo) dst[xo] += src[xo];
                            } else {
                                for (int64_t xo = 0; xo < d.Wo; ++xo) dst[xo * 2] += src[xo];
                            }
                            src += d.Wo;
                        }
                }
}

bool pick_im2col(const ConvDims& d, ConvEngine engine) {
    if (engine == ConvEngine::Direct) return false;
    if (engine == ConvEngine::Im2col) {
        GB_CHECK(d.K * d.N <= kIm2colCapElems, "im2col workspace too large for this shape");
        return true;
    }
    return d.Cout >= 4 && d.K * d.N <= kAutoGemmCap;
}

template <typename S>
std::vector<S>& workspace(int slot, int64_t elems) {
    thread_local std::vector<S> ws[3];
    if (static_cast<int64_t>(ws[slot].size()) < elems) ws[slot].resize(elems);
    return ws[slot];
}

/// One stride-1 output row with the kernel taps unrolled: every output
/// element evaluates a fixed expression tree, so the xo loop vectorizes
/// without any reduction reordering.
template <int KX, typename S>
void fwd_row_fixed(S* __restrict yrow, const S* __restrict xrow, const S* __restrict wrow,
                   int64_t wo) {
    for (int64_t xo = 0; xo < wo; ++xo) {
        S acc = yrow[xo];
        for (int kx = 0; kx < KX; ++kx) acc += wrow[kx] * xrow[xo + kx];
        yrow[xo] = acc;
    }
}

template <typename S>
void fwd_row(S* yrow, const S* xrow, const S* wrow, int64_t wo, int64_t k, int64_t stride) {
    if (stride == 1) {
        switch (k) {
            case 1: fwd_row_fixed<1>(yrow, xrow, wrow, wo); return;
            case 3: fwd_row_fixed<3>(yrow, xrow, wrow, wo); return;
            case 4: fwd_row_fixed<4>(yrow, xrow, wrow, wo); return;
            case 5: fwd_row_fixed<5>(yrow, xrow, wrow, wo); return;
            case 7: fwd_row_fixed<7>(yrow, xrow, wrow, wo); return;
            default:
                for (int64_t xo = 0; xo < wo; ++xo) {
                    S acc = yrow[xo];
                    for (int64_t kx = 0; kx < k; ++kx) acc += wrow[kx] * xrow[xo + kx];
                    yrow[xo] = acc;
                }
                return;
        }
    }
    for (int64_t xo = 0; xo < wo; ++xo) {
        S acc = yrow[xo];
        for (int64_t kx = 0; kx < k; ++kx) acc += wrow[kx] * xrow[xo * 2 + kx];
        yrow[xo] = acc;
    }
}

/// y[co,vox] = sum_{ci,k} w * xp, one batch item. y must be pre-filled with
/// bias (or zero).
template <typename S>
void conv_fwd_direct(const S* xp, const S* w, S* y, const ConvDims& d) {
    const int nth = compute_threads();
#pragma omp parallel for collapse(2) schedule(static) num_threads(nth) if (nth > 1)
    for (int64_t co = 0; co < d.Cout; ++co)
        for (int64_t zo = 0; zo < d.Do; ++zo)
            for (int64_t yo = 0; yo < d.Ho; ++yo) {
                S* yrow = y + ((co * d.Do + zo) * d.Ho + yo) * d.Wo;
                for (int64_t ci = 0; ci < d.Cin; ++ci)
                    for (int64_t kz = 0; kz < d.k; ++kz)
                        for (int64_t ky = 0; ky < d.k; ++ky)
                            fwd_row(yrow,
                                    xp + ((ci * d.Dp + zo * d.stride + kz) * d.Hp +
                                          yo * d.stride + ky) * d.Wp,
                                    w + (((co * d.Cin + ci) * d.k + kz) * d.k + ky) * d.k, d.Wo,
                                    d.k, d.stride);
            }
}

/// Dot product with a fixed index-based lane decomposition: the result is
/// bit-identical for any buffer alignment (Eigen's redux peels to the first
/// aligned element, which would make sums depend on malloc addresses).
template <typename S>
S fixed_order_dot(const S* __restrict a, const S* __restrict b, int64_t n) {
    S lane[8] = {};
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
    S tail = S(0);
    for (; i < n; ++i) tail += a[i] * b[i];
    return (((lane[0] + lane[4]) + (lane[2] + lane[6])) +
            ((lane[1] + lane[5]) + (lane[3] + lane[7]))) + tail;
}

template <typename S>
S fixed_order_dot_stride2(const S* __restrict a, const S* __restrict b, int64_t n) {
    S acc = S(0);
    for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i * 2];
    return acc;
}

/// dw[co,ci,k] += sum_vox g[co,vox] * xp[ci, vox*s + k], one batch item.
template <typename S>
void conv_dw_direct(const S* xp, const S* g, S* dw, const ConvDims& d) {
    const int64_t s = d.stride;
    const int nth = compute_threads();
#pragma omp parallel for collapse(2) schedule(static) num_threads(nth) if (nth > 1)
    for (int64_t co = 0; co < d.Cout; ++co)
        for (int64_t ci = 0; ci < d.Cin; ++ci)
            for (int64_t kz = 0; kz < d.k; ++kz)
                for (int64_t ky = 0; ky < d.k; ++ky) {
                    S* dwrow = dw + (((co * d.Cin + ci) * d.k + kz) * d.k + ky) * d.k;
                    std::array<S, 16> acc{};
                    for (int64_t zo = 0; zo < d.Do; ++zo)
                        for (int64_t yo = 0; yo < d.Ho; ++yo) {
                            const S* grow = g + ((co * d.Do + zo) * d.Ho + yo) * d.Wo;
                            const S* xrow =
                                xp + ((ci * d.Dp + zo * s + kz) * d.Hp + yo * s + ky) * d.Wp;
                            if (s == 1) {
                                for (int64_t kx = 0; kx < d.k; ++kx)
                                    acc[kx] += fixed_order_dot(grow, xrow + kx, d.Wo);
                            } else {
                                for (int64_t kx = 0; kx < d.k; ++kx)
                                    acc[kx] += fixed_order_dot_stride2(grow, xrow + kx, d.Wo);
                            }
                        }
                    for (int64_t kx = 0; kx < d.k; ++kx) dwrow[kx] += acc[kx];
                }
}

/// dxp[ci, vox*s + k] += w[co,ci,k] * g[co,vox], one batch item. For
/// stride 1 this is evaluated as an ordinary convolution of the zero-
/// extended upstream with the spatially flipped, channel-transposed
/// kernel, which turns the scatter into a vectorizable gather.
template <typename S>
void conv_dx_direct(const S* g, const S* w, S* dxp, const ConvDims& d) {
    if (d.stride == 1) {
        const int64_t e = d.k - 1;
        const int64_t Ge = d.Do + 2 * e, He = d.Ho + 2 * e, We = d.Wo + 2 * e;
        std::vector<S>& gext = workspace<S>(2, d.Cout * Ge * He * We);
        std::fill(gext.begin(), gext.begin() + d.Cout * Ge * He * We, S(0));
        for (int64_t co = 0; co < d.Cout; ++co)
            for (int64_t zo = 0; zo < d.Do; ++zo)
                for (int64_t yo = 0; yo < d.Ho; ++yo)
                    std::copy_n(g + ((co * d.Do + zo) * d.Ho + yo) * d.Wo, d.Wo,
                                gext.data() + ((co * Ge + zo + e) * He + yo + e) * We + e);
        std::vector<S> wflip(static_cast<size_t>(d.Cin * d.Cout * d.k * d.k * d.k));
        for (int64_t co = 0; co < d.Cout; ++co)
            for (int64_t ci = 0; ci < d.Cin; ++ci)
                for (int64_t kz = 0; kz < d.k; ++kz)
                    for (int64_t ky = 0; ky < d.k; ++ky)
                        for (int64_t kx = 0; kx < d.k; ++kx)
                            wflip[(((ci * d.Cout + co) * d.k + kz) * d.k + ky) * d.k + kx] =
                                w[(((co * d.Cin + ci) * d.k + (d.k - 1 - kz)) * d.k +
                                   (d.k - 1 - ky)) * d.k + (d.k - 1 - kx)];
        ConvDims dd;
        dd.B = 1;
        dd.Cin = d.Cout;
        dd.Cout = d.Cin;
        dd.k = d.k;
        dd.stride = 1;
        dd.Dp = Ge;
        dd.Hp = He;
        dd.Wp = We;
        dd.Do = d.Dp;
        dd.Ho = d.Hp;
        dd.Wo = d.Wp;
        conv_fwd_direct(gext.data(), wflip.data(), dxp, dd);
        return;
    }
    for (int64_t co = 0; co < d.Cout; ++co)
        for (int64_t zo = 0; zo < d.Do; ++zo)
            for (int64_t yo = 0; yo < d.Ho; ++yo) {
                const S* grow = g + ((co * d.Do + zo) * d.Ho + yo) * d.Wo;
                for (int64_t ci = 0; ci < d.Cin; ++ci)
                    for (int64_t kz = 0; kz < d.k; ++kz)
                        for (int64_t ky = 0; ky < d.k; ++ky) {
                            S* xrow =
                                dxp + ((ci * d.Dp + zo * 2 + kz) * d.Hp + yo * 2 + ky) * d.Wp;
                            const S* wrow = w + (((co * d.Cin + ci) * d.k + kz) * d.k + ky) * d.k;
                            for (int64_t kx = 0; kx < d.k; ++kx) {
                                const S wv = wrow[kx];
                                S* xk = xrow + kx;
                                for (int64_t xo = 0; xo < d.Wo; ++xo) xk[xo * 2] += wv * grow[xo];
                            }
                        }
            }
}

template <typename S>
Tensor<S> pad_all(const Tensor<S>& x, const ConvDims& d, PadMode mode) {
    Tensor<S> xp({d.B, d.Cin, d.Dp, d.Hp, d.Wp});
    for (int64_t b = 0; b < d.B; ++b)
        pad_volume(x.data() + b * d.Cin * d.D * d.H * d.W,
                   xp.data() + b * d.Cin * d.Dp * d.Hp * d.Wp, d, mode);
    return xp;
}

/// Core forward on the padded input.
template <typename S>
Tensor<S> conv_fwd_core(const Tensor<S>& xp, const Tensor<S>& w, const Tensor<S>* bias,
                        const ConvDims& d, bool use_gemm) {
    Tensor<S> y({d.B, d.Cout, d.Do, d.Ho, d.Wo});
    const int64_t xstride = d.Cin * d.Dp * d.Hp * d.Wp;
    const int64_t ystride = d.Cout * d.N;
    for (int64_t b = 0; b < d.B; ++b) {
        S* yb = y.data() + b * ystride;
        if (use_gemm) {
            std::vector<S>& col = workspace<S>(0, d.K * d.N);
            im2col(xp.data() + b * xstride, col.data(), d);
            ConstMatMap<S> W(w.data(), d.Cout, d.K);
            ConstMatMap<S> C(col.data(), d.K, d.N);
            MatMap<S> Y(yb, d.Cout, d.N);
            Y.noalias() = W * C;
            if (bias)
                for (int64_t co = 0; co < d.Cout; ++co) {
                    const S bv = (*bias)[co];
                    S* row = yb + co * d.N;
                    for (int64_t i = 0; i < d.N; ++i) row[i] += bv;
                }
        } else {
            if (bias) {
                for (int64_t co = 0; co < d.Cout; ++co)
                    std::fill_n(yb + co * d.N, d.N, (*bias)[co]);
            } else {
                std::fill_n(yb, ystride, S(0));
            }
            conv_fwd_direct(xp.data() + b * xstride, w.data(), yb, d);
        }
    }
    return y;
}

/// dW and optional d_bias from upstream g and padded input.
template <typename S>
void conv_dw_core(const Tensor<S>& xp, const Tensor<S>& g, Tensor<S>& dw, Tensor<S>* dbias,
                  const ConvDims& d, bool use_gemm) {
    const int64_t xstride = d.Cin * d.Dp * d.Hp * d.Wp;
    const int64_t gstride = d.Cout * d.N;
    for (int64_t b = 0; b < d.B; ++b) {
        const S* gb = g.data() + b * gstride;
        if (use_gemm) {
            std::vector<S>& col = workspace<S>(0, d.K * d.N);
            im2col(xp.data() + b * xstride, col.data(), d);
            ConstMatMap<S> G(gb, d.Cout, d.N);
            ConstMatMap<S> C(col.data(), d.K, d.N);
            MatMap<S> DW(dw.data(), d.Cout, d.K);
            DW.noalias() += G * C.transpose();
        } else {
            conv_dw_direct(xp.data() + b * xstride, gb, dw.data(), d);
        }
        if (dbias)
            for (int64_t co = 0; co < d.Cout; ++co) {
                S acc = S(0);
                const S* row = gb + co * d.N;
                for (int64_t i = 0; i < d.N; ++i) acc += row[i];
                (*dbias)[co] += acc;
            }
    }
}

/// Padded-input gradient from upstream g; caller unpads.
template <typename S>
Tensor<S> conv_dxp_core(const Tensor<S>& g, const Tensor<S>& w, const ConvDims& d, bool use_gemm) {
    Tensor<S> dxp = Tensor<S>::zeros({d.B, d.Cin, d.Dp, d.Hp, d.Wp});
    const int64_t xstride = d.Cin * d.Dp * d.Hp * d.Wp;
    const int64_t gstride = d.Cout * d.N;
    for (int64_t b = 0; b < d.B; ++b) {
        if (use_gemm) {
            std::vector<S>& col = workspace<S>(1, d.K * d.N);
            ConstMatMap<S> W(w.data(), d.Cout, d.K);
            ConstMatMap<S> G(g.data() + b * gstride, d.Cout, d.N);
            MatMap<S> C(col.data(), d.K, d.N);
            C.noalias() = W.transpose() * G;
            col2im_add(col.data(), dxp.data() + b * xstride, d);
        } else {
            conv_dx_direct(g.data() + b * gstride, w.data(), dxp.data() + b * xstride, d);
        }
    }
    return dxp;
}

} // namespace

template <typename S>
Tensor<S> conv3d_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* bias,
                         int stride, int pad, PadMode mode, ConvEngine engine) {
    const ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad);
    if (mode == PadMode::Reflect) GB_CHECK(d.k % 2 == 1, "reflection-padded conv needs odd kernel");
    if (bias) GB_CHECK(bias->numel() == d.Cout, "conv3d bias size mismatch");
    Tensor<S> xp = pad_all(x, d, mode);
    return conv_fwd_core(xp, w, bias, d, pick_im2col(d, engine));
}

template <typename S>
Var<S> conv3d(Var<S> x, Var<S> w, Var<S> bias, int stride, int pad, PadMode mode) {
    Tape<S>& t = *x.tape;
    const ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad);
    if (mode == PadMode::Reflect) GB_CHECK(d.k % 2 == 1, "reflection-padded conv needs odd kernel");
    Tensor<S> xv = x.value(), wv = w.value();
    Tensor<S> xp = pad_all(xv, d, mode);
    const bool gemm = pick_im2col(d, ConvEngine::Auto);
    const Tensor<S>* bp = bias.defined() ? &bias.value() : nullptr;
    if (bp) GB_CHECK(bp->numel() == d.Cout, "conv3d bias size mismatch");
    Tensor<S> y = conv_fwd_core(xp, wv, bp, d, gemm);
    GB_CHECK(!finite_checks_enabled() || all_finite(y), "non-finite values produced by op 'conv3d'");

    auto bwd = [x, w, bias, xp, wv, d, gemm, mode](Tape<S>& tp, typename Tape<S>::Node& n) {
        Tensor<S>* gw = tp.grad_if_needed(w.id);
        Tensor<S>* gb = bias.defined() ? tp.grad_if_needed(bias.id) : nullptr;
        if (gw || gb) {
            Tensor<S> dw_dummy = gw ? Tensor<S>() : Tensor<S>::zeros(wv.shape());
            conv_dw_core(xp, n.grad, gw ? *gw : dw_dummy, gb, d, gemm);
        }
        if (Tensor<S>* gx = tp.grad_if_needed(x.id)) {
            Tensor<S> dxp = conv_dxp_core(n.grad, wv, d, gemm);
            const int64_t xstride = d.Cin * d.Dp * d.Hp * d.Wp;
            for (int64_t b = 0; b < d.B; ++b)
                unpad_accumulate(dxp.data() + b * xstride,
                                 gx->data() + b * d.Cin * d.D * d.H * d.W, d, mode);
        }
    };
    if (bias.defined()) return t.make(std::move(y), "conv3d", {x, w, bias}, bwd);
    return t.make(std::move(y), "conv3d", {x, w}, bwd);
}

// ---------------------------------------------------------------------------
// Transposed convolution: the exact adjoint of conv3d(stride, pad) on the
// matching geometry. Weight layout [Cin, Cout, k, k, k].
// ---------------------------------------------------------------------------

template <typename S>
Var<S> conv_transpose3d(Var<S> x, Var<S> w, Var<S> bias, int stride, int pad, int output_pad) {
    Tape<S>& t = *x.tape;
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    GB_CHECK(xs.size() == 5, "conv_transpose3d input must be [B,C,D,H,W]");
    GB_CHECK(ws.size() == 5 && ws[0] == xs[1], "conv_transpose3d kernel must be [Cin,Cout,k,k,k]");
    const int64_t k = ws[2];
    GB_CHECK(output_pad < stride, "output_pad must be < stride");
    const int64_t outD = (xs[2] - 1) * stride - 2 * pad + k + output_pad;
    const int64_t outH = (xs[3] - 1) * stride - 2 * pad + k + output_pad;
    const int64_t outW = (xs[4] - 1) * stride - 2 * pad + k + output_pad;
    GB_CHECK(outD > 0 && outH > 0 && outW > 0, "conv_transpose3d output extent underflow");

    // Equivalent ordinary conv: big grid [B,Cout,out...] -> small grid x.
    Shape big{xs[0], ws[1], outD, outH, outW};
    Shape conv_w{xs[1], ws[1], k, k, k}; // [Cout_conv=Cin_T, Cin_conv=Cout_T, ...]
    const ConvDims d = conv_dims(big, conv_w, stride, pad);
    GB_CHECK(d.Do == xs[2] && d.Ho == xs[3] && d.Wo == xs[4],
             "conv_transpose3d geometry mismatch");

    Tensor<S> xv = x.value(), wv = w.value();
    const bool gemm = pick_im2col(d, ConvEngine::Auto);
    Tensor<S> yp = conv_dxp_core(xv, wv, d, gemm); // scatter into padded big grid
    Tensor<S> y({d.B, d.Cin, outD, outH, outW});
    { // slice interior [pad, pad+out)
        for (int64_t b = 0; b < d.B; ++b)
            for (int64_t c = 0; c < d.Cin; ++c)
                for (int64_t z = 0; z < outD; ++z)
                    for (int64_t yy = 0; yy < outH; ++yy) {
                        const S* src = yp.data() +
                                       (((b * d.Cin + c) * d.Dp + z + pad) * d.Hp + yy + pad) * d.Wp + pad;
                        S* dst = y.data() + ((b * d.Cin + c) * outD * outH + z * outH + yy) * outW;
                        std::copy_n(src, outW, dst);
                    }
    }
    if (bias.defined()) {
        const Tensor<S>& bv = bias.value();
        GB_CHECK(bv.numel() == d.Cin, "conv_transpose3d bias size mismatch");
        const int64_t sp = outD * outH * outW;
        for (int64_t b = 0; b < d.B; ++b)
            for (int64_t c = 0; c < d.Cin; ++c) {
                S* dst = y.data() + (b * d.Cin + c) * sp;
                const S bvc = bv[c];
                for (int64_t i = 0; i < sp; ++i) dst[i] += bvc;
            }
    }
    GB_CHECK(!finite_checks_enabled() || all_finite(y),
             "non-finite values produced by op 'conv_transpose3d'");

    auto bwd = [x, w, bias, xv, wv, d, gemm, pad, outD, outH, outW](Tape<S>& tp,
                                                                    typename Tape<S>::Node& n) {
        // Pad upstream into the big padded grid once (zero padding).
        Tensor<S> gp = Tensor<S>::zeros({d.B, d.Cin, d.Dp, d.Hp, d.Wp});
        for (int64_t b = 0; b < d.B; ++b)
            for (int64_t c = 0; c < d.Cin; ++c)
                for (int64_t z = 0; z < outD; ++z)
                    for (int64_t yy = 0; yy < outH; ++yy) {
                        const S* src =
                            n.grad.data() + ((b * d.Cin + c) * outD * outH + z * outH + yy) * outW;
                        S* dst = gp.data() +
                                 (((b * d.Cin + c) * d.Dp + z + pad) * d.Hp + yy + pad) * d.Wp + pad;
                        std::copy_n(src, outW, dst);
                    }
        if (Tensor<S>* gx = tp.grad_if_needed(x.id)) {
            Tensor<S> gsmall = conv_fwd_core(gp, wv, static_cast<const Tensor<S>*>(nullptr), d, gemm);
            const S* pg = gsmall.data();
            S* pd = gx->data();
            for (int64_t i = 0; i < gsmall.numel(); ++i) pd[i] += pg[i];
        }
        if (Tensor<S>* gw = tp.grad_if_needed(w.id)) {
            conv_dw_core(gp, xv, *gw, static_cast<Tensor<S>*>(nullptr), d, gemm);
        }
        if (bias.defined()) {
            if (Tensor<S>* gb = tp.grad_if_needed(bias.id)) {
                const int64_t sp = outD * outH * outW;
                for (int64_t b = 0; b < d.B; ++b)
                    for (int64_t c = 0; c < d.Cin; ++c) {
                        const S* src = n.grad.data() + (b * d.Cin + c) * sp;
                        S acc = S(0);
                        for (int64_t i = 0; i < sp; ++i) acc += src[i];
                        (*gb)[c] += acc;
                    }
            }
        }
    };
    if (bias.defined()) return t.make(std::move(y), "conv_transpose3d", {x, w, bias}, bwd);
    return t.make(std::move(y), "conv_transpose3d", {x, w}, bwd);
}

// ---------------------------------------------------------------------------
// Causal depthwise 1D convolution
// ---------------------------------------------------------------------------

template <typename S>
Var<S> depthwise_conv1d(Var<S> x, Var<S> w, Var<S> bias) {
    Tape<S>& t = *x.tape;
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    GB_CHECK(xs.size() == 3, "depthwise_conv1d input must be [B,C,L]");
    GB_CHECK(ws.size() == 2 && ws[0] == xs[1], "depthwise_conv1d weight must be [C,K]");
    const int64_t B = xs[0], C = xs[1], L = xs[2], K = ws[1];
    GB_CHECK(K >= 1, "depthwise_conv1d width must be >= 1");
    Tensor<S> xv = x.value(), wv = w.value();
    Tensor<S> y(xs);
    const bool has_bias = bias.defined();
    const Tensor<S>* bv = has_bias ? &bias.value() : nullptr;
    if (bv) GB_CHECK(bv->numel() == C, "depthwise_conv1d bias size mismatch");
    // w[c,K-1] multiplies the current position; earlier taps look back.
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const S* xr = xv.data() + (b * C + c) * L;
            const S* wr = wv.data() + c * K;
            S* yr = y.data() + (b * C + c) * L;
            const S b0 = bv ? (*bv)[c] : S(0);
            for (int64_t i = 0; i < L; ++i) {
                S acc = b0;
                const int64_t j0 = std::max<int64_t>(0, K - 1 - i);
                for (int64_t j = j0; j < K; ++j) acc += wr[j] * xr[i - (K - 1 - j)];
                yr[i] = acc;
            }
        }
    GB_CHECK(!finite_checks_enabled() || all_finite(y),
             "non-finite values produced by op 'depthwise_conv1d'");

    auto bwd = [x, w, bias, xv, wv, B, C, L, K, has_bias](Tape<S>& tp, typename Tape<S>::Node& n) {
        Tensor<S>* gx = tp.grad_if_needed(x.id);
        Tensor<S>* gw = tp.grad_if_needed(w.id);
        Tensor<S>* gb = has_bias ? tp.grad_if_needed(bias.id) : nullptr;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const S* xr = xv.data() + (b * C + c) * L;
                const S* wr = wv.data() + c * K;
                const S* gr = n.grad.data() + (b * C + c) * L;
                for (int64_t i = 0; i < L; ++i) {
                    const S g = gr[i];
                    const int64_t j0 = std::max<int64_t>(0, K - 1 - i);
                    for (int64_t j = j0; j < K; ++j) {
                        const int64_t src = i - (K - 1 - j);
                        if (gx) (*gx)[(b * C + c) * L + src] += g * wr[j];
                        if (gw) (*gw)[c * K + j] += g * xr[src];
                    }
                    if (gb) (*gb)[c] += g;
                }
            }
    };
    if (has_bias) return t.make(std::move(y), "depthwise_conv1d", {x, w, bias}, bwd);
    return t.make(std::move(y), "depthwise_conv1d", {x, w}, bwd);
}

// ---------------------------------------------------------------------------
// Instance normalization
// ---------------------------------------------------------------------------

template <typename S>
Var<S> instance_norm(Var<S> x, Var<S> gamma, Var<S> beta, double eps) {
    Tape<S>& t = *x.tape;
    const Shape& xs = x.shape();
    GB_CHECK(xs.size() >= 3, "instance_norm input must be [B,C,spatial...]");
    const int64_t B = xs[0], C = xs[1];
    const int64_t sp = numel_of(xs) / (B * C);
    GB_CHECK(sp >= 2, "instance_norm requires spatial size >= 2");
    GB_CHECK(gamma.numel() == C && beta.numel() == C, "instance_norm affine size mismatch");
    Tensor<S> xv = x.value();
    const Tensor<S>& gv = gamma.value();
    const Tensor<S>& bv = beta.value();
    Tensor<S> y(xs);
    Tensor<S> mean_({B, C}), istd_({B, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const S* xr = xv.data() + (b * C + c) * sp;
            S m = S(0);
            for (int64_t i = 0; i < sp; ++i) m += xr[i];
            m /= static_cast<S>(sp);
            S var = S(0);
            for (int64_t i = 0; i < sp; ++i) {
                const S dv = xr[i] - m;
                var += dv * dv;
            }
            var /= static_cast<S>(sp);
            const S istd = S(1) / std::sqrt(var + static_cast<S>(eps));
            mean_[b * C + c] = m;
            istd_[b * C + c] = istd;
            const S g = gv[c], bb = bv[c];
            S* yr = y.data() + (b * C + c) * sp;
            for (int64_t i = 0; i < sp; ++i) yr[i] = g * (xr[i] - m) * istd + bb;
        }
    GB_CHECK(!finite_checks_enabled() || all_finite(y),
             "non-finite values produced by op 'instance_norm'");

    auto bwd = [x, gamma, beta, xv, gv, mean_, istd_, B, C, sp](Tape<S>& tp,
                                                                typename Tape<S>::Node& n) {
        Tensor<S>* gx = tp.grad_if_needed(x.id);
        Tensor<S>* gg = tp.grad_if_needed(gamma.id);
        Tensor<S>* gb = tp.grad_if_needed(beta.id);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const S* xr = xv.data() + (b * C + c) * sp;
                const S* gr = n.grad.data() + (b * C + c) * sp;
                const S m = mean_[b * C + c], istd = istd_[b * C + c];
                S sum_g = S(0), sum_gx = S(0), sum_gb = S(0);
                for (int64_t i = 0; i < sp; ++i) {
                    const S xh = (xr[i] - m) * istd;
                    sum_g += gr[i];
                    sum_gx += gr[i] * xh;
                    sum_gb += gr[i];
                }
                if (gg) (*gg)[c] += sum_gx;
                if (gb) (*gb)[c] += sum_gb;
                if (gx) {
                    const S gc = gv[c];
                    const S mg = sum_g / static_cast<S>(sp);
                    const S mgx = sum_gx / static_cast<S>(sp);
                    S* dst = gx->data() + (b * C + c) * sp;
                    for (int64_t i = 0; i < sp; ++i) {
                        const S xh = (xr[i] - m) * istd;
                        dst[i] += gc * istd * (gr[i] - mg - xh * mgx);
                    }
                }
            }
    };
    return t.make(std::move(y), "instance_norm", {x, gamma, beta}, bwd);
}

#define GB_INSTANTIATE_CONV(S)                                                                  \
    template Tensor<S> conv3d_forward<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>*, \
                                         int, int, PadMode, ConvEngine);                        \
    template Var<S> conv3d<S>(Var<S>, Var<S>, Var<S>, int, int, PadMode);                       \
    template Var<S> conv_transpose3d<S>(Var<S>, Var<S>, Var<S>, int, int, int);                 \
    template Var<S> depthwise_conv1d<S>(Var<S>, Var<S>, Var<S>);                                \
    template Var<S> instance_norm<S>(Var<S>, Var<S>, Var<S>, double);

GB_INSTANTIATE_CONV(double)
GB_INSTANTIATE_CONV(float)

} // namespace gambas
