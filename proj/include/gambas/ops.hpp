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

#pragma once

#include <cstdint>
#include <vector>

#include "gambas/tape.hpp"
#include "gambas/tensor.hpp"

namespace gambas {

// ---------------------------------------------------------------------------
// Elementwise and shape ops. Binary ops broadcast with trailing-axis
// alignment only: shapes are right-aligned and each axis must match or be 1.
// ---------------------------------------------------------------------------

enum class EwKind { Add, Sub, Mul, Neg, Exp, Log, Sigmoid, Tanh, Relu, Silu, Softplus, Scale };

template <typename S> Var<S> add(Var<S> a, Var<S> b);
template <typename S> Var<S> sub(Var<S> a, Var<S> b);
template <typename S> Var<S> mul(Var<S> a, Var<S> b);
template <typename S> Var<S> neg(Var<S> a);
template <typename S> Var<S> vexp(Var<S> a);
template <typename S> Var<S> vlog(Var<S> a);
template <typename S> Var<S> sigmoid(Var<S> a);
template <typename S> Var<S> vtanh(Var<S> a);
template <typename S> Var<S> relu(Var<S> a);
template <typename S> Var<S> leaky_relu(Var<S> a, double slope);
template <typename S> Var<S> silu(Var<S> a);
template <typename S> Var<S> softplus(Var<S> a);
template <typename S> Var<S> vabs(Var<S> a);
template <typename S> Var<S> scale(Var<S> a, double c);
template <typename S> Var<S> add_scalar(Var<S> a, double c);

/// Kind-dispatched entry point; `b` ignored for unary kinds, `c` only used
/// by Scale.
template <typename S> Var<S> elementwise(EwKind kind, Var<S> a, Var<S> b = {}, double c = 1.0);

template <typename S> Var<S> sum(Var<S> a);
template <typename S> Var<S> mean(Var<S> a);

template <typename S> Var<S> reshape(Var<S> a, Shape shape);
template <typename S> Var<S> concat(Var<S> a, Var<S> b, int axis);
template <typename S> Var<S> narrow(Var<S> a, int axis, int64_t start, int64_t len);
/// [.., M, N] -> [.., N, M]
template <typename S> Var<S> transpose_last2(Var<S> a);
template <typename S> Var<S> reverse_axis(Var<S> a, int axis);

/// out[.., i] = a[.., perm[i]] along the last axis; perm must be a bijection.
template <typename S> Var<S> gather_permute(Var<S> a, const std::vector<int64_t>& perm);
/// Exact inverse of gather_permute with the same perm.
template <typename S> Var<S> scatter_inverse(Var<S> a, const std::vector<int64_t>& perm);

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }
template <typename S>
Var<S> operator*(Var<S> a, Var<S> b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Matrix multiply: a [.., M, K] x b [K, N] or [.., K, N] with broadcastable
// batch dims. Backward is the pair of transposed products.
// ---------------------------------------------------------------------------

template <typename S> Var<S> matmul(Var<S> a, Var<S> b);

// ---------------------------------------------------------------------------
// Convolutions. Volumes are [B, C, D, H, W] with W (the x axis) contiguous.
// ---------------------------------------------------------------------------

enum class PadMode { Zero, Reflect };
enum class ConvEngine { Auto, Direct, Im2col };

/// x [B,Cin,D,H,W], w [Cout,Cin,k,k,k], optional bias [Cout].
/// Reflection padding requires odd kernel extent.
template <typename S>
Var<S> conv3d(Var<S> x, Var<S> w, Var<S> bias, int stride, int pad, PadMode mode);

/// Forward-only kernel with an explicit engine, for cross-checking the
/// direct loop against the im2col/GEMM path.
template <typename S>
Tensor<S> conv3d_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* bias,
                         int stride, int pad, PadMode mode, ConvEngine engine);

/// x [B,Cin,D,H,W], w [Cin,Cout,k,k,k]; adjoint of conv3d(stride,pad) with
/// output_padding fixed so that stride-2 decoding exactly doubles extents.
template <typename S>
Var<S> conv_transpose3d(Var<S> x, Var<S> w, Var<S> bias, int stride, int pad, int output_pad);

/// Causal per-channel 1D convolution: x [B,C,L], w [C,K], bias [C];
/// output at t depends on inputs at positions <= t only.
template <typename S>
Var<S> depthwise_conv1d(Var<S> x, Var<S> w, Var<S> bias);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-(batch, channel) normalization over all trailing spatial axes,
/// then affine: gamma [C], beta [C]. Requires spatial size >= 2.
template <typename S>
Var<S> instance_norm(Var<S> x, Var<S> gamma, Var<S> beta, double eps = 1e-5);

// ---------------------------------------------------------------------------
// Raw helpers shared by op implementations and tests
// ---------------------------------------------------------------------------

/// Broadcast-resulting shape under trailing alignment; throws on mismatch.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename S> bool all_finite(const Tensor<S>& t);

/// Forward ops raise on non-finite outputs while enabled (the default).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

/// Worker count for the data-parallel conv/matmul internals. The work
/// decomposition is fixed per shape, so results are bit-identical for any
/// thread count. Initialized from GAMBAS_THREADS (default: all cores).
void set_compute_threads(int n);
int compute_threads();

} // namespace gambas
