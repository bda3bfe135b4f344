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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gambas/optim.hpp"
#include "gambas/ops.hpp"
#include "gambas/rng.hpp"
#include "gambas/tape.hpp"

namespace gambas {

// ---------------------------------------------------------------------------
// Time-invariant state space machinery (diagonal A), used directly by the
// dual-form equivalence oracles and degeneration tests.
// ---------------------------------------------------------------------------

/// h'(t) = A h(t) + B x(t); y(t) = C h(t) + D x(t), with diagonal A.
struct LTIParams {
    std::vector<double> a; // diag(A), stable when negative
    std::vector<double> b; // B, N x 1
    std::vector<double> c; // C, 1 x N
    double d = 0.0;        // residual
    double delta = 1.0;    // timescale, > 0
};

struct DiscreteParams {
    std::vector<double> abar; // exp(delta * a), elementwise
    std::vector<double> bbar; // (delta A)^-1 (exp(delta A) - I) delta B
};

/// Scalar zero-order-hold step; uses the first-order limit bbar = delta*b
/// when |delta*a| < 1e-6 to avoid the 0/0 singularity.
void zoh_element(double a, double delta, double b, double& abar, double& bbar);

DiscreteParams zoh_discretize(const LTIParams& p);

/// h_t = Abar h_{t-1} + Bbar x_t; y_t = C h_t + D x_t, h_0 = 0.
std::vector<double> recurrent_scan(const DiscreteParams& dp, const std::vector<double>& c,
                                   double d, std::span<const double> x);

/// Kbar[l] = C Abar^l Bbar for l = 0..L-1.
std::vector<double> kernel_materialize(const DiscreteParams& dp, const std::vector<double>& c,
                                       int64_t len);

/// Causal convolution with Kbar plus the D residual; equals recurrent_scan.
std::vector<double> kernel_apply(const std::vector<double>& kbar, double d,
                                 std::span<const double> x);

// ---------------------------------------------------------------------------
// Selective (input-dependent) scan
// ---------------------------------------------------------------------------

/// u, dt: [B,C,L]; a: [C,N] (negative diagonal); bt, ct: [B,N,L] shared
/// across channels; d_res: [C]. Per channel, N-dim state:
///   h_t = exp(dt_t a) h_{t-1} + ((exp(dt_t a)-1)/a) bt_t u_t
///   y_t = <ct_t, h_t> + d_res u_t
/// Differentiable; dt must be positive (softplus upstream).
template <typename S>
Var<S> selective_scan(Var<S> u, Var<S> dt, Var<S> a, Var<S> bt, Var<S> ct, Var<S> d_res);

/// Same result via the associative composition
/// (a2,b2) o (a1,b1) = (a2*a1, a2*b1 + b2), evaluated with a work-efficient
/// (Blelloch) scan. Forward only; matches the sequential scan to 1e-10.
template <typename S>
Tensor<S> selective_scan_parallel(const Tensor<S>& u, const Tensor<S>& dt, const Tensor<S>& a,
                                  const Tensor<S>& bt, const Tensor<S>& ct,
                                  const Tensor<S>& d_res);

/// Sequential reference on plain tensors (the oracle the parallel variant
/// is checked against).
template <typename S>
Tensor<S> selective_scan_reference(const Tensor<S>& u, const Tensor<S>& dt, const Tensor<S>& a,
                                   const Tensor<S>& bt, const Tensor<S>& ct,
                                   const Tensor<S>& d_res);

// ---------------------------------------------------------------------------
// Mamba block
// ---------------------------------------------------------------------------

struct MambaBlockConfig {
    int64_t d_model = 0;
    int64_t d_state = 16;
    int64_t expand = 2;
    int64_t conv_width = 4;
    bool bidirectional = true;

    int64_t d_inner() const { return expand * d_model; }
    int64_t dt_rank() const { return (d_model + 15) / 16; }
};

/// One scan direction: in-projection with gate branch, causal depthwise
/// conv + SiLU, input-dependent (dt, B, C) projections, selective scan,
/// gated output projection. No residual here.
template <typename S>
struct MambaCore {
    MambaBlockConfig cfg;
    ParamPtr<S> in_proj_w;            // [d_model, 2*d_inner]
    ParamPtr<S> conv_w, conv_b;       // [d_inner, width], [d_inner]
    ParamPtr<S> x_proj_w;             // [d_inner, dt_rank + 2*d_state]
    ParamPtr<S> dt_proj_w, dt_proj_b; // [dt_rank, d_inner], [d_inner]
    ParamPtr<S> a_log;                // [d_inner, d_state]; A = -exp(a_log)
    ParamPtr<S> d_res;                // [d_inner]
    ParamPtr<S> out_proj_w;           // [d_inner, d_model]

    Var<S> forward(Tape<S>& tape, Var<S> seq) const; // seq [B,L,d_model]
};

/// Residual Mamba block; bidirectional configs run an independent core
/// over the reversed sequence and sum the two branch outputs.
template <typename S>
struct MambaBlock {
    MambaBlockConfig cfg;
    MambaCore<S> fwd;
    std::optional<MambaCore<S>> rev;

    Var<S> forward(Tape<S>& tape, Var<S> seq) const;
};

template <typename S>
MambaCore<S> make_mamba_core(ParamStore<S>& store, const std::string& prefix,
                             const MambaBlockConfig& cfg, Rng& rng);

template <typename S>
MambaBlock<S> make_mamba_block(ParamStore<S>& store, const std::string& prefix,
                               const MambaBlockConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Equivalence oracles (also behind the `ssm-check` CLI subcommand)
// ---------------------------------------------------------------------------

struct SsmCheckReport {
    double zoh_analytic_err = 0;      // vs closed forms, tol 1e-12
    double zoh_limit_err = 0;         // delta -> 0 limit, tol 1e-8
    double lti_equivalence_err = 0;   // recurrent vs kernel, 100 draws, tol 1e-10
    double scan_equivalence_err = 0;  // parallel vs sequential, 50 draws, tol 1e-10
    double associativity_err = 0;     // composition on random triples, tol 1e-12
    bool pass = false;
};

SsmCheckReport run_ssm_checks(uint64_t seed = 0);

} // namespace gambas
