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

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gambas/gradcheck.hpp"
#include "gambas/rng.hpp"
#include "gambas/ssm.hpp"

using namespace gambas;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
    Tensor<double> t(std::move(shape));
    for (double& v : t) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("ZOH discretization analytic values") {
    { // A=-1, delta=ln2, B=1 -> Abar=0.5, Bbar=0.5
        double abar, bbar;
        zoh_element(-1.0, std::log(2.0), 1.0, abar, bbar);
        CHECK(abar == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(bbar == doctest::Approx(0.5).epsilon(1e-12));
    }
    { // A=-2, delta=1, B=1
        double abar, bbar;
        zoh_element(-2.0, 1.0, 1.0, abar, bbar);
        CHECK(abar == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
        CHECK(bbar == doctest::Approx((1.0 - std::exp(-2.0)) / 2.0).epsilon(1e-14));
    }
    { // delta -> 0+: Abar -> 1, Bbar -> delta*B
        double abar, bbar;
        zoh_element(-1.0, 1e-9, 2.0, abar, bbar);
        CHECK(std::abs(abar - 1.0) < 1e-8);
        CHECK(std::abs(bbar - 2e-9) < 1e-8);
    }
    LTIParams p;
    p.a = {-1.0};
    p.b = {1.0};
    p.c = {1.0};
    p.delta = 0.0;
    CHECK_THROWS(zoh_discretize(p));
}

TEST_CASE("ZOH stability: negative A and positive delta keep |Abar| < 1") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        double abar, bbar;
        const double a = rng.uniform(-5.0, -0.01);
        const double delta = rng.uniform(1e-4, 3.0);
        zoh_element(a, delta, rng.uniform(-2, 2), abar, bbar);
        CHECK(abar > 0.0);
        CHECK(abar < 1.0);
    }
    // bounded state for bounded input
    DiscreteParams dp;
    dp.abar = {0.9};
    dp.bbar = {0.5};
    std::vector<double> x(256, 1.0);
    auto y = recurrent_scan(dp, {1.0}, 0.0, x);
    const double bound = 0.5 * 1.0 / (1.0 - 0.9);
    for (double v : y) CHECK(std::abs(v) <= bound + 1e-9);
}

TEST_CASE("recurrent scan closed forms") {
    DiscreteParams dp;
    dp.abar = {0.5, 0.25};
    dp.bbar = {1.0, 2.0};
    const std::vector<double> c{0.7, -0.3};
    const double d = 0.1;
    { // impulse response: y_t = C Abar^(t-1) Bbar + D delta_t
        std::vector<double> x(6, 0.0);
        x[0] = 1.0;
        auto y = recurrent_scan(dp, c, d, x);
        for (int t = 0; t < 6; ++t) {
            double expect = (t == 0) ? d : 0.0;
            for (int n = 0; n < 2; ++n)
                expect += c[n] * std::pow(dp.abar[n], t) * dp.bbar[n];
            CHECK(y[t] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    { // Abar = 0 is memoryless: y_t = (C Bbar + D) x_t
        DiscreteParams mem;
        mem.abar = {0.0, 0.0};
        mem.bbar = {1.0, 2.0};
        std::vector<double> x{1.0, -2.0, 3.0};
        auto y = recurrent_scan(mem, c, d, x);
        const double gain = c[0] * 1.0 + c[1] * 2.0 + d;
        for (int t = 0; t < 3; ++t) CHECK(y[t] == doctest::Approx(gain * x[t]).epsilon(1e-12));
        // and the kernel has a single nonzero tap
        auto kbar = kernel_materialize(mem, c, 5);
        CHECK(kbar[0] == doctest::Approx(c[0] * 1.0 + c[1] * 2.0));
        for (int l = 1; l < 5; ++l) CHECK(kbar[l] == 0.0);
    }
    { // zero input -> zero output
        std::vector<double> x(5, 0.0);
        for (double v : recurrent_scan(dp, c, d, x)) CHECK(v == 0.0);
    }
}

TEST_CASE("kernel form equals recurrent form (LTI equivalence)") {
    Rng rng(43);
    const int64_t L = 32;
    double maxdev = 0;
    for (int trial = 0; trial < 25; ++trial) {
        LTIParams p;
        const int n = 1 + static_cast<int>(rng.uniform_int(8));
        p.delta = rng.uniform(0.01, 1.0);
        for (int i = 0; i < n; ++i) {
            p.a.push_back(rng.uniform(-2.0, -0.1));
            p.b.push_back(rng.uniform(-1.0, 1.0));
            p.c.push_back(rng.uniform(-1.0, 1.0));
        }
        p.d = rng.uniform(-1.0, 1.0);
        std::vector<double> x(L);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        const DiscreteParams dp = zoh_discretize(p);
        const auto kbar = kernel_materialize(dp, p.c, L);
        CHECK(kbar[0] == doctest::Approx(std::inner_product(p.c.begin(), p.c.end(),
                                                            dp.bbar.begin(), 0.0))
                             .epsilon(1e-12)); // Kbar[0] = C Bbar
        const auto yr = recurrent_scan(dp, p.c, p.d, x);
        const auto yk = kernel_apply(kbar, p.d, x);
        for (int64_t t = 0; t < L; ++t) maxdev = std::max(maxdev, std::abs(yr[t] - yk[t]));
    }
    CHECK(maxdev < 1e-10);
}

TEST_CASE("selective scan degenerates to the LTI scan with constant projections") {
    Rng rng(47);
    const int64_t L = 24, N = 4;
    LTIParams p;
    p.delta = 0.3;
    for (int n = 0; n < N; ++n) {
        p.a.push_back(rng.uniform(-2.0, -0.2));
        p.b.push_back(rng.uniform(-1, 1));
        p.c.push_back(rng.uniform(-1, 1));
    }
    p.d = 0.4;
    std::vector<double> x(L);
    for (double& v : x) v = rng.uniform(-1, 1);

    Tensor<double> u({1, 1, L}), dt({1, 1, L}), a({1, N}), bt({1, N, L}), ct({1, N, L}), dres({1});
    for (int64_t t = 0; t < L; ++t) {
        u[t] = x[t];
        dt[t] = p.delta;
        for (int64_t n = 0; n < N; ++n) {
            bt[n * L + t] = p.b[n];
            ct[n * L + t] = p.c[n];
        }
    }
    for (int64_t n = 0; n < N; ++n) a[n] = p.a[n];
    dres[0] = p.d;

    Tensor<double> ys = selective_scan_reference(u, dt, a, bt, ct, dres);
    const auto yr = recurrent_scan(zoh_discretize(p), p.c, p.d, x);
    for (int64_t t = 0; t < L; ++t)
        CHECK(ys[t] == doctest::Approx(yr[t]).epsilon(1e-12));
}

TEST_CASE("selective scan is causal") {
    Rng rng(53);
    const int64_t L = 16, N = 3, C = 2;
    Tensor<double> u = random_tensor({1, C, L}, rng);
    Tensor<double> dt = random_tensor({1, C, L}, rng, 0.05, 0.8);
    Tensor<double> a = random_tensor({C, N}, rng, -2, -0.1);
    Tensor<double> bt = random_tensor({1, N, L}, rng);
    Tensor<double> ct = random_tensor({1, N, L}, rng);
    Tensor<double> dres = random_tensor({C}, rng);
    Tensor<double> y1 = selective_scan_reference(u, dt, a, bt, ct, dres);
    Tensor<double> u2 = u.clone();
    u2[10] += 2.5; // perturb channel 0 at t=10
    Tensor<double> y2 = selective_scan_reference(u2, dt, a, bt, ct, dres);
    for (int64_t t = 0; t < 10; ++t) CHECK(y1[t] == y2[t]);
    CHECK(y1[10] != y2[10]);
}

TEST_CASE("selective scan gradient matches finite differences (L=16, N=4)") {
    Rng rng(59);
    const int64_t L = 16, N = 4, C = 2;
    Tensor<double> u = random_tensor({1, C, L}, rng);
    Tensor<double> dt_raw = random_tensor({1, C, L}, rng, -1.0, 1.0);
    Tensor<double> a_log = random_tensor({C, N}, rng, -1.0, 0.5);
    Tensor<double> bt = random_tensor({1, N, L}, rng);
    Tensor<double> ct = random_tensor({1, N, L}, rng);
    Tensor<double> dres = random_tensor({C}, rng);
    auto build = [](Tape<double>& t, std::vector<Var<double>>& leaves) {
        Var<double> dt = softplus(leaves[1]);
        Var<double> a = neg(vexp(leaves[2]));
        Var<double> y = selective_scan(leaves[0], dt, a, leaves[3], leaves[4], leaves[5]);
        return sum(vtanh(y));
    };
    FdReport rep = finite_diff_check(build, {u, dt_raw, a_log, bt, ct, dres}, 1e-4);
    CHECK(rep.pass);
}

TEST_CASE("parallel scan equals the sequential scan") {
    Rng rng(61);
    double maxdev = 0;
    for (const int64_t L : {int64_t(1), int64_t(7), int64_t(64)}) {
        for (int trial = 0; trial < 6; ++trial) {
            const int64_t C = 1 + rng.uniform_int(3), N = 1 + rng.uniform_int(8);
            Tensor<double> u = random_tensor({1, C, L}, rng);
            Tensor<double> dt = random_tensor({1, C, L}, rng, 0.01, 1.0);
            Tensor<double> a = random_tensor({C, N}, rng, -2, -0.1);
            Tensor<double> bt = random_tensor({1, N, L}, rng);
            Tensor<double> ct = random_tensor({1, N, L}, rng);
            Tensor<double> dres = random_tensor({C}, rng);
            Tensor<double> ys = selective_scan_reference(u, dt, a, bt, ct, dres);
            Tensor<double> yp = selective_scan_parallel(u, dt, a, bt, ct, dres);
            for (int64_t i = 0; i < ys.numel(); ++i)
                maxdev = std::max(maxdev, std::abs(ys[i] - yp[i]));
        }
    }
    CHECK(maxdev < 1e-10);
}

TEST_CASE("ssm-check oracle suite passes") {
    const SsmCheckReport rep = run_ssm_checks(0);
    CHECK(rep.zoh_analytic_err < 1e-12);
    CHECK(rep.zoh_limit_err < 1e-8);
    CHECK(rep.lti_equivalence_err < 1e-10);
    CHECK(rep.scan_equivalence_err < 1e-10);
    CHECK(rep.associativity_err < 1e-12);
    CHECK(rep.pass);
}

TEST_CASE("mamba block: zero output projection acts as identity") {
    Rng rng(67);
    MambaBlockConfig cfg;
    cfg.d_model = 8;
    cfg.d_state = 4;
    cfg.bidirectional = true;
    ParamStore<double> store;
    MambaBlock<double> blk = make_mamba_block(store, "m", cfg, rng);
    std::fill(blk.fwd.out_proj_w->value.begin(), blk.fwd.out_proj_w->value.end(), 0.0);
    std::fill(blk.rev->out_proj_w->value.begin(), blk.rev->out_proj_w->value.end(), 0.0);
    Tensor<double> seq = random_tensor({2, 5, 8}, rng);
    Tape<double> tape;
    Var<double> out = blk.forward(tape, tape.leaf(seq));
    REQUIRE(out.shape() == seq.shape());
    for (int64_t i = 0; i < seq.numel(); ++i) CHECK(out.value()[i] == seq[i]);
}

TEST_CASE("mamba block preserves shape across sequence lengths") {
    Rng rng(71);
    MambaBlockConfig cfg;
    cfg.d_model = 4;
    cfg.d_state = 4;
    ParamStore<double> store;
    MambaBlock<double> blk = make_mamba_block(store, "m", cfg, rng);
    for (const int64_t L : {int64_t(8), int64_t(27)}) {
        Tensor<double> seq = random_tensor({1, L, 4}, rng);
        Tape<double> tape;
        Var<double> out = blk.forward(tape, tape.leaf(seq));
        CHECK(out.shape() == seq.shape());
    }
}

TEST_CASE("mamba block gradient check (d_model=4, N=4, L=8)") {
    Rng rng(73);
    MambaBlockConfig cfg;
    cfg.d_model = 4;
    cfg.d_state = 4;
    cfg.bidirectional = true;
    ParamStore<double> store;
    MambaBlock<double> blk = make_mamba_block(store, "m", cfg, rng);
    Tensor<double> seq = random_tensor({1, 8, 4}, rng);

    Tape<double> tape;
    Var<double> leaf = tape.leaf(seq, true);
    Var<double> loss = sum(vtanh(blk.forward(tape, leaf)));
    store.zero_grad();
    tape.backward(loss);

    std::vector<std::pair<double*, double>> probes;
    for (int64_t i = 0; i < seq.numel(); ++i)
        probes.emplace_back(&seq[i], tape.grad_of(leaf)[i]);
    for (auto& p : store.items)
        for (int64_t i = 0; i < p->value.numel(); i += 3)
            probes.emplace_back(&p->value[i], p->grad[i]);

    auto loss_fn = [&]() {
        Tape<double> t2;
        return sum(vtanh(blk.forward(t2, t2.leaf(seq)))).value()[0];
    };
    FdReport rep = finite_diff_probe(loss_fn, probes, 1e-4, 2);
    CHECK(rep.pass);
    CHECK(rep.checked > 100);
}

TEST_CASE("bidirectional branches mirror on palindromic input with tied weights") {
    Rng rng(79);
    MambaBlockConfig cfg;
    cfg.d_model = 6;
    cfg.d_state = 4;
    cfg.bidirectional = false; // use the core directly
    ParamStore<double> store;
    MambaCore<double> core = make_mamba_core(store, "c", cfg, rng);

    const int64_t L = 9;
    Tensor<double> seq({1, L, 6});
    for (int64_t l = 0; l < L; ++l)
        for (int64_t c = 0; c < 6; ++c) {
            const double v = rng.uniform(-1, 1);
            seq[l * 6 + c] = v;
            seq[(L - 1 - l) * 6 + c] = v; // palindrome in time
        }
    Tape<double> tape;
    // forward branch: core over seq; reverse branch: core over reversed seq,
    // re-reversed. On a palindrome the branch inputs coincide, so the raw
    // branch outputs must match and the re-reversed contribution is the
    // exact mirror of the forward branch output.
    Var<double> fwd_out = core.forward(tape, tape.leaf(seq));
    Var<double> rev_out = core.forward(tape, reverse_axis(tape.leaf(seq), 1));
    Var<double> rev_contrib = reverse_axis(rev_out, 1);
    for (int64_t l = 0; l < L; ++l)
        for (int64_t c = 0; c < 6; ++c) {
            CHECK(fwd_out.value()[l * 6 + c] == rev_out.value()[l * 6 + c]);
            CHECK(fwd_out.value()[l * 6 + c] == rev_contrib.value()[(L - 1 - l) * 6 + c]);
        }
}

TEST_CASE("unidirectional block equals a single forward core plus residual") {
    Rng rng(83);
    MambaBlockConfig cfg;
    cfg.d_model = 6;
    cfg.d_state = 4;
    cfg.bidirectional = false;
    ParamStore<double> store;
    MambaBlock<double> blk = make_mamba_block(store, "m", cfg, rng);
    Tensor<double> seq = random_tensor({1, 7, 6}, rng);
    Tape<double> tape;
    Var<double> a = blk.forward(tape, tape.leaf(seq));
    Var<double> b = add(tape.leaf(seq), blk.fwd.forward(tape, tape.leaf(seq)));
    for (int64_t i = 0; i < seq.numel(); ++i) CHECK(a.value()[i] == b.value()[i]);
}
