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
#include <cstring>
#include <limits>

#include "gambas/losses.hpp"
#include "gambas/metrics.hpp"
#include "gambas/network.hpp"
#include "gambas/rng.hpp"
#include "gambas/trainer.hpp"

using namespace gambas;

namespace {

Tensor<double> random_volume(Shape shape, uint64_t seed, double lo = -1, double hi = 1) {
    Rng rng(seed);
    Tensor<double> t(std::move(shape));
    for (double& v : t) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("adversarial losses at zero logits") {
    Tape<double> tape;
    Tensor<double> zeros = Tensor<double>::zeros({1, 1, 3, 3, 3});
    Var<double> rl = tape.leaf(zeros);
    Var<double> fl = tape.leaf(zeros);
    CHECK(cgan_loss_d(rl, fl).value()[0] ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(cgan_loss_g(fl).value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // saturating form: minimizing log(1 - sigma(l)) = -softplus(l)
    CHECK(cgan_loss_g(fl, true).value()[0] ==
          doctest::Approx(-std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("adversarial losses approach zero for a confident discriminator") {
    Tape<double> tape;
    Var<double> big = tape.leaf(Tensor<double>::full({4}, 40.0));
    Var<double> small = tape.leaf(Tensor<double>::full({4}, -40.0));
    CHECK(cgan_loss_d(big, small).value()[0] < 1e-12);
    CHECK(cgan_loss_g(big).value()[0] < 1e-12);
}

TEST_CASE("d-loss is permutation invariant over logit positions") {
    Tensor<double> r = random_volume({8}, 3);
    Tensor<double> f = random_volume({8}, 4);
    Tensor<double> rp = r.clone();
    Tensor<double> fp = f.clone();
    std::swap(rp[0], rp[5]);
    std::swap(fp[2], fp[7]);
    Tape<double> tape;
    CHECK(cgan_loss_d(tape.leaf(r), tape.leaf(f)).value()[0] ==
          doctest::Approx(cgan_loss_d(tape.leaf(rp), tape.leaf(fp)).value()[0]).epsilon(1e-15));
}

TEST_CASE("l1 loss basics and the Eq.3 weighting") {
    Tape<double> tape;
    Tensor<double> a = random_volume({2, 3}, 5);
    Var<double> va = tape.leaf(a);
    CHECK(l1_loss(va, va).value()[0] == 0.0);
    Tensor<double> b = a.clone();
    for (double& v : b) v += 0.5;
    CHECK(l1_loss(va, tape.leaf(b)).value()[0] == doctest::Approx(0.5).epsilon(1e-12));
    LossWeights w;
    CHECK(w.lambda_adv == 1.0);
    CHECK(w.lambda_l1 == 100.0);
    // total generator objective = 1 * adv + 100 * L1
    Var<double> adv = tape.leaf(Tensor<double>::scalar(0.25));
    Var<double> l1v = tape.leaf(Tensor<double>::scalar(0.5));
    Var<double> total = add(scale(adv, w.lambda_adv), scale(l1v, w.lambda_l1));
    CHECK(total.value()[0] == doctest::Approx(50.25).epsilon(1e-13));
    CHECK_THROWS(l1_loss(va, tape.leaf(Tensor<double>::zeros({3, 2}))));
}

TEST_CASE("lambda_adv = 0 reduces generator gradients to the pure-L1 gradients bitwise") {
    TrainConfig cfg;
    cfg.gen = GeneratorConfig{};
    cfg.gen.base_channels = 4;
    cfg.gen.d_state = 4;
    cfg.gen.patch_size = 24;
    cfg.weights.lambda_adv = 0.0;
    cfg.weights.lambda_l1 = 100.0;
    TrainSession session(cfg);
    Tensor<double> ulf = random_volume({1, 1, 24, 24, 24}, 7);
    Tensor<double> hf = random_volume({1, 1, 24, 24, 24}, 8);
    session.train_step(ulf, hf); // fills generator grads under lambda_adv = 0

    // reference: bare L1 backward with identical weights on a fresh session
    TrainSession ref(cfg);
    Tape<double> tape;
    Var<double> fake = ref.generator().forward(tape, tape.leaf(ulf));
    Var<double> loss = scale(l1_loss(fake, tape.leaf(hf)), cfg.weights.lambda_l1);
    ref.generator().params.zero_grad();
    tape.backward(loss);

    REQUIRE(session.generator().params.items.size() == ref.generator().params.items.size());
    for (size_t i = 0; i < ref.generator().params.items.size(); ++i) {
        const auto& a = session.generator().params.items[i]->grad;
        const auto& b = ref.generator().params.items[i]->grad;
        REQUIRE(a.numel() == b.numel());
        CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.numel()) == 0);
    }
    // and the discriminator received no gradient from the generator phase
    for (const auto& p : session.discriminator().params.items)
        for (const double gv : p->grad) CHECK(gv == 0.0);
}

TEST_CASE("one adversarial step decreases the generator loss against a frozen discriminator") {
    GeneratorConfig gc;
    gc.base_channels = 4;
    gc.d_state = 4;
    gc.patch_size = 24;
    Generator<double> gen = build_generator<double>(gc, 11);
    Discriminator<double> disc = build_discriminator<double>(4, 12);
    Tensor<double> ulf = random_volume({1, 1, 24, 24, 24}, 13);

    auto g_loss = [&]() {
        Tape<double> tape;
        Var<double> x = tape.leaf(ulf);
        Var<double> fake = gen.forward(tape, x);
        return cgan_loss_g(disc.forward(tape, x, fake)).value()[0];
    };
    const double before = g_loss();
    {
        Tape<double> tape;
        Var<double> x = tape.leaf(ulf);
        Var<double> fake = gen.forward(tape, x);
        Var<double> loss = cgan_loss_g(disc.forward(tape, x, fake));
        gen.params.zero_grad();
        disc.params.zero_grad();
        tape.backward(loss);
        Adam<double> opt(AdamConfig{1e-4, 0.5, 0.999, 1e-8});
        opt.step(gen.params); // D stays frozen
    }
    CHECK(g_loss() < before);
}

TEST_CASE("nrmse examples") {
    Tensor<double> ref = random_volume({8, 8, 8}, 17, 0.0, 1.0);
    CHECK(nrmse(ref, ref) == 0.0);
    // pred = ref + 0.1 * range -> nrmse = 0.1
    double lo = ref[0], hi = ref[0];
    for (const double v : ref) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor<double> shifted = ref.clone();
    for (double& v : shifted) v += 0.1 * (hi - lo);
    CHECK(nrmse(shifted, ref) == doctest::Approx(0.1).epsilon(1e-12));
    // invariance under joint affine rescaling
    Tensor<double> p2 = shifted.clone(), r2 = ref.clone();
    for (double& v : p2) v = 3.0 * v - 0.7;
    for (double& v : r2) v = 3.0 * v - 0.7;
    CHECK(nrmse(p2, r2) == doctest::Approx(nrmse(shifted, ref)).epsilon(1e-12));
    CHECK_THROWS(nrmse(ref, Tensor<double>::full({8, 8, 8}, 0.5)));
}

TEST_CASE("psnr examples and the infinity sentinel") {
    Tensor<double> ref = random_volume({8, 8, 8}, 19, 0.0, 1.0);
    CHECK(std::isinf(psnr(ref, ref)));
    double lo = ref[0], hi = ref[0];
    for (const double v : ref) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi - lo;
    { // MSE = range^2 -> 0 dB
        Tensor<double> p = ref.clone();
        for (double& v : p) v += range;
        CHECK(psnr(p, ref) == doctest::Approx(0.0).epsilon(1e-10));
    }
    { // MSE = 1e-4 range^2 -> 40 dB
        Tensor<double> p = ref.clone();
        for (double& v : p) v += 0.01 * range;
        CHECK(psnr(p, ref) == doctest::Approx(40.0).epsilon(1e-10));
    }
}

TEST_CASE("ssim: identity, anti-correlation, and the brute-force oracle") {
    Tensor<double> ref = random_volume({8, 8, 8}, 23, 0.0, 1.0);
    CHECK(ssim(ref, ref) == doctest::Approx(1.0).epsilon(1e-12));

    { // pred = -ref with zero-mean ref gives negative structure
        Tensor<double> zref = ref.clone();
        double mean = 0;
        for (const double v : zref) mean += v;
        mean /= zref.numel();
        for (double& v : zref) v -= mean;
        Tensor<double> negated = zref.clone();
        for (double& v : negated) v = -v;
        CHECK(ssim(negated, zref, 7, 0.01, 0.03, 2.0) < 0.0);
    }

    { // brute-force per-window oracle on an 8^3 volume, 1e-10
        Tensor<double> pred = random_volume({8, 8, 8}, 29, 0.0, 1.0);
        const int w = 7;
        const double range = [&] {
            double l = ref[0], h = ref[0];
            for (const double v : ref) {
                l = std::min(l, v);
                h = std::max(h, v);
            }
            return h - l;
        }();
        const double c1 = 0.01 * range * 0.01 * range;
        const double c2 = 0.03 * range * 0.03 * range;
        double acc = 0;
        int count = 0;
        for (int z0 = 0; z0 + w <= 8; ++z0)
            for (int y0 = 0; y0 + w <= 8; ++y0)
                for (int x0 = 0; x0 + w <= 8; ++x0) {
                    double mx = 0, my = 0, vx = 0, vy = 0, cxy = 0;
                    for (int z = z0; z < z0 + w; ++z)
                        for (int y = y0; y < y0 + w; ++y)
                            for (int x = x0; x < x0 + w; ++x) {
                                mx += pred[(z * 8 + y) * 8 + x];
                                my += ref[(z * 8 + y) * 8 + x];
                            }
                    const double nw = double(w) * w * w;
                    mx /= nw;
                    my /= nw;
                    for (int z = z0; z < z0 + w; ++z)
                        for (int y = y0; y < y0 + w; ++y)
                            for (int x = x0; x < x0 + w; ++x) {
                                const double a = pred[(z * 8 + y) * 8 + x] - mx;
                                const double b = ref[(z * 8 + y) * 8 + x] - my;
                                vx += a * a;
                                vy += b * b;
                                cxy += a * b;
                            }
                    vx /= nw;
                    vy /= nw;
                    cxy /= nw;
                    acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                           ((mx * mx + my * my + c1) * (vx + vy + c2));
                    ++count;
                }
        CHECK(ssim(pred, ref) == doctest::Approx(acc / count).epsilon(1e-10));
    }
    CHECK_THROWS(ssim(random_volume({4, 4, 4}, 31), random_volume({4, 4, 4}, 31)));
}

TEST_CASE("dice: identities, symmetry, conventions") {
    Tensor<uint16_t> a({4, 4, 4});
    Tensor<uint16_t> b({4, 4, 4});
    for (int64_t i = 0; i < 64; ++i) {
        a[i] = static_cast<uint16_t>(i % 3);
        b[i] = a[i];
    }
    for (const auto& [cls, v] : dice(a, b)) {
        (void)cls;
        CHECK(v == 1.0);
    }
    { // disjoint masks score zero
        Tensor<uint16_t> x = Tensor<uint16_t>({2, 2, 2});
        Tensor<uint16_t> y = Tensor<uint16_t>({2, 2, 2});
        for (int64_t i = 0; i < 8; ++i) {
            x[i] = i < 4 ? 1 : 0;
            y[i] = i < 4 ? 0 : 1;
        }
        CHECK(dice(x, y).at(1) == 0.0);
    }
    { // half-overlapping equal-size masks score 0.5
        Tensor<uint16_t> x = Tensor<uint16_t>({1, 1, 8});
        Tensor<uint16_t> y = Tensor<uint16_t>({1, 1, 8});
        for (int64_t i = 0; i < 8; ++i) {
            x[i] = i < 4 ? 1 : 0;
            y[i] = (i >= 2 && i < 6) ? 1 : 0;
        }
        CHECK(dice(x, y).at(1) == 0.5);
    }
    { // symmetry on random label maps
        Rng rng(37);
        Tensor<uint16_t> x({6, 6, 6});
        Tensor<uint16_t> y({6, 6, 6});
        for (int64_t i = 0; i < x.numel(); ++i) {
            x[i] = static_cast<uint16_t>(rng.uniform_int(4));
            y[i] = static_cast<uint16_t>(rng.uniform_int(4));
        }
        const auto dxy = dice(x, y);
        const auto dyx = dice(y, x);
        for (const auto& [cls, v] : dxy) CHECK(v == dyx.at(cls));
    }
    { // class absent from both scores 1 by convention
        Tensor<uint16_t> x = Tensor<uint16_t>({1, 1, 4});
        Tensor<uint16_t> y = Tensor<uint16_t>({1, 1, 4});
        for (int64_t i = 0; i < 4; ++i) x[i] = y[i] = 0;
        CHECK(dice(x, y, {3}).at(3) == 1.0);
    }
}
