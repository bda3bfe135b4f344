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

#include "gambas/gradcheck.hpp"
#include "gambas/network.hpp"
#include "gambas/rng.hpp"

using namespace gambas;

namespace {

Tensor<double> random_volume(Shape shape, uint64_t seed) {
    Rng rng(seed);
    Tensor<double> t(std::move(shape));
    for (double& v : t) v = rng.uniform(-1, 1);
    return t;
}

GeneratorConfig tiny_config(std::set<int> placement, int64_t patch = 8) {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.placement = std::move(placement);
    cfg.d_state = 4;
    cfg.patch_size = patch;
    return cfg;
}

} // namespace

TEST_CASE("build_generator: placement controls which layers carry Mamba") {
    Generator<double> g = build_generator<double>(tiny_config({1, 5, 9}), 0);
    int with_mamba = 0;
    for (size_t i = 0; i < g.bottleneck.size(); ++i) {
        if (g.bottleneck[i].mamba) {
            ++with_mamba;
            CHECK((i == 0 || i == 4 || i == 8));
            CHECK(g.bottleneck[i].mix.has_value());
        }
    }
    CHECK(with_mamba == 3);

    Generator<double> plain = build_generator<double>(tiny_config({}), 0);
    for (const auto& layer : plain.bottleneck) CHECK(!layer.mamba);
}

TEST_CASE("parameter count strictly increases with placement size") {
    const std::set<int> grids[] = {{}, {5}, {1, 5, 9}, {1, 3, 5, 7, 9},
                                   {1, 2, 3, 4, 5, 6, 7, 8, 9}};
    int64_t prev = -1;
    for (const auto& p : grids) {
        Generator<double> g = build_generator<double>(tiny_config(p), 0);
        const int64_t n = g.params.count_scalars();
        CHECK(n > prev);
        prev = n;
    }
}

TEST_CASE("build_generator validates the config") {
    GeneratorConfig bad = tiny_config({1, 5, 9});
    bad.patch_size = 10; // not divisible by 4
    CHECK_THROWS(build_generator<double>(bad, 0));
    GeneratorConfig badp = tiny_config({0, 5});
    CHECK_THROWS(build_generator<double>(badp, 0));
}

TEST_CASE("generator forward: shape contract and tanh range") {
    for (const int64_t s : {int64_t(8), int64_t(16), int64_t(32)}) {
        Generator<double> g = build_generator<double>(tiny_config({1, 5, 9}, s), 1);
        Tensor<double> x = random_volume({1, 1, s, s, s}, 7 + s);
        Tape<double> tape;
        Var<double> y = g.forward(tape, tape.leaf(x));
        CHECK(y.shape() == x.shape());
        for (int64_t i = 0; i < y.numel(); ++i) {
            CHECK(y.value()[i] <= 1.0);
            CHECK(y.value()[i] >= -1.0);
        }
    }
    // extents not divisible by 4 (or too small) are rejected
    Generator<double> g = build_generator<double>(tiny_config({}), 2);
    Tape<double> tape;
    CHECK_THROWS(g.forward(tape, tape.leaf(random_volume({1, 1, 6, 6, 6}, 3))));
    CHECK_THROWS(g.forward(tape, tape.leaf(random_volume({1, 1, 4, 4, 4}, 3))));
}

TEST_CASE("bottleneck extent arithmetic and the cached serialization path") {
    CHECK(Generator<double>::bottleneck_extent(128) == 32);
    CHECK(Generator<double>::bottleneck_extent(64) == 16);
    // building for a 128-patch constructs the 32^3 path once
    Generator<double> g = build_generator<double>(tiny_config({5}, 128), 3);
    CHECK(g.path_constructions() == 1);
    const CurvePath& p = g.path_for(32, 32, 32);
    CHECK(p.length() == 32768);
    CHECK(g.path_constructions() == 1); // cache hit, still one build
}

TEST_CASE("caching contract: repeated forwards construct the path once") {
    Generator<double> g = build_generator<double>(tiny_config({1, 5, 9}, 8), 4);
    CHECK(g.path_constructions() == 1);
    Tensor<double> x = random_volume({1, 1, 8, 8, 8}, 11);
    for (int i = 0; i < 3; ++i) {
        Tape<double> tape;
        g.forward(tape, tape.leaf(x));
    }
    CHECK(g.path_constructions() == 1);
}

TEST_CASE("plain bottleneck layer equals its residual block") {
    Generator<double> g = build_generator<double>(tiny_config({}, 8), 5);
    Tensor<double> feat = random_volume({1, 16, 2, 2, 2}, 13); // 4F = 16 channels
    Tape<double> tape;
    Var<double> leaf = tape.leaf(feat);
    Var<double> via_layer = g.bottleneck[0].res.forward(tape, leaf);
    Var<double> direct = add(leaf, g.bottleneck[0].res.n2.forward(
        tape, g.bottleneck[0].res.c2.forward(
                  tape, relu(g.bottleneck[0].res.n1.forward(
                            tape, g.bottleneck[0].res.c1.forward(tape, leaf))))));
    for (int64_t i = 0; i < feat.numel(); ++i)
        CHECK(via_layer.value()[i] == direct.value()[i]);
}

TEST_CASE("trajectory changes the output of a Mamba-bearing generator only") {
    Tensor<double> x = random_volume({1, 1, 8, 8, 8}, 17);
    auto run = [&x](std::set<int> placement, Trajectory traj) {
        GeneratorConfig cfg = tiny_config(std::move(placement), 8);
        cfg.trajectory = traj;
        Generator<double> g = build_generator<double>(cfg, 21); // same seed -> same weights
        Tape<double> tape;
        return g.forward(tape, tape.leaf(x)).value().clone();
    };
    { // with Mamba layers the serialization order matters
        Tensor<double> a = run({1, 5, 9}, Trajectory::Gilbert);
        Tensor<double> b = run({1, 5, 9}, Trajectory::Raster);
        double maxdev = 0;
        for (int64_t i = 0; i < a.numel(); ++i) maxdev = std::max(maxdev, std::abs(a[i] - b[i]));
        CHECK(maxdev > 1e-9);
    }
    { // without them it cannot
        Tensor<double> a = run({}, Trajectory::Gilbert);
        Tensor<double> b = run({}, Trajectory::Raster);
        for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("generator forward is deterministic bit-for-bit") {
    Generator<double> g = build_generator<double>(tiny_config({1, 5, 9}, 8), 6);
    Tensor<double> x = random_volume({1, 1, 8, 8, 8}, 19);
    auto run = [&]() {
        Tape<double> tape;
        return g.forward(tape, tape.leaf(x)).value().clone();
    };
    Tensor<double> a = run();
    Tensor<double> b = run();
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.numel()) == 0);
}

TEST_CASE("discriminator: logit map extents and receptive field") {
    CHECK(Discriminator<double>::receptive_field() == 70);
    Discriminator<double> d = build_discriminator<double>(4, 0);
    Tensor<double> ulf = random_volume({1, 1, 64, 64, 64}, 23);
    Tensor<double> hf = random_volume({1, 1, 64, 64, 64}, 29);
    Tape<double> tape;
    Var<double> logits = d.forward(tape, tape.leaf(ulf), tape.leaf(hf));
    CHECK(logits.shape() == Shape{1, 1, 6, 6, 6});
}

TEST_CASE("discriminator: candidate matters, batch order is respected") {
    Discriminator<double> d = build_discriminator<double>(4, 1);
    Tensor<double> src = random_volume({1, 1, 32, 32, 32}, 31);
    Tensor<double> cand_a = random_volume({1, 1, 32, 32, 32}, 37);
    Tensor<double> cand_b = random_volume({1, 1, 32, 32, 32}, 41);
    Tape<double> tape;
    Var<double> la = d.forward(tape, tape.leaf(src), tape.leaf(cand_a));
    Var<double> lb = d.forward(tape, tape.leaf(src), tape.leaf(cand_b));
    double dev = 0;
    for (int64_t i = 0; i < la.numel(); ++i) dev = std::max(dev, std::abs(la.value()[i] - lb.value()[i]));
    CHECK(dev > 1e-12);

    // two-item batch: swapping items swaps the logit maps exactly
    Tensor<double> src2({2, 1, 32, 32, 32});
    Tensor<double> cand2({2, 1, 32, 32, 32});
    Tensor<double> src2r({2, 1, 32, 32, 32});
    Tensor<double> cand2r({2, 1, 32, 32, 32});
    const int64_t n = 32 * 32 * 32;
    std::copy_n(src.data(), n, src2.data());
    std::copy_n(cand_a.data(), n, cand2.data());
    std::copy_n(src.data(), n, src2.data() + n);
    std::copy_n(cand_b.data(), n, cand2.data() + n);
    std::copy_n(src2.data() + n, n, src2r.data());
    std::copy_n(cand2.data() + n, n, cand2r.data());
    std::copy_n(src2.data(), n, src2r.data() + n);
    std::copy_n(cand2.data(), n, cand2r.data() + n);
    Var<double> l2 = d.forward(tape, tape.leaf(src2), tape.leaf(cand2));
    Var<double> l2r = d.forward(tape, tape.leaf(src2r), tape.leaf(cand2r));
    const int64_t m = l2.numel() / 2;
    for (int64_t i = 0; i < m; ++i) {
        CHECK(l2.value()[i] == l2r.value()[m + i]);
        CHECK(l2.value()[m + i] == l2r.value()[i]);
    }
    CHECK_THROWS(d.forward(tape, tape.leaf(src), tape.leaf(random_volume({1, 1, 16, 16, 16}, 43))));
}

TEST_CASE("end-to-end generator gradient check (F=4, S=8, N=4)") {
    Generator<double> g = build_generator<double>(tiny_config({1, 5, 9}, 8), 7);
    Tensor<double> x = random_volume({1, 1, 8, 8, 8}, 47);
    Tensor<double> target = random_volume({1, 1, 8, 8, 8}, 53);

    Tape<double> tape;
    Var<double> leaf = tape.leaf(x, true);
    Var<double> diff = sub(g.forward(tape, leaf), tape.leaf(target));
    Var<double> loss = mean(mul(diff, diff));
    g.params.zero_grad();
    tape.backward(loss);

    // probe a deterministic sample of parameters plus a few input voxels
    Rng pick(59);
    std::vector<std::pair<double*, double>> probes;
    for (int i = 0; i < 12; ++i) {
        const int64_t j = pick.uniform_int(x.numel());
        probes.emplace_back(&x[j], tape.grad_of(leaf)[j]);
    }
    for (auto& p : g.params.items) {
        const int64_t j = pick.uniform_int(p->value.numel());
        probes.emplace_back(&p->value[j], p->grad[j]);
    }
    auto loss_fn = [&]() {
        Tape<double> t2;
        Var<double> d2 = sub(g.forward(t2, t2.leaf(x)), t2.leaf(target));
        return mean(mul(d2, d2)).value()[0];
    };
    FdReport rep = finite_diff_probe(loss_fn, probes, 1e-3, 2);
    CHECK(rep.pass);
    CHECK(rep.checked > 50);
}
