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

#include <algorithm>
#include <set>

#include "gambas/curves.hpp"
#include "gambas/gradcheck.hpp"
#include "gambas/rng.hpp"

using namespace gambas;

TEST_CASE("hilbert L-system expansion") {
    const LSystem sys = hilbert_lsystem();
    CHECK(lsystem_expand(sys, 0) == "A");
    CHECK(lsystem_expand(sys, 1) == "+BF-AFA-FB+");
    // n=2 equals applying both rules to the n=1 string
    std::string expect;
    for (char c : std::string("+BF-AFA-FB+")) {
        if (c == 'A') expect += "+BF-AFA-FB+";
        else if (c == 'B') expect += "-AF+BFB+FA-";
        else expect += c;
    }
    CHECK(lsystem_expand(sys, 2) == expect);
    CHECK_THROWS(lsystem_expand(sys, -1));

    LSystem bad = sys;
    bad.axiom = "AX";
    CHECK_THROWS(lsystem_expand(bad, 1));
    LSystem badrule = sys;
    badrule.rules['A'] = "+QF";
    CHECK_THROWS(lsystem_expand(badrule, 1));
}

TEST_CASE("L-system drawing fills the 2^n x 2^n grid") {
    const LSystem sys = hilbert_lsystem();
    { // n=1: four vertices forming a 2x2 cell
        CurvePath p = lsystem_draw(lsystem_expand(sys, 1));
        CHECK(p.order.size() == 4);
        CHECK(p.w == 2);
        CHECK(p.h == 2);
        CHECK(p.order[0] == Coord{0, 0, 0});
    }
    for (int n = 1; n <= 5; ++n) {
        CurvePath p = lsystem_draw(lsystem_expand(sys, n));
        const int64_t side = int64_t(1) << n;
        CHECK(static_cast<int64_t>(p.order.size()) == side * side); // 4^n vertices
        CHECK(p.w == side);
        CHECK(p.h == side);
        PathStats st = path_stats(p);
        CHECK(st.unit_step_fraction == 1.0);
        CHECK(st.max_step_distance == 1);
        // distinct vertices covering exactly the grid (bijection enforced at
        // construction; spot-check corners)
        std::set<std::pair<int, int>> seen;
        for (const Coord& c : p.order) seen.insert({c.x, c.y});
        CHECK(static_cast<int64_t>(seen.size()) == side * side);
    }
}

TEST_CASE("gilbert3d base cases") {
    CurvePath p = gilbert3d(2, 1, 1);
    REQUIRE(p.order.size() == 2);
    CHECK(p.order[0] == Coord{0, 0, 0});
    CHECK(p.order[1] == Coord{1, 0, 0});

    CurvePath r = raster3d(2, 1, 1);
    CHECK(r.order == p.order); // single segment

    CurvePath c8 = gilbert3d(2, 2, 2);
    CHECK(c8.order.size() == 8);
    PathStats st = path_stats(c8);
    CHECK(st.steps == 7);
    CHECK(st.unit_step_fraction == 1.0);
}

TEST_CASE("gilbert3d rejects odd extents above 1") {
    CHECK_THROWS(gilbert3d(3, 2, 2));
    CHECK_THROWS(gilbert3d(2, 6, 5));
    CHECK_NOTHROW(gilbert3d(1, 1, 1));
    CHECK_NOTHROW(gilbert3d(4, 1, 6));
}

TEST_CASE("gilbert3d bijectivity and contiguity, exhaustive to 16x12x8") {
    // bijectivity is enforced during construction; contiguity checked here
    for (int64_t w : {1, 2, 4, 8, 12, 16})
        for (int64_t h : {1, 2, 4, 8, 12})
            for (int64_t d : {1, 2, 4, 8}) {
                CurvePath p = gilbert3d(w, h, d);
                CHECK(static_cast<int64_t>(p.order.size()) == w * h * d);
                if (p.length() > 1) {
                    PathStats st = path_stats(p);
                    CHECK(st.unit_step_fraction == 1.0);
                    CHECK(st.max_step_distance == 1);
                }
            }
}

TEST_CASE("raster3d stats") {
    CurvePath p = raster3d(4, 4, 1);
    PathStats st = path_stats(p);
    CHECK(st.steps == 15);
    CHECK(st.unit_step_fraction == doctest::Approx(0.8)); // 12 of 15 steps
    CHECK(p.order[0] == Coord{0, 0, 0});
    CHECK(raster3d(7, 3, 2).order[0] == Coord{0, 0, 0});
}

TEST_CASE("locality dominance of gilbert over raster") {
    for (int64_t e : {4, 8, 16}) {
        PathStats g = path_stats(gilbert3d(e, e, e));
        PathStats r = path_stats(raster3d(e, e, e));
        CHECK(g.unit_step_fraction == 1.0);
        CHECK(g.unit_step_fraction > r.unit_step_fraction);
    }
}

TEST_CASE("path construction is pure") {
    CurvePath a = gilbert3d(8, 4, 6);
    CurvePath b = gilbert3d(8, 4, 6);
    CHECK(a.order == b.order);
    CHECK(a.inverse == b.inverse);
    CHECK(raster3d(5, 3, 2).order == raster3d(5, 3, 2).order);
}

TEST_CASE("serialize/deserialize round-trips bit-exactly") {
    Rng rng(31);
    Tensor<double> feat({2, 3, 4, 2, 6}); // extents (W,H,D) = (6,2,4)
    for (double& v : feat) v = rng.uniform(-1, 1);
    CurvePath path = gilbert3d(6, 2, 4);
    Tape<double> tape;
    Var<double> seq = serialize(tape.leaf(feat), path);
    CHECK(seq.shape() == Shape{2, 48, 3});
    Var<double> back = deserialize(seq, path, 4, 2, 6);
    REQUIRE(back.shape() == feat.shape());
    for (int64_t i = 0; i < feat.numel(); ++i) CHECK(back.value()[i] == feat[i]);

    // with a raster path, serialization is the plain flatten-transpose
    CurvePath rast = raster3d(6, 2, 4);
    Var<double> rseq = serialize(tape.leaf(feat), rast);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t l = 0; l < 48; ++l)
            for (int64_t c = 0; c < 3; ++c)
                CHECK(rseq.value()[(b * 48 + l) * 3 + c] == feat[(b * 3 + c) * 48 + l]);

    // extent mismatch is rejected
    CHECK_THROWS(serialize(tape.leaf(feat), gilbert3d(4, 2, 4)));
}

TEST_CASE("serialization length for the bottleneck extent") {
    CurvePath p = gilbert3d(32, 32, 32);
    CHECK(p.length() == 32768);
    CHECK(path_stats(p).unit_step_fraction == 1.0);
}

TEST_CASE("serialize is differentiable through gather_permute") {
    Rng rng(37);
    CurvePath path = gilbert3d(2, 2, 2);
    Tensor<double> feat({1, 2, 2, 2, 2});
    for (double& v : feat) v = rng.uniform(-1, 1);
    auto build = [&path](Tape<double>& t, std::vector<Var<double>>& leaves) {
        Var<double> s = serialize(leaves[0], path);
        return sum(mul(s, s));
    };
    CHECK(finite_diff_check(build, {feat}, 1e-6).pass);
}
