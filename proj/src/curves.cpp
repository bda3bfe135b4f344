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

#include "gambas/curves.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>

namespace gambas {

namespace {

std::atomic<int64_t> g_gilbert_calls{0};

} // namespace

LSystem hilbert_lsystem() {
    LSystem sys;
    sys.variables = {'A', 'B'};
    sys.constants = {'F', '+', '-'};
    sys.axiom = "A";
    sys.rules['A'] = "+BF-AFA-FB+";
    sys.rules['B'] = "-AF+BFB+FA-";
    return sys;
}

std::string lsystem_expand(const LSystem& sys, int iterations) {
    GB_CHECK(iterations >= 0, "lsystem_expand: iterations must be >= 0");
    auto known = [&](char c) { return sys.variables.count(c) || sys.constants.count(c); };
    for (char c : sys.axiom) GB_CHECK(known(c), std::string("unknown symbol in axiom: ") + c);
    for (const auto& [key, repl] : sys.rules) {
        GB_CHECK(sys.variables.count(key), std::string("rule key is not a variable: ") + key);
        for (char c : repl) GB_CHECK(known(c), std::string("unknown symbol in rule: ") + c);
    }
    std::string cur = sys.axiom;
    for (int it = 0; it < iterations; ++it) {
        std::string next;
        next.reserve(cur.size() * 8);
        for (char c : cur) {
            auto r = sys.rules.find(c);
            if (r != sys.rules.end())
                next += r->second;
            else
                next += c;
        }
        cur = std::move(next);
    }
    return cur;
}

std::vector<int64_t> CurvePath::gather_indices() const {
    std::vector<int64_t> idx(order.size());
    for (size_t i = 0; i < order.size(); ++i) idx[i] = linearize(order[i]);
    return idx;
}

namespace {

void finalize_path(CurvePath& p) {
    const int64_t L = p.length();
    GB_CHECK(static_cast<int64_t>(p.order.size()) == L,
             "path covers " + std::to_string(p.order.size()) + " of " + std::to_string(L) + " voxels");
    p.inverse.assign(L, -1);
    for (int64_t i = 0; i < L; ++i) {
        const Coord& c = p.order[i];
        GB_CHECK(c.x >= 0 && c.x < p.w && c.y >= 0 && c.y < p.h && c.z >= 0 && c.z < p.d,
                 "path coordinate out of bounds");
        const int64_t lin = p.linearize(c);
        GB_CHECK(p.inverse[lin] == -1, "path visits a voxel twice");
        p.inverse[lin] = i;
    }
}

} // namespace

CurvePath lsystem_draw(const std::string& program) {
    // Headings cycle x+, y+, x-, y- under counterclockwise turns.
    static constexpr int32_t DX[4] = {1, 0, -1, 0};
    static constexpr int32_t DY[4] = {0, 1, 0, -1};
    int dir = 0;
    Coord cur{0, 0, 0};
    std::vector<Coord> pts{cur};
    for (char c : program) {
        switch (c) {
            case 'F':
                cur.x += DX[dir];
                cur.y += DY[dir];
                pts.push_back(cur);
                break;
            case '+': dir = (dir + 1) & 3; break;
            case '-': dir = (dir + 3) & 3; break;
            case 'A':
            case 'B': break;
            default: fail(std::string("lsystem_draw: unexpected symbol '") + c + "'");
        }
    }
    int32_t maxx = 0, maxy = 0;
    for (const Coord& p : pts) {
        GB_CHECK(p.x >= 0 && p.y >= 0, "lsystem_draw: path left the first quadrant");
        maxx = std::max(maxx, p.x);
        maxy = std::max(maxy, p.y);
    }
    CurvePath path;
    path.w = maxx + 1;
    path.h = maxy + 1;
    path.d = 1;
    path.order = std::move(pts);
    finalize_path(path);
    return path;
}

// ---------------------------------------------------------------------------
// Generalized Hilbert curve. Recursive cuboid splitting: the longest axis
// is halved (preferring even halves) and sub-cuboids are visited with
// permuted/negated axes; straight runs are emitted once two extents hit 1.
// ---------------------------------------------------------------------------

namespace {

struct V3 {
    int64_t x = 0, y = 0, z = 0;
    V3 operator+(const V3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    V3 operator-(const V3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    V3 operator-() const { return {-x, -y, -z}; }
    V3 half() const {
        // floor(v/2), so that negative odd components round toward -inf
        auto div2 = [](int64_t v) { return v >= 0 ? v / 2 : (v - 1) / 2; };
        return {div2(x), div2(y), div2(z)};
    }
    int64_t extent() const { return std::abs(x + y + z); }
    V3 sign() const {
        auto sgn = [](int64_t v) { return int64_t(v > 0) - int64_t(v < 0); };
        return {sgn(x), sgn(y), sgn(z)};
    }
};

void gilbert_rec(V3 p, V3 a, V3 b, V3 c, std::vector<Coord>& out) {
    const int64_t w = a.extent(), h = b.extent(), d = c.extent();
    const V3 da = a.sign(), db = b.sign(), dc = c.sign();

    if (h == 1 && d == 1) {
        for (int64_t i = 0; i < w; ++i, p = p + da)
            out.push_back({int32_t(p.x), int32_t(p.y), int32_t(p.z)});
        return;
    }
    if (w == 1 && d == 1) {
        for (int64_t i = 0; i < h; ++i, p = p + db)
            out.push_back({int32_t(p.x), int32_t(p.y), int32_t(p.z)});
        return;
    }
    if (w == 1 && h == 1) {
        for (int64_t i = 0; i < d; ++i, p = p + dc)
            out.push_back({int32_t(p.x), int32_t(p.y), int32_t(p.z)});
        return;
    }

    V3 a2 = a.half(), b2 = b.half(), c2 = c.half();
    if ((a2.extent() % 2) && w > 2) a2 = a2 + da;
    if ((b2.extent() % 2) && h > 2) b2 = b2 + db;
    if ((c2.extent() % 2) && d > 2) c2 = c2 + dc;

    if (2 * w > 3 * h && 2 * w > 3 * d) {
        // wide case: split along the major axis only
        gilbert_rec(p, a2, b, c, out);
        gilbert_rec(p + a2, a - a2, b, c, out);
    } else if (3 * h > 4 * d) {
        // split along major and second axis
        gilbert_rec(p, b2, c, a2, out);
        gilbert_rec(p + b2, a, b - b2, c, out);
        gilbert_rec(p + (a - da) + (b2 - db), -b2, c, -(a - a2), out);
    } else if (3 * d > 4 * h) {
        // split along major and third axis
        gilbert_rec(p, c2, a2, b, out);
        gilbert_rec(p + c2, a, b, c - c2, out);
        gilbert_rec(p + (a - da) + (c2 - dc), -c2, -(a - a2), b, out);
    } else {
        // regular case: split along all three axes
        gilbert_rec(p, b2, c2, a2, out);
        gilbert_rec(p + b2, c, a2, b - b2, out);
        gilbert_rec(p + (b2 - db) + (c - dc), a, -b2, -(c - c2), out);
        gilbert_rec(p + (a - da) + b2 + (c - dc), -c, -(a - a2), b - b2, out);
        gilbert_rec(p + (a - da) + (b2 - db), -b2, c2, -(a - a2), out);
    }
}

} // namespace

CurvePath gilbert3d(int64_t w, int64_t h, int64_t d) {
    GB_CHECK(w >= 1 && h >= 1 && d >= 1, "gilbert3d extents must be >= 1");
    for (int64_t e : {w, h, d})
        GB_CHECK(e == 1 || e % 2 == 0,
                 "gilbert3d supports extents that are 1 or even, got (" + std::to_string(w) + "," +
                     std::to_string(h) + "," + std::to_string(d) + ")");
    g_gilbert_calls.fetch_add(1, std::memory_order_relaxed);
    CurvePath path;
    path.w = w;
    path.h = h;
    path.d = d;
    path.order.reserve(static_cast<size_t>(w * h * d));
    if (w >= h && w >= d)
        gilbert_rec({0, 0, 0}, {w, 0, 0}, {0, h, 0}, {0, 0, d}, path.order);
    else if (h >= w && h >= d)
        gilbert_rec({0, 0, 0}, {0, h, 0}, {w, 0, 0}, {0, 0, d}, path.order);
    else
        gilbert_rec({0, 0, 0}, {0, 0, d}, {w, 0, 0}, {0, h, 0}, path.order);
    finalize_path(path);
    return path;
}

int64_t gilbert_construction_count() { return g_gilbert_calls.load(std::memory_order_relaxed); }

CurvePath raster3d(int64_t w, int64_t h, int64_t d) {
    GB_CHECK(w >= 1 && h >= 1 && d >= 1, "raster3d extents must be >= 1");
    CurvePath path;
    path.w = w;
    path.h = h;
    path.d = d;
    path.order.reserve(static_cast<size_t>(w * h * d));
    for (int64_t z = 0; z < d; ++z)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                path.order.push_back({int32_t(x), int32_t(y), int32_t(z)});
    finalize_path(path);
    return path;
}

PathStats path_stats(const CurvePath& path) {
    PathStats st;
    const int64_t L = path.length();
    st.steps = L - 1;
    int64_t unit = 0;
    for (int64_t i = 1; i < L; ++i) {
        const Coord &a = path.order[i - 1], &b = path.order[i];
        const int64_t dist = std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z);
        if (dist == 1) ++unit;
        st.max_step_distance = std::max(st.max_step_distance, dist);
    }
    st.unit_step_fraction = st.steps > 0 ? static_cast<double>(unit) / st.steps : 1.0;
    // Index distance between face-adjacent voxels, brute force over +x/+y/+z pairs.
    int64_t pairs = 0;
    double acc = 0;
    for (int64_t z = 0; z < path.d; ++z)
        for (int64_t y = 0; y < path.h; ++y)
            for (int64_t x = 0; x < path.w; ++x) {
                const int64_t i0 = path.inverse[x + path.w * (y + path.h * z)];
                if (x + 1 < path.w) {
                    acc += std::abs(i0 - path.inverse[(x + 1) + path.w * (y + path.h * z)]);
                    ++pairs;
                }
                if (y + 1 < path.h) {
                    acc += std::abs(i0 - path.inverse[x + path.w * ((y + 1) + path.h * z)]);
                    ++pairs;
                }
                if (z + 1 < path.d) {
                    acc += std::abs(i0 - path.inverse[x + path.w * (y + path.h * (z + 1))]);
                    ++pairs;
                }
            }
    st.mean_adjacent_index_distance = pairs > 0 ? acc / static_cast<double>(pairs) : 0.0;
    return st;
}

} // namespace gambas
