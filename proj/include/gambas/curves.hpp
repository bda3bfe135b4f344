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
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gambas/ops.hpp"
#include "gambas/tape.hpp"

namespace gambas {

// ---------------------------------------------------------------------------
// L-system
// ---------------------------------------------------------------------------

struct LSystem {
    std::set<char> variables;
    std::set<char> constants;
    std::string axiom;
    std::map<char, std::string> rules;
};

/// The Hilbert-curve L-system: variables A,B; constants F,+,-; axiom A;
/// A -> +BF-AFA-FB+ and B -> -AF+BFB+FA-.
LSystem hilbert_lsystem();

/// Simultaneous replacement of all variable symbols, `iterations` times.
std::string lsystem_expand(const LSystem& sys, int iterations);

// ---------------------------------------------------------------------------
// Curve paths
// ---------------------------------------------------------------------------

struct Coord {
    int32_t x = 0, y = 0, z = 0;
    bool operator==(const Coord&) const = default;
};

/// Bijective visiting order of a (W,H,D) voxel grid together with its
/// inverse map. Linearization is x-fastest: lin = x + W*(y + H*z).
struct CurvePath {
    int64_t w = 0, h = 0, d = 0;
    std::vector<Coord> order;     // sequence position -> voxel
    std::vector<int64_t> inverse; // linear voxel index -> sequence position

    int64_t length() const { return w * h * d; }
    int64_t linearize(const Coord& c) const {
        return c.x + w * (static_cast<int64_t>(c.y) + h * static_cast<int64_t>(c.z));
    }
    /// Sequence-order permutation over linear voxel indices.
    std::vector<int64_t> gather_indices() const;
};

/// Turtle drawing of an L-system program over {A,B,F,+,-}: F steps forward,
/// + turns 90 degrees counterclockwise, - clockwise; A and B are ignored.
/// Starts at the origin heading +x; the Hilbert programs fill [0,2^n)^2.
CurvePath lsystem_draw(const std::string& program);

/// Generalized Hilbert curve over a (w,h,d) cuboid. Extents must be >= 1
/// and even whenever > 1; every step of the result has Manhattan length 1.
CurvePath gilbert3d(int64_t w, int64_t h, int64_t d);

/// x-fastest lexicographic scan.
CurvePath raster3d(int64_t w, int64_t h, int64_t d);

/// Number of gilbert3d invocations since process start (caching contract
/// instrumentation).
int64_t gilbert_construction_count();

struct PathStats {
    int64_t steps = 0;              // L - 1
    double unit_step_fraction = 0;  // steps with Manhattan distance 1
    int64_t max_step_distance = 0;  // Manhattan
    double mean_adjacent_index_distance = 0; // over all face-adjacent voxel pairs
};

PathStats path_stats(const CurvePath& path);

// ---------------------------------------------------------------------------
// Serialization of feature volumes along a path
// ---------------------------------------------------------------------------

/// [B,C,D,H,W] features -> [B,L,C] sequence where position i holds the
/// voxel at path.order[i]. Differentiable via gather_permute.
template <typename S>
Var<S> serialize(Var<S> features, const CurvePath& path) {
    const Shape& s = features.shape();
    GB_CHECK(s.size() == 5, "serialize expects [B,C,D,H,W] features");
    GB_CHECK(s[4] == path.w && s[3] == path.h && s[2] == path.d,
             "serialize: feature extents " + shape_str(s) + " do not match path (" +
                 std::to_string(path.w) + "," + std::to_string(path.h) + "," +
                 std::to_string(path.d) + ")");
    const int64_t B = s[0], C = s[1], L = path.length();
    Var<S> flat = reshape(features, {B, C, L});
    Var<S> seq = gather_permute(flat, path.gather_indices());
    return transpose_last2(seq); // [B, L, C]
}

/// Exact inverse of serialize.
template <typename S>
Var<S> deserialize(Var<S> seq, const CurvePath& path, int64_t D, int64_t H, int64_t W) {
    const Shape& s = seq.shape();
    GB_CHECK(s.size() == 3, "deserialize expects [B,L,C]");
    GB_CHECK(s[1] == path.length(), "deserialize: sequence length mismatch");
    const int64_t B = s[0], C = s[2];
    Var<S> flat = transpose_last2(seq); // [B, C, L]
    Var<S> grid = scatter_inverse(flat, path.gather_indices());
    return reshape(grid, {B, C, D, H, W});
}

} // namespace gambas
