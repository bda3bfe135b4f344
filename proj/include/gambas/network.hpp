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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>

#include "gambas/curves.hpp"
#include "gambas/optim.hpp"
#include "gambas/ops.hpp"
#include "gambas/rng.hpp"
#include "gambas/ssm.hpp"
#include "gambas/tape.hpp"

namespace gambas {

enum class Trajectory { Gilbert, Raster };

std::string to_string(Trajectory t);
Trajectory trajectory_from_string(const std::string& s);

struct GeneratorConfig {
    int64_t in_channels = 1;
    int64_t out_channels = 1;
    int64_t base_channels = 32;        // 64 matches the CycleGAN-scale backbone
    std::set<int> placement = {1, 5, 9}; // 1-based bottleneck layers carrying Mamba
    Trajectory trajectory = Trajectory::Gilbert;
    bool bidirectional = true;
    int64_t d_state = 16;
    int64_t expand = 2;
    int64_t conv_width = 4;
    int64_t patch_size = 32;           // serialization path cached for this extent
    int mix_kernel_a = 1;              // channel-mix branch kernels
    int mix_kernel_b = 3;

    MambaBlockConfig mamba_config() const {
        MambaBlockConfig m;
        m.d_model = 4 * base_channels;
        m.d_state = d_state;
        m.expand = expand;
        m.conv_width = conv_width;
        m.bidirectional = bidirectional;
        return m;
    }
};

// ---------------------------------------------------------------------------
// Layer building blocks
// ---------------------------------------------------------------------------

template <typename S>
struct Conv3dLayer {
    ParamPtr<S> w, b;
    int stride = 1, pad = 0;
    PadMode mode = PadMode::Zero;
    Var<S> forward(Tape<S>& t, Var<S> x) const {
        return conv3d(x, t.leaf(w), t.leaf(b), stride, pad, mode);
    }
};

template <typename S>
struct ConvT3dLayer {
    ParamPtr<S> w, b;
    Var<S> forward(Tape<S>& t, Var<S> x) const {
        return conv_transpose3d(x, t.leaf(w), t.leaf(b), 2, 1, 1);
    }
};

template <typename S>
struct InstNorm {
    ParamPtr<S> gamma, beta;
    Var<S> forward(Tape<S>& t, Var<S> x) const {
        return instance_norm(x, t.leaf(gamma), t.leaf(beta));
    }
};

template <typename S>
struct ResBlock {
    Conv3dLayer<S> c1, c2;
    InstNorm<S> n1, n2;
    Var<S> forward(Tape<S>& t, Var<S> x) const {
        Var<S> h = relu(n1.forward(t, c1.forward(t, x)));
        return add(x, n2.forward(t, c2.forward(t, h)));
    }
};

/// Fuses concatenated Mamba and CNN features: 1x1x1 compression back to the
/// bottleneck width, then parallel kernel-a / kernel-b conv branches summed,
/// normalized and activated.
template <typename S>
struct ChannelMixBlock {
    Conv3dLayer<S> compress, branch_a, branch_b;
    InstNorm<S> norm;
    Var<S> forward(Tape<S>& t, Var<S> x) const {
        Var<S> c = compress.forward(t, x);
        Var<S> fused = add(branch_a.forward(t, c), branch_b.forward(t, c));
        return relu(norm.forward(t, fused));
    }
};

template <typename S>
struct BottleneckLayer {
    std::optional<MambaBlock<S>> mamba;
    std::optional<ChannelMixBlock<S>> mix;
    ResBlock<S> res;
};

// ---------------------------------------------------------------------------
// Generator: 3-layer encoder, 9-layer bottleneck (Mamba-bearing layers per
// placement), 3-layer decoder; downsampling factor fixed at 4.
// ---------------------------------------------------------------------------

template <typename S>
class Generator {
public:
    GeneratorConfig cfg;
    ParamStore<S> params;

    Conv3dLayer<S> enc1, enc2, enc3;
    InstNorm<S> enc1n, enc2n, enc3n;
    std::vector<BottleneckLayer<S>> bottleneck;
    ConvT3dLayer<S> dec1, dec2;
    InstNorm<S> dec1n, dec2n;
    Conv3dLayer<S> final_conv;

    Var<S> forward(Tape<S>& tape, Var<S> x);

    /// Spatial extent of the bottleneck features for a given input extent.
    static int64_t bottleneck_extent(int64_t s) { return s / 4; }

    /// Serialization path for the given bottleneck extent; constructed once
    /// per extent and cached for the lifetime of the model.
    const CurvePath& path_for(int64_t w, int64_t h, int64_t d);

    int64_t path_constructions() const { return path_constructions_; }

private:
    std::map<std::tuple<int64_t, int64_t, int64_t>, CurvePath> path_cache_;
    int64_t path_constructions_ = 0;
};

template <typename S>
Generator<S> build_generator(const GeneratorConfig& cfg, uint64_t seed);

// ---------------------------------------------------------------------------
// PatchGAN discriminator: two input channels (source + candidate), logit
// map output. Layer stack k4: F/s2, 2F/s2, 4F/s2, 8F/s1, 1/s1 with
// instance norm on all but the first and LeakyReLU(0.2).
// ---------------------------------------------------------------------------

template <typename S>
class Discriminator {
public:
    int64_t base_channels = 32;
    ParamStore<S> params;
    std::vector<Conv3dLayer<S>> convs;
    std::vector<InstNorm<S>> norms; // for convs[1..3]

    Var<S> forward(Tape<S>& tape, Var<S> source, Var<S> candidate) const;

    /// Voxel extent judged by one output logit.
    static int64_t receptive_field();
};

template <typename S>
Discriminator<S> build_discriminator(int64_t base_channels, uint64_t seed);

} // namespace gambas
