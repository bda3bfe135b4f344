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

#include "gambas/network.hpp"

#include <cmath>

namespace gambas {

std::string to_string(Trajectory t) {
    return t == Trajectory::Gilbert ? "gilbert" : "raster";
}

Trajectory trajectory_from_string(const std::string& s) {
    if (s == "gilbert") return Trajectory::Gilbert;
    if (s == "raster") return Trajectory::Raster;
    fail("unknown trajectory '" + s + "' (expected gilbert or raster)");
}

namespace {

template <typename S>
Tensor<S> normal_init(Shape shape, double mean, double stddev, Rng& rng) {
    Tensor<S> t(std::move(shape));
    for (S& v : t) v = static_cast<S>(rng.normal(mean, stddev));
    return t;
}

/// CycleGAN-convention init: conv weights N(0, 0.02), zero bias.
template <typename S>
Conv3dLayer<S> make_conv(ParamStore<S>& store, const std::string& prefix, int64_t cin,
                         int64_t cout, int64_t k, int stride, int pad, PadMode mode, Rng& rng) {
    Conv3dLayer<S> l;
    l.w = store.add(prefix + ".w", normal_init<S>({cout, cin, k, k, k}, 0.0, 0.02, rng));
    l.b = store.add(prefix + ".b", Tensor<S>::zeros({cout}));
    l.stride = stride;
    l.pad = pad;
    l.mode = mode;
    return l;
}

template <typename S>
ConvT3dLayer<S> make_convt(ParamStore<S>& store, const std::string& prefix, int64_t cin,
                           int64_t cout, Rng& rng) {
    ConvT3dLayer<S> l;
    l.w = store.add(prefix + ".w", normal_init<S>({cin, cout, 3, 3, 3}, 0.0, 0.02, rng));
    l.b = store.add(prefix + ".b", Tensor<S>::zeros({cout}));
    return l;
}

template <typename S>
InstNorm<S> make_norm(ParamStore<S>& store, const std::string& prefix, int64_t c, Rng& rng) {
    InstNorm<S> n;
    n.gamma = store.add(prefix + ".gamma", normal_init<S>({c}, 1.0, 0.02, rng));
    n.beta = store.add(prefix + ".beta", Tensor<S>::zeros({c}));
    return n;
}

template <typename S>
ResBlock<S> make_resblock(ParamStore<S>& store, const std::string& prefix, int64_t c, Rng& rng) {
    ResBlock<S> r;
    r.c1 = make_conv(store, prefix + ".conv1", c, c, 3, 1, 1, PadMode::Reflect, rng);
    r.n1 = make_norm(store, prefix + ".norm1", c, rng);
    r.c2 = make_conv(store, prefix + ".conv2", c, c, 3, 1, 1, PadMode::Reflect, rng);
    r.n2 = make_norm(store, prefix + ".norm2", c, rng);
    return r;
}

template <typename S>
ChannelMixBlock<S> make_channel_mix(ParamStore<S>& store, const std::string& prefix, int64_t c,
                                    int ka, int kb, Rng& rng) {
    GB_CHECK(ka % 2 == 1 && kb % 2 == 1, "channel-mix branch kernels must be odd");
    ChannelMixBlock<S> m;
    m.compress = make_conv(store, prefix + ".compress", 2 * c, c, 1, 1, 0, PadMode::Zero, rng);
    m.branch_a = make_conv(store, prefix + ".branch_a", c, c, ka, 1, ka / 2,
                           ka > 1 ? PadMode::Reflect : PadMode::Zero, rng);
    m.branch_b = make_conv(store, prefix + ".branch_b", c, c, kb, 1, kb / 2,
                           kb > 1 ? PadMode::Reflect : PadMode::Zero, rng);
    m.norm = make_norm(store, prefix + ".norm", c, rng);
    return m;
}

} // namespace

template <typename S>
const CurvePath& Generator<S>::path_for(int64_t w, int64_t h, int64_t d) {
    const auto key = std::make_tuple(w, h, d);
    auto it = path_cache_.find(key);
    if (it != path_cache_.end()) return it->second;
    CurvePath p = cfg.trajectory == Trajectory::Gilbert ? gilbert3d(w, h, d) : raster3d(w, h, d);
    ++path_constructions_;
    return path_cache_.emplace(key, std::move(p)).first->second;
}

template <typename S>
Generator<S> build_generator(const GeneratorConfig& cfg, uint64_t seed) {
    GB_CHECK(cfg.base_channels >= 1, "base_channels must be >= 1");
    GB_CHECK(cfg.patch_size % 4 == 0 && cfg.patch_size >= 8,
             "patch size must be >= 8 and divisible by 4");
    for (int p : cfg.placement)
        GB_CHECK(p >= 1 && p <= 9, "placement entries must lie in 1..9");
    Rng rng(splitmix64(seed ^ 0x6e60ULL));
    Generator<S> g;
    g.cfg = cfg;
    auto& st = g.params;
    const int64_t F = cfg.base_channels;
    g.enc1 = make_conv(st, "gen.enc1.conv", cfg.in_channels, F, 7, 1, 3, PadMode::Reflect, rng);
    g.enc1n = make_norm(st, "gen.enc1.norm", F, rng);
    g.enc2 = make_conv(st, "gen.enc2.conv", F, 2 * F, 3, 2, 1, PadMode::Zero, rng);
    g.enc2n = make_norm(st, "gen.enc2.norm", 2 * F, rng);
    g.enc3 = make_conv(st, "gen.enc3.conv", 2 * F, 4 * F, 3, 2, 1, PadMode::Zero, rng);
    g.enc3n = make_norm(st, "gen.enc3.norm", 4 * F, rng);
    for (int i = 1; i <= 9; ++i) {
        BottleneckLayer<S> layer;
        const std::string prefix = "gen.bottleneck" + std::to_string(i);
        if (cfg.placement.count(i)) {
            layer.mamba = make_mamba_block(st, prefix + ".mamba", cfg.mamba_config(), rng);
            layer.mix = make_channel_mix(st, prefix + ".mix", 4 * F, cfg.mix_kernel_a,
                                         cfg.mix_kernel_b, rng);
        }
        layer.res = make_resblock(st, prefix + ".res", 4 * F, rng);
        g.bottleneck.push_back(std::move(layer));
    }
    g.dec1 = make_convt(st, "gen.dec1.conv", 4 * F, 2 * F, rng);
    g.dec1n = make_norm(st, "gen.dec1.norm", 2 * F, rng);
    g.dec2 = make_convt(st, "gen.dec2.conv", 2 * F, F, rng);
    g.dec2n = make_norm(st, "gen.dec2.norm", F, rng);
    g.final_conv = make_conv(st, "gen.final.conv", F, cfg.out_channels, 7, 1, 3,
                             PadMode::Reflect, rng);
    // Serialization path for the configured patch extent, built exactly once
    // here (model-initialization caching contract).
    if (!cfg.placement.empty()) {
        const int64_t e = Generator<S>::bottleneck_extent(cfg.patch_size);
        g.path_for(e, e, e);
    }
    return g;
}

template <typename S>
Var<S> Generator<S>::forward(Tape<S>& tape, Var<S> x) {
    const Shape& s = x.shape();
    GB_CHECK(s.size() == 5 && s[1] == cfg.in_channels,
             "generator input must be [B," + std::to_string(cfg.in_channels) + ",D,H,W]");
    for (int i = 2; i < 5; ++i) {
        GB_CHECK(s[i] % 4 == 0, "generator input extents must be divisible by 4, got " + shape_str(s));
        GB_CHECK(s[i] >= 8, "generator input extents must be >= 8, got " + shape_str(s));
    }
    Var<S> h = relu(enc1n.forward(tape, enc1.forward(tape, x)));
    h = relu(enc2n.forward(tape, enc2.forward(tape, h)));
    h = relu(enc3n.forward(tape, enc3.forward(tape, h)));

    const int64_t ed = s[2] / 4, eh = s[3] / 4, ew = s[4] / 4;
    for (auto& layer : bottleneck) {
        if (layer.mamba) {
            const CurvePath& path = path_for(ew, eh, ed);
            Var<S> seq = serialize(h, path);
            Var<S> mo = layer.mamba->forward(tape, seq);
            Var<S> mvol = deserialize(mo, path, ed, eh, ew);
            Var<S> cat = concat(mvol, h, 1);
            Var<S> mixed = layer.mix->forward(tape, cat);
            h = layer.res.forward(tape, mixed);
        } else {
            h = layer.res.forward(tape, h);
        }
    }

    h = relu(dec1n.forward(tape, dec1.forward(tape, h)));
    h = relu(dec2n.forward(tape, dec2.forward(tape, h)));
    return vtanh(final_conv.forward(tape, h));
}

template <typename S>
Discriminator<S> build_discriminator(int64_t base_channels, uint64_t seed) {
    GB_CHECK(base_channels >= 1, "base_channels must be >= 1");
    Rng rng(splitmix64(seed ^ 0xd15cULL));
    Discriminator<S> d;
    d.base_channels = base_channels;
    auto& st = d.params;
    const int64_t F = base_channels;
    d.convs.push_back(make_conv(st, "disc.conv1", 2, F, 4, 2, 1, PadMode::Zero, rng));
    d.convs.push_back(make_conv(st, "disc.conv2", F, 2 * F, 4, 2, 1, PadMode::Zero, rng));
    d.convs.push_back(make_conv(st, "disc.conv3", 2 * F, 4 * F, 4, 2, 1, PadMode::Zero, rng));
    d.convs.push_back(make_conv(st, "disc.conv4", 4 * F, 8 * F, 4, 1, 1, PadMode::Zero, rng));
    d.convs.push_back(make_conv(st, "disc.conv5", 8 * F, 1, 4, 1, 1, PadMode::Zero, rng));
    d.norms.push_back(make_norm(st, "disc.norm2", 2 * F, rng));
    d.norms.push_back(make_norm(st, "disc.norm3", 4 * F, rng));
    d.norms.push_back(make_norm(st, "disc.norm4", 8 * F, rng));
    return d;
}

template <typename S>
Var<S> Discriminator<S>::forward(Tape<S>& tape, Var<S> source, Var<S> candidate) const {
    GB_CHECK(source.shape() == candidate.shape(),
             "discriminator inputs must share a shape, got " + shape_str(source.shape()) +
                 " vs " + shape_str(candidate.shape()));
    Var<S> h = concat(source, candidate, 1);
    h = leaky_relu(convs[0].forward(tape, h), 0.2);
    for (int i = 1; i <= 3; ++i)
        h = leaky_relu(norms[i - 1].forward(tape, convs[i].forward(tape, h)), 0.2);
    return convs[4].forward(tape, h);
}

template <typename S>
int64_t Discriminator<S>::receptive_field() {
    // Walk the stack back-to-front: rf = rf*stride + (k - stride).
    struct L { int64_t k, s; };
    const L layers[5] = {{4, 2}, {4, 2}, {4, 2}, {4, 1}, {4, 1}};
    int64_t rf = 1;
    for (int i = 4; i >= 0; --i) rf = rf * layers[i].s + (layers[i].k - layers[i].s);
    return rf;
}

#define GB_INSTANTIATE_NET(S)                                                    \
    template class Generator<S>;                                                 \
    template class Discriminator<S>;                                             \
    template Generator<S> build_generator<S>(const GeneratorConfig&, uint64_t);  \
    template Discriminator<S> build_discriminator<S>(int64_t, uint64_t);

GB_INSTANTIATE_NET(double)
GB_INSTANTIATE_NET(float)

} // namespace gambas
