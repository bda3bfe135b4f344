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

#include <array>
#include <cstdint>
#include <utility>

#include "gambas/rng.hpp"
#include "gambas/tensor.hpp"

namespace gambas {

/// Synthetic paired-volume generator: a smooth multi-ellipsoid phantom
/// stands in for the high-field target, and an anisotropic degradation
/// (blur, through-plane downsampling, noise, gamma shift) produces the
/// low-field counterpart.
struct PhantomSpec {
    int64_t extent = 48;
    int components = 5;
    double background = 0.05;
    double texture_amp = 0.02;
    double noise_sigma = 0.05;  // fraction of intensity range
    double gamma_lo = 0.7, gamma_hi = 1.4;
    double blur_sigma_xy = 0.8, blur_sigma_z = 2.4; // 1:1:3 anisotropy
    double down_xy = 1.5, down_z = 5.0;             // resampling factors
    uint64_t seed = 0;
};

struct VolumePair {
    Tensor<double> hf;        // [1,1,E,E,E], values in [-1,1]
    Tensor<double> ulf;       // same extent, degraded
    Tensor<uint16_t> labels;  // [1,1,E,E,E], 0 = background
    uint64_t seed = 0;
};

/// Per-class intensity bands (in the [0,1] pre-rescale space). Component k
/// draws its intensity from band k % 5.
const std::array<std::pair<double, double>, 5>& phantom_intensity_bands();

VolumePair synth_phantom_pair(const PhantomSpec& spec);

/// Nearest-band-center intensity segmentation, the label oracle used to
/// score Dice on generator outputs. `background` matches PhantomSpec.
Tensor<uint16_t> segment_by_intensity(const Tensor<double>& vol, int components,
                                      double background = 0.05);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentToggles {
    bool flip = true;
    bool rot90 = true;
    bool rot_small = true;  // +-10 degree trilinear rotation
    bool warp = true;       // low-frequency smooth displacement field
    bool intensity = true;  // brightness/contrast jitter on the ULF only

    bool any() const { return flip || rot90 || rot_small || warp || intensity; }
};

/// Applies one random augmentation draw. Geometric components use a single
/// sampling grid shared by hf, ulf (trilinear) and labels (nearest), so
/// voxelwise correspondence is preserved by construction.
VolumePair augment(const VolumePair& pair, const AugmentToggles& toggles, Rng& rng);

/// Co-located random crop of both volumes (and labels).
VolumePair extract_patch(const VolumePair& pair, int64_t size, Rng& rng);

} // namespace gambas
