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

#include "gambas/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gambas {

namespace {

struct Grid {
    int64_t e; // cubic extent
    int64_t idx(int64_t z, int64_t y, int64_t x) const { return (z * e + y) * e + x; }
};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double sample_clamped(const std::vector<double>& v, const Grid& g, int64_t z, int64_t y,
                      int64_t x) {
    z = std::clamp<int64_t>(z, 0, g.e - 1);
    y = std::clamp<int64_t>(y, 0, g.e - 1);
    x = std::clamp<int64_t>(x, 0, g.e - 1);
    return v[g.idx(z, y, x)];
}

double trilinear(const std::vector<double>& v, const Grid& g, double z, double y, double x) {
    const double fz = std::floor(z), fy = std::floor(y), fx = std::floor(x);
    const double tz = z - fz, ty = y - fy, tx = x - fx;
    const int64_t z0 = static_cast<int64_t>(fz), y0 = static_cast<int64_t>(fy),
                  x0 = static_cast<int64_t>(fx);
    double acc = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double wgt = (dz ? tz : 1 - tz) * (dy ? ty : 1 - ty) * (dx ? tx : 1 - tx);
                if (wgt > 0) acc += wgt * sample_clamped(v, g, z0 + dz, y0 + dy, x0 + dx);
            }
    return acc;
}

uint16_t nearest_label(const std::vector<uint16_t>& v, const Grid& g, double z, double y,
                       double x) {
    const int64_t zi = static_cast<int64_t>(std::lround(z));
    const int64_t yi = static_cast<int64_t>(std::lround(y));
    const int64_t xi = static_cast<int64_t>(std::lround(x));
    return v[g.idx(std::clamp<int64_t>(zi, 0, g.e - 1), std::clamp<int64_t>(yi, 0, g.e - 1),
                   std::clamp<int64_t>(xi, 0, g.e - 1))];
}

/// Separable Gaussian blur with clamped borders; sigma per axis (z,y,x).
void gaussian_blur(std::vector<double>& v, const Grid& g, double sz, double sy, double sx) {
    auto make_kernel = [](double sigma) {
        std::vector<double> k;
        if (sigma <= 0) {
            k.push_back(1.0);
            return k;
        }
        const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
        k.resize(2 * r + 1);
        double sum = 0;
        for (int i = -r; i <= r; ++i) {
            k[i + r] = std::exp(-0.5 * (i / sigma) * (i / sigma));
            sum += k[i + r];
        }
        for (double& w : k) w /= sum;
        return k;
    };
    std::vector<double> tmp(v.size());
    const double sig[3] = {sz, sy, sx};
    for (int axis = 0; axis < 3; ++axis) {
        const auto k = make_kernel(sig[axis]);
        const int r = static_cast<int>(k.size() / 2);
        if (k.size() == 1) continue;
        for (int64_t z = 0; z < g.e; ++z)
            for (int64_t y = 0; y < g.e; ++y)
                for (int64_t x = 0; x < g.e; ++x) {
                    double acc = 0;
                    for (int i = -r; i <= r; ++i) {
                        const int64_t zz = axis == 0 ? z + i : z;
                        const int64_t yy = axis == 1 ? y + i : y;
                        const int64_t xx = axis == 2 ? x + i : x;
                        acc += k[i + r] * sample_clamped(v, g, zz, yy, xx);
                    }
                    tmp[g.idx(z, y, x)] = acc;
                }
        std::swap(v, tmp);
    }
}

/// Down- then up-sampling through an anisotropic coarse grid (trilinear
/// both ways), mimicking thick-slice acquisition resampled back to the
/// original resolution.
void through_plane_resample(std::vector<double>& v, const Grid& g, double fxy, double fz) {
    const int64_t cw = std::max<int64_t>(2, static_cast<int64_t>(std::round(g.e / fxy)));
    const int64_t cd = std::max<int64_t>(2, static_cast<int64_t>(std::round(g.e / fz)));
    std::vector<double> coarse(static_cast<size_t>(cd * cw * cw));
    const double sx = static_cast<double>(g.e) / cw;
    const double sz = static_cast<double>(g.e) / cd;
    for (int64_t z = 0; z < cd; ++z)
        for (int64_t y = 0; y < cw; ++y)
            for (int64_t x = 0; x < cw; ++x)
                coarse[(z * cw + y) * cw + x] =
                    trilinear(v, g, (z + 0.5) * sz - 0.5, (y + 0.5) * sx - 0.5,
                              (x + 0.5) * sx - 0.5);
    for (int64_t z = 0; z < g.e; ++z)
        for (int64_t y = 0; y < g.e; ++y)
            for (int64_t x = 0; x < g.e; ++x) {
                const double zc = (z + 0.5) / sz - 0.5;
                const double yc = (y + 0.5) / sx - 0.5;
                const double xc = (x + 0.5) / sx - 0.5;
                // clamped trilinear on the coarse grid
                const double fz2 = std::floor(zc), fy2 = std::floor(yc), fx2 = std::floor(xc);
                const double tz = zc - fz2, ty = yc - fy2, tx = xc - fx2;
                double acc = 0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double wgt =
                                (dz ? tz : 1 - tz) * (dy ? ty : 1 - ty) * (dx ? tx : 1 - tx);
                            if (wgt <= 0) continue;
                            const int64_t zi = std::clamp<int64_t>(
                                static_cast<int64_t>(fz2) + dz, 0, cd - 1);
                            const int64_t yi = std::clamp<int64_t>(
                                static_cast<int64_t>(fy2) + dy, 0, cw - 1);
                            const int64_t xi = std::clamp<int64_t>(
                                static_cast<int64_t>(fx2) + dx, 0, cw - 1);
                            acc += wgt * coarse[(zi * cw + yi) * cw + xi];
                        }
                v[g.idx(z, y, x)] = acc;
            }
}

struct Ellipsoid {
    double cx, cy, cz;
    double rx, ry, rz;
    double rot[3][3];
    double intensity;
};

double ellipsoid_mask(const Ellipsoid& el, double x, double y, double z) {
    const double px = x - el.cx, py = y - el.cy, pz = z - el.cz;
    const double qx = el.rot[0][0] * px + el.rot[0][1] * py + el.rot[0][2] * pz;
    const double qy = el.rot[1][0] * px + el.rot[1][1] * py + el.rot[1][2] * pz;
    const double qz = el.rot[2][0] * px + el.rot[2][1] * py + el.rot[2][2] * pz;
    const double rho2 = (qx / el.rx) * (qx / el.rx) + (qy / el.ry) * (qy / el.ry) +
                        (qz / el.rz) * (qz / el.rz);
    return 1.0 / (1.0 + std::exp(-(1.0 - rho2) / 0.08));
}

void rotation_matrix(double yaw, double pitch, double roll, double r[3][3]) {
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    const double cr = std::cos(roll), sr = std::sin(roll);
    const double rz[3][3] = {{cy, -sy, 0}, {sy, cy, 0}, {0, 0, 1}};
    const double ry[3][3] = {{cp, 0, sp}, {0, 1, 0}, {-sp, 0, cp}};
    const double rx[3][3] = {{1, 0, 0}, {0, cr, -sr}, {0, sr, cr}};
    double t[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            t[i][j] = 0;
            for (int k = 0; k < 3; ++k) t[i][j] += ry[i][k] * rx[k][j];
        }
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            r[i][j] = 0;
            for (int k = 0; k < 3; ++k) r[i][j] += rz[i][k] * t[k][j];
        }
}

} // namespace

const std::array<std::pair<double, double>, 5>& phantom_intensity_bands() {
    static const std::array<std::pair<double, double>, 5> bands = {
        std::pair{0.30, 0.40}, {0.48, 0.58}, {0.65, 0.75}, {0.82, 0.92}, {0.16, 0.24}};
    return bands;
}

VolumePair synth_phantom_pair(const PhantomSpec& spec) {
    GB_CHECK(spec.extent >= 8, "phantom extent must be >= 8");
    GB_CHECK(spec.components >= 1, "phantom needs at least one component");
    const int64_t e = spec.extent;
    const Grid g{e};
    Rng rng(splitmix64(spec.seed ^ 0x9e1db7ULL));

    std::vector<Ellipsoid> comps(spec.components);
    const auto& bands = phantom_intensity_bands();
    for (int k = 0; k < spec.components; ++k) {
        Ellipsoid& el = comps[k];
        el.cx = rng.uniform(0.30, 0.70) * e;
        el.cy = rng.uniform(0.30, 0.70) * e;
        el.cz = rng.uniform(0.30, 0.70) * e;
        el.rx = rng.uniform(0.12, 0.28) * e;
        el.ry = rng.uniform(0.12, 0.28) * e;
        el.rz = rng.uniform(0.12, 0.28) * e;
        rotation_matrix(rng.uniform(0, 6.283185307), rng.uniform(0, 6.283185307),
                        rng.uniform(0, 6.283185307), el.rot);
        const auto& band = bands[k % bands.size()];
        el.intensity = rng.uniform(band.first, band.second);
    }

    std::vector<double> hf(static_cast<size_t>(e * e * e));
    std::vector<uint16_t> labels(hf.size(), 0);
    for (int64_t z = 0; z < e; ++z)
        for (int64_t y = 0; y < e; ++y)
            for (int64_t x = 0; x < e; ++x) {
                double best = 0;
                int best_k = -1;
                for (int k = 0; k < spec.components; ++k) {
                    const double m = ellipsoid_mask(comps[k], x + 0.5, y + 0.5, z + 0.5);
                    if (m > best) {
                        best = m;
                        best_k = k;
                    }
                }
                const int64_t i = g.idx(z, y, x);
                if (best_k >= 0) {
                    hf[i] = spec.background * (1.0 - best) + comps[best_k].intensity * best;
                    if (best > 0.5) labels[i] = static_cast<uint16_t>(best_k + 1);
                } else {
                    hf[i] = spec.background;
                }
            }

    // Mild smooth texture on top of the piecewise-smooth phantom.
    if (spec.texture_amp > 0) {
        std::vector<double> tex(hf.size());
        for (double& v : tex) v = rng.uniform(-1.0, 1.0);
        gaussian_blur(tex, g, 1.5, 1.5, 1.5);
        for (size_t i = 0; i < hf.size(); ++i) hf[i] = clamp01(hf[i] + spec.texture_amp * tex[i]);
    }

    // Degradation chain: anisotropic blur, thick-slice resampling, noise,
    // monotone gamma contrast shift.
    std::vector<double> ulf = hf;
    gaussian_blur(ulf, g, spec.blur_sigma_z, spec.blur_sigma_xy, spec.blur_sigma_xy);
    through_plane_resample(ulf, g, spec.down_xy, spec.down_z);
    for (double& v : ulf) v = v + rng.normal(0.0, spec.noise_sigma);
    const double gamma = rng.uniform(spec.gamma_lo, spec.gamma_hi);
    for (double& v : ulf) v = std::pow(clamp01(v), gamma);

    VolumePair pair;
    pair.seed = spec.seed;
    pair.hf = Tensor<double>({1, 1, e, e, e});
    pair.ulf = Tensor<double>({1, 1, e, e, e});
    pair.labels = Tensor<uint16_t>({1, 1, e, e, e});
    for (size_t i = 0; i < hf.size(); ++i) {
        pair.hf[i] = 2.0 * hf[i] - 1.0;
        pair.ulf[i] = 2.0 * ulf[i] - 1.0;
        pair.labels[i] = labels[i];
    }
    return pair;
}

Tensor<uint16_t> segment_by_intensity(const Tensor<double>& vol, int components,
                                      double background) {
    const auto& bands = phantom_intensity_bands();
    std::vector<double> centers{background};
    for (int k = 0; k < components; ++k) {
        const auto& b = bands[k % bands.size()];
        centers.push_back(0.5 * (b.first + b.second));
    }
    Tensor<uint16_t> out(vol.shape());
    for (int64_t i = 0; i < vol.numel(); ++i) {
        const double v01 = (vol[i] + 1.0) / 2.0;
        int best = 0;
        double bestd = std::abs(v01 - centers[0]);
        for (size_t k = 1; k < centers.size(); ++k) {
            const double dd = std::abs(v01 - centers[k]);
            if (dd < bestd) {
                bestd = dd;
                best = static_cast<int>(k);
            }
        }
        out[i] = static_cast<uint16_t>(best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

namespace {

struct Transform {
    // target voxel -> source position, applied as rot90/flip index remap
    // followed by a continuous (rotation + warp) displacement.
    int perm[3] = {0, 1, 2}; // source axis for each target axis (z,y,x order)
    bool flip[3] = {false, false, false};
    bool continuous = false;
    double rot[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    std::vector<double> disp; // [3][cd][cd][cd] control grid, voxel units
    int64_t ctrl = 0;
    int64_t e = 0;

    void source_of(double tz, double ty, double tx, double& sz, double& sy, double& sx) const {
        double p[3] = {tz, ty, tx};
        if (continuous) {
            const double c = (e - 1) / 2.0;
            const double pz = tz - c, py = ty - c, px = tx - c;
            p[0] = rot[0][0] * pz + rot[0][1] * py + rot[0][2] * px + c;
            p[1] = rot[1][0] * pz + rot[1][1] * py + rot[1][2] * px + c;
            p[2] = rot[2][0] * pz + rot[2][1] * py + rot[2][2] * px + c;
            if (ctrl > 0) {
                for (int a = 0; a < 3; ++a) p[a] += sample_disp(a, tz, ty, tx);
            }
        }
        double q[3];
        for (int a = 0; a < 3; ++a) {
            double v = p[a];
            if (flip[a]) v = (e - 1) - v;
            q[a] = v;
        }
        sz = q[inv_perm(0)];
        sy = q[inv_perm(1)];
        sx = q[inv_perm(2)];
    }

    int inv_perm(int source_axis) const {
        for (int t = 0; t < 3; ++t)
            if (perm[t] == source_axis) return t;
        return source_axis;
    }

    double sample_disp(int axis, double z, double y, double x) const {
        const double s = static_cast<double>(ctrl - 1) / (e - 1);
        const double cz = z * s, cy = y * s, cx = x * s;
        const int64_t z0 = std::clamp<int64_t>(static_cast<int64_t>(cz), 0, ctrl - 2);
        const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(cy), 0, ctrl - 2);
        const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(cx), 0, ctrl - 2);
        const double tz = cz - z0, ty = cy - y0, tx = cx - x0;
        double acc = 0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w =
                        (dz ? tz : 1 - tz) * (dy ? ty : 1 - ty) * (dx ? tx : 1 - tx);
                    acc += w * disp[((axis * ctrl + (z0 + dz)) * ctrl + (y0 + dy)) * ctrl +
                                    (x0 + dx)];
                }
        return acc;
    }
};

} // namespace

VolumePair augment(const VolumePair& pair, const AugmentToggles& toggles, Rng& rng) {
    const Shape& s = pair.hf.shape();
    GB_CHECK(s.size() == 5 && s[2] == s[3] && s[3] == s[4], "augment expects cubic [1,1,E,E,E]");
    GB_CHECK(pair.ulf.shape() == s && pair.labels.shape() == s,
             "augment: pair volumes must share extents");
    const int64_t e = s[2];

    Transform tf;
    tf.e = e;
    if (toggles.rot90) {
        // axis swap + flip of one swapped axis = 90-degree rotation
        const int choice = static_cast<int>(rng.uniform_int(3));
        const int a = choice == 2 ? 0 : (choice == 1 ? 0 : 1);
        const int b = choice == 0 ? 2 : (choice == 1 ? 2 : 1);
        std::swap(tf.perm[a], tf.perm[b]);
        tf.flip[rng.coin() ? a : b] ^= true;
    }
    if (toggles.flip) {
        for (auto & f : tf.flip) f ^= rng.coin();
    }
    if (toggles.rot_small) {
        tf.continuous = true;
        const double ang = rng.uniform(-10.0, 10.0) * 3.14159265358979323846 / 180.0;
        const int axis = static_cast<int>(rng.uniform_int(3));
        const double cth = std::cos(ang), sth = std::sin(ang);
        if (axis == 0) { // about z: rotate (y,x)
            tf.rot[1][1] = cth; tf.rot[1][2] = -sth; tf.rot[2][1] = sth; tf.rot[2][2] = cth;
        } else if (axis == 1) { // about y: rotate (z,x)
            tf.rot[0][0] = cth; tf.rot[0][2] = -sth; tf.rot[2][0] = sth; tf.rot[2][2] = cth;
        } else { // about x: rotate (z,y)
            tf.rot[0][0] = cth; tf.rot[0][1] = -sth; tf.rot[1][0] = sth; tf.rot[1][1] = cth;
        }
    }
    if (toggles.warp) {
        tf.continuous = true;
        tf.ctrl = 4;
        tf.disp.resize(3 * tf.ctrl * tf.ctrl * tf.ctrl);
        for (double& v : tf.disp) v = rng.normal(0.0, 1.5);
    }

    VolumePair out;
    out.seed = pair.seed;
    out.hf = Tensor<double>(s);
    out.ulf = Tensor<double>(s);
    out.labels = Tensor<uint16_t>(s);

    const bool geometric = toggles.flip || toggles.rot90 || tf.continuous;
    if (geometric) {
        const Grid g{e};
        std::vector<double> hf(pair.hf.begin(), pair.hf.end());
        std::vector<double> ulf(pair.ulf.begin(), pair.ulf.end());
        std::vector<uint16_t> lab(pair.labels.begin(), pair.labels.end());
        for (int64_t z = 0; z < e; ++z)
            for (int64_t y = 0; y < e; ++y)
                for (int64_t x = 0; x < e; ++x) {
                    double sz, sy, sx;
                    tf.source_of(static_cast<double>(z), static_cast<double>(y),
                                 static_cast<double>(x), sz, sy, sx);
                    const int64_t i = g.idx(z, y, x);
                    if (tf.continuous) {
                        out.hf[i] = trilinear(hf, g, sz, sy, sx);
                        out.ulf[i] = trilinear(ulf, g, sz, sy, sx);
                    } else {
                        // pure index remap stays exact
                        out.hf[i] = sample_clamped(hf, g, static_cast<int64_t>(sz),
                                                   static_cast<int64_t>(sy),
                                                   static_cast<int64_t>(sx));
                        out.ulf[i] = sample_clamped(ulf, g, static_cast<int64_t>(sz),
                                                    static_cast<int64_t>(sy),
                                                    static_cast<int64_t>(sx));
                    }
                    out.labels[i] = nearest_label(lab, g, sz, sy, sx);
                }
    } else {
        std::copy(pair.hf.begin(), pair.hf.end(), out.hf.begin());
        std::copy(pair.ulf.begin(), pair.ulf.end(), out.ulf.begin());
        std::copy(pair.labels.begin(), pair.labels.end(), out.labels.begin());
    }

    if (toggles.intensity) {
        const double brightness = rng.uniform(-0.1, 0.1);
        const double contrast = rng.uniform(0.9, 1.1);
        double mean = 0;
        for (const double v : out.ulf) mean += v;
        mean /= static_cast<double>(out.ulf.numel());
        for (double& v : out.ulf) v = (v - mean) * contrast + mean + brightness;
    }
    return out;
}

VolumePair extract_patch(const VolumePair& pair, int64_t size, Rng& rng) {
    const Shape& s = pair.hf.shape();
    const int64_t e = s[2];
    GB_CHECK(size >= 1 && size <= e,
             "patch size " + std::to_string(size) + " exceeds volume extent " + std::to_string(e));
    const int64_t z0 = size == e ? 0 : rng.uniform_int(e - size + 1);
    const int64_t y0 = size == e ? 0 : rng.uniform_int(e - size + 1);
    const int64_t x0 = size == e ? 0 : rng.uniform_int(e - size + 1);
    VolumePair out;
    out.seed = pair.seed;
    out.hf = Tensor<double>({1, 1, size, size, size});
    out.ulf = Tensor<double>({1, 1, size, size, size});
    out.labels = Tensor<uint16_t>({1, 1, size, size, size});
    for (int64_t z = 0; z < size; ++z)
        for (int64_t y = 0; y < size; ++y) {
            const int64_t src = ((z + z0) * e + (y + y0)) * e + x0;
            const int64_t dst = (z * size + y) * size;
            std::copy_n(pair.hf.data() + src, size, out.hf.data() + dst);
            std::copy_n(pair.ulf.data() + src, size, out.ulf.data() + dst);
            std::copy_n(pair.labels.data() + src, size, out.labels.data() + dst);
        }
    return out;
}

} // namespace gambas
