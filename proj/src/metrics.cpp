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

#include "gambas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace gambas {

namespace {

struct Grid3 {
    int64_t d, h, w;
};

Grid3 spatial_of(const Tensor<double>& t, const char* who) {
    GB_CHECK(t.rank() >= 3, std::string(who) + ": volume rank must be >= 3");
    const Shape& s = t.shape();
    Grid3 g{s[s.size() - 3], s[s.size() - 2], s[s.size() - 1]};
    GB_CHECK(g.d * g.h * g.w == t.numel(),
             std::string(who) + ": leading axes must be singleton, got " + shape_str(s));
    return g;
}

double ref_range(const Tensor<double>& ref) {
    double lo = ref[0], hi = ref[0];
    for (const double v : ref) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo;
}

double mse_of(const Tensor<double>& pred, const Tensor<double>& ref) {
    GB_CHECK(pred.shape() == ref.shape(), "metric volumes must share a shape");
    double acc = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double dv = pred[i] - ref[i];
        acc += dv * dv;
    }
    return acc / static_cast<double>(pred.numel());
}

/// Sliding box sum of length `win` along the last axis of a [rows, n] view.
void box_sum_axis(const std::vector<double>& in, std::vector<double>& out, int64_t rows,
                  int64_t n, int64_t win) {
    const int64_t m = n - win + 1;
    out.resize(rows * m);
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = in.data() + r * n;
        double* dst = out.data() + r * m;
        double acc = 0;
        for (int64_t i = 0; i < win; ++i) acc += src[i];
        dst[0] = acc;
        for (int64_t i = 1; i < m; ++i) {
            acc += src[i + win - 1] - src[i - 1];
            dst[i] = acc;
        }
    }
}

/// Full separable 3D box sum: [d,h,w] -> [d-win+1, h-win+1, w-win+1].
void box_sum3(const std::vector<double>& in, std::vector<double>& out, Grid3 g, int64_t win,
              std::vector<double>& tmp1, std::vector<double>& tmp2) {
    const int64_t dw = g.w - win + 1, dh = g.h - win + 1, dd = g.d - win + 1;
    box_sum_axis(in, tmp1, g.d * g.h, g.w, win); // over x -> [d, h, dw]
    // over y: transpose-free strided pass
    tmp2.resize(g.d * dh * dw);
    for (int64_t z = 0; z < g.d; ++z)
        for (int64_t x = 0; x < dw; ++x) {
            double acc = 0;
            for (int64_t y = 0; y < win; ++y) acc += tmp1[(z * g.h + y) * dw + x];
            tmp2[(z * dh) * dw + x] = acc;
            for (int64_t y = 1; y < dh; ++y) {
                acc += tmp1[(z * g.h + y + win - 1) * dw + x] - tmp1[(z * g.h + y - 1) * dw + x];
                tmp2[(z * dh + y) * dw + x] = acc;
            }
        }
    out.resize(dd * dh * dw);
    for (int64_t y = 0; y < dh; ++y)
        for (int64_t x = 0; x < dw; ++x) {
            double acc = 0;
            for (int64_t z = 0; z < win; ++z) acc += tmp2[(z * dh + y) * dw + x];
            out[(0 * dh + y) * dw + x] = acc;
            for (int64_t z = 1; z < dd; ++z) {
                acc += tmp2[((z + win - 1) * dh + y) * dw + x] - tmp2[((z - 1) * dh + y) * dw + x];
                out[(z * dh + y) * dw + x] = acc;
            }
        }
}

} // namespace

double nrmse(const Tensor<double>& pred, const Tensor<double>& ref) {
    const double range = ref_range(ref);
    GB_CHECK(range > 0, "nrmse: reference volume is constant (zero range)");
    return std::sqrt(mse_of(pred, ref)) / range;
}

double psnr(const Tensor<double>& pred, const Tensor<double>& ref, double data_range) {
    const double mse = mse_of(pred, ref);
    if (mse == 0) return std::numeric_limits<double>::infinity();
    const double range = data_range > 0 ? data_range : ref_range(ref);
    GB_CHECK(range > 0, "psnr: zero data range");
    return 10.0 * std::log10(range * range / mse);
}

double ssim(const Tensor<double>& pred, const Tensor<double>& ref, int window, double k1,
            double k2, double data_range) {
    const Grid3 g = spatial_of(pred, "ssim");
    const Grid3 gr = spatial_of(ref, "ssim");
    GB_CHECK(g.d == gr.d && g.h == gr.h && g.w == gr.w, "ssim volumes must share extents");
    GB_CHECK(window >= 2, "ssim window must be >= 2");
    GB_CHECK(g.d >= window && g.h >= window && g.w >= window,
             "ssim: volume smaller than the window");
    const double range = data_range > 0 ? data_range : ref_range(ref);
    GB_CHECK(range > 0, "ssim: zero data range");
    const double c1 = (k1 * range) * (k1 * range);
    const double c2 = (k2 * range) * (k2 * range);

    const int64_t n = pred.numel();
    std::vector<double> x(pred.begin(), pred.end());
    std::vector<double> y(ref.begin(), ref.end());
    std::vector<double> xx(n), yy(n), xy(n);
    for (int64_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    std::vector<double> sx, sy, sxx, syy, sxy, t1, t2;
    box_sum3(x, sx, g, window, t1, t2);
    box_sum3(y, sy, g, window, t1, t2);
    box_sum3(xx, sxx, g, window, t1, t2);
    box_sum3(yy, syy, g, window, t1, t2);
    box_sum3(xy, sxy, g, window, t1, t2);

    const double nw = static_cast<double>(window) * window * window;
    double acc = 0;
    for (size_t i = 0; i < sx.size(); ++i) {
        const double mx = sx[i] / nw, my = sy[i] / nw;
        const double vx = sxx[i] / nw - mx * mx;
        const double vy = syy[i] / nw - my * my;
        const double cxy = sxy[i] / nw - mx * my;
        acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    return acc / static_cast<double>(sx.size());
}

std::map<int, double> dice(const Tensor<uint16_t>& a, const Tensor<uint16_t>& b,
                           const std::set<int>& class_set) {
    GB_CHECK(a.shape() == b.shape(), "dice label volumes must share a shape");
    std::set<int> classes = class_set;
    if (classes.empty()) {
        for (const uint16_t v : a)
            if (v != 0) classes.insert(v);
        for (const uint16_t v : b)
            if (v != 0) classes.insert(v);
    }
    std::map<int, double> out;
    for (const int cls : classes) {
        int64_t inter = 0, ca = 0, cb = 0;
        for (int64_t i = 0; i < a.numel(); ++i) {
            const bool ia = a[i] == cls, ib = b[i] == cls;
            inter += ia && ib;
            ca += ia;
            cb += ib;
        }
        out[cls] = (ca + cb) == 0 ? 1.0 : 2.0 * static_cast<double>(inter) /
                                              static_cast<double>(ca + cb);
    }
    return out;
}

MetricReport evaluate_pair(const Tensor<double>& pred, const Tensor<double>& ref,
                           const Tensor<uint16_t>* pred_labels,
                           const Tensor<uint16_t>* ref_labels) {
    MetricReport r;
    r.nrmse = nrmse(pred, ref);
    r.psnr = psnr(pred, ref);
    r.ssim = ssim(pred, ref);
    if (pred_labels && ref_labels) r.dice = dice(*pred_labels, *ref_labels);
    return r;
}

} // namespace gambas
