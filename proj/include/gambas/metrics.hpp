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

#include "gambas/tensor.hpp"

namespace gambas {

struct MetricReport {
    double nrmse = 0;
    double psnr = 0; // dB; +inf when MSE is exactly zero
    double ssim = 0;
    std::map<int, double> dice; // per class; empty when no labels given
};

/// RMSE normalized by the reference intensity range (max - min); the
/// reference must not be constant.
double nrmse(const Tensor<double>& pred, const Tensor<double>& ref);

/// 10 log10(range^2 / MSE); range taken from the reference when
/// data_range <= 0. Identical volumes report +inf.
double psnr(const Tensor<double>& pred, const Tensor<double>& ref, double data_range = 0);

/// Mean local SSIM over all valid 3D window positions (uniform window).
/// Volumes are treated as single-channel grids over their last three axes,
/// which must each be >= the window extent.
double ssim(const Tensor<double>& pred, const Tensor<double>& ref, int window = 7,
            double k1 = 0.01, double k2 = 0.03, double data_range = 0);

/// 2|A^B| / (|A|+|B|) per class. With an empty class_set, all nonzero
/// labels present in either volume are scored. A class absent from both
/// volumes scores 1 by convention.
std::map<int, double> dice(const Tensor<uint16_t>& a, const Tensor<uint16_t>& b,
                           const std::set<int>& class_set = {});

MetricReport evaluate_pair(const Tensor<double>& pred, const Tensor<double>& ref,
                           const Tensor<uint16_t>* pred_labels = nullptr,
                           const Tensor<uint16_t>* ref_labels = nullptr);

} // namespace gambas
