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

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gambas/ops.hpp"
#include "gambas/tape.hpp"

namespace gambas {

struct FdReport {
    double max_rel_err = 0.0;
    int64_t checked = 0;
    double tol = 0.0;
    bool pass = false;
};

/// Central finite differences with step h = 1e-5 * (|x| + 1), against
/// analytic gradients supplied per probed scalar slot. `loss_fn` must
/// re-evaluate the full forward pass from current storage contents.
///
/// `refinements` re-tests failing probes at h/10 and h/100: truncation
/// error of deep compositions shrinks like h^2 while a genuine gradient
/// defect stays put, so refinement separates the two without loosening
/// the tolerance.
inline FdReport finite_diff_probe(const std::function<double()>& loss_fn,
                                  const std::vector<std::pair<double*, double>>& probes,
                                  double tol, int refinements = 0) {
    FdReport rep;
    rep.tol = tol;
    for (const auto& [slot, analytic] : probes) {
        const double x0 = *slot;
        double rel = 0.0;
        double h = 1e-5 * (std::abs(x0) + 1.0);
        for (int attempt = 0; attempt <= refinements; ++attempt) {
            *slot = x0 + h;
            const double lp = loss_fn();
            *slot = x0 - h;
            const double lm = loss_fn();
            *slot = x0;
            const double fd = (lp - lm) / (2.0 * h);
            rel = std::abs(analytic - fd) / std::max({std::abs(fd), std::abs(analytic), 1e-2});
            if (rel < tol) break;
            h *= 0.1;
        }
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.checked;
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

/// Checks the tape gradient of `build` (leaves -> scalar loss) against
/// central differences on every element of every input.
inline FdReport finite_diff_check(
    const std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>& build,
    std::vector<Tensor<double>> inputs, double tol, int64_t max_probes_per_input = -1) {
    auto eval = [&](bool with_grad, std::vector<Tensor<double>>* grads) {
        Tape<double> tape;
        std::vector<Var<double>> leaves;
        leaves.reserve(inputs.size());
        for (auto& in : inputs) leaves.push_back(tape.leaf(in, with_grad));
        Var<double> loss = build(tape, leaves);
        GB_CHECK(loss.numel() == 1, "finite_diff_check: loss must be scalar");
        const double val = loss.value()[0];
        if (with_grad) {
            tape.backward(loss);
            grads->clear();
            for (auto& lv : leaves) {
                const auto& node = tape.node(lv.id);
                grads->push_back(node.grad.defined() ? node.grad.clone()
                                                     : Tensor<double>::zeros(lv.shape()));
            }
        }
        return val;
    };

    std::vector<Tensor<double>> grads;
    eval(true, &grads);

    std::vector<std::pair<double*, double>> probes;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const int64_t n = inputs[i].numel();
        const int64_t step =
            (max_probes_per_input > 0 && n > max_probes_per_input) ? n / max_probes_per_input : 1;
        for (int64_t j = 0; j < n; j += step)
            probes.emplace_back(&inputs[i][j], grads[i][j]);
    }
    return finite_diff_probe([&]() { return eval(false, nullptr); }, probes, tol);
}

} // namespace gambas
