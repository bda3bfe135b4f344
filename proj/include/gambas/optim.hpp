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

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "gambas/ops.hpp"
#include "gambas/tape.hpp"

namespace gambas {

/// Registration-ordered collection of trainable parameters with stable
/// dotted identifiers.
template <typename S>
struct ParamStore {
    std::vector<ParamPtr<S>> items;

    ParamPtr<S> add(std::string name, Tensor<S> init) {
        for (const auto& p : items)
            GB_CHECK(p->name != name, "duplicate parameter name: " + name);
        auto p = std::make_shared<Parameter<S>>(std::move(name), std::move(init));
        items.push_back(p);
        return p;
    }

    void absorb(const ParamStore& other) {
        for (const auto& p : other.items) {
            for (const auto& q : items) GB_CHECK(q->name != p->name, "duplicate parameter name: " + p->name);
            items.push_back(p);
        }
    }

    void zero_grad() {
        for (auto& p : items) p->zero_grad();
    }

    int64_t count_scalars() const {
        int64_t n = 0;
        for (const auto& p : items) n += p->value.numel();
        return n;
    }

    double grad_norm() const {
        double acc = 0;
        for (const auto& p : items)
            for (const S g : p->grad) acc += static_cast<double>(g) * static_cast<double>(g);
        return std::sqrt(acc);
    }
};

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Holds the step counter; parameters carry
/// their own moment buffers so checkpoints can resume exactly.
template <typename S>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore<S>& params) {
        ++t_;
        const S bc1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
        const S bc2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
        const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
        const S lr = static_cast<S>(cfg_.lr), eps = static_cast<S>(cfg_.eps);
        using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
        for (auto& p : params.items) {
            const int64_t n = p->value.numel();
            Eigen::Map<Arr> w(p->value.data(), n);
            Eigen::Map<const Arr> g(p->grad.data(), n);
            Eigen::Map<Arr> m(p->m.data(), n);
            Eigen::Map<Arr> v(p->v.data(), n);
            m = b1 * m + (S(1) - b1) * g;
            v = b2 * v + (S(1) - b2) * g.square();
            w -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
        }
        for (const auto& p : params.items)
            GB_CHECK(all_finite(p->value), "Adam produced non-finite parameter " + p->name);
    }

    int64_t steps_taken() const { return t_; }
    void set_steps_taken(int64_t t) { t_ = t; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
};

} // namespace gambas
