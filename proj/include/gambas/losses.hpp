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

#include "gambas/ops.hpp"

namespace gambas {

struct LossWeights {
    double lambda_adv = 1.0;
    double lambda_l1 = 100.0;
    bool saturating = false; // literal log(1 - D) generator term when true
};

/// Discriminator objective on a real and a (detached) fake logit map:
/// -[log sigma(real) + log(1 - sigma(fake))], averaged per map. Zero logits
/// give 2 ln 2.
template <typename S>
Var<S> cgan_loss_d(Var<S> real_logits, Var<S> fake_logits) {
    return add(mean(softplus(neg(real_logits))), mean(softplus(fake_logits)));
}

/// Generator adversarial term. Non-saturating form -log sigma(fake) by
/// default; the saturating switch keeps the literal +log(1 - sigma(fake)).
template <typename S>
Var<S> cgan_loss_g(Var<S> fake_logits, bool saturating = false) {
    if (saturating) return scale(mean(softplus(fake_logits)), -1.0);
    return mean(softplus(neg(fake_logits)));
}

/// Mean absolute difference.
template <typename S>
Var<S> l1_loss(Var<S> pred, Var<S> target) {
    GB_CHECK(pred.shape() == target.shape(), "l1_loss shape mismatch");
    return mean(vabs(sub(pred, target)));
}

} // namespace gambas
