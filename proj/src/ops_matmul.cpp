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

#include <Eigen/Core>

#include "gambas/ops.hpp"

namespace gambas {

namespace {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct MmPlan {
    int64_t m, k, n;
    int64_t batch;            // broadcast batch count
    std::vector<int64_t> oa;  // per-batch element offsets into a
    std::vector<int64_t> ob;  // and into b
    Shape out_shape;
    bool b_is_weight;         // b has no batch dims: single fused GEMM
};

MmPlan plan_matmul(const Shape& sa, const Shape& sb) {
    GB_CHECK(sa.size() >= 2 && sb.size() >= 2, "matmul operands need rank >= 2");
    MmPlan p;
    p.m = sa[sa.size() - 2];
    p.k = sa[sa.size() - 1];
    GB_CHECK(sb[sb.size() - 2] == p.k,
             "matmul inner dims disagree: " + shape_str(sa) + " x " + shape_str(sb));
    p.n = sb[sb.size() - 1];
    Shape ba(sa.begin(), sa.end() - 2), bb(sb.begin(), sb.end() - 2);
    Shape bo = broadcast_shape(ba, bb);
    p.out_shape = bo;
    p.out_shape.push_back(p.m);
    p.out_shape.push_back(p.n);
    p.batch = numel_of(bo);
    p.b_is_weight = bb.empty();
    if (p.b_is_weight) return p;
    // Element offsets of each batch matrix under trailing-aligned broadcast.
    const int nd = static_cast<int>(bo.size());
    std::vector<int64_t> stra(nd, 0), strb(nd, 0);
    int64_t s = p.m * p.k;
    for (int i = static_cast<int>(ba.size()) - 1, j = nd - 1; i >= 0; --i, --j) {
        stra[j] = (ba[i] == 1) ? 0 : s;
        s *= ba[i];
    }
    s = p.k * p.n;
    for (int i = static_cast<int>(bb.size()) - 1, j = nd - 1; i >= 0; --i, --j) {
        strb[j] = (bb[i] == 1) ? 0 : s;
        s *= bb[i];
    }
    p.oa.resize(p.batch);
    p.ob.resize(p.batch);
    std::vector<int64_t> idx(nd, 0);
    for (int64_t b = 0; b < p.batch; ++b) {
        int64_t xa = 0, xb = 0;
        for (int d = 0; d < nd; ++d) {
            xa += idx[d] * stra[d];
            xb += idx[d] * strb[d];
        }
        p.oa[b] = xa;
        p.ob[b] = xb;
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[d] < bo[d]) break;
            idx[d] = 0;
        }
    }
    return p;
}

} // namespace

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    Tensor<S> av = a.value(), bv = b.value();
    const auto p = std::make_shared<MmPlan>(plan_matmul(av.shape(), bv.shape()));
    Tensor<S> out(p->out_shape);
    if (p->b_is_weight) {
        const int64_t rows = p->batch * p->m;
        ConstMatMap<S> A(av.data(), rows, p->k);
        ConstMatMap<S> B(bv.data(), p->k, p->n);
        MatMap<S> Y(out.data(), rows, p->n);
        Y.noalias() = A * B;
    } else {
        for (int64_t i = 0; i < p->batch; ++i) {
            ConstMatMap<S> A(av.data() + p->oa[i], p->m, p->k);
            ConstMatMap<S> B(bv.data() + p->ob[i], p->k, p->n);
            MatMap<S> Y(out.data() + i * p->m * p->n, p->m, p->n);
            Y.noalias() = A * B;
        }
    }
    GB_CHECK(!finite_checks_enabled() || all_finite(out), "non-finite values produced by op 'matmul'");
    return t.make(std::move(out), "matmul", {a, b},
                  [a, b, av, bv, p](Tape<S>& tp, typename Tape<S>::Node& n) {
                      Tensor<S>* ga = tp.grad_if_needed(a.id);
                      Tensor<S>* gb = tp.grad_if_needed(b.id);
                      if (!ga && !gb) return;
                      if (p->b_is_weight) {
                          const int64_t rows = p->batch * p->m;
                          ConstMatMap<S> G(n.grad.data(), rows, p->n);
                          if (ga) {
                              ConstMatMap<S> B(bv.data(), p->k, p->n);
                              MatMap<S> GA(ga->data(), rows, p->k);
                              GA.noalias() += G * B.transpose();
                          }
                          if (gb) {
                              ConstMatMap<S> A(av.data(), rows, p->k);
                              MatMap<S> GB(gb->data(), p->k, p->n);
                              GB.noalias() += A.transpose() * G;
                          }
                          return;
                      }
                      for (int64_t i = 0; i < p->batch; ++i) {
                          ConstMatMap<S> G(n.grad.data() + i * p->m * p->n, p->m, p->n);
                          if (ga) {
                              ConstMatMap<S> B(bv.data() + p->ob[i], p->k, p->n);
                              MatMap<S> GA(ga->data() + p->oa[i], p->m, p->k);
                              GA.noalias() += G * B.transpose();
                          }
                          if (gb) {
                              ConstMatMap<S> A(av.data() + p->oa[i], p->m, p->k);
                              MatMap<S> GB(gb->data() + p->ob[i], p->k, p->n);
                              GB.noalias() += A.transpose() * G;
                          }
                      }
                  });
}

template Var<double> matmul<double>(Var<double>, Var<double>);
template Var<float> matmul<float>(Var<float>, Var<float>);

} // namespace gambas
