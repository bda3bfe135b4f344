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

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gambas/tensor.hpp"

namespace gambas {

/// Trainable tensor with persistent gradient and Adam moment buffers.
/// Lives outside any tape; a fresh leaf node references it on every
/// forward pass.
template <typename S>
struct Parameter {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;
    Tensor<S> m;
    Tensor<S> v;

    Parameter(std::string id, Tensor<S> init)
        : name(std::move(id)),
          value(std::move(init)),
          grad(Tensor<S>::zeros(value.shape())),
          m(Tensor<S>::zeros(value.shape())),
          v(Tensor<S>::zeros(value.shape())) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }
};

template <typename S>
using ParamPtr = std::shared_ptr<Parameter<S>>;

template <typename S>
class Tape;

/// Handle to a node on the tape. Cheap to copy; only valid while the
/// owning tape is alive and not cleared.
template <typename S>
struct Var {
    Tape<S>* tape = nullptr;
    int32_t id = -1;

    bool defined() const { return tape != nullptr && id >= 0; }
    const Tensor<S>& value() const;
    const Shape& shape() const { return value().shape(); }
    int64_t numel() const { return value().numel(); }
};

/// Wengert-list reverse-mode tape. Nodes are appended in execution order,
/// so descending node id is a valid reverse topological order and backward
/// visits each reachable node exactly once.
template <typename S>
class Tape {
public:
    struct Node {
        Tensor<S> value;
        Tensor<S> grad;
        std::function<void(Tape&, Node&)> backward; // empty for leaves
        const char* op = "leaf";
        bool requires_grad = false;
        bool marked = false; // reachable from the loss and grad-bearing
        Parameter<S>* param = nullptr;
    };

    Var<S> leaf(Tensor<S> value, bool requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }

    /// Leaf sharing the parameter's value buffer; after backward(), the
    /// node gradient is accumulated into the parameter gradient.
    Var<S> leaf(const ParamPtr<S>& p) {
        Node n;
        n.value = p->value;
        n.requires_grad = true;
        n.param = p.get();
        param_leaves_.push_back(static_cast<int32_t>(nodes_.size()));
        return push(std::move(n));
    }

    Var<S> make(Tensor<S> value, const char* op,
                std::initializer_list<Var<S>> inputs,
                std::function<void(Tape&, Node&)> backward) {
        Node n;
        n.value = std::move(value);
        n.op = op;
        bool rg = false;
        std::vector<int32_t> edges;
        edges.reserve(inputs.size());
        for (const Var<S>& v : inputs) {
            GB_CHECK(v.tape == this, std::string("op '") + op + "' mixes tapes");
            rg = rg || nodes_[v.id].requires_grad;
            edges.push_back(v.id);
        }
        n.requires_grad = rg;
        if (rg) n.backward = std::move(backward);
        pending_edges_ = std::move(edges);
        return push(std::move(n));
    }

    Node& node(int32_t id) { return nodes_[id]; }
    const Node& node(int32_t id) const { return nodes_[id]; }
    size_t size() const { return nodes_.size(); }

    /// Gradient buffer of `id` if it participates in the current backward
    /// sweep, nullptr otherwise. Allocates (zeroed) on first touch.
    Tensor<S>* grad_if_needed(int32_t id) {
        Node& n = nodes_[id];
        if (!n.marked) return nullptr;
        if (!n.grad.defined()) n.grad = Tensor<S>::zeros(n.value.shape());
        return &n.grad;
    }

    /// Reverse sweep from a scalar loss node. Populates gradients of every
    /// marked node and accumulates into registered parameter gradients.
    void backward(const Var<S>& loss) {
        GB_CHECK(loss.tape == this, "loss lives on another tape");
        GB_CHECK(nodes_[loss.id].value.numel() == 1, "backward requires a scalar loss");
        // Mark the grad-bearing subgraph reachable from the loss. Nodes are
        // appended after their inputs, so a single descending scan settles
        // reachability without recursion.
        for (Node& n : nodes_) n.marked = false;
        nodes_[loss.id].marked = nodes_[loss.id].requires_grad;
        last_visits_ = 0;
        if (!nodes_[loss.id].marked) return;
        for (int32_t id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.marked) continue;
            for (int32_t in : edges_[id])
                if (nodes_[in].requires_grad) nodes_[in].marked = true;
        }
        Tensor<S>* lg = grad_if_needed(loss.id);
        (*lg)[0] = S(1);
        for (int32_t id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.marked || !n.backward) continue;
            n.backward(*this, n);
            ++last_visits_;
        }
        for (int32_t id : param_leaves_) {
            Node& n = nodes_[id];
            if (!n.marked || !n.grad.defined()) continue;
            S* g = n.param->grad.data();
            const S* src = n.grad.data();
            const int64_t k = n.grad.numel();
            for (int64_t i = 0; i < k; ++i) g[i] += src[i];
        }
    }

    const Tensor<S>& grad_of(const Var<S>& v) const {
        const Node& n = nodes_[v.id];
        GB_CHECK(n.grad.defined(), "node has no gradient (not reached by backward)");
        return n.grad;
    }

    /// Number of backward closures executed in the last sweep.
    int64_t last_backward_visits() const { return last_visits_; }

    void clear() {
        nodes_.clear();
        edges_.clear();
        param_leaves_.clear();
    }

private:
    Var<S> push(Node&& n) {
        const int32_t id = static_cast<int32_t>(nodes_.size());
        nodes_.push_back(std::move(n));
        edges_.push_back(std::move(pending_edges_));
        pending_edges_.clear();
        return Var<S>{this, id};
    }

    // deque: node references stay valid while later ops append
    std::deque<Node> nodes_;
    std::deque<std::vector<int32_t>> edges_;
    std::vector<int32_t> param_leaves_;
    std::vector<int32_t> pending_edges_;
    int64_t last_visits_ = 0;
};

template <typename S>
const Tensor<S>& Var<S>::value() const {
    return tape->node(id).value;
}

} // namespace gambas
