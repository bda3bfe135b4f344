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
#include <memory>
#include <new>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gambas {

using Shape = std::vector<int64_t>;

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::runtime_error(msg);
}

#define GB_CHECK(cond, msg)                                                    \
    do {                                                                       \
        if (!(cond)) ::gambas::fail(std::string("check failed: ") + (msg));    \
    } while (0)

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

/// Dense N-D array of scalars, stored contiguously with the last axis
/// fastest. Copies are shallow (shared buffer); ops produce fresh tensors
/// and treat existing ones as immutable.
template <typename S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), numel_(numel_of(shape_)) {
        for (int64_t d : shape_) GB_CHECK(d > 0, "tensor dims must be positive, got " + shape_str(shape_));
        // 64-byte aligned so vectorized kernels see the same alignment for
        // every buffer; results stay bit-identical across reruns regardless
        // of allocator state.
        S* raw = static_cast<S*>(::operator new(static_cast<size_t>(numel_) * sizeof(S),
                                                std::align_val_t(64)));
        data_ = std::shared_ptr<S[]>(raw, [](S* p) { ::operator delete(p, std::align_val_t(64)); });
    }

    static Tensor zeros(Shape shape) {
        Tensor t(std::move(shape));
        std::fill(t.begin(), t.end(), S(0));
        return t;
    }

    static Tensor full(Shape shape, S value) {
        Tensor t(std::move(shape));
        std::fill(t.begin(), t.end(), value);
        return t;
    }

    static Tensor from(Shape shape, std::initializer_list<S> values) {
        Tensor t(std::move(shape));
        GB_CHECK(static_cast<int64_t>(values.size()) == t.numel(), "initializer size mismatch");
        std::copy(values.begin(), values.end(), t.begin());
        return t;
    }

    static Tensor scalar(S value) { return full({1}, value); }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return numel_; }

    S* data() { return data_.get(); }
    const S* data() const { return data_.get(); }
    S* begin() { return data_.get(); }
    S* end() { return data_.get() + numel_; }
    const S* begin() const { return data_.get(); }
    const S* end() const { return data_.get() + numel_; }

    S& operator[](int64_t i) { return data_[i]; }
    const S& operator[](int64_t i) const { return data_[i]; }

    /// Shares the buffer; only the shape metadata changes.
    Tensor reshaped(Shape shape) const {
        GB_CHECK(numel_of(shape) == numel_,
                 "reshape " + shape_str(shape_) + " -> " + shape_str(shape) + " changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.numel_ = numel_;
        t.data_ = data_;
        return t;
    }

    Tensor clone() const {
        Tensor t(shape_);
        std::copy(begin(), end(), t.begin());
        return t;
    }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> t(shape_);
        for (int64_t i = 0; i < numel_; ++i) t[i] = static_cast<T>(data_[i]);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    template <typename T> friend class Tensor;
    Shape shape_;
    int64_t numel_ = 0;
    std::shared_ptr<S[]> data_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

} // namespace gambas
