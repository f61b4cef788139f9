#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "patchwork/errors.hpp"

namespace patchwork {

#ifdef PATCHWORK_REAL32
using real_t = float;
#else
using real_t = double;
#endif

using Shape = std::vector<std::int64_t>;
using NodeId = std::int32_t;

class Tape;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape);

// Dense n-dimensional array, row-major (last axis fastest). The value
// buffer is shared between copies; kernels always allocate fresh outputs,
// so a tensor written by a kernel is never mutated afterwards.
class Tensor {
public:
    Tensor() : data_(std::make_shared<std::vector<real_t>>()) {}

    explicit Tensor(Shape shape, real_t fill = 0)
        : shape_(std::move(shape)) {
        validate_shape();
        data_ = std::make_shared<std::vector<real_t>>(static_cast<std::size_t>(shape_numel(shape_)), fill);
    }

    static Tensor from_data(Shape shape, std::vector<real_t> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.validate_shape();
        if (shape_numel(t.shape_) != static_cast<std::int64_t>(values.size()))
            throw DimensionError("tensor: buffer length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(t.shape_));
        t.data_ = std::make_shared<std::vector<real_t>>(std::move(values));
        return t;
    }

    static Tensor scalar(real_t v) { return from_data({1}, {v}); }

    // Same buffer under a new shape (no copy); numel must match.
    static Tensor share(Shape shape, std::shared_ptr<std::vector<real_t>> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.validate_shape();
        if (shape_numel(t.shape_) != static_cast<std::int64_t>(data->size()))
            throw DimensionError("tensor: buffer length " + std::to_string(data->size()) +
                                 " does not match shape " + shape_str(t.shape_));
        t.data_ = std::move(data);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::int64_t dim() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t extent(std::int64_t axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_->size()); }

    std::span<real_t> values() { return {data_->data(), data_->size()}; }
    std::span<const real_t> values() const { return {data_->data(), data_->size()}; }
    const std::shared_ptr<std::vector<real_t>>& buffer() const { return data_; }

    real_t item() const {
        if (size() != 1) throw ContractError("tensor: item() on non-scalar of shape " + shape_str(shape_));
        return (*data_)[0];
    }

    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool flag) {
        requires_grad_ = flag;
        return *this;
    }

    // Tape tracking; assigned by Tape::watch or by a recording kernel.
    bool tracked() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    NodeId node() const { return node_; }
    void set_trace(Tape* tape, NodeId node) {
        tape_ = tape;
        node_ = node;
    }
    void clear_trace() {
        tape_ = nullptr;
        node_ = -1;
    }

private:
    void validate_shape() const {
        for (std::size_t i = 0; i < shape_.size(); ++i)
            if (shape_[i] < 1)
                throw DimensionError("tensor: extent of axis " + std::to_string(i) +
                                     " is " + std::to_string(shape_[i]) + ", must be >= 1");
    }

    Shape shape_;
    std::shared_ptr<std::vector<real_t>> data_;
    bool requires_grad_ = false;
    Tape* tape_ = nullptr;
    NodeId node_ = -1;
};

} // namespace patchwork
