#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "patchwork/autodiff.hpp"
#include "patchwork/tensor.hpp"

namespace patchwork {

struct Parameter {
    std::string name;
    Tensor value;
    std::vector<real_t> grad;
    std::vector<real_t> momentum;
};

// Named parameters plus non-trainable buffers (e.g. running statistics).
// Iteration order is insertion order, which fixes the checkpoint layout.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor value) {
        if (index_.count(name)) throw ContractError("params: duplicate name '" + name + "'");
        index_[name] = params_.size();
        const auto n = static_cast<std::size_t>(value.size());
        params_.push_back(Parameter{name, std::move(value),
                                    std::vector<real_t>(n, 0), std::vector<real_t>(n, 0)});
        return params_.back().value;
    }

    Parameter& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("params: unknown name '" + name + "'");
        return params_[it->second];
    }

    std::vector<real_t>& buffer(const std::string& name, std::size_t size) {
        auto it = buffer_index_.find(name);
        if (it != buffer_index_.end()) return buffers_[it->second].second;
        buffer_index_[name] = buffers_.size();
        buffers_.emplace_back(name, std::vector<real_t>(size, 0));
        return buffers_.back().second;
    }

    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }
    std::vector<std::pair<std::string, std::vector<real_t>>>& buffers() { return buffers_; }
    const std::vector<std::pair<std::string, std::vector<real_t>>>& buffers() const { return buffers_; }

    std::int64_t count_values() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    // Registers every parameter as a leaf on a fresh tape, dropping traces
    // left by the previous step.
    void attach(Tape& tape) {
        for (auto& p : params_) {
            p.value.clear_trace();
            tape.watch(p.value);
        }
    }

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::pair<std::string, std::vector<real_t>>> buffers_;
    std::unordered_map<std::string, std::size_t> buffer_index_;
};

// Reverse sweep from `loss`, then accumulates each parameter's gradient into
// its ParamStore buffer.
void backward(Tape& tape, const Tensor& loss, ParamStore& params);

// v <- momentum * v + g; p <- p - lr * v; grads zeroed afterwards.
void sgd_step(ParamStore& params, real_t lr, real_t momentum);

} // namespace patchwork
