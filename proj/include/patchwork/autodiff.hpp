#pragma once

#include <functional>
#include <vector>

#include "patchwork/tensor.hpp"

namespace patchwork {

// Gradient sink for one recorded op. Receives the upstream gradient of the
// op's output and the gradient buffers of its inputs (same order as passed
// to record); must accumulate (+=) into them, never overwrite.
using BackwardFn = std::function<void(std::span<const real_t> out_grad,
                                      const std::vector<std::span<real_t>>& in_grads)>;

// Reverse-mode trace. Kernels append nodes during the forward pass; backward
// walks the nodes once in reverse order. A tape is single-use: after backward
// it refuses further recording or a second sweep.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a leaf (parameter or watched input) so gradients flow into it.
    void watch(Tensor& t) {
        check_live("watch");
        if (t.tracked()) {
            if (t.tape() != this) throw ContractError("tape: tensor already tracked by a different tape");
            return;
        }
        NodeId id = new_node({}, t.size());
        t.set_trace(this, id);
        t.set_requires_grad(true);
    }

    // Registers an op that produced `out` from `inputs`. Untracked inputs are
    // treated as constants; their slots in in_grads are empty spans.
    void record_op(const std::vector<Tensor>& inputs, Tensor& out, BackwardFn backward) {
        check_live("record_op");
        std::vector<NodeId> in_ids;
        in_ids.reserve(inputs.size());
        bool any_tracked = false;
        for (const auto& in : inputs) {
            if (in.tracked()) {
                if (in.tape() != this) throw ContractError("tape: input tracked by a different tape");
                if (in.node() < 0 || in.node() >= static_cast<NodeId>(nodes_.size()))
                    throw ContractError("tape: input node id out of range");
                any_tracked = true;
                in_ids.push_back(in.node());
            } else {
                in_ids.push_back(-1);
            }
        }
        if (!any_tracked) return; // constant subgraph, nothing to differentiate
        NodeId id = new_node(std::move(in_ids), out.size());
        nodes_[static_cast<std::size_t>(id)].backward = std::move(backward);
        out.set_trace(this, id);
    }

    // Runs the reverse sweep from `loss` (must be scalar). Gradient buffers
    // stay on the tape afterwards and are read through grad().
    void backward(const Tensor& loss) {
        check_live("backward");
        if (loss.size() != 1) throw ContractError("tape: backward needs a scalar loss, got shape " + shape_str(loss.shape()));
        if (!loss.tracked() || loss.tape() != this)
            throw ContractError("tape: loss is not tracked by this tape");
        consumed_ = true;

        grads_.assign(nodes_.size(), {});
        const auto root = static_cast<std::size_t>(loss.node());
        grads_[root].assign(1, real_t(1));

        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& node = nodes_[i];
            if (grads_[i].empty() || !node.backward) continue;
            std::vector<std::span<real_t>> in_grads;
            in_grads.reserve(node.inputs.size());
            for (NodeId in : node.inputs) {
                if (in < 0) {
                    in_grads.emplace_back();
                    continue;
                }
                auto& g = grads_[static_cast<std::size_t>(in)];
                if (g.empty()) g.assign(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(in)].size), real_t(0));
                in_grads.emplace_back(g.data(), g.size());
            }
            node.backward(std::span<const real_t>(grads_[i].data(), grads_[i].size()), in_grads);
            node.backward = nullptr; // free closure captures as the sweep retires nodes
        }
    }

    // Gradient of the watched/recorded tensor after backward. Zero-filled if
    // the tensor did not influence the loss.
    std::span<const real_t> grad(const Tensor& t) {
        if (!consumed_) throw ContractError("tape: grad() before backward()");
        if (!t.tracked() || t.tape() != this) throw ContractError("tape: tensor is not tracked by this tape");
        auto& g = grads_[static_cast<std::size_t>(t.node())];
        if (g.empty()) g.assign(static_cast<std::size_t>(t.size()), real_t(0));
        return {g.data(), g.size()};
    }

    bool consumed() const { return consumed_; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<NodeId> inputs;
        std::int64_t size = 0;
        BackwardFn backward; // empty for leaves
    };

    void check_live(const char* what) const {
        if (consumed_) throw ContractError(std::string("tape: ") + what + " on a consumed tape; build a fresh tape per step");
    }

    NodeId new_node(std::vector<NodeId> inputs, std::int64_t size) {
        nodes_.push_back(Node{std::move(inputs), size, nullptr});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::vector<std::vector<real_t>> grads_;
    bool consumed_ = false;
};

} // namespace patchwork
