#pragma once

#include <string>

#include "patchwork/autodiff.hpp"
#include "patchwork/tensor.hpp"

namespace patchwork {

enum class LossKind { dice, mse, cross_entropy };

LossKind loss_kind_from_string(const std::string& name);
std::string loss_kind_name(LossKind kind);

// pred/target are [B,C,spatial...] probability and one-hot grids. Per class c:
// dice_c = (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps), summed over batch and
// space; loss = 1 - mean_c dice_c. eps = 1e-7.
Tensor dice_loss(const Tensor& pred, const Tensor& target, Tape* tape);

// Mean over every element of (pred - target)^2.
Tensor mse_loss(const Tensor& pred, const Tensor& target, Tape* tape);

// pred [B,C] post-softmax probabilities, target [B,C] one-hot:
// -(1/B) * sum(target * log(max(pred, 1e-12))).
Tensor cross_entropy_loss(const Tensor& pred, const Tensor& target, Tape* tape);

Tensor compute_loss(const Tensor& pred, const Tensor& target, LossKind kind, Tape* tape);

} // namespace patchwork
