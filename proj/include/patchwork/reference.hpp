#pragma once

#include "patchwork/kernels.hpp"

// Serial reference implementations of the heavy kernels: plain nested loops,
// no threading, no fast paths. They exist so the optimized kernels can be
// checked against an independent formulation, and as the baseline side of the
// kernel benchmark. Forward only.
namespace patchwork::ref {

Tensor conv_nd(const Tensor& input, const Tensor& weights, const Tensor& bias,
               const Coords& stride, const Coords& padding);

Tensor transpose_conv_nd(const Tensor& input, const Tensor& weights, const Coords& stride);

Tensor pool_nd(const Tensor& input, ops::PoolKind kind, const Coords& window,
               const Coords& stride);

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

} // namespace patchwork::ref
