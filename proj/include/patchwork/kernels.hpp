#pragma once

#include <vector>

#include "patchwork/autodiff.hpp"
#include "patchwork/ndindex.hpp"
#include "patchwork/tensor.hpp"

// Neural-network kernels. Every op allocates a fresh output tensor and, when
// `tape` is non-null, records a backward rule on it. Forward loops parallelize
// over independent output elements only, so results are bitwise identical for
// any thread count.
namespace patchwork::ops {

// input [B,Cin,S...], weights [Cout,Cin,K...], bias [Cout] (empty tensor = no
// bias). Cross-correlation with zero padding; out extent
// floor((S + 2*pad - K)/stride) + 1.
Tensor conv_nd(const Tensor& input, const Tensor& weights, const Tensor& bias,
               const Coords& stride, const Coords& padding, Tape* tape);

// input [B,C1,S...], weights [C1,C2,K...]; out extent (S-1)*stride + K.
// Adjoint of conv_nd: <conv(x,w),y> == <x, transpose_conv(y,w)> for weights
// viewed as [Cout,Cin,K...] on the conv side.
Tensor transpose_conv_nd(const Tensor& input, const Tensor& weights,
                         const Coords& stride, Tape* tape);

enum class PoolKind { max, average, global_average };

// window/stride ignored for global_average (collapses spatial to 1).
Tensor pool_nd(const Tensor& input, PoolKind kind, const Coords& window,
               const Coords& stride, Tape* tape);

Tensor relu(const Tensor& input, Tape* tape);
Tensor leaky_relu(const Tensor& input, real_t alpha, Tape* tape);
Tensor sigmoid(const Tensor& input, Tape* tape);
Tensor softmax(const Tensor& input, std::int64_t axis, Tape* tape);

// input [B,F], weights [F,O], bias [O] (empty = none) -> [B,O].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias, Tape* tape);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis, Tape* tape);
Tensor reshape(const Tensor& input, Shape new_shape, Tape* tape);
Tensor sum(const Tensor& input, Tape* tape);

// Per-(batch,channel) normalization over spatial axes.
Tensor instance_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                     real_t eps, Tape* tape);

// Per-channel normalization over batch and spatial axes. Training mode uses
// batch statistics and updates the running buffers in place:
// running = (1 - momentum) * running + momentum * batch_stat. Inference mode
// normalizes with the running buffers.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  std::vector<real_t>& running_mean, std::vector<real_t>& running_var,
                  real_t momentum, real_t eps, bool training, Tape* tape);

// Integer-factor nearest-neighbour upsampling of the spatial axes.
Tensor upsample_nearest(const Tensor& input, const Coords& factors, Tape* tape);

// Helpers shared by model builders.
inline Coords uniform_coords(std::int64_t dims, std::int64_t v) {
    return Coords(static_cast<std::size_t>(dims), v);
}
inline Coords same_padding(const Coords& kernel) {
    Coords p(kernel.size());
    for (std::size_t i = 0; i < kernel.size(); ++i) p[i] = (kernel[i] - 1) / 2;
    return p;
}

} // namespace patchwork::ops
