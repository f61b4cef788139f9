#pragma once

#include <string>

#include "patchwork/ndindex.hpp"
#include "patchwork/tensor.hpp"

// Shape validation and output-extent arithmetic shared by the optimized and
// reference kernels.
namespace patchwork::detail {

struct ConvGeometry {
    std::int64_t batch = 0;
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    Coords in_spatial;
    Coords kernel;
    Coords stride;
    Coords padding;
    Coords out_spatial;
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& w, const Shape& b,
                                  const Coords& stride, const Coords& padding) {
    if (x.size() < 3) throw DimensionError("conv: input needs [batch, channels, spatial...], got " + shape_str(x));
    const auto dims = static_cast<std::int64_t>(x.size()) - 2;
    if (dims != 2 && dims != 3)
        throw DimensionError("conv: supported spatial ranks are 2 and 3, got " + std::to_string(dims));
    if (static_cast<std::int64_t>(w.size()) != dims + 2)
        throw DimensionError("conv: weight rank " + std::to_string(w.size()) +
                             " does not match input rank " + std::to_string(x.size()));
    if (w[1] != x[1])
        throw DimensionError("conv: axis 1 mismatch, input has " + std::to_string(x[1]) +
                             " channels but weights expect " + std::to_string(w[1]));
    if (!b.empty() && (b.size() != 1 || b[0] != w[0]))
        throw DimensionError("conv: bias must be [" + std::to_string(w[0]) + "], got " + shape_str(b));
    if (static_cast<std::int64_t>(stride.size()) != dims || static_cast<std::int64_t>(padding.size()) != dims)
        throw DimensionError("conv: stride/padding must have one entry per spatial axis");

    ConvGeometry g;
    g.batch = x[0];
    g.in_channels = x[1];
    g.out_channels = w[0];
    g.stride = stride;
    g.padding = padding;
    for (std::int64_t a = 0; a < dims; ++a) {
        const auto s = x[static_cast<std::size_t>(a + 2)];
        const auto k = w[static_cast<std::size_t>(a + 2)];
        const auto st = stride[static_cast<std::size_t>(a)];
        const auto p = padding[static_cast<std::size_t>(a)];
        if (st < 1) throw DimensionError("conv: stride of spatial axis " + std::to_string(a) + " must be >= 1");
        if (p < 0) throw DimensionError("conv: padding of spatial axis " + std::to_string(a) + " must be >= 0");
        const auto out = (s + 2 * p - k) / st + 1;
        if (s + 2 * p < k || out < 1)
            throw DimensionError("conv: kernel " + std::to_string(k) + " does not fit spatial axis " +
                                 std::to_string(a) + " of extent " + std::to_string(s) +
                                 " with padding " + std::to_string(p));
        g.in_spatial.push_back(s);
        g.kernel.push_back(k);
        g.out_spatial.push_back(out);
    }
    return g;
}

struct TconvGeometry {
    std::int64_t batch = 0;
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    Coords in_spatial;
    Coords kernel;
    Coords stride;
    Coords out_spatial;
};

inline TconvGeometry tconv_geometry(const Shape& x, const Shape& w, const Coords& stride) {
    if (x.size() < 3) throw DimensionError("transpose_conv: input needs [batch, channels, spatial...], got " + shape_str(x));
    const auto dims = static_cast<std::int64_t>(x.size()) - 2;
    if (dims != 2 && dims != 3)
        throw DimensionError("transpose_conv: supported spatial ranks are 2 and 3, got " + std::to_string(dims));
    if (static_cast<std::int64_t>(w.size()) != dims + 2)
        throw DimensionError("transpose_conv: weight rank " + std::to_string(w.size()) +
                             " does not match input rank " + std::to_string(x.size()));
    if (w[0] != x[1])
        throw DimensionError("transpose_conv: axis 1 mismatch, input has " + std::to_string(x[1]) +
                             " channels but weights expect " + std::to_string(w[0]));
    if (static_cast<std::int64_t>(stride.size()) != dims)
        throw DimensionError("transpose_conv: stride must have one entry per spatial axis");

    TconvGeometry g;
    g.batch = x[0];
    g.in_channels = x[1];
    g.out_channels = w[1];
    g.stride = stride;
    for (std::int64_t a = 0; a < dims; ++a) {
        const auto s = x[static_cast<std::size_t>(a + 2)];
        const auto k = w[static_cast<std::size_t>(a + 2)];
        const auto st = stride[static_cast<std::size_t>(a)];
        if (st < 1) throw DimensionError("transpose_conv: stride of spatial axis " + std::to_string(a) + " must be >= 1");
        g.in_spatial.push_back(s);
        g.kernel.push_back(k);
        g.out_spatial.push_back((s - 1) * st + k);
    }
    return g;
}

struct PoolGeometry {
    std::int64_t batch = 0;
    std::int64_t channels = 0;
    Coords in_spatial;
    Coords window;
    Coords stride;
    Coords out_spatial;
};

inline PoolGeometry pool_geometry(const Shape& x, const Coords& window, const Coords& stride) {
    if (x.size() < 3) throw DimensionError("pool: input needs [batch, channels, spatial...], got " + shape_str(x));
    const auto dims = static_cast<std::int64_t>(x.size()) - 2;
    if (static_cast<std::int64_t>(window.size()) != dims || static_cast<std::int64_t>(stride.size()) != dims)
        throw DimensionError("pool: window/stride must have one entry per spatial axis");
    PoolGeometry g;
    g.batch = x[0];
    g.channels = x[1];
    for (std::int64_t a = 0; a < dims; ++a) {
        const auto s = x[static_cast<std::size_t>(a + 2)];
        const auto k = window[static_cast<std::size_t>(a)];
        const auto st = stride[static_cast<std::size_t>(a)];
        if (k < 1 || st < 1) throw DimensionError("pool: window and stride must be >= 1");
        if (k > s)
            throw DimensionError("pool: window " + std::to_string(k) + " larger than spatial axis " +
                                 std::to_string(a) + " of extent " + std::to_string(s));
        g.in_spatial.push_back(s);
        g.window.push_back(k);
        g.stride.push_back(st);
        g.out_spatial.push_back((s - k) / st + 1);
    }
    return g;
}

} // namespace patchwork::detail
