#include "patchwork/reference.hpp"

#include <algorithm>
#include <limits>

#include "patchwork/detail/geometry.hpp"

namespace patchwork::ref {

using detail::conv_geometry;
using detail::pool_geometry;
using detail::tconv_geometry;

Tensor conv_nd(const Tensor& input, const Tensor& weights, const Tensor& bias,
               const Coords& stride, const Coords& padding) {
    const auto g = conv_geometry(input.shape(), weights.shape(), bias.shape(), stride, padding);
    const auto dims = static_cast<std::int64_t>(g.in_spatial.size());

    Shape out_shape{g.batch, g.out_channels};
    out_shape.insert(out_shape.end(), g.out_spatial.begin(), g.out_spatial.end());
    Tensor out(out_shape);

    const auto in_strides = row_major_strides(g.in_spatial);
    const auto x = input.values();
    const auto w = weights.values();
    const auto in_plane = product(g.in_spatial);
    const auto ker_size = product(g.kernel);
    auto y = out.values();

    std::int64_t oi = 0;
    for (std::int64_t b = 0; b < g.batch; ++b)
        for (std::int64_t co = 0; co < g.out_channels; ++co) {
            Coords oc(static_cast<std::size_t>(dims), 0);
            do {
                real_t acc = bias.size() ? bias.values()[static_cast<std::size_t>(co)] : real_t(0);
                for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
                    Coords kc(static_cast<std::size_t>(dims), 0);
                    do {
                        bool inside = true;
                        std::int64_t xoff = (b * g.in_channels + ci) * in_plane;
                        for (std::int64_t a = 0; a < dims; ++a) {
                            const auto i = oc[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] -
                                           g.padding[static_cast<std::size_t>(a)] + kc[static_cast<std::size_t>(a)];
                            if (i < 0 || i >= g.in_spatial[static_cast<std::size_t>(a)]) {
                                inside = false;
                                break;
                            }
                            xoff += i * in_strides[static_cast<std::size_t>(a)];
                        }
                        if (inside)
                            acc += x[static_cast<std::size_t>(xoff)] *
                                   w[static_cast<std::size_t>((co * g.in_channels + ci) * ker_size + flat_offset(kc, row_major_strides(g.kernel)))];
                    } while (advance(kc, g.kernel));
                }
                y[static_cast<std::size_t>(oi++)] = acc;
            } while (advance(oc, g.out_spatial));
        }
    return out;
}

Tensor transpose_conv_nd(const Tensor& input, const Tensor& weights, const Coords& stride) {
    const auto g = tconv_geometry(input.shape(), weights.shape(), stride);
    const auto dims = static_cast<std::int64_t>(g.in_spatial.size());

    Shape out_shape{g.batch, g.out_channels};
    out_shape.insert(out_shape.end(), g.out_spatial.begin(), g.out_spatial.end());
    Tensor out(out_shape);

    const auto in_strides = row_major_strides(g.in_spatial);
    const auto out_strides = row_major_strides(g.out_spatial);
    const auto ker_strides = row_major_strides(g.kernel);
    const auto in_plane = product(g.in_spatial);
    const auto out_plane = product(g.out_spatial);
    const auto ker_size = product(g.kernel);
    const auto x = input.values();
    const auto w = weights.values();
    auto y = out.values();

    // Scatter form: each input element spreads over a kernel-sized output box.
    for (std::int64_t b = 0; b < g.batch; ++b)
        for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
            Coords ic(static_cast<std::size_t>(dims), 0);
            do {
                const auto xv = x[static_cast<std::size_t>((b * g.in_channels + ci) * in_plane + flat_offset(ic, in_strides))];
                for (std::int64_t co = 0; co < g.out_channels; ++co) {
                    Coords kc(static_cast<std::size_t>(dims), 0);
                    do {
                        std::int64_t ooff = (b * g.out_channels + co) * out_plane;
                        for (std::int64_t a = 0; a < dims; ++a)
                            ooff += (ic[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] +
                                     kc[static_cast<std::size_t>(a)]) * out_strides[static_cast<std::size_t>(a)];
                        y[static_cast<std::size_t>(ooff)] +=
                            xv * w[static_cast<std::size_t>((ci * g.out_channels + co) * ker_size + flat_offset(kc, ker_strides))];
                    } while (advance(kc, g.kernel));
                }
            } while (advance(ic, g.in_spatial));
        }
    return out;
}

Tensor pool_nd(const Tensor& input, ops::PoolKind kind, const Coords& window, const Coords& stride) {
    const auto& xs = input.shape();
    const auto dims = static_cast<std::int64_t>(xs.size()) - 2;
    const auto x = input.values();

    if (kind == ops::PoolKind::global_average) {
        Shape out_shape{xs[0], xs[1]};
        out_shape.insert(out_shape.end(), static_cast<std::size_t>(dims), 1);
        Tensor out(out_shape);
        auto y = out.values();
        Coords spatial(xs.begin() + 2, xs.end());
        const auto plane = product(spatial);
        for (std::int64_t p = 0; p < xs[0] * xs[1]; ++p) {
            real_t acc = 0;
            for (std::int64_t i = 0; i < plane; ++i) acc += x[static_cast<std::size_t>(p * plane + i)];
            y[static_cast<std::size_t>(p)] = acc / static_cast<real_t>(plane);
        }
        return out;
    }

    const auto g = pool_geometry(xs, window, stride);
    Shape out_shape{g.batch, g.channels};
    out_shape.insert(out_shape.end(), g.out_spatial.begin(), g.out_spatial.end());
    Tensor out(out_shape);
    auto y = out.values();

    const auto in_strides = row_major_strides(g.in_spatial);
    const auto in_plane = product(g.in_spatial);
    const auto win_size = product(g.window);
    std::int64_t oi = 0;
    for (std::int64_t p = 0; p < g.batch * g.channels; ++p) {
        Coords oc(static_cast<std::size_t>(dims), 0);
        do {
            real_t best = -std::numeric_limits<real_t>::infinity();
            real_t acc = 0;
            Coords kc(static_cast<std::size_t>(dims), 0);
            do {
                std::int64_t xoff = p * in_plane;
                for (std::int64_t a = 0; a < dims; ++a)
                    xoff += (oc[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] +
                             kc[static_cast<std::size_t>(a)]) * in_strides[static_cast<std::size_t>(a)];
                const auto v = x[static_cast<std::size_t>(xoff)];
                best = std::max(best, v);
                acc += v;
            } while (advance(kc, g.window));
            y[static_cast<std::size_t>(oi++)] =
                kind == ops::PoolKind::max ? best : acc / static_cast<real_t>(win_size);
        } while (advance(oc, g.out_spatial));
    }
    return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    const auto& xs = input.shape();
    const auto& ws = weights.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0])
        throw DimensionError("dense: need [B,F] x [F,O], got " + shape_str(xs) + " x " + shape_str(ws));
    Tensor out({xs[0], ws[1]});
    const auto x = input.values();
    const auto w = weights.values();
    auto y = out.values();
    for (std::int64_t b = 0; b < xs[0]; ++b)
        for (std::int64_t o = 0; o < ws[1]; ++o) {
            real_t acc = bias.size() ? bias.values()[static_cast<std::size_t>(o)] : real_t(0);
            for (std::int64_t f = 0; f < xs[1]; ++f)
                acc += x[static_cast<std::size_t>(b * xs[1] + f)] * w[static_cast<std::size_t>(f * ws[1] + o)];
            y[static_cast<std::size_t>(b * ws[1] + o)] = acc;
        }
    return out;
}

} // namespace patchwork::ref
