#include <algorithm>

#include "patchwork/detail/geometry.hpp"
#include "patchwork/kernels.hpp"

namespace patchwork::ops {

using detail::conv_geometry;
using detail::tconv_geometry;

namespace {

// Splits the spatial box into "rows": every coordinate except the last axis.
// Kernels parallelize over rows; the last axis runs contiguously inside one
// thread, which keeps accumulation order fixed for any thread count.
struct RowBox {
    Coords outer;          // spatial extents excluding the last axis
    std::int64_t rows = 1; // product of outer
    std::int64_t len = 0;  // extent of the last axis
};

RowBox row_box(const Coords& spatial) {
    RowBox rb;
    rb.outer.assign(spatial.begin(), spatial.end() - 1);
    rb.rows = product(rb.outer);
    rb.len = spatial.back();
    return rb;
}

Coords decompose(std::int64_t flat, const Coords& extents) { return unflatten(flat, extents); }

} // namespace

Tensor conv_nd(const Tensor& input, const Tensor& weights, const Tensor& bias,
               const Coords& stride, const Coords& padding, Tape* tape) {
    const auto g = conv_geometry(input.shape(), weights.shape(), bias.shape(), stride, padding);
    const auto dims = static_cast<std::int64_t>(g.in_spatial.size());

    Shape out_shape{g.batch, g.out_channels};
    out_shape.insert(out_shape.end(), g.out_spatial.begin(), g.out_spatial.end());
    Tensor out(out_shape);

    const auto in_strides = row_major_strides(g.in_spatial);
    const auto ker_strides = row_major_strides(g.kernel);
    const auto out_strides = row_major_strides(g.out_spatial);
    const auto in_plane = product(g.in_spatial);
    const auto out_plane = product(g.out_spatial);
    const auto ker_size = product(g.kernel);
    const auto out_rb = row_box(g.out_spatial);
    const auto st_last = g.stride.back();
    const auto p_last = g.padding.back();
    const auto k_last = g.kernel.back();
    const auto s_last = g.in_spatial.back();

    const real_t* x = input.values().data();
    const real_t* w = weights.values().data();
    const real_t* bv = bias.size() ? bias.values().data() : nullptr;
    real_t* y = out.values().data();

    const std::int64_t total_rows = g.batch * g.out_channels * out_rb.rows;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < total_rows; ++r) {
        const auto b = r / (g.out_channels * out_rb.rows);
        const auto co = (r / out_rb.rows) % g.out_channels;
        const auto oc_outer = decompose(r % out_rb.rows, out_rb.outer);

        real_t* out_row = y + (b * g.out_channels + co) * out_plane +
                          (out_rb.rows > 1 ? flat_offset(oc_outer, Coords(out_strides.begin(), out_strides.end() - 1)) : 0);
        const real_t init = bv ? bv[co] : real_t(0);
        for (std::int64_t ol = 0; ol < out_rb.len; ++ol) out_row[ol] = init;

        for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
            Coords kc(static_cast<std::size_t>(dims - 1), 0);
            do {
                // input coords for every axis but the last; skip taps that land in padding
                std::int64_t x_base = (b * g.in_channels + ci) * in_plane;
                bool inside = true;
                for (std::int64_t a = 0; a < dims - 1; ++a) {
                    const auto ia = oc_outer[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] -
                                    g.padding[static_cast<std::size_t>(a)] + kc[static_cast<std::size_t>(a)];
                    if (ia < 0 || ia >= g.in_spatial[static_cast<std::size_t>(a)]) {
                        inside = false;
                        break;
                    }
                    x_base += ia * in_strides[static_cast<std::size_t>(a)];
                }
                if (inside) {
                    std::int64_t w_base = (co * g.in_channels + ci) * ker_size;
                    for (std::int64_t a = 0; a < dims - 1; ++a)
                        w_base += kc[static_cast<std::size_t>(a)] * ker_strides[static_cast<std::size_t>(a)];
                    const real_t* x_row = x + x_base;
                    for (std::int64_t kl = 0; kl < k_last; ++kl) {
                        const real_t wv = w[w_base + kl];
                        // valid output range so that il = ol*stride - pad + kl stays in bounds
                        std::int64_t lo = 0;
                        if (p_last > kl) lo = (p_last - kl + st_last - 1) / st_last;
                        std::int64_t hi = (s_last - 1 + p_last - kl) / st_last;
                        hi = std::min(hi, out_rb.len - 1);
                        if (st_last == 1) {
                            const real_t* xr = x_row - p_last + kl;
                            for (std::int64_t ol = lo; ol <= hi; ++ol) out_row[ol] += wv * xr[ol];
                        } else {
                            for (std::int64_t ol = lo; ol <= hi; ++ol)
                                out_row[ol] += wv * x_row[ol * st_last - p_last + kl];
                        }
                    }
                }
            } while (dims > 1 && advance(kc, Coords(g.kernel.begin(), g.kernel.end() - 1)));
        }
    }

    if (tape) {
        std::vector<Tensor> inputs{input, weights};
        if (bias.size()) inputs.push_back(bias);
        Tensor xc = input;
        Tensor wc = weights;
        tape->record_op(inputs, out, [g, dims, xc, wc](std::span<const real_t> og,
                                                       const std::vector<std::span<real_t>>& in_grads) {
            const auto in_strides = row_major_strides(g.in_spatial);
            const auto ker_strides = row_major_strides(g.kernel);
            const auto out_strides = row_major_strides(g.out_spatial);
            const auto in_plane = product(g.in_spatial);
            const auto out_plane = product(g.out_spatial);
            const auto ker_size = product(g.kernel);
            const auto st_last = g.stride.back();
            const auto p_last = g.padding.back();
            const auto k_last = g.kernel.back();
            const auto o_last = g.out_spatial.back();
            const real_t* x = xc.values().data();
            const real_t* w = wc.values().data();

            if (!in_grads[0].empty()) {
                // dL/dx, gathered per input row: every (co, tap) pair maps an
                // output element onto this input element.
                real_t* gx = in_grads[0].data();
                const auto in_rb = row_box(g.in_spatial);
                const std::int64_t total_rows = g.batch * g.in_channels * in_rb.rows;
#pragma omp parallel for schedule(static)
                for (std::int64_t r = 0; r < total_rows; ++r) {
                    const auto b = r / (g.in_channels * in_rb.rows);
                    const auto ci = (r / in_rb.rows) % g.in_channels;
                    const auto ic_outer = decompose(r % in_rb.rows, in_rb.outer);
                    real_t* gx_row = gx + (b * g.in_channels + ci) * in_plane +
                                     (in_rb.rows > 1 ? flat_offset(ic_outer, Coords(in_strides.begin(), in_strides.end() - 1)) : 0);
                    for (std::int64_t co = 0; co < g.out_channels; ++co) {
                        Coords kc(static_cast<std::size_t>(dims - 1), 0);
                        do {
                            std::int64_t og_base = (b * g.out_channels + co) * out_plane;
                            bool inside = true;
                            for (std::int64_t a = 0; a < dims - 1; ++a) {
                                const auto num = ic_outer[static_cast<std::size_t>(a)] +
                                                 g.padding[static_cast<std::size_t>(a)] - kc[static_cast<std::size_t>(a)];
                                const auto st = g.stride[static_cast<std::size_t>(a)];
                                if (num < 0 || num % st != 0 || num / st >= g.out_spatial[static_cast<std::size_t>(a)]) {
                                    inside = false;
                                    break;
                                }
                                og_base += (num / st) * out_strides[static_cast<std::size_t>(a)];
                            }
                            if (inside) {
                                std::int64_t w_base = (co * g.in_channels + ci) * ker_size;
                                for (std::int64_t a = 0; a < dims - 1; ++a)
                                    w_base += kc[static_cast<std::size_t>(a)] * ker_strides[static_cast<std::size_t>(a)];
                                for (std::int64_t kl = 0; kl < k_last; ++kl) {
                                    const real_t wv = w[w_base + kl];
                                    for (std::int64_t il = 0; il < g.in_spatial.back(); ++il) {
                                        const auto num = il + p_last - kl;
                                        if (num < 0 || num % st_last != 0) continue;
                                        const auto ol = num / st_last;
                                        if (ol >= o_last) continue;
                                        gx_row[il] += wv * og[static_cast<std::size_t>(og_base + ol)];
                                    }
                                }
                            }
                        } while (dims > 1 && advance(kc, Coords(g.kernel.begin(), g.kernel.end() - 1)));
                    }
                }
            }

            if (!in_grads[1].empty()) {
                // dL/dw, one thread per weight element: dot of the output-grad
                // plane with the input window it saw.
                real_t* gw = in_grads[1].data();
                const std::int64_t n_weights = g.out_channels * g.in_channels * ker_size;
#pragma omp parallel for schedule(static)
                for (std::int64_t wi = 0; wi < n_weights; ++wi) {
                    const auto co = wi / (g.in_channels * ker_size);
                    const auto ci = (wi / ker_size) % g.in_channels;
                    const auto kc = decompose(wi % ker_size, g.kernel);
                    real_t acc = 0;
                    for (std::int64_t b = 0; b < g.batch; ++b) {
                        Coords oc(static_cast<std::size_t>(dims), 0);
                        do {
                            // walk outer out coords; inner axis handled as a strip
                            std::int64_t x_base = (b * g.in_channels + ci) * in_plane;
                            bool inside = true;
                            for (std::int64_t a = 0; a < dims - 1; ++a) {
                                const auto ia = oc[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] -
                                                g.padding[static_cast<std::size_t>(a)] + kc[static_cast<std::size_t>(a)];
                                if (ia < 0 || ia >= g.in_spatial[static_cast<std::size_t>(a)]) {
                                    inside = false;
                                    break;
                                }
                                x_base += ia * in_strides[static_cast<std::size_t>(a)];
                            }
                            if (inside) {
                                std::int64_t og_base = (b * g.out_channels + co) * out_plane;
                                for (std::int64_t a = 0; a < dims - 1; ++a)
                                    og_base += oc[static_cast<std::size_t>(a)] * out_strides[static_cast<std::size_t>(a)];
                                const auto kl = kc.back();
                                std::int64_t lo = 0;
                                if (p_last > kl) lo = (p_last - kl + st_last - 1) / st_last;
                                std::int64_t hi = (g.in_spatial.back() - 1 + p_last - kl) / st_last;
                                hi = std::min(hi, o_last - 1);
                                for (std::int64_t ol = lo; ol <= hi; ++ol)
                                    acc += og[static_cast<std::size_t>(og_base + ol)] *
                                           x[static_cast<std::size_t>(x_base + ol * st_last - p_last + kl)];
                            }
                        } while (advance_outer(oc, g.out_spatial));
                    }
                    gw[wi] += acc;
                }
            }

            if (in_grads.size() > 2 && !in_grads[2].empty()) {
                real_t* gb = in_grads[2].data();
#pragma omp parallel for schedule(static)
                for (std::int64_t co = 0; co < g.out_channels; ++co) {
                    real_t acc = 0;
                    for (std::int64_t b = 0; b < g.batch; ++b) {
                        const auto base = (b * g.out_channels + co) * out_plane;
                        for (std::int64_t i = 0; i < out_plane; ++i)
                            acc += og[static_cast<std::size_t>(base + i)];
                    }
                    gb[co] += acc;
                }
            }
        });
    }
    return out;
}

Tensor transpose_conv_nd(const Tensor& input, const Tensor& weights, const Coords& stride, Tape* tape) {
    const auto g = tconv_geometry(input.shape(), weights.shape(), stride);
    const auto dims = static_cast<std::int64_t>(g.in_spatial.size());

    Shape out_shape{g.batch, g.out_channels};
    out_shape.insert(out_shape.end(), g.out_spatial.begin(), g.out_spatial.end());
    Tensor out(out_shape);

    const auto in_strides = row_major_strides(g.in_spatial);
    const auto ker_strides = row_major_strides(g.kernel);
    const auto out_strides = row_major_strides(g.out_spatial);
    const auto in_plane = product(g.in_spatial);
    const auto out_plane = product(g.out_spatial);
    const auto ker_size = product(g.kernel);
    const auto out_rb = row_box(g.out_spatial);
    const auto st_last = g.stride.back();
    const auto k_last = g.kernel.back();

    const real_t* x = input.values().data();
    const real_t* w = weights.values().data();
    real_t* y = out.values().data();

    // Gather form: out[ol] pulls from input where ol = il*stride + kl.
    const std::int64_t total_rows = g.batch * g.out_channels * out_rb.rows;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < total_rows; ++r) {
        const auto b = r / (g.out_channels * out_rb.rows);
        const auto co = (r / out_rb.rows) % g.out_channels;
        const auto oc_outer = decompose(r % out_rb.rows, out_rb.outer);
        real_t* out_row = y + (b * g.out_channels + co) * out_plane +
                          (out_rb.rows > 1 ? flat_offset(oc_outer, Coords(out_strides.begin(), out_strides.end() - 1)) : 0);
        for (std::int64_t ol = 0; ol < out_rb.len; ++ol) out_row[ol] = 0;

        for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
            Coords kc(static_cast<std::size_t>(dims - 1), 0);
            do {
                std::int64_t x_base = (b * g.in_channels + ci) * in_plane;
                bool inside = true;
                for (std::int64_t a = 0; a < dims - 1; ++a) {
                    const auto num = oc_outer[static_cast<std::size_t>(a)] - kc[static_cast<std::size_t>(a)];
                    const auto st = g.stride[static_cast<std::size_t>(a)];
                    if (num < 0 || num % st != 0 || num / st >= g.in_spatial[static_cast<std::size_t>(a)]) {
                        inside = false;
                        break;
                    }
                    x_base += (num / st) * in_strides[static_cast<std::size_t>(a)];
                }
                if (inside) {
                    std::int64_t w_base = (ci * g.out_channels + co) * ker_size;
                    for (std::int64_t a = 0; a < dims - 1; ++a)
                        w_base += kc[static_cast<std::size_t>(a)] * ker_strides[static_cast<std::size_t>(a)];
                    const real_t* x_row = x + x_base;
                    for (std::int64_t kl = 0; kl < k_last; ++kl) {
                        const real_t wv = w[w_base + kl];
                        for (std::int64_t il = 0; il < g.in_spatial.back(); ++il)
                            out_row[il * st_last + kl] += wv * x_row[il];
                    }
                }
            } while (dims > 1 && advance(kc, Coords(g.kernel.begin(), g.kernel.end() - 1)));
        }
    }

    if (tape) {
        Tensor xc = input;
        Tensor wc = weights;
        tape->record_op({input, weights}, out, [g, dims, xc, wc](std::span<const real_t> og,
                                                                 const std::vector<std::span<real_t>>& in_grads) {
            const auto in_strides = row_major_strides(g.in_spatial);
            const auto ker_strides = row_major_strides(g.kernel);
            const auto out_strides = row_major_strides(g.out_spatial);
            const auto in_plane = product(g.in_spatial);
            const auto out_plane = product(g.out_spatial);
            const auto ker_size = product(g.kernel);
            const auto st_last = g.stride.back();
            const auto k_last = g.kernel.back();
            const real_t* x = xc.values().data();
            const real_t* w = wc.values().data();

            if (!in_grads[0].empty()) {
                // dL/dx[il] = sum over taps of w * og[il*stride + k]
                real_t* gx = in_grads[0].data();
                const auto in_rb = row_box(g.in_spatial);
                const std::int64_t total_rows = g.batch * g.in_channels * in_rb.rows;
#pragma omp parallel for schedule(static)
                for (std::int64_t r = 0; r < total_rows; ++r) {
                    const auto b = r / (g.in_channels * in_rb.rows);
                    const auto ci = (r / in_rb.rows) % g.in_channels;
                    const auto ic_outer = decompose(r % in_rb.rows, in_rb.outer);
                    real_t* gx_row = gx + (b * g.in_channels + ci) * in_plane +
                                     (in_rb.rows > 1 ? flat_offset(ic_outer, Coords(in_strides.begin(), in_strides.end() - 1)) : 0);
                    for (std::int64_t co = 0; co < g.out_channels; ++co) {
                        Coords kc(static_cast<std::size_t>(dims - 1), 0);
                        do {
                            std::int64_t og_base = (b * g.out_channels + co) * out_plane;
                            for (std::int64_t a = 0; a < dims - 1; ++a)
                                og_base += (ic_outer[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] +
                                            kc[static_cast<std::size_t>(a)]) * out_strides[static_cast<std::size_t>(a)];
                            std::int64_t w_base = (ci * g.out_channels + co) * ker_size;
                            for (std::int64_t a = 0; a < dims - 1; ++a)
                                w_base += kc[static_cast<std::size_t>(a)] * ker_strides[static_cast<std::size_t>(a)];
                            for (std::int64_t kl = 0; kl < k_last; ++kl) {
                                const real_t wv = w[w_base + kl];
                                for (std::int64_t il = 0; il < g.in_spatial.back(); ++il)
                                    gx_row[il] += wv * og[static_cast<std::size_t>(og_base + il * st_last + kl)];
                            }
                        } while (dims > 1 && advance(kc, Coords(g.kernel.begin(), g.kernel.end() - 1)));
                    }
                }
            }

            if (!in_grads[1].empty()) {
                real_t* gw = in_grads[1].data();
                const std::int64_t n_weights = g.in_channels * g.out_channels * ker_size;
#pragma omp parallel for schedule(static)
                for (std::int64_t wi = 0; wi < n_weights; ++wi) {
                    const auto ci = wi / (g.out_channels * ker_size);
                    const auto co = (wi / ker_size) % g.out_channels;
                    const auto kc = decompose(wi % ker_size, g.kernel);
                    real_t acc = 0;
                    for (std::int64_t b = 0; b < g.batch; ++b) {
                        Coords ic(static_cast<std::size_t>(dims), 0);
                        do {
                            std::int64_t x_base = (b * g.in_channels + ci) * in_plane;
                            std::int64_t og_base = (b * g.out_channels + co) * out_plane;
                            for (std::int64_t a = 0; a < dims - 1; ++a) {
                                x_base += ic[static_cast<std::size_t>(a)] * in_strides[static_cast<std::size_t>(a)];
                                og_base += (ic[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] +
                                            kc[static_cast<std::size_t>(a)]) * out_strides[static_cast<std::size_t>(a)];
                            }
                            const auto kl = kc.back();
                            for (std::int64_t il = 0; il < g.in_spatial.back(); ++il)
                                acc += x[static_cast<std::size_t>(x_base + il)] *
                                       og[static_cast<std::size_t>(og_base + il * st_last + kl)];
                        } while (advance_outer(ic, g.in_spatial));
                    }
                    gw[wi] += acc;
                }
            }
        });
    }
    return out;
}

} // namespace patchwork::ops
