#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "patchwork/detail/geometry.hpp"
#include "patchwork/kernels.hpp"

namespace patchwork::ops {

using detail::pool_geometry;

namespace {

struct AxisSplit {
    std::int64_t outer = 1;
    std::int64_t n = 1;
    std::int64_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::int64_t axis) {
    if (axis < 0 || axis >= static_cast<std::int64_t>(shape.size()))
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
    AxisSplit s;
    for (std::int64_t i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    s.n = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Coords spatial_of(const Shape& s) {
    if (s.size() < 3) throw DimensionError("expected [batch, channels, spatial...], got " + shape_str(s));
    return Coords(s.begin() + 2, s.end());
}

// Elementwise op with a pointwise gradient rule derived from (x, y) values.
template <typename Fwd, typename Bwd>
Tensor pointwise(const Tensor& input, Tape* tape, Fwd fwd, Bwd bwd) {
    Tensor out(input.shape());
    const real_t* x = input.values().data();
    real_t* y = out.values().data();
    const std::int64_t n = input.size();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);

    if (tape) {
        auto xb = input.buffer();
        auto yb = out.buffer();
        tape->record_op({input}, out, [xb, yb, bwd, n](std::span<const real_t> og,
                                                       const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gx = in_grads[0].data();
            const real_t* xv = xb->data();
            const real_t* yv = yb->data();
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < n; ++i) gx[i] += og[static_cast<std::size_t>(i)] * bwd(xv[i], yv[i]);
        });
    }
    return out;
}

} // namespace

Tensor relu(const Tensor& input, Tape* tape) {
    return pointwise(
        input, tape, [](real_t v) { return v > 0 ? v : real_t(0); },
        [](real_t x, real_t) { return x > 0 ? real_t(1) : real_t(0); });
}

Tensor leaky_relu(const Tensor& input, real_t alpha, Tape* tape) {
    return pointwise(
        input, tape, [alpha](real_t v) { return v > 0 ? v : alpha * v; },
        [alpha](real_t x, real_t) { return x > 0 ? real_t(1) : alpha; });
}

Tensor sigmoid(const Tensor& input, Tape* tape) {
    return pointwise(
        input, tape,
        [](real_t v) {
            if (v >= 0) return real_t(1) / (real_t(1) + std::exp(-v));
            const real_t e = std::exp(v);
            return e / (real_t(1) + e);
        },
        [](real_t, real_t y) { return y * (real_t(1) - y); });
}

Tensor softmax(const Tensor& input, std::int64_t axis, Tape* tape) {
    const auto sp = split_at(input.shape(), axis);
    Tensor out(input.shape());
    const real_t* x = input.values().data();
    real_t* y = out.values().data();

    const std::int64_t slices = sp.outer * sp.inner;
#pragma omp parallel for schedule(static)
    for (std::int64_t s = 0; s < slices; ++s) {
        const auto o = s / sp.inner;
        const auto i = s % sp.inner;
        const auto base = o * sp.n * sp.inner + i;
        real_t mx = -std::numeric_limits<real_t>::infinity();
        for (std::int64_t j = 0; j < sp.n; ++j) mx = std::max(mx, x[base + j * sp.inner]);
        real_t denom = 0;
        for (std::int64_t j = 0; j < sp.n; ++j) {
            const real_t e = std::exp(x[base + j * sp.inner] - mx);
            y[base + j * sp.inner] = e;
            denom += e;
        }
        for (std::int64_t j = 0; j < sp.n; ++j) y[base + j * sp.inner] /= denom;
    }

    if (tape) {
        auto yb = out.buffer();
        tape->record_op({input}, out, [yb, sp, slices](std::span<const real_t> og,
                                                       const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gx = in_grads[0].data();
            const real_t* yv = yb->data();
#pragma omp parallel for schedule(static)
            for (std::int64_t s = 0; s < slices; ++s) {
                const auto o = s / sp.inner;
                const auto i = s % sp.inner;
                const auto base = o * sp.n * sp.inner + i;
                real_t dot = 0;
                for (std::int64_t j = 0; j < sp.n; ++j) {
                    const auto k = static_cast<std::size_t>(base + j * sp.inner);
                    dot += og[k] * yv[k];
                }
                for (std::int64_t j = 0; j < sp.n; ++j) {
                    const auto k = static_cast<std::size_t>(base + j * sp.inner);
                    gx[k] += yv[k] * (og[k] - dot);
                }
            }
        });
    }
    return out;
}

Tensor pool_nd(const Tensor& input, PoolKind kind, const Coords& window, const Coords& stride, Tape* tape) {
    const auto& xs = input.shape();
    const real_t* x = input.values().data();

    if (kind == PoolKind::global_average) {
        const auto spatial = spatial_of(xs);
        const auto plane = product(spatial);
        Shape out_shape{xs[0], xs[1]};
        out_shape.insert(out_shape.end(), spatial.size(), 1);
        Tensor out(out_shape);
        real_t* y = out.values().data();
        const std::int64_t planes = xs[0] * xs[1];
#pragma omp parallel for schedule(static)
        for (std::int64_t p = 0; p < planes; ++p) {
            real_t acc = 0;
            for (std::int64_t i = 0; i < plane; ++i) acc += x[p * plane + i];
            y[p] = acc / static_cast<real_t>(plane);
        }
        if (tape) {
            tape->record_op({input}, out, [plane, planes](std::span<const real_t> og,
                                                          const std::vector<std::span<real_t>>& in_grads) {
                if (in_grads[0].empty()) return;
                real_t* gx = in_grads[0].data();
                const std::int64_t n = planes * plane;
#pragma omp parallel for schedule(static)
                for (std::int64_t i = 0; i < n; ++i)
                    gx[i] += og[static_cast<std::size_t>(i / plane)] / static_cast<real_t>(plane);
            });
        }
        return out;
    }

    const auto g = pool_geometry(xs, window, stride);
    const auto dims = static_cast<std::int64_t>(g.in_spatial.size());
    Shape out_shape{g.batch, g.channels};
    out_shape.insert(out_shape.end(), g.out_spatial.begin(), g.out_spatial.end());
    Tensor out(out_shape);
    real_t* y = out.values().data();

    const auto in_strides = row_major_strides(g.in_spatial);
    const auto in_plane = product(g.in_spatial);
    const auto out_plane = product(g.out_spatial);
    const auto win_size = product(g.window);
    const std::int64_t n_out = g.batch * g.channels * out_plane;
    const bool is_max = kind == PoolKind::max;

    // argmax is referenced by the backward closure; harmless extra work when
    // the pool is untracked average.
    auto argmax = std::make_shared<std::vector<std::int64_t>>(is_max ? static_cast<std::size_t>(n_out) : 0);

#pragma omp parallel for schedule(static)
    for (std::int64_t oi = 0; oi < n_out; ++oi) {
        const auto p = oi / out_plane;
        const auto oc = unflatten(oi % out_plane, g.out_spatial);
        real_t best = -std::numeric_limits<real_t>::infinity();
        std::int64_t best_at = -1;
        real_t acc = 0;
        Coords kc(static_cast<std::size_t>(dims), 0);
        do {
            std::int64_t xoff = p * in_plane;
            for (std::int64_t a = 0; a < dims; ++a)
                xoff += (oc[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] +
                         kc[static_cast<std::size_t>(a)]) * in_strides[static_cast<std::size_t>(a)];
            const real_t v = x[xoff];
            if (v > best) {
                best = v;
                best_at = xoff;
            }
            acc += v;
        } while (advance(kc, g.window));
        if (is_max) {
            y[oi] = best;
            (*argmax)[static_cast<std::size_t>(oi)] = best_at;
        } else {
            y[oi] = acc / static_cast<real_t>(win_size);
        }
    }

    if (tape) {
        tape->record_op({input}, out, [g, dims, argmax, is_max, in_plane, out_plane, win_size,
                                       in_strides](std::span<const real_t> og,
                                                   const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gx = in_grads[0].data();
            const std::int64_t planes = g.batch * g.channels;
            // Windows may overlap, so scatter per (batch, channel) plane; the
            // serial walk inside a plane keeps accumulation order fixed.
#pragma omp parallel for schedule(static)
            for (std::int64_t p = 0; p < planes; ++p) {
                for (std::int64_t q = 0; q < out_plane; ++q) {
                    const auto oi = p * out_plane + q;
                    if (is_max) {
                        gx[(*argmax)[static_cast<std::size_t>(oi)]] += og[static_cast<std::size_t>(oi)];
                        continue;
                    }
                    const auto oc = unflatten(q, g.out_spatial);
                    const real_t share = og[static_cast<std::size_t>(oi)] / static_cast<real_t>(win_size);
                    Coords kc(static_cast<std::size_t>(dims), 0);
                    do {
                        std::int64_t xoff = p * in_plane;
                        for (std::int64_t a = 0; a < dims; ++a)
                            xoff += (oc[static_cast<std::size_t>(a)] * g.stride[static_cast<std::size_t>(a)] +
                                     kc[static_cast<std::size_t>(a)]) * in_strides[static_cast<std::size_t>(a)];
                        gx[xoff] += share;
                    } while (advance(kc, g.window));
                }
            }
        });
    }
    return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias, Tape* tape) {
    const auto& xs = input.shape();
    const auto& ws = weights.shape();
    if (xs.size() != 2 || ws.size() != 2)
        throw DimensionError("dense: need rank-2 input and weights, got " + shape_str(xs) + " and " + shape_str(ws));
    if (xs[1] != ws[0])
        throw DimensionError("dense: axis 1 mismatch, input features " + std::to_string(xs[1]) +
                             " vs weight rows " + std::to_string(ws[0]));
    if (bias.size() && (bias.shape().size() != 1 || bias.shape()[0] != ws[1]))
        throw DimensionError("dense: bias must be [" + std::to_string(ws[1]) + "], got " + shape_str(bias.shape()));

    const auto B = xs[0], F = xs[1], O = ws[1];
    Tensor out({B, O});
    const real_t* x = input.values().data();
    const real_t* w = weights.values().data();
    const real_t* bv = bias.size() ? bias.values().data() : nullptr;
    real_t* y = out.values().data();

#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < B; ++b) {
        real_t* yr = y + b * O;
        for (std::int64_t o = 0; o < O; ++o) yr[o] = bv ? bv[o] : real_t(0);
        const real_t* xr = x + b * F;
        for (std::int64_t f = 0; f < F; ++f) {
            const real_t xv = xr[f];
            const real_t* wr = w + f * O;
            for (std::int64_t o = 0; o < O; ++o) yr[o] += xv * wr[o];
        }
    }

    if (tape) {
        std::vector<Tensor> inputs{input, weights};
        if (bias.size()) inputs.push_back(bias);
        Tensor xc = input;
        Tensor wc = weights;
        tape->record_op(inputs, out, [xc, wc, B, F, O](std::span<const real_t> og,
                                                       const std::vector<std::span<real_t>>& in_grads) {
            const real_t* x = xc.values().data();
            const real_t* w = wc.values().data();
            if (!in_grads[0].empty()) {
                real_t* gx = in_grads[0].data();
#pragma omp parallel for schedule(static)
                for (std::int64_t b = 0; b < B; ++b) {
                    const real_t* ogr = og.data() + b * O;
                    real_t* gxr = gx + b * F;
                    for (std::int64_t f = 0; f < F; ++f) {
                        const real_t* wr = w + f * O;
                        real_t acc = 0;
                        for (std::int64_t o = 0; o < O; ++o) acc += ogr[o] * wr[o];
                        gxr[f] += acc;
                    }
                }
            }
            if (!in_grads[1].empty()) {
                real_t* gw = in_grads[1].data();
#pragma omp parallel for schedule(static)
                for (std::int64_t f = 0; f < F; ++f) {
                    real_t* gwr = gw + f * O;
                    for (std::int64_t b = 0; b < B; ++b) {
                        const real_t xv = x[b * F + f];
                        const real_t* ogr = og.data() + b * O;
                        for (std::int64_t o = 0; o < O; ++o) gwr[o] += xv * ogr[o];
                    }
                }
            }
            if (in_grads.size() > 2 && !in_grads[2].empty()) {
                real_t* gb = in_grads[2].data();
#pragma omp parallel for schedule(static)
                for (std::int64_t o = 0; o < O; ++o) {
                    real_t acc = 0;
                    for (std::int64_t b = 0; b < B; ++b) acc += og[static_cast<std::size_t>(b * O + o)];
                    gb[o] += acc;
                }
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out(a.shape());
    const real_t* av = a.values().data();
    const real_t* bv = b.values().data();
    real_t* y = out.values().data();
    const std::int64_t n = a.size();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = av[i] + bv[i];

    if (tape) {
        tape->record_op({a, b}, out, [n](std::span<const real_t> og,
                                         const std::vector<std::span<real_t>>& in_grads) {
            for (const auto& gspan : in_grads) {
                if (gspan.empty()) continue;
                real_t* gp = gspan.data();
#pragma omp parallel for schedule(static)
                for (std::int64_t i = 0; i < n; ++i) gp[i] += og[static_cast<std::size_t>(i)];
            }
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis, Tape* tape) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const auto& ref_shape = parts[0].shape();
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != ref_shape.size())
            throw DimensionError("concat: rank mismatch " + shape_str(p.shape()) + " vs " + shape_str(ref_shape));
        for (std::size_t a = 0; a < ref_shape.size(); ++a)
            if (static_cast<std::int64_t>(a) != axis && p.shape()[a] != ref_shape[a])
                throw DimensionError("concat: axis " + std::to_string(a) + " mismatch " +
                                     shape_str(p.shape()) + " vs " + shape_str(ref_shape));
        total += p.shape()[static_cast<std::size_t>(axis)];
    }

    Shape out_shape = ref_shape;
    out_shape[static_cast<std::size_t>(axis)] = total;
    Tensor out(out_shape);
    const auto sp = split_at(out_shape, axis);
    real_t* y = out.values().data();

    std::vector<std::int64_t> offsets(parts.size());
    std::int64_t run = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        offsets[p] = run;
        run += parts[p].shape()[static_cast<std::size_t>(axis)];
    }

    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto e = parts[p].shape()[static_cast<std::size_t>(axis)];
        const real_t* src = parts[p].values().data();
        const auto block = e * sp.inner;
#pragma omp parallel for schedule(static)
        for (std::int64_t o = 0; o < sp.outer; ++o)
            std::memcpy(y + o * sp.n * sp.inner + offsets[p] * sp.inner, src + o * block,
                        static_cast<std::size_t>(block) * sizeof(real_t));
    }

    if (tape) {
        std::vector<std::int64_t> extents(parts.size());
        for (std::size_t p = 0; p < parts.size(); ++p) extents[p] = parts[p].shape()[static_cast<std::size_t>(axis)];
        tape->record_op(parts, out, [sp, offsets, extents](std::span<const real_t> og,
                                                           const std::vector<std::span<real_t>>& in_grads) {
            for (std::size_t p = 0; p < in_grads.size(); ++p) {
                if (in_grads[p].empty()) continue;
                real_t* gp = in_grads[p].data();
                const auto block = extents[p] * sp.inner;
#pragma omp parallel for schedule(static)
                for (std::int64_t o = 0; o < sp.outer; ++o) {
                    const real_t* src = og.data() + o * sp.n * sp.inner + offsets[p] * sp.inner;
                    real_t* dst = gp + o * block;
                    for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& input, Shape new_shape, Tape* tape) {
    Tensor out = Tensor::share(std::move(new_shape), std::make_shared<std::vector<real_t>>(*input.buffer()));
    if (tape) {
        const std::int64_t n = input.size();
        tape->record_op({input}, out, [n](std::span<const real_t> og,
                                          const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gx = in_grads[0].data();
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < n; ++i) gx[i] += og[static_cast<std::size_t>(i)];
        });
    }
    return out;
}

Tensor sum(const Tensor& input, Tape* tape) {
    const real_t* x = input.values().data();
    real_t acc = 0;
    for (std::int64_t i = 0; i < input.size(); ++i) acc += x[i];
    Tensor out = Tensor::scalar(acc);
    if (tape) {
        const std::int64_t n = input.size();
        tape->record_op({input}, out, [n](std::span<const real_t> og,
                                          const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gx = in_grads[0].data();
            const real_t g = og[0];
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor instance_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, real_t eps, Tape* tape) {
    const auto& xs = input.shape();
    const auto spatial = spatial_of(xs);
    const auto B = xs[0], C = xs[1];
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        throw DimensionError("instance_norm: gamma/beta must be [" + std::to_string(C) + "]");
    const auto plane = product(spatial);
    if (plane < 2) throw DimensionError("instance_norm: needs at least 2 spatial elements per plane");

    Tensor out(xs);
    const real_t* x = input.values().data();
    const real_t* gv = gamma.values().data();
    const real_t* bv = beta.values().data();
    real_t* y = out.values().data();

    const std::int64_t planes = B * C;
    auto mean = std::make_shared<std::vector<real_t>>(static_cast<std::size_t>(planes));
    auto inv_std = std::make_shared<std::vector<real_t>>(static_cast<std::size_t>(planes));

#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const auto c = p % C;
        const real_t* xr = x + p * plane;
        real_t m = 0;
        for (std::int64_t i = 0; i < plane; ++i) m += xr[i];
        m /= static_cast<real_t>(plane);
        real_t var = 0;
        for (std::int64_t i = 0; i < plane; ++i) {
            const real_t d = xr[i] - m;
            var += d * d;
        }
        var /= static_cast<real_t>(plane);
        const real_t is = real_t(1) / std::sqrt(var + eps);
        (*mean)[static_cast<std::size_t>(p)] = m;
        (*inv_std)[static_cast<std::size_t>(p)] = is;
        real_t* yr = y + p * plane;
        for (std::int64_t i = 0; i < plane; ++i) yr[i] = gv[c] * (xr[i] - m) * is + bv[c];
    }

    if (tape) {
        Tensor xc = input;
        Tensor gc = gamma;
        tape->record_op({input, gamma, beta}, out,
                        [xc, gc, mean, inv_std, B, C, plane](std::span<const real_t> og,
                                                             const std::vector<std::span<real_t>>& in_grads) {
            const real_t* x = xc.values().data();
            const real_t* gv = gc.values().data();
            const std::int64_t planes = B * C;
            if (!in_grads[0].empty()) {
                real_t* gx = in_grads[0].data();
#pragma omp parallel for schedule(static)
                for (std::int64_t p = 0; p < planes; ++p) {
                    const auto c = p % C;
                    const real_t m = (*mean)[static_cast<std::size_t>(p)];
                    const real_t is = (*inv_std)[static_cast<std::size_t>(p)];
                    const real_t* xr = x + p * plane;
                    const real_t* ogr = og.data() + p * plane;
                    real_t og_mean = 0, proj = 0;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        og_mean += ogr[i];
                        proj += ogr[i] * (xr[i] - m) * is;
                    }
                    og_mean /= static_cast<real_t>(plane);
                    proj /= static_cast<real_t>(plane);
                    real_t* gxr = gx + p * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const real_t xhat = (xr[i] - m) * is;
                        gxr[i] += gv[c] * is * (ogr[i] - og_mean - xhat * proj);
                    }
                }
            }
            if (!in_grads[1].empty() || !in_grads[2].empty()) {
#pragma omp parallel for schedule(static)
                for (std::int64_t c = 0; c < C; ++c) {
                    real_t dg = 0, db = 0;
                    for (std::int64_t b = 0; b < B; ++b) {
                        const auto p = b * C + c;
                        const real_t m = (*mean)[static_cast<std::size_t>(p)];
                        const real_t is = (*inv_std)[static_cast<std::size_t>(p)];
                        const real_t* xr = x + p * plane;
                        const real_t* ogr = og.data() + p * plane;
                        for (std::int64_t i = 0; i < plane; ++i) {
                            dg += ogr[i] * (xr[i] - m) * is;
                            db += ogr[i];
                        }
                    }
                    if (!in_grads[1].empty()) in_grads[1].data()[c] += dg;
                    if (!in_grads[2].empty()) in_grads[2].data()[c] += db;
                }
            }
        });
    }
    return out;
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  std::vector<real_t>& running_mean, std::vector<real_t>& running_var,
                  real_t momentum, real_t eps, bool training, Tape* tape) {
    const auto& xs = input.shape();
    const auto spatial = spatial_of(xs);
    const auto B = xs[0], C = xs[1];
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        throw DimensionError("batch_norm: gamma/beta must be [" + std::to_string(C) + "]");
    if (static_cast<std::int64_t>(running_mean.size()) != C || static_cast<std::int64_t>(running_var.size()) != C)
        throw DimensionError("batch_norm: running buffers must be [" + std::to_string(C) + "]");
    const auto plane = product(spatial);
    const auto m_count = B * plane;
    if (training && m_count < 2) throw DimensionError("batch_norm: needs at least 2 elements per channel in training");
    if (tape && !training) throw ContractError("batch_norm: recording gradients requires training mode");

    Tensor out(xs);
    const real_t* x = input.values().data();
    const real_t* gv = gamma.values().data();
    const real_t* bv = beta.values().data();
    real_t* y = out.values().data();

    auto mean = std::make_shared<std::vector<real_t>>(static_cast<std::size_t>(C));
    auto inv_std = std::make_shared<std::vector<real_t>>(static_cast<std::size_t>(C));

#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < C; ++c) {
        real_t m, var;
        if (training) {
            m = 0;
            for (std::int64_t b = 0; b < B; ++b) {
                const real_t* xr = x + (b * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) m += xr[i];
            }
            m /= static_cast<real_t>(m_count);
            var = 0;
            for (std::int64_t b = 0; b < B; ++b) {
                const real_t* xr = x + (b * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const real_t d = xr[i] - m;
                    var += d * d;
                }
            }
            var /= static_cast<real_t>(m_count);
            running_mean[static_cast<std::size_t>(c)] =
                (real_t(1) - momentum) * running_mean[static_cast<std::size_t>(c)] + momentum * m;
            running_var[static_cast<std::size_t>(c)] =
                (real_t(1) - momentum) * running_var[static_cast<std::size_t>(c)] + momentum * var;
        } else {
            m = running_mean[static_cast<std::size_t>(c)];
            var = running_var[static_cast<std::size_t>(c)];
        }
        const real_t is = real_t(1) / std::sqrt(var + eps);
        (*mean)[static_cast<std::size_t>(c)] = m;
        (*inv_std)[static_cast<std::size_t>(c)] = is;
        for (std::int64_t b = 0; b < B; ++b) {
            const real_t* xr = x + (b * C + c) * plane;
            real_t* yr = y + (b * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) yr[i] = gv[c] * (xr[i] - m) * is + bv[c];
        }
    }

    if (tape) {
        Tensor xc = input;
        Tensor gc = gamma;
        tape->record_op({input, gamma, beta}, out,
                        [xc, gc, mean, inv_std, B, C, plane, m_count](std::span<const real_t> og,
                                                                      const std::vector<std::span<real_t>>& in_grads) {
            const real_t* x = xc.values().data();
            const real_t* gv = gc.values().data();
#pragma omp parallel for schedule(static)
            for (std::int64_t c = 0; c < C; ++c) {
                const real_t m = (*mean)[static_cast<std::size_t>(c)];
                const real_t is = (*inv_std)[static_cast<std::size_t>(c)];
                real_t og_mean = 0, proj = 0, db = 0, dg = 0;
                for (std::int64_t b = 0; b < B; ++b) {
                    const real_t* xr = x + (b * C + c) * plane;
                    const real_t* ogr = og.data() + (b * C + c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const real_t xhat = (xr[i] - m) * is;
                        og_mean += ogr[i];
                        proj += ogr[i] * xhat;
                        dg += ogr[i] * xhat;
                        db += ogr[i];
                    }
                }
                og_mean /= static_cast<real_t>(m_count);
                proj /= static_cast<real_t>(m_count);
                if (!in_grads[0].empty()) {
                    real_t* gx = in_grads[0].data();
                    for (std::int64_t b = 0; b < B; ++b) {
                        const real_t* xr = x + (b * C + c) * plane;
                        const real_t* ogr = og.data() + (b * C + c) * plane;
                        real_t* gxr = gx + (b * C + c) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) {
                            const real_t xhat = (xr[i] - m) * is;
                            gxr[i] += gv[c] * is * (ogr[i] - og_mean - xhat * proj);
                        }
                    }
                }
                if (!in_grads[1].empty()) in_grads[1].data()[c] += dg;
                if (!in_grads[2].empty()) in_grads[2].data()[c] += db;
            }
        });
    }
    return out;
}

Tensor upsample_nearest(const Tensor& input, const Coords& factors, Tape* tape) {
    const auto& xs = input.shape();
    const auto in_spatial = spatial_of(xs);
    const auto dims = static_cast<std::int64_t>(in_spatial.size());
    if (static_cast<std::int64_t>(factors.size()) != dims)
        throw DimensionError("upsample: need one factor per spatial axis");
    for (auto f : factors)
        if (f < 1) throw DimensionError("upsample: factors must be >= 1");

    Coords out_spatial(in_spatial);
    for (std::int64_t a = 0; a < dims; ++a) out_spatial[static_cast<std::size_t>(a)] *= factors[static_cast<std::size_t>(a)];
    Shape out_shape{xs[0], xs[1]};
    out_shape.insert(out_shape.end(), out_spatial.begin(), out_spatial.end());
    Tensor out(out_shape);

    const auto in_strides = row_major_strides(in_spatial);
    const auto in_plane = product(in_spatial);
    const auto out_plane = product(out_spatial);
    const std::int64_t planes = xs[0] * xs[1];
    const real_t* x = input.values().data();
    real_t* y = out.values().data();

    const std::int64_t n_out = planes * out_plane;
#pragma omp parallel for schedule(static)
    for (std::int64_t oi = 0; oi < n_out; ++oi) {
        const auto p = oi / out_plane;
        const auto oc = unflatten(oi % out_plane, out_spatial);
        std::int64_t xoff = p * in_plane;
        for (std::int64_t a = 0; a < dims; ++a)
            xoff += (oc[static_cast<std::size_t>(a)] / factors[static_cast<std::size_t>(a)]) * in_strides[static_cast<std::size_t>(a)];
        y[oi] = x[xoff];
    }

    if (tape) {
        Coords fcopy = factors;
        tape->record_op({input}, out, [fcopy, in_spatial, out_spatial, in_plane, out_plane, planes,
                                       dims](std::span<const real_t> og,
                                             const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gx = in_grads[0].data();
            const auto out_strides = row_major_strides(out_spatial);
            const std::int64_t n_in = planes * in_plane;
            // Gather: each input element owns a factor-sized output box.
#pragma omp parallel for schedule(static)
            for (std::int64_t ii = 0; ii < n_in; ++ii) {
                const auto p = ii / in_plane;
                const auto ic = unflatten(ii % in_plane, in_spatial);
                std::int64_t base = p * out_plane;
                for (std::int64_t a = 0; a < dims; ++a)
                    base += ic[static_cast<std::size_t>(a)] * fcopy[static_cast<std::size_t>(a)] * out_strides[static_cast<std::size_t>(a)];
                real_t acc = 0;
                Coords kc(static_cast<std::size_t>(dims), 0);
                do {
                    acc += og[static_cast<std::size_t>(base + flat_offset(kc, out_strides))];
                } while (advance(kc, fcopy));
                gx[ii] += acc;
            }
        });
    }
    return out;
}

} // namespace patchwork::ops
