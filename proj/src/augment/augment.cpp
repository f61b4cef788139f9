#include "patchwork/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "patchwork/fft.hpp"
#include "patchwork/ndindex.hpp"
#include "patchwork/preprocess.hpp"

namespace patchwork {

void validate_sample(const Sample& s) {
    s.image.validate();
    if (s.mask) {
        s.mask->validate();
        if (s.mask->extents != s.image.extents)
            throw DimensionError("mask extents " + shape_str(s.mask->extents) +
                                 " do not match image " + shape_str(s.image.extents));
    }
}

namespace {

void check_axis(std::int64_t axis, std::size_t rank, const char* what) {
    if (axis < 0 || axis >= static_cast<std::int64_t>(rank))
        throw ConfigError(std::string(what) + ": axis " + std::to_string(axis) +
                          " out of range for rank " + std::to_string(rank));
}

// value at a continuous position, zero outside the grid, f == 0 exact
real_t sample_linear(std::span<const real_t> plane, const Coords& ext,
                     const std::vector<std::int64_t>& strides, const std::vector<double>& pos,
                     std::size_t axis, std::int64_t flat) {
    if (axis == ext.size()) return plane[static_cast<std::size_t>(flat)];
    const double fl = std::floor(pos[axis]);
    const auto i0 = static_cast<std::int64_t>(fl);
    const double f = pos[axis] - fl;
    const bool a_in = i0 >= 0 && i0 < ext[axis];
    const real_t a = a_in ? sample_linear(plane, ext, strides, pos, axis + 1, flat + i0 * strides[axis])
                          : real_t(0);
    if (f == 0.0) return a;
    const bool b_in = i0 + 1 >= 0 && i0 + 1 < ext[axis];
    const real_t b = b_in
                         ? sample_linear(plane, ext, strides, pos, axis + 1, flat + (i0 + 1) * strides[axis])
                         : real_t(0);
    return a + static_cast<real_t>(f) * (b - a);
}

real_t sample_nearest(std::span<const real_t> plane, const Coords& ext,
                      const std::vector<std::int64_t>& strides, const std::vector<double>& pos) {
    std::int64_t flat = 0;
    for (std::size_t k = 0; k < ext.size(); ++k) {
        const auto i = static_cast<std::int64_t>(std::floor(pos[k] + 0.5));
        if (i < 0 || i >= ext[k]) return 0;
        flat += i * strides[k];
    }
    return plane[static_cast<std::size_t>(flat)];
}

// backward-mapping warp: source(out_index) gives continuous source coordinates
template <typename SourceFn>
Sample warp(const Sample& s, const SourceFn& source) {
    validate_sample(s);
    const auto& ext = s.image.extents;
    const auto rank = ext.size();
    const auto strides = row_major_strides(ext);
    const auto n = s.image.plane_size();

    Sample out;
    out.image = s.image;
    if (s.mask) out.mask = *s.mask;

    Coords idx(rank, 0);
    std::vector<double> pos(rank);
    for (std::int64_t i = 0; i < n; ++i) {
        source(idx, pos);
        for (std::int64_t c = 0; c < s.image.channels; ++c)
            out.image.channel(c)[static_cast<std::size_t>(i)] =
                sample_linear(s.image.channel(c), ext, strides, pos, 0, 0);
        if (s.mask)
            for (std::int64_t c = 0; c < s.mask->channels; ++c)
                out.mask->channel(c)[static_cast<std::size_t>(i)] =
                    sample_nearest(s.mask->channel(c), ext, strides, pos);
        advance(idx, ext);
    }
    return out;
}

// exact index remap applied to image and mask alike
template <typename MapFn>
Sample remap(const Sample& s, const Coords& out_extents, const MapFn& to_source) {
    validate_sample(s);
    const auto src_strides = row_major_strides(s.image.extents);
    const auto n = product(out_extents);
    Sample out;
    out.image = s.image;
    out.image.extents = out_extents;
    if (s.mask) {
        out.mask = *s.mask;
        out.mask->extents = out_extents;
    }
    Coords idx(out_extents.size(), 0), src(out_extents.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        to_source(idx, src);
        const auto flat = flat_offset(src, src_strides);
        for (std::int64_t c = 0; c < s.image.channels; ++c)
            out.image.channel(c)[static_cast<std::size_t>(i)] =
                s.image.channel(c)[static_cast<std::size_t>(flat)];
        if (s.mask)
            for (std::int64_t c = 0; c < s.mask->channels; ++c)
                out.mask->channel(c)[static_cast<std::size_t>(i)] =
                    s.mask->channel(c)[static_cast<std::size_t>(flat)];
        advance(idx, out_extents);
    }
    return out;
}

std::vector<cplx> to_spectrum(const Image& img, const char* what) {
    if (img.channels != 1)
        throw ContractError(std::string(what) + " needs a single-channel image, got " +
                            std::to_string(img.channels) + " channels");
    std::vector<cplx> grid(img.values.begin(), img.values.end());
    fft_nd(grid, img.extents, false);
    return grid;
}

Image from_spectrum(std::vector<cplx> grid, const Image& like) {
    fft_nd(grid, like.extents, true);
    Image out = like;
    for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] = static_cast<real_t>(grid[i].real());
    return out;
}

} // namespace

Sample flip_axes(const Sample& s, const Coords& axes) {
    validate_sample(s);
    const auto& ext = s.image.extents;
    for (auto a : axes) check_axis(a, ext.size(), "flip");
    std::vector<bool> rev(ext.size(), false);
    for (auto a : axes) rev[static_cast<std::size_t>(a)] = true;
    return remap(s, ext, [&](const Coords& idx, Coords& src) {
        for (std::size_t k = 0; k < src.size(); ++k)
            src[k] = rev[k] ? ext[k] - 1 - idx[k] : idx[k];
    });
}

Sample rotate_quarter(const Sample& s, int turns, std::int64_t axis_a, std::int64_t axis_b) {
    validate_sample(s);
    const auto& ext = s.image.extents;
    check_axis(axis_a, ext.size(), "rotate");
    check_axis(axis_b, ext.size(), "rotate");
    if (axis_a == axis_b) throw ConfigError("rotate: plane axes must differ");
    const int t = ((turns % 4) + 4) % 4;
    if (t == 0) return s;
    const auto a = static_cast<std::size_t>(axis_a), b = static_cast<std::size_t>(axis_b);
    if (t % 2 == 1 && ext[a] != ext[b])
        throw ConfigError("rotate: 90-degree turns need a square plane, got " +
                          std::to_string(ext[a]) + "x" + std::to_string(ext[b]));
    if (t == 2) {
        // point reflection in the plane works for any extents
        return remap(s, ext, [&](const Coords& idx, Coords& src) {
            src = idx;
            src[a] = ext[a] - 1 - idx[a];
            src[b] = ext[b] - 1 - idx[b];
        });
    }
    // one quarter turn: out(i, j) = in(j, extent_a - 1 - i) in the (a, b) plane
    auto once = [&](const Sample& in) {
        return remap(in, ext, [&](const Coords& idx, Coords& src) {
            src = idx;
            src[a] = idx[b];
            src[b] = ext[a] - 1 - idx[a];
        });
    };
    Sample out = s;
    for (int i = 0; i < t; ++i) out = once(out);
    return out;
}

Sample affine_warp(const Sample& s, const AffineDraw& draw) {
    validate_sample(s);
    const auto rank = s.image.extents.size();
    const std::size_t n_planes = rank * (rank - 1) / 2;
    if (draw.angles_deg.size() != n_planes || draw.scales.size() != rank || draw.shifts.size() != rank)
        throw ConfigError("affine draw needs " + std::to_string(n_planes) + " angles and " +
                          std::to_string(rank) + " scales/shifts");
    for (auto sc : draw.scales)
        if (!(sc > 0)) throw ConfigError("affine scale must be positive, got " + std::to_string(sc));

    // rotation = product of plane rotations, applied to centered coordinates;
    // backward map x = R^T S^-1 (y - c - t) + c
    std::vector<double> r(rank * rank, 0.0);
    for (std::size_t i = 0; i < rank; ++i) r[i * rank + i] = 1.0;
    std::size_t plane = 0;
    for (std::size_t a = 0; a < rank; ++a)
        for (std::size_t b = a + 1; b < rank; ++b, ++plane) {
            const double th = draw.angles_deg[plane] * std::numbers::pi / 180.0;
            if (th == 0.0) continue;
            const double cs = std::cos(th), sn = std::sin(th);
            for (std::size_t j = 0; j < rank; ++j) {
                const double ra = r[a * rank + j], rb = r[b * rank + j];
                r[a * rank + j] = cs * ra - sn * rb;
                r[b * rank + j] = sn * ra + cs * rb;
            }
        }

    std::vector<double> center(rank);
    for (std::size_t k = 0; k < rank; ++k) center[k] = double(s.image.extents[k] - 1) / 2.0;

    return warp(s, [&, r, center](const Coords& idx, std::vector<double>& pos) {
        for (std::size_t i = 0; i < rank; ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < rank; ++j) {
                const double y = (double(idx[j]) - center[j] - draw.shifts[j]) / draw.scales[j];
                acc += r[j * rank + i] * y; // transpose of r
            }
            pos[i] = acc + center[i];
        }
    });
}

Sample elastic_warp(const Sample& s, double control_spacing, double max_displacement, Rng& rng) {
    validate_sample(s);
    if (!(control_spacing > 0))
        throw ConfigError("elastic control spacing must be positive, got " +
                          std::to_string(control_spacing));
    if (max_displacement < 0)
        throw ConfigError("elastic displacement bound must be non-negative");
    const auto& ext = s.image.extents;
    const auto rank = ext.size();

    Coords grid_ext(rank);
    for (std::size_t k = 0; k < rank; ++k)
        grid_ext[k] =
            static_cast<std::int64_t>(std::ceil(double(ext[k] - 1) / control_spacing)) + 1;
    const auto grid_n = product(grid_ext);
    const auto grid_strides = row_major_strides(grid_ext);

    std::vector<std::vector<real_t>> disp(rank, std::vector<real_t>(static_cast<std::size_t>(grid_n)));
    for (std::size_t axis = 0; axis < rank; ++axis)
        for (auto& v : disp[axis])
            v = static_cast<real_t>(rng.uniform(-max_displacement, max_displacement));

    std::vector<double> gpos(rank);
    return warp(s, [&](const Coords& idx, std::vector<double>& pos) {
        for (std::size_t k = 0; k < rank; ++k) gpos[k] = double(idx[k]) / control_spacing;
        for (std::size_t k = 0; k < rank; ++k)
            pos[k] = double(idx[k]) +
                     double(sample_linear({disp[k].data(), disp[k].size()}, grid_ext, grid_strides,
                                          gpos, 0, 0));
    });
}

Sample anisotropy(const Sample& s, std::int64_t axis, double factor) {
    validate_sample(s);
    check_axis(axis, s.image.extents.size(), "anisotropy");
    if (!(factor >= 1)) throw ConfigError("anisotropy factor must be >= 1, got " + std::to_string(factor));
    if (factor == 1.0) return s;

    auto degrade = [&](const Image& img, Interp interp) {
        auto coarse_spacing = img.geometry.spacing;
        coarse_spacing[static_cast<std::size_t>(axis)] *= factor;
        Image down = resample(img, ResampleTarget::to_spacing(coarse_spacing), interp);
        Image up = resample(down, ResampleTarget::to_extents(img.extents), interp);
        up.geometry = img.geometry;
        return up;
    };
    Sample out;
    out.image = degrade(s.image, Interp::linear);
    if (s.mask) out.mask = degrade(*s.mask, Interp::nearest);
    return out;
}

Sample gaussian_blur(const Sample& s, double sigma) {
    validate_sample(s);
    if (sigma < 0) throw ConfigError("blur sigma must be non-negative, got " + std::to_string(sigma));
    if (sigma == 0) return s;

    const auto r = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(3.0 * sigma)));
    std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
    double total = 0;
    for (std::int64_t j = -r; j <= r; ++j) {
        const double v = std::exp(-double(j * j) / (2.0 * sigma * sigma));
        w[static_cast<std::size_t>(j + r)] = v;
        total += v;
    }
    for (auto& v : w) v /= total;

    Sample out = s;
    const auto& ext = s.image.extents;
    const auto strides = row_major_strides(ext);
    const auto n = s.image.plane_size();
    std::vector<real_t> tmp(static_cast<std::size_t>(n));
    for (std::int64_t c = 0; c < out.image.channels; ++c) {
        auto plane = out.image.channel(c);
        for (std::size_t axis = 0; axis < ext.size(); ++axis) {
            const auto e = ext[axis], st = strides[axis];
            Coords idx(ext.size(), 0);
            for (std::int64_t i = 0; i < n; ++i) {
                double acc = 0;
                const std::int64_t base = i - idx[axis] * st;
                for (std::int64_t j = -r; j <= r; ++j) {
                    auto p = (idx[axis] - j) % e;
                    if (p < 0) p += e;
                    acc += w[static_cast<std::size_t>(j + r)] *
                           double(plane[static_cast<std::size_t>(base + p * st)]);
                }
                tmp[static_cast<std::size_t>(i)] = static_cast<real_t>(acc);
                advance(idx, ext);
            }
            std::copy(tmp.begin(), tmp.end(), plane.begin());
        }
    }
    return out;
}

Sample add_noise(const Sample& s, double mean, double sigma, Rng& rng) {
    validate_sample(s);
    if (sigma < 0) throw ConfigError("noise sigma must be non-negative, got " + std::to_string(sigma));
    if (sigma == 0 && mean == 0) return s;
    Sample out = s;
    for (auto& v : out.image.values) v += static_cast<real_t>(rng.normal(mean, sigma));
    return out;
}

Sample gamma_transform(const Sample& s, double gamma) {
    validate_sample(s);
    if (!(gamma > 0)) throw ConfigError("gamma must be positive, got " + std::to_string(gamma));
    const auto [lo_it, hi_it] = std::minmax_element(s.image.values.begin(), s.image.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (lo == hi) return s;
    Sample out = s;
    const double span = hi - lo;
    for (auto& v : out.image.values)
        v = static_cast<real_t>(lo + std::pow((double(v) - lo) / span, gamma) * span);
    return out;
}

Sample bias_field(const Sample& s, int order, double coeff_range, Rng& rng) {
    validate_sample(s);
    if (order < 0) throw ConfigError("bias field order must be non-negative");
    if (coeff_range < 0) throw ConfigError("bias field coefficient range must be non-negative");
    if (s.image.channels != 1)
        throw ContractError("bias_field needs a single-channel image, got " +
                            std::to_string(s.image.channels) + " channels");

    const auto& ext = s.image.extents;
    const auto rank = ext.size();
    // exponent tuples with total degree <= order, lexicographic draw order
    std::vector<Coords> exponents;
    Coords cur(rank, 0);
    const auto enumerate = [&](auto&& self, std::size_t axis, std::int64_t left) -> void {
        if (axis == rank) {
            exponents.push_back(cur);
            return;
        }
        for (std::int64_t p = 0; p <= left; ++p) {
            cur[axis] = p;
            self(self, axis + 1, left - p);
        }
        cur[axis] = 0;
    };
    enumerate(enumerate, 0, order);
    std::vector<double> coeff(exponents.size());
    for (auto& c : coeff) c = rng.uniform(-coeff_range, coeff_range);

    Sample out = s;
    Coords idx(rank, 0);
    std::vector<double> u(rank);
    const auto n = s.image.plane_size();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < rank; ++k)
            u[k] = ext[k] > 1 ? 2.0 * double(idx[k]) / double(ext[k] - 1) - 1.0 : 0.0;
        double p = 0;
        for (std::size_t t = 0; t < exponents.size(); ++t) {
            double term = coeff[t];
            for (std::size_t k = 0; k < rank; ++k)
                for (std::int64_t e = 0; e < exponents[t][k]; ++e) term *= u[k];
            p += term;
        }
        out.image.values[static_cast<std::size_t>(i)] *= static_cast<real_t>(std::exp(p));
        advance(idx, ext);
    }
    return out;
}

Sample motion_blend(const Sample& s, const std::vector<std::vector<double>>& shifts) {
    validate_sample(s);
    const auto& ext = s.image.extents;
    const auto rank = ext.size();
    bool any = false;
    for (const auto& t : shifts) {
        if (t.size() != rank)
            throw ConfigError("motion shift needs " + std::to_string(rank) + " entries, got " +
                              std::to_string(t.size()));
        for (auto v : t) any = any || v != 0.0;
    }
    if (shifts.empty() || !any) return s;

    auto spec = to_spectrum(s.image, "motion");
    std::vector<cplx> blended = spec;
    Coords idx(rank, 0);
    for (std::size_t i = 0; i < spec.size(); ++i) {
        cplx acc = spec[i];
        for (const auto& t : shifts) {
            double phase = 0;
            for (std::size_t k = 0; k < rank; ++k)
                phase -= 2.0 * std::numbers::pi * double(idx[k]) * t[k] / double(ext[k]);
            acc += spec[i] * std::polar(1.0, phase);
        }
        blended[i] = acc / double(shifts.size() + 1);
        advance(idx, ext);
    }
    Sample out = s;
    out.image = from_spectrum(std::move(blended), s.image);
    return out;
}

Sample ghosting(const Sample& s, int num_ghosts, std::int64_t axis, double intensity) {
    validate_sample(s);
    check_axis(axis, s.image.extents.size(), "ghosting");
    if (num_ghosts < 1) throw ConfigError("ghosting needs num_ghosts >= 1");
    if (intensity < 0 || intensity > 1)
        throw ConfigError("ghosting intensity must lie in [0,1], got " + std::to_string(intensity));
    if (intensity == 0) return s;

    auto spec = to_spectrum(s.image, "ghosting");
    const auto& ext = s.image.extents;
    Coords idx(ext.size(), 0);
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto pos = idx[static_cast<std::size_t>(axis)];
        if (pos != 0 && pos % num_ghosts == 0) spec[i] *= 1.0 - intensity;
        advance(idx, ext);
    }
    Sample out = s;
    out.image = from_spectrum(std::move(spec), s.image);
    return out;
}

Sample spike_noise(const Sample& s, const std::vector<Coords>& positions, double intensity) {
    validate_sample(s);
    const auto& ext = s.image.extents;
    if (intensity == 0 || positions.empty()) return s;

    auto spec = to_spectrum(s.image, "spike");
    const auto strides = row_major_strides(ext);
    for (const auto& pos : positions) {
        if (pos.size() != ext.size())
            throw ConfigError("spike position rank mismatch");
        Coords mirror(ext.size());
        for (std::size_t k = 0; k < ext.size(); ++k) {
            if (pos[k] < 0 || pos[k] >= ext[k])
                throw ConfigError("spike position out of range on axis " + std::to_string(k));
            mirror[k] = (ext[k] - pos[k]) % ext[k];
        }
        spec[static_cast<std::size_t>(flat_offset(pos, strides))] += intensity;
        if (mirror != pos) spec[static_cast<std::size_t>(flat_offset(mirror, strides))] += intensity;
    }
    Sample out = s;
    out.image = from_spectrum(std::move(spec), s.image);
    return out;
}

// ---- plan ----

AugmentKind augment_kind_from_string(const std::string& name) {
    if (name == "flip") return AugmentKind::flip;
    if (name == "rotate") return AugmentKind::rotate;
    if (name == "affine") return AugmentKind::affine;
    if (name == "elastic") return AugmentKind::elastic;
    if (name == "anisotropy") return AugmentKind::anisotropy;
    if (name == "blur") return AugmentKind::blur;
    if (name == "noise") return AugmentKind::noise;
    if (name == "gamma") return AugmentKind::gamma;
    if (name == "bias_field") return AugmentKind::bias_field;
    if (name == "motion") return AugmentKind::motion;
    if (name == "ghosting") return AugmentKind::ghosting;
    if (name == "spike") return AugmentKind::spike;
    throw ConfigError("unknown augmentation kind '" + name + "'");
}

std::string augment_kind_name(AugmentKind kind) {
    switch (kind) {
        case AugmentKind::flip: return "flip";
        case AugmentKind::rotate: return "rotate";
        case AugmentKind::affine: return "affine";
        case AugmentKind::elastic: return "elastic";
        case AugmentKind::anisotropy: return "anisotropy";
        case AugmentKind::blur: return "blur";
        case AugmentKind::noise: return "noise";
        case AugmentKind::gamma: return "gamma";
        case AugmentKind::bias_field: return "bias_field";
        case AugmentKind::motion: return "motion";
        case AugmentKind::ghosting: return "ghosting";
        case AugmentKind::spike: return "spike";
    }
    throw ConfigError("unknown augmentation kind");
}

void AugmentEntry::validate(std::size_t rank) const {
    if (probability < 0 || probability > 1)
        throw ConfigError(augment_kind_name(kind) + ": probability must lie in [0,1], got " +
                          std::to_string(probability));
    for (auto a : axes) check_axis(a, rank, augment_kind_name(kind).c_str());
    auto ordered = [&](double lo, double hi, const char* what) {
        if (lo > hi)
            throw ConfigError(augment_kind_name(kind) + ": " + what + " range [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "] is not ordered");
    };
    ordered(scale_min, scale_max, "scale");
    ordered(aniso_min, aniso_max, "factor");
    ordered(sigma_min, sigma_max, "sigma");
    ordered(gamma_min, gamma_max, "gamma");
    if (degrees < 0 || shift < 0 || elastic_magnitude < 0 || noise_sigma < 0 || bias_coeff < 0 ||
        motion_shift < 0 || ghost_intensity < 0 || spike_intensity < 0)
        throw ConfigError(augment_kind_name(kind) + ": parameter bounds must be non-negative");
    if (sigma_min < 0) throw ConfigError("blur sigma range must be non-negative");
    if (!(scale_min > 0)) throw ConfigError("affine scale range must be positive");
    if (!(gamma_min > 0)) throw ConfigError("gamma range must be positive");
    if (!(aniso_min >= 1)) throw ConfigError("anisotropy factors must be >= 1");
    if (!(elastic_spacing > 0)) throw ConfigError("elastic control spacing must be positive");
    if (bias_order < 0) throw ConfigError("bias field order must be non-negative");
    if (num_ghosts < 1) throw ConfigError("ghosting needs num_ghosts >= 1");
    if (ghost_intensity > 1) throw ConfigError("ghosting intensity bound must be <= 1");
    if (num_spikes < 0) throw ConfigError("spike count must be non-negative");
    if (motion_transforms < 1) throw ConfigError("motion needs at least one transform");
    if (kind == AugmentKind::rotate && rank < 2) throw ConfigError("rotate needs at least two axes");
}

void AugmentationPlan::validate(std::size_t rank) const {
    for (const auto& e : entries) e.validate(rank);
}

namespace {

Coords candidate_axes(const AugmentEntry& entry, std::size_t rank) {
    if (!entry.axes.empty()) return entry.axes;
    Coords all(rank);
    for (std::size_t k = 0; k < rank; ++k) all[k] = static_cast<std::int64_t>(k);
    return all;
}

} // namespace

Sample apply_entry(const AugmentEntry& entry, const Sample& s, Rng& rng) {
    const auto rank = s.image.extents.size();
    entry.validate(rank);
    const auto cands = candidate_axes(entry, rank);

    switch (entry.kind) {
        case AugmentKind::flip: {
            Coords chosen;
            for (auto a : cands)
                if (rng.uniform() < 0.5) chosen.push_back(a);
            return flip_axes(s, chosen);
        }
        case AugmentKind::rotate: {
            if (cands.size() < 2) throw ConfigError("rotate needs two candidate axes");
            const auto ia = rng.uniform_index(cands.size());
            auto ib = rng.uniform_index(cands.size() - 1);
            if (ib >= ia) ++ib;
            const auto a = cands[static_cast<std::size_t>(ia)];
            const auto b = cands[static_cast<std::size_t>(ib)];
            int turns = 1 + static_cast<int>(rng.uniform_index(2));
            if (turns % 2 == 1 &&
                s.image.extents[static_cast<std::size_t>(a)] != s.image.extents[static_cast<std::size_t>(b)])
                turns = 2;
            return rotate_quarter(s, turns, a, b);
        }
        case AugmentKind::affine: {
            AffineDraw draw;
            const std::size_t n_planes = rank * (rank - 1) / 2;
            for (std::size_t i = 0; i < n_planes; ++i)
                draw.angles_deg.push_back(rng.uniform(-entry.degrees, entry.degrees));
            for (std::size_t i = 0; i < rank; ++i)
                draw.scales.push_back(rng.uniform(entry.scale_min, entry.scale_max));
            for (std::size_t i = 0; i < rank; ++i)
                draw.shifts.push_back(rng.uniform(-entry.shift, entry.shift));
            return affine_warp(s, draw);
        }
        case AugmentKind::elastic:
            return elastic_warp(s, entry.elastic_spacing, entry.elastic_magnitude, rng);
        case AugmentKind::anisotropy: {
            const auto axis = cands[static_cast<std::size_t>(rng.uniform_index(cands.size()))];
            return anisotropy(s, axis, rng.uniform(entry.aniso_min, entry.aniso_max));
        }
        case AugmentKind::blur:
            return gaussian_blur(s, rng.uniform(entry.sigma_min, entry.sigma_max));
        case AugmentKind::noise:
            return add_noise(s, entry.noise_mean, rng.uniform(0.0, entry.noise_sigma), rng);
        case AugmentKind::gamma:
            return gamma_transform(s, rng.uniform(entry.gamma_min, entry.gamma_max));
        case AugmentKind::bias_field:
            return bias_field(s, entry.bias_order, entry.bias_coeff, rng);
        case AugmentKind::motion: {
            std::vector<std::vector<double>> shifts(static_cast<std::size_t>(entry.motion_transforms));
            for (auto& t : shifts)
                for (std::size_t k = 0; k < rank; ++k)
                    t.push_back(rng.uniform(-entry.motion_shift, entry.motion_shift));
            return motion_blend(s, shifts);
        }
        case AugmentKind::ghosting: {
            const auto axis = cands[static_cast<std::size_t>(rng.uniform_index(cands.size()))];
            return ghosting(s, entry.num_ghosts, axis, rng.uniform(0.0, entry.ghost_intensity));
        }
        case AugmentKind::spike: {
            std::vector<Coords> positions(static_cast<std::size_t>(entry.num_spikes));
            for (auto& pos : positions) {
                pos.resize(rank);
                for (std::size_t k = 0; k < rank; ++k)
                    pos[k] = static_cast<std::int64_t>(rng.uniform_index(
                        static_cast<std::uint64_t>(s.image.extents[k])));
            }
            return spike_noise(s, positions, entry.spike_intensity);
        }
    }
    throw ConfigError("unknown augmentation kind");
}

Sample compose(const AugmentationPlan& plan, const Sample& s, Rng& rng) {
    validate_sample(s);
    plan.validate(s.image.extents.size());
    Sample out = s;
    for (const auto& entry : plan.entries)
        if (rng.uniform() < entry.probability) out = apply_entry(entry, out, rng);
    return out;
}

} // namespace patchwork
