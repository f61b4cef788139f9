#include "patchwork/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "patchwork/ndindex.hpp"

namespace patchwork {

void IntensityRange::validate() const {
    if (std::isnan(min) || std::isnan(max)) throw ConfigError("intensity range must not be NaN");
    if (min > max)
        throw ConfigError("intensity range min " + std::to_string(min) + " exceeds max " +
                          std::to_string(max));
}

Image threshold(const Image& image, IntensityRange range) {
    range.validate();
    image.validate();
    Image out = image;
    for (auto& v : out.values)
        if (v < range.min || v > range.max) v = 0;
    return out;
}

Image clip(const Image& image, IntensityRange range) {
    range.validate();
    image.validate();
    Image out = image;
    for (auto& v : out.values) {
        if (v < range.min) v = static_cast<real_t>(range.min);
        else if (v > range.max) v = static_cast<real_t>(range.max);
    }
    return out;
}

Image rescale(const Image& image, double out_min, double out_max) {
    image.validate();
    if (!(out_min < out_max))
        throw ConfigError("rescale needs out_min < out_max, got [" + std::to_string(out_min) + ", " +
                          std::to_string(out_max) + "]");
    const auto [lo_it, hi_it] = std::minmax_element(image.values.begin(), image.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (lo == hi)
        throw DegenerateInputError("rescale: constant image (all values " + std::to_string(lo) + ")");
    const double scale = (out_max - out_min) / (hi - lo);
    Image out = image;
    for (auto& v : out.values) v = static_cast<real_t>(out_min + (double(v) - lo) * scale);
    return out;
}

namespace {

Image zscore_impl(const Image& image, const Image* mask, ZscoreMode mode) {
    image.validate();
    if (mask) {
        mask->validate();
        if (mask->extents != image.extents)
            throw DimensionError("zscore mask extents " + shape_str(mask->extents) +
                                 " do not match image " + shape_str(image.extents));
        if (mask->channels != 1) throw DimensionError("zscore mask must be single channel");
    }
    Image out = image;
    const auto plane = image.plane_size();
    for (std::int64_t c = 0; c < image.channels; ++c) {
        auto src = image.channel(c);
        auto dst = out.channel(c);
        auto in_region = [&](std::int64_t i) {
            if (mask) return mask->values[static_cast<std::size_t>(i)] > 0;
            if (mode == ZscoreMode::nonzero) return src[static_cast<std::size_t>(i)] != real_t(0);
            return true;
        };
        double sum = 0, sum2 = 0;
        std::int64_t n = 0;
        for (std::int64_t i = 0; i < plane; ++i)
            if (in_region(i)) {
                const double v = double(src[static_cast<std::size_t>(i)]);
                sum += v;
                sum2 += v * v;
                ++n;
            }
        if (n < 2)
            throw DegenerateInputError("zscore: region on channel " + std::to_string(c) + " has " +
                                       std::to_string(n) + " sample(s), need at least 2");
        const double mean = sum / double(n);
        const double var = sum2 / double(n) - mean * mean;
        if (!(var > 0))
            throw DegenerateInputError("zscore: region on channel " + std::to_string(c) +
                                       " has zero variance");
        const double inv_sd = 1.0 / std::sqrt(var);
        for (std::int64_t i = 0; i < plane; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            dst[idx] = in_region(i) ? static_cast<real_t>((double(src[idx]) - mean) * inv_sd) : real_t(0);
        }
    }
    return out;
}

} // namespace

Image zscore(const Image& image, ZscoreMode mode) { return zscore_impl(image, nullptr, mode); }
Image zscore(const Image& image, const Image& mask) {
    return zscore_impl(image, &mask, ZscoreMode::full);
}

ResampleTarget ResampleTarget::to_spacing(std::vector<double> s) {
    ResampleTarget t;
    t.spacing = std::move(s);
    return t;
}

ResampleTarget ResampleTarget::to_extents(Coords e) {
    ResampleTarget t;
    t.extents = std::move(e);
    return t;
}

namespace {

// recursive multilinear interpolation in the form a + f*(b - a), exact on
// constant data and at integer sample positions
real_t interp_rec(std::span<const real_t> plane, const Coords& extents,
                  const std::vector<std::int64_t>& strides, const std::vector<std::int64_t>& base,
                  const std::vector<double>& frac, std::size_t axis, std::int64_t flat) {
    if (axis == extents.size()) return plane[static_cast<std::size_t>(flat)];
    const auto i0 = base[axis];
    const auto i1 = std::min(i0 + 1, extents[axis] - 1);
    const auto a = interp_rec(plane, extents, strides, base, frac, axis + 1, flat + i0 * strides[axis]);
    if (frac[axis] == 0.0 || i1 == i0) return a;
    const auto b = interp_rec(plane, extents, strides, base, frac, axis + 1, flat + i1 * strides[axis]);
    return a + static_cast<real_t>(frac[axis]) * (b - a);
}

} // namespace

Image resample(const Image& image, const ResampleTarget& target, Interp interp) {
    image.validate();
    const auto rank = image.extents.size();
    if (target.spacing.has_value() == target.extents.has_value())
        throw ConfigError("resample target must set exactly one of spacing or extents");

    std::vector<double> new_spacing(rank);
    Coords new_extents(rank);
    if (target.spacing) {
        if (target.spacing->size() != rank)
            throw DimensionError("resample spacing has " + std::to_string(target.spacing->size()) +
                                 " entries for a rank-" + std::to_string(rank) + " image");
        for (std::size_t k = 0; k < rank; ++k) {
            const double t = (*target.spacing)[k];
            if (!(t > 0)) throw ConfigError("resample spacing must be positive, got " + std::to_string(t));
            new_spacing[k] = t;
            new_extents[k] = std::max<std::int64_t>(
                1, std::llround(double(image.extents[k]) * image.geometry.spacing[k] / t));
        }
    } else {
        if (target.extents->size() != rank)
            throw DimensionError("resample extents has " + std::to_string(target.extents->size()) +
                                 " entries for a rank-" + std::to_string(rank) + " image");
        for (std::size_t k = 0; k < rank; ++k) {
            const auto n = (*target.extents)[k];
            if (n < 1) throw ConfigError("resample extents must be positive, got " + std::to_string(n));
            new_extents[k] = n;
            new_spacing[k] = double(image.extents[k]) * image.geometry.spacing[k] / double(n);
        }
    }

    Image out = make_image(new_extents, image.channels);
    out.geometry.spacing = new_spacing;
    out.geometry.origin = image.geometry.origin;

    const auto src_strides = row_major_strides(image.extents);
    const auto n_out = out.plane_size();
    std::vector<double> step(rank);
    for (std::size_t k = 0; k < rank; ++k) step[k] = new_spacing[k] / image.geometry.spacing[k];

    Coords idx(rank, 0);
    std::vector<std::int64_t> base(rank);
    std::vector<double> frac(rank);
    for (std::int64_t o = 0; o < n_out; ++o) {
        for (std::size_t k = 0; k < rank; ++k) {
            double u = double(idx[k]) * step[k];
            u = std::clamp(u, 0.0, double(image.extents[k] - 1));
            if (interp == Interp::nearest) {
                base[k] = static_cast<std::int64_t>(std::floor(u + 0.5));
                if (base[k] > image.extents[k] - 1) base[k] = image.extents[k] - 1;
                frac[k] = 0.0;
            } else {
                const double fl = std::floor(u);
                base[k] = static_cast<std::int64_t>(fl);
                frac[k] = u - fl;
            }
        }
        for (std::int64_t c = 0; c < image.channels; ++c)
            out.channel(c)[static_cast<std::size_t>(o)] =
                interp_rec(image.channel(c), image.extents, src_strides, base, frac, 0, 0);
        advance(idx, out.extents);
    }
    return out;
}

CropResult crop_zero_planes(const Image& image, const std::vector<Image>& companions) {
    image.validate();
    for (const auto& comp : companions) {
        comp.validate();
        if (comp.extents != image.extents)
            throw DimensionError("companion extents " + shape_str(comp.extents) +
                                 " do not match image " + shape_str(image.extents));
    }

    const auto rank = image.extents.size();
    const auto plane = image.plane_size();
    Coords lo(rank), hi(rank);
    for (std::size_t k = 0; k < rank; ++k) {
        lo[k] = image.extents[k];
        hi[k] = -1;
    }
    Coords idx(rank, 0);
    for (std::int64_t i = 0; i < plane; ++i) {
        bool nonzero = false;
        for (std::int64_t c = 0; c < image.channels && !nonzero; ++c)
            nonzero = image.channel(c)[static_cast<std::size_t>(i)] != real_t(0);
        if (nonzero)
            for (std::size_t k = 0; k < rank; ++k) {
                lo[k] = std::min(lo[k], idx[k]);
                hi[k] = std::max(hi[k], idx[k]);
            }
        advance(idx, image.extents);
    }
    if (hi[0] < 0) throw DegenerateInputError("crop_zero_planes: image is entirely zero");

    CropResult result;
    result.record.offset = lo;
    result.record.original_extents = image.extents;
    result.record.extents.resize(rank);
    for (std::size_t k = 0; k < rank; ++k) result.record.extents[k] = hi[k] - lo[k] + 1;

    auto crop_one = [&](const Image& src) {
        Image out = make_image(result.record.extents, src.channels);
        out.geometry.spacing = src.geometry.spacing;
        out.geometry.origin = src.geometry.origin;
        for (std::size_t k = 0; k < rank; ++k)
            out.geometry.origin[k] += double(lo[k]) * src.geometry.spacing[k];
        const auto src_strides = row_major_strides(src.extents);
        const auto n = out.plane_size();
        Coords oidx(rank, 0);
        for (std::int64_t i = 0; i < n; ++i) {
            std::int64_t flat = 0;
            for (std::size_t k = 0; k < rank; ++k) flat += (oidx[k] + lo[k]) * src_strides[k];
            for (std::int64_t c = 0; c < src.channels; ++c)
                out.channel(c)[static_cast<std::size_t>(i)] = src.channel(c)[static_cast<std::size_t>(flat)];
            advance(oidx, out.extents);
        }
        return out;
    };

    result.image = crop_one(image);
    for (const auto& comp : companions) result.companions.push_back(crop_one(comp));
    return result;
}

Image pad_back(const Image& image, const CropRecord& record) {
    image.validate();
    if (image.extents != record.extents)
        throw DimensionError("pad_back: image extents " + shape_str(image.extents) +
                             " do not match crop record " + shape_str(record.extents));
    Image out = make_image(record.original_extents, image.channels);
    out.geometry.spacing = image.geometry.spacing;
    out.geometry.origin = image.geometry.origin;
    for (std::size_t k = 0; k < out.extents.size(); ++k)
        out.geometry.origin[k] -= double(record.offset[k]) * image.geometry.spacing[k];
    const auto dst_strides = row_major_strides(out.extents);
    const auto n = image.plane_size();
    Coords idx(image.extents.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t flat = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) flat += (idx[k] + record.offset[k]) * dst_strides[k];
        for (std::int64_t c = 0; c < image.channels; ++c)
            out.channel(c)[static_cast<std::size_t>(flat)] = image.channel(c)[static_cast<std::size_t>(i)];
        advance(idx, image.extents);
    }
    return out;
}

} // namespace patchwork
