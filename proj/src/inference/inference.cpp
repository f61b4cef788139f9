#include "patchwork/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "patchwork/errors.hpp"
#include "patchwork/ndindex.hpp"

namespace patchwork {

namespace {

std::vector<std::int64_t> axis_positions(std::int64_t extent, std::int64_t patch, std::int64_t stride) {
    std::vector<std::int64_t> positions;
    for (std::int64_t p = 0;; p += stride) {
        if (p + patch >= extent) {
            positions.push_back(extent - patch);
            break;
        }
        positions.push_back(p);
    }
    return positions;
}

// Half-open keep intervals per axis: midpoints of overlap regions between
// consecutive patch starts, with the image borders closing the ends.
std::vector<std::int64_t> crop_boundaries(const std::vector<std::int64_t>& starts, std::int64_t patch,
                                          std::int64_t extent) {
    std::vector<std::int64_t> bounds(starts.size() + 1);
    bounds.front() = 0;
    bounds.back() = extent;
    for (std::size_t i = 1; i < starts.size(); ++i)
        bounds[i] = (starts[i - 1] + patch + starts[i]) / 2;
    return bounds;
}

Image pad_to(const Image& image, const Coords& target) {
    Image out;
    out.geometry = image.geometry;
    out.extents = target;
    out.channels = image.channels;
    out.values.assign(static_cast<std::size_t>(product(target)) * image.channels, 0);
    const auto src_strides = row_major_strides(image.extents);
    const auto dst_strides = row_major_strides(target);
    const std::int64_t rank = static_cast<std::int64_t>(target.size());
    for (std::int64_t c = 0; c < image.channels; ++c) {
        auto src = image.channel(c);
        auto dst = out.channel(c);
        Coords idx(image.extents.size(), 0);
        do {
            std::int64_t off = 0;
            for (std::int64_t k = 0; k < rank; ++k) off += idx[k] * dst_strides[k];
            dst[off] = src[flat_offset(idx, src_strides)];
        } while (advance(idx, image.extents));
    }
    return out;
}

} // namespace

std::span<real_t> PredictionMap::class_plane(std::int64_t c) {
    const std::int64_t n = plane_size();
    return {values.data() + c * n, static_cast<std::size_t>(n)};
}

std::span<const real_t> PredictionMap::class_plane(std::int64_t c) const {
    const std::int64_t n = plane_size();
    return {values.data() + c * n, static_cast<std::size_t>(n)};
}

StitchMode stitch_mode_from_string(const std::string& name) {
    if (name == "average") return StitchMode::average;
    if (name == "crop") return StitchMode::crop;
    throw ConfigError("unknown stitch mode '" + name + "' (expected average or crop)");
}

std::string stitch_mode_name(StitchMode mode) {
    return mode == StitchMode::average ? "average" : "crop";
}

StitchResult sliding_window_infer(ModelGraph& model, const Image& image, const Coords& patch_size,
                                  double overlap, StitchMode mode,
                                  const std::function<void(const std::string&)>& log) {
    image.validate();
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw ConfigError("overlap must lie in [0, 1), got " + std::to_string(overlap));
    const std::int64_t rank = static_cast<std::int64_t>(image.extents.size());
    if (static_cast<std::int64_t>(patch_size.size()) != rank)
        throw DimensionError("patch rank " + std::to_string(patch_size.size()) + " does not match image rank " +
                             std::to_string(rank));
    for (std::int64_t k = 0; k < rank; ++k)
        if (patch_size[k] <= 0) throw DimensionError("patch extents must be positive, got " + shape_str(patch_size));
    if (image.channels != model.spec.in_channels)
        throw DimensionError("image has " + std::to_string(image.channels) + " channels but the model expects " +
                             std::to_string(model.spec.in_channels));

    bool padded = false;
    Coords work_extents = image.extents;
    for (std::int64_t k = 0; k < rank; ++k)
        if (patch_size[k] > work_extents[k]) {
            work_extents[k] = patch_size[k];
            padded = true;
        }
    const Image* source = &image;
    Image padded_image;
    if (padded) {
        padded_image = pad_to(image, work_extents);
        source = &padded_image;
        if (log)
            log("image " + shape_str(image.extents) + " is smaller than the patch " + shape_str(patch_size) +
                "; zero-padding for inference and cropping the result back");
    }

    std::vector<std::vector<std::int64_t>> starts(rank);
    std::vector<std::vector<std::int64_t>> bounds(rank);
    for (std::int64_t k = 0; k < rank; ++k) {
        const std::int64_t stride =
            std::max<std::int64_t>(1, std::llround(static_cast<double>(patch_size[k]) * (1.0 - overlap)));
        starts[k] = axis_positions(work_extents[k], patch_size[k], stride);
        if (mode == StitchMode::crop) bounds[k] = crop_boundaries(starts[k], patch_size[k], work_extents[k]);
    }

    const std::int64_t classes = model.spec.classes;
    const std::int64_t plane = product(work_extents);
    PredictionMap pred;
    pred.extents = work_extents;
    pred.classes = classes;
    pred.values.assign(static_cast<std::size_t>(plane) * classes, 0);
    CountMap counts;
    counts.extents = work_extents;
    counts.values.assign(static_cast<std::size_t>(plane), 0);

    const auto work_strides = row_major_strides(work_extents);
    const std::int64_t patch_plane = product(patch_size);

    Coords grid_extents(rank);
    for (std::int64_t k = 0; k < rank; ++k) grid_extents[k] = static_cast<std::int64_t>(starts[k].size());
    Coords grid_idx(rank, 0);
    do {
        Coords corner(rank);
        for (std::int64_t k = 0; k < rank; ++k) corner[k] = starts[k][grid_idx[k]];

        Shape batch_shape;
        batch_shape.push_back(1);
        batch_shape.push_back(source->channels);
        for (auto e : patch_size) batch_shape.push_back(e);
        Tensor batch(batch_shape);
        Coords local(rank, 0);
        for (std::int64_t c = 0; c < source->channels; ++c) {
            auto src = source->channel(c);
            real_t* dst = batch.values().data() + c * patch_plane;
            std::fill(local.begin(), local.end(), 0);
            std::int64_t w = 0;
            do {
                std::int64_t off = 0;
                for (std::int64_t k = 0; k < rank; ++k) off += (corner[k] + local[k]) * work_strides[k];
                dst[w++] = src[off];
            } while (advance(local, patch_size));
        }

        Tensor out = model.forward(batch, nullptr);
        Shape expected = batch_shape;
        expected[1] = classes;
        if (out.shape() != expected)
            throw DimensionError("model produced " + shape_str(out.shape()) +
                                 " for a patch; sliding-window stitching needs " + shape_str(expected));
        auto out_values = out.values();

        std::fill(local.begin(), local.end(), 0);
        std::int64_t w = 0;
        do {
            bool keep = true;
            std::int64_t off = 0;
            for (std::int64_t k = 0; k < rank; ++k) {
                const std::int64_t v = corner[k] + local[k];
                off += v * work_strides[k];
                if (mode == StitchMode::crop) {
                    const std::size_t gi = static_cast<std::size_t>(grid_idx[k]);
                    if (v < bounds[k][gi] || v >= bounds[k][gi + 1]) {
                        keep = false;
                        break;
                    }
                }
            }
            if (keep) {
                for (std::int64_t c = 0; c < classes; ++c)
                    pred.values[static_cast<std::size_t>(c * plane + off)] +=
                        out_values[static_cast<std::size_t>(c * patch_plane + w)];
                counts.values[static_cast<std::size_t>(off)] += 1;
            }
            ++w;
        } while (advance(local, patch_size));
    } while (advance(grid_idx, grid_extents));

    if (mode == StitchMode::average) {
        for (std::int64_t v = 0; v < plane; ++v) {
            const real_t n = counts.values[static_cast<std::size_t>(v)];
            if (n > 0)
                for (std::int64_t c = 0; c < classes; ++c) pred.values[static_cast<std::size_t>(c * plane + v)] /= n;
        }
    }
    pred.normalized = true;

    if (padded) {
        const auto padded_strides = work_strides;
        const auto orig_strides = row_major_strides(image.extents);
        const std::int64_t orig_plane = product(image.extents);
        PredictionMap cropped;
        cropped.extents = image.extents;
        cropped.classes = classes;
        cropped.normalized = true;
        cropped.values.assign(static_cast<std::size_t>(orig_plane) * classes, 0);
        CountMap cropped_counts;
        cropped_counts.extents = image.extents;
        cropped_counts.values.assign(static_cast<std::size_t>(orig_plane), 0);
        Coords idx(image.extents.size(), 0);
        do {
            const std::int64_t src = flat_offset(idx, padded_strides);
            const std::int64_t dst = flat_offset(idx, orig_strides);
            for (std::int64_t c = 0; c < classes; ++c)
                cropped.values[static_cast<std::size_t>(c * orig_plane + dst)] =
                    pred.values[static_cast<std::size_t>(c * plane + src)];
            cropped_counts.values[static_cast<std::size_t>(dst)] = counts.values[static_cast<std::size_t>(src)];
        } while (advance(idx, image.extents));
        return {std::move(cropped), std::move(cropped_counts)};
    }
    return {std::move(pred), std::move(counts)};
}

PredictionMap aggregate_segmentation(const std::vector<PredictionMap>& folds) {
    if (folds.empty()) throw ContractError("cannot aggregate zero prediction maps");
    const PredictionMap& first = folds.front();
    for (const auto& m : folds) {
        if (m.extents != first.extents || m.classes != first.classes)
            throw DimensionError("prediction maps disagree in shape: " + shape_str(first.extents) + " x" +
                                 std::to_string(first.classes) + " vs " + shape_str(m.extents) + " x" +
                                 std::to_string(m.classes));
        if (!m.normalized) throw ContractError("aggregation expects normalized prediction maps");
    }
    PredictionMap out;
    out.extents = first.extents;
    out.classes = first.classes;
    out.normalized = true;
    out.values.assign(first.values.size(), 0);
    for (const auto& m : folds)
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += m.values[i];
    const real_t inv = real_t(1) / static_cast<real_t>(folds.size());
    for (auto& v : out.values) v *= inv;
    return out;
}

Image argmax_labels(const PredictionMap& map) {
    Image out = make_image(map.extents, 1);
    out.geometry.spacing.assign(map.extents.size(), 1.0);
    out.geometry.origin.assign(map.extents.size(), 0.0);
    const std::int64_t plane = map.plane_size();
    auto dst = out.channel(0);
    for (std::int64_t v = 0; v < plane; ++v) {
        std::int64_t best = 0;
        real_t best_p = map.values[static_cast<std::size_t>(v)];
        for (std::int64_t c = 1; c < map.classes; ++c) {
            const real_t p = map.values[static_cast<std::size_t>(c * plane + v)];
            if (p > best_p) {
                best_p = p;
                best = c;
            }
        }
        dst[v] = static_cast<real_t>(best);
    }
    return out;
}

double aggregate_regression(const std::vector<double>& fold_values) {
    if (fold_values.empty()) throw ContractError("cannot aggregate zero regression outputs");
    double sum = 0;
    for (double v : fold_values) sum += v;
    return sum / static_cast<double>(fold_values.size());
}

std::int64_t aggregate_classification(const std::vector<std::vector<double>>& fold_probs) {
    if (fold_probs.empty()) throw ContractError("cannot aggregate zero classification outputs");
    const std::size_t classes = fold_probs.front().size();
    if (classes == 0) throw DimensionError("classification outputs must have at least one class");
    for (const auto& p : fold_probs)
        if (p.size() != classes)
            throw DimensionError("classification outputs disagree in class count: " + std::to_string(classes) +
                                 " vs " + std::to_string(p.size()));
    std::vector<std::int64_t> votes(classes, 0);
    std::vector<double> mean(classes, 0);
    for (const auto& p : fold_probs) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (p[c] > p[best]) best = c;
        ++votes[best];
        for (std::size_t c = 0; c < classes; ++c) mean[c] += p[c];
    }
    std::int64_t winner = 0;
    for (std::size_t c = 1; c < classes; ++c) {
        if (votes[c] > votes[static_cast<std::size_t>(winner)] ||
            (votes[c] == votes[static_cast<std::size_t>(winner)] && mean[c] > mean[static_cast<std::size_t>(winner)]))
            winner = static_cast<std::int64_t>(c);
    }
    return winner;
}

namespace {

void require_label_mask(const Image& image, const char* which) {
    if (image.channels != 1) throw DimensionError(std::string(which) + " mask must have one channel");
    for (real_t v : image.values)
        if (v != std::floor(v))
            throw ValidationError(std::string(which) + " mask holds non-integral value " + std::to_string(v));
}

} // namespace

double dice_coefficient(const Image& pred, const Image& gt, std::int64_t label) {
    if (pred.extents != gt.extents)
        throw DimensionError("mask extents disagree: " + shape_str(pred.extents) + " vs " + shape_str(gt.extents));
    require_label_mask(pred, "predicted");
    require_label_mask(gt, "reference");
    const real_t want = static_cast<real_t>(label);
    std::int64_t inter = 0, a = 0, b = 0;
    const std::int64_t n = pred.plane_size();
    auto p = pred.channel(0);
    auto g = gt.channel(0);
    for (std::int64_t i = 0; i < n; ++i) {
        const bool in_p = p[i] == want;
        const bool in_g = g[i] == want;
        a += in_p;
        b += in_g;
        inter += in_p && in_g;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

DiceReport dice_per_class(const Image& pred, const Image& gt, std::int64_t classes) {
    if (classes <= 0) throw DimensionError("class count must be positive");
    DiceReport report;
    report.per_class.resize(static_cast<std::size_t>(classes));
    for (std::int64_t c = 0; c < classes; ++c) report.per_class[static_cast<std::size_t>(c)] = dice_coefficient(pred, gt, c);
    if (classes == 1) {
        report.foreground_macro = report.per_class[0];
    } else {
        double sum = 0;
        for (std::int64_t c = 1; c < classes; ++c) sum += report.per_class[static_cast<std::size_t>(c)];
        report.foreground_macro = sum / static_cast<double>(classes - 1);
    }
    return report;
}

double mse_metric(std::span<const real_t> pred, std::span<const real_t> gt) {
    if (pred.size() != gt.size())
        throw DimensionError("mse operands disagree in length: " + std::to_string(pred.size()) + " vs " +
                             std::to_string(gt.size()));
    if (pred.empty()) throw DimensionError("mse needs at least one value");
    double sum = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

} // namespace patchwork
