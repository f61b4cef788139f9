#include "patchwork/histology.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "patchwork/detail/numfmt.hpp"
#include "patchwork/errors.hpp"
#include "patchwork/ndindex.hpp"

namespace patchwork {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

void require_2d_rgb(const Image& image, const char* what) {
    if (image.extents.size() != 2)
        throw DimensionError(std::string(what) + " must be 2D, got rank " + std::to_string(image.extents.size()));
    if (image.channels != 3)
        throw DimensionError(std::string(what) + " must be RGB, got " + std::to_string(image.channels) + " channels");
}

Image downsample_box(const Image& src, std::int64_t factor) {
    Image out;
    out.channels = src.channels;
    out.extents = {ceil_div(src.extents[0], factor), ceil_div(src.extents[1], factor)};
    out.geometry.spacing = {src.geometry.spacing[0] * static_cast<double>(factor),
                            src.geometry.spacing[1] * static_cast<double>(factor)};
    out.geometry.origin = src.geometry.origin;
    out.values.assign(static_cast<std::size_t>(product(out.extents)) * out.channels, 0);
    const std::int64_t src_cols = src.extents[1];
    const std::int64_t out_cols = out.extents[1];
    for (std::int64_t c = 0; c < src.channels; ++c) {
        auto from = src.channel(c);
        auto to = out.channel(c);
        for (std::int64_t oi = 0; oi < out.extents[0]; ++oi) {
            const std::int64_t r0 = oi * factor;
            const std::int64_t r1 = std::min(r0 + factor, src.extents[0]);
            for (std::int64_t oj = 0; oj < out_cols; ++oj) {
                const std::int64_t c0 = oj * factor;
                const std::int64_t c1 = std::min(c0 + factor, src_cols);
                real_t sum = 0;
                for (std::int64_t r = r0; r < r1; ++r)
                    for (std::int64_t k = c0; k < c1; ++k) sum += from[r * src_cols + k];
                to[oi * out_cols + oj] = sum / static_cast<real_t>((r1 - r0) * (c1 - c0));
            }
        }
    }
    return out;
}

} // namespace

const Image& TiledImage::level(std::int64_t index) const {
    if (index < 0 || index >= level_count())
        throw ContractError("pyramid level " + std::to_string(index) + " does not exist (levels: " +
                            std::to_string(level_count()) + ")");
    return levels[static_cast<std::size_t>(index)];
}

Image TiledImage::read_region(std::int64_t lvl, const Coords& corner, const Coords& size) const {
    const Image& img = level(lvl);
    if (img.extents.size() != 2) throw ContractError("tiled levels must be 2D");
    if (corner.size() != 2 || size.size() != 2)
        throw ContractError("region corner and size must be 2D, got " + shape_str(corner) + " and " + shape_str(size));
    for (int k = 0; k < 2; ++k) {
        if (size[k] <= 0) throw ContractError("region size must be positive, got " + shape_str(size));
        if (corner[k] < 0 || corner[k] + size[k] > img.extents[k])
            throw ContractError("region at " + shape_str(corner) + " of size " + shape_str(size) +
                                " falls outside level " + std::to_string(lvl) + " extents " + shape_str(img.extents));
    }

    Image out;
    out.channels = img.channels;
    out.extents = size;
    out.geometry.spacing = img.geometry.spacing;
    out.geometry.origin = {img.geometry.origin[0] + static_cast<double>(corner[0]) * img.geometry.spacing[0],
                           img.geometry.origin[1] + static_cast<double>(corner[1]) * img.geometry.spacing[1]};
    out.values.assign(static_cast<std::size_t>(product(size)) * img.channels, 0);

    const std::int64_t cols = img.extents[1];
    const std::int64_t tile_r0 = corner[0] / tile;
    const std::int64_t tile_r1 = (corner[0] + size[0] - 1) / tile;
    const std::int64_t tile_c0 = corner[1] / tile;
    const std::int64_t tile_c1 = (corner[1] + size[1] - 1) / tile;
    for (std::int64_t tr = tile_r0; tr <= tile_r1; ++tr) {
        for (std::int64_t tc = tile_c0; tc <= tile_c1; ++tc) {
            ++tiles_touched;
            const std::int64_t r0 = std::max(corner[0], tr * tile);
            const std::int64_t r1 = std::min(corner[0] + size[0], (tr + 1) * tile);
            const std::int64_t c0 = std::max(corner[1], tc * tile);
            const std::int64_t c1 = std::min(corner[1] + size[1], (tc + 1) * tile);
            for (std::int64_t ch = 0; ch < img.channels; ++ch) {
                auto from = img.channel(ch);
                auto to = out.channel(ch);
                for (std::int64_t r = r0; r < r1; ++r)
                    for (std::int64_t c = c0; c < c1; ++c)
                        to[(r - corner[0]) * size[1] + (c - corner[1])] = from[r * cols + c];
            }
        }
    }
    return out;
}

TiledImage build_tiled_pyramid(const Image& rgb, std::int64_t levels, std::int64_t factor, std::int64_t tile) {
    rgb.validate();
    require_2d_rgb(rgb, "pyramid source");
    if (levels < 1) throw ConfigError("a pyramid needs at least one level, got " + std::to_string(levels));
    if (factor < 2) throw ConfigError("pyramid downsample factor must be at least 2, got " + std::to_string(factor));
    if (tile < 1) throw ConfigError("pyramid tile size must be positive, got " + std::to_string(tile));

    TiledImage out;
    out.factor = factor;
    out.tile = tile;
    out.levels.reserve(static_cast<std::size_t>(levels));
    out.levels.push_back(rgb);
    for (std::int64_t l = 1; l < levels; ++l) out.levels.push_back(downsample_box(out.levels.back(), factor));
    return out;
}

void write_pyramid(const TiledImage& tiled, const std::string& dir) {
    if (tiled.levels.empty()) throw ContractError("cannot write a pyramid with no levels");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
    const std::string meta_path = dir + "/pyramid.meta";
    std::ofstream meta(meta_path, std::ios::binary);
    if (!meta) throw IoError("cannot write " + meta_path);
    meta << "Factor = " << tiled.factor << "\n";
    meta << "Tile = " << tiled.tile << "\n";
    meta << "Levels = " << tiled.level_count() << "\n";
    meta.flush();
    if (!meta) throw IoError("failed while writing " + meta_path);
    for (std::int64_t l = 0; l < tiled.level_count(); ++l)
        write_image(tiled.levels[static_cast<std::size_t>(l)], dir + "/level_" + std::to_string(l) + ".mha");
}

TiledImage read_pyramid(const std::string& dir) {
    const std::string meta_path = dir + "/pyramid.meta";
    std::ifstream meta(meta_path, std::ios::binary);
    if (!meta) throw IoError("cannot open " + meta_path);
    std::int64_t factor = -1, tile = -1, levels = -1;
    std::string line;
    while (std::getline(meta, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw ParseError(meta_path + ": malformed line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string text = line.substr(eq + 3);
        std::int64_t value = 0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
        if (res.ec != std::errc() || res.ptr != text.data() + text.size())
            throw ParseError(meta_path + ": key " + key + " expects an integer, got '" + text + "'");
        if (key == "Factor")
            factor = value;
        else if (key == "Tile")
            tile = value;
        else if (key == "Levels")
            levels = value;
        else
            throw ParseError(meta_path + ": unknown key '" + key + "'");
    }
    if (factor < 0 || tile < 0 || levels < 0)
        throw ParseError(meta_path + ": missing Factor, Tile, or Levels");
    if (factor < 2) throw FormatError(meta_path + ": Factor must be at least 2, got " + std::to_string(factor));
    if (tile < 1) throw FormatError(meta_path + ": Tile must be positive, got " + std::to_string(tile));
    if (levels < 1) throw FormatError(meta_path + ": Levels must be positive, got " + std::to_string(levels));

    TiledImage out;
    out.factor = factor;
    out.tile = tile;
    out.levels.reserve(static_cast<std::size_t>(levels));
    for (std::int64_t l = 0; l < levels; ++l) {
        Image img = read_image(dir + "/level_" + std::to_string(l) + ".mha");
        if (img.extents.size() != 2)
            throw FormatError(dir + ": level " + std::to_string(l) + " is not 2D");
        if (l > 0) {
            const Image& base = out.levels.front();
            std::int64_t scale = 1;
            for (std::int64_t i = 0; i < l; ++i) scale *= factor;
            const Coords expected = {ceil_div(base.extents[0], scale), ceil_div(base.extents[1], scale)};
            if (img.extents != expected)
                throw ValidationError(dir + ": level " + std::to_string(l) + " extents " + shape_str(img.extents) +
                                      " do not match expected " + shape_str(expected));
            if (img.channels != base.channels)
                throw ValidationError(dir + ": level " + std::to_string(l) + " has " + std::to_string(img.channels) +
                                      " channels but level 0 has " + std::to_string(base.channels));
        }
        out.levels.push_back(std::move(img));
    }
    return out;
}

int otsu_threshold(std::span<const std::int64_t> histogram) {
    if (histogram.size() != 256)
        throw ContractError("otsu needs a 256-bin histogram, got " + std::to_string(histogram.size()) + " bins");
    std::int64_t total = 0, moment = 0, nonempty = 0;
    for (std::size_t i = 0; i < 256; ++i) {
        if (histogram[i] < 0) throw ContractError("histogram counts must be nonnegative");
        total += histogram[i];
        moment += static_cast<std::int64_t>(i) * histogram[i];
        nonempty += histogram[i] > 0;
    }
    if (nonempty < 2)
        throw DegenerateInputError("histogram holds a single intensity; no threshold separates it");

    int best_t = -1;
    double best = -1;
    std::int64_t w0 = 0, m0 = 0;
    for (int t = 0; t < 255; ++t) {
        w0 += histogram[static_cast<std::size_t>(t)];
        m0 += static_cast<std::int64_t>(t) * histogram[static_cast<std::size_t>(t)];
        const std::int64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        const double mu0 = static_cast<double>(m0) / static_cast<double>(w0);
        const double mu1 = static_cast<double>(moment - m0) / static_cast<double>(w1);
        const double d = mu0 - mu1;
        const double var = static_cast<double>(w0) * static_cast<double>(w1) * d * d;
        if (var > best) {
            best = var;
            best_t = t;
        }
    }
    return best_t;
}

std::int64_t TissueMask::count() const {
    std::int64_t n = 0;
    for (auto v : values) n += v != 0;
    return n;
}

TissueMask tissue_mask(const TiledImage& tiled, std::int64_t level) {
    const Image& img = tiled.level(level);
    if (img.channels != 3)
        throw ContractError("tissue masking needs an RGB level, got " + std::to_string(img.channels) + " channels");
    const std::int64_t n = img.plane_size();
    auto red = img.channel(0);
    auto green = img.channel(1);
    auto blue = img.channel(2);

    std::vector<int> bins(static_cast<std::size_t>(n));
    std::array<std::int64_t, 256> hist{};
    for (std::int64_t i = 0; i < n; ++i) {
        const double gray = 0.299 * red[i] + 0.587 * green[i] + 0.114 * blue[i];
        const int bin = std::clamp(static_cast<int>(std::floor(gray)), 0, 255);
        bins[static_cast<std::size_t>(i)] = bin;
        ++hist[static_cast<std::size_t>(bin)];
    }
    std::int64_t nonempty = 0;
    for (auto h : hist) nonempty += h > 0;
    if (nonempty < 2)
        throw DegenerateInputError("pyramid level " + std::to_string(level) +
                                   " holds a single intensity; no tissue threshold exists");
    const int threshold = otsu_threshold(hist);

    TissueMask mask;
    mask.level = level;
    mask.extents = img.extents;
    mask.threshold = threshold;
    mask.values.assign(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        if (bins[static_cast<std::size_t>(i)] > threshold) continue;
        const real_t lo = std::min({red[i], green[i], blue[i]});
        if (lo > 240) continue;
        mask.values[static_cast<std::size_t>(i)] = 1;
    }
    return mask;
}

CoordinateList mine_patches(const TiledImage& tiled, const TissueMask& mask, const Coords& patch_size,
                            double overlap, double min_tissue_fraction,
                            const std::function<void(const std::string&)>& log) {
    if (tiled.levels.empty()) throw ContractError("pyramid has no levels");
    const Image& base = tiled.levels.front();
    if (patch_size.size() != 2) throw DimensionError("patch must be 2D, got " + shape_str(patch_size));
    for (auto e : patch_size)
        if (e <= 0) throw DimensionError("patch extents must be positive, got " + shape_str(patch_size));
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw ConfigError("overlap must lie in [0, 1), got " + std::to_string(overlap));
    if (!(min_tissue_fraction >= 0.0 && min_tissue_fraction <= 1.0))
        throw ConfigError("min tissue fraction must lie in [0, 1], got " + std::to_string(min_tissue_fraction));
    if (mask.level < 0 || mask.level >= tiled.level_count())
        throw ContractError("mask level " + std::to_string(mask.level) + " does not exist in the pyramid");
    if (mask.extents != tiled.level(mask.level).extents)
        throw ContractError("mask extents " + shape_str(mask.extents) + " do not match level " +
                            std::to_string(mask.level) + " extents " + shape_str(tiled.level(mask.level).extents));

    if (mask.count() == 0) {
        if (log) log("tissue mask at level " + std::to_string(mask.level) + " is empty; mined 0 patch coordinates");
        return {};
    }

    std::int64_t scale = 1;
    for (std::int64_t i = 0; i < mask.level; ++i) scale *= tiled.factor;
    Coords stride(2);
    for (int k = 0; k < 2; ++k)
        stride[k] = std::max<std::int64_t>(
            1, std::llround(static_cast<double>(patch_size[k]) * (1.0 - overlap)));

    const std::int64_t mask_cols = mask.extents[1];
    CoordinateList kept;
    for (std::int64_t p0 = 0; p0 + patch_size[0] <= base.extents[0]; p0 += stride[0]) {
        for (std::int64_t p1 = 0; p1 + patch_size[1] <= base.extents[1]; p1 += stride[1]) {
            const std::int64_t m0 = p0 / scale;
            const std::int64_t m1 = p1 / scale;
            const std::int64_t m0e = std::min(ceil_div(p0 + patch_size[0], scale), mask.extents[0]);
            const std::int64_t m1e = std::min(ceil_div(p1 + patch_size[1], scale), mask.extents[1]);
            std::int64_t tissue = 0;
            for (std::int64_t r = m0; r < m0e; ++r)
                for (std::int64_t c = m1; c < m1e; ++c)
                    tissue += mask.values[static_cast<std::size_t>(r * mask_cols + c)] != 0;
            const double fraction =
                static_cast<double>(tissue) / static_cast<double>((m0e - m0) * (m1e - m1));
            if (fraction >= min_tissue_fraction) kept.push_back({{p0, p1}, fraction});
        }
    }
    if (kept.empty() && log)
        log("no grid coordinate reached tissue fraction " + detail::format_double(min_tissue_fraction) +
            "; mined 0 patch coordinates");
    return kept;
}

void write_coordinate_list(const std::string& path, const CoordinateList& coords) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "x,y,tissue_fraction\n";
    for (const auto& c : coords) {
        if (c.corner.size() != 2) throw ContractError("patch coordinates must be 2D, got " + shape_str(c.corner));
        out << c.corner[1] << ',' << c.corner[0] << ',' << detail::format_double(c.tissue_fraction) << '\n';
    }
    out.flush();
    if (!out) throw IoError("failed while writing " + path);
}

CoordinateList read_coordinate_list(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x,y,tissue_fraction")
        throw FormatError(path + ": expected header x,y,tissue_fraction, got '" + line + "'");
    CoordinateList coords;
    std::int64_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string x_text, y_text, f_text;
        if (!std::getline(fields, x_text, ',') || !std::getline(fields, y_text, ',') ||
            !std::getline(fields, f_text))
            throw FormatError(path + ":" + std::to_string(row) + ": expected x,y,tissue_fraction");
        PatchCoordinate c;
        c.corner.resize(2);
        const auto rx = std::from_chars(x_text.data(), x_text.data() + x_text.size(), c.corner[1]);
        const auto ry = std::from_chars(y_text.data(), y_text.data() + y_text.size(), c.corner[0]);
        if (rx.ec != std::errc() || rx.ptr != x_text.data() + x_text.size() || ry.ec != std::errc() ||
            ry.ptr != y_text.data() + y_text.size())
            throw FormatError(path + ":" + std::to_string(row) + ": coordinates must be integers");
        try {
            c.tissue_fraction = std::stod(f_text);
        } catch (const std::exception&) {
            throw FormatError(path + ":" + std::to_string(row) + ": tissue_fraction must be a number");
        }
        coords.push_back(std::move(c));
    }
    return coords;
}

TiledInferResult tiled_infer(ModelGraph& model, const TiledImage& tiled, const CoordinateList& coords,
                             const Coords& patch_size) {
    if (tiled.levels.empty()) throw ContractError("pyramid has no levels");
    const Image& base = tiled.levels.front();
    if (base.extents.size() != 2) throw ContractError("tiled levels must be 2D");
    if (model.spec.dims != 2)
        throw ContractError("tiled inference is two-dimensional but the model expects " +
                            std::to_string(model.spec.dims) + "D input");
    if (patch_size.size() != 2) throw DimensionError("patch must be 2D, got " + shape_str(patch_size));
    for (auto e : patch_size)
        if (e <= 0) throw DimensionError("patch extents must be positive, got " + shape_str(patch_size));
    if (base.channels != model.spec.in_channels)
        throw DimensionError("level 0 has " + std::to_string(base.channels) + " channels but the model expects " +
                             std::to_string(model.spec.in_channels));

    const std::int64_t classes = model.spec.classes;
    const std::int64_t plane = product(base.extents);
    const std::int64_t patch_plane = product(patch_size);
    const std::int64_t cols = base.extents[1];

    PredictionMap pred;
    pred.extents = base.extents;
    pred.classes = classes;
    pred.values.assign(static_cast<std::size_t>(plane) * classes, 0);
    CountMap counts;
    counts.extents = base.extents;
    counts.values.assign(static_cast<std::size_t>(plane), 0);

    Shape batch_shape = {1, base.channels, patch_size[0], patch_size[1]};
    Shape expected = {1, classes, patch_size[0], patch_size[1]};
    for (const auto& coord : coords) {
        if (coord.corner.size() != 2)
            throw ContractError("patch coordinates must be 2D, got " + shape_str(coord.corner));
        for (int k = 0; k < 2; ++k)
            if (coord.corner[k] < 0 || coord.corner[k] + patch_size[k] > base.extents[k])
                throw ContractError("patch at " + shape_str(coord.corner) + " of size " + shape_str(patch_size) +
                                    " falls outside level 0 extents " + shape_str(base.extents));

        Image region = tiled.read_region(0, coord.corner, patch_size);
        Tensor batch = Tensor::from_data(batch_shape, std::move(region.values));
        Tensor out = model.forward(batch, nullptr);
        if (out.shape() != expected)
            throw DimensionError("model produced " + shape_str(out.shape()) + " for a patch; tiled stitching needs " +
                                 shape_str(expected));
        auto out_values = out.values();

        for (std::int64_t i = 0; i < patch_size[0]; ++i) {
            for (std::int64_t j = 0; j < patch_size[1]; ++j) {
                const std::int64_t off = (coord.corner[0] + i) * cols + coord.corner[1] + j;
                const std::int64_t w = i * patch_size[1] + j;
                for (std::int64_t c = 0; c < classes; ++c)
                    pred.values[static_cast<std::size_t>(c * plane + off)] +=
                        out_values[static_cast<std::size_t>(c * patch_plane + w)];
                counts.values[static_cast<std::size_t>(off)] += 1;
            }
        }
    }

    for (std::int64_t v = 0; v < plane; ++v) {
        const real_t n = counts.values[static_cast<std::size_t>(v)];
        if (n > 0) {
            const real_t inv = real_t(1) / n;
            counts.values[static_cast<std::size_t>(v)] = inv;
            for (std::int64_t c = 0; c < classes; ++c) pred.values[static_cast<std::size_t>(c * plane + v)] *= inv;
        }
    }
    pred.normalized = true;

    TiledInferResult result;
    result.labels = argmax_labels(pred);
    result.labels.geometry = base.geometry;
    result.prediction = std::move(pred);
    result.counts = std::move(counts);
    return result;
}

} // namespace patchwork
