#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "patchwork/image.hpp"
#include "patchwork/inference.hpp"

namespace patchwork {

// Multi-resolution RGB image, level 0 finest. Region reads go tile by tile
// and bump tiles_touched, so access locality is observable in tests.
struct TiledImage {
    std::int64_t factor = 2;
    std::int64_t tile = 64;
    std::vector<Image> levels;
    mutable std::int64_t tiles_touched = 0;

    std::int64_t level_count() const { return static_cast<std::int64_t>(levels.size()); }
    const Image& level(std::int64_t index) const;

    // Copy a rectangle out of one level, touching only the tiles that
    // intersect it. The rectangle must lie inside the level.
    Image read_region(std::int64_t level, const Coords& corner, const Coords& size) const;
};

// Each level is the box-filter reduction of the previous one; level L extents
// are ceil(level-0 extents / factor^L). Partial edge boxes average only the
// pixels they cover.
TiledImage build_tiled_pyramid(const Image& rgb, std::int64_t levels, std::int64_t factor, std::int64_t tile);

// Bundle layout: <dir>/pyramid.meta plus one level_<L>.mha per level.
void write_pyramid(const TiledImage& tiled, const std::string& dir);
TiledImage read_pyramid(const std::string& dir);

// Histogram cut maximizing between-class variance; ties take the lowest
// threshold. The histogram must have 256 bins and at least two nonempty ones.
int otsu_threshold(std::span<const std::int64_t> histogram);

struct TissueMask {
    std::int64_t level = 0;
    Coords extents;
    std::vector<std::uint8_t> values; // 1 = tissue
    int threshold = 0;                // chosen gray cut, kept for reporting

    std::int64_t count() const;
};

// Luma conversion (0.299 R + 0.587 G + 0.114 B), Otsu threshold over the
// 256-bin histogram, tissue = at-or-below threshold and not near-white
// (pixels with min channel > 240 are never tissue).
TissueMask tissue_mask(const TiledImage& tiled, std::int64_t level);

struct PatchCoordinate {
    Coords corner; // (row, col) at level-0 scale
    double tissue_fraction = 0;
};

using CoordinateList = std::vector<PatchCoordinate>;

// Pseudo-grid at level 0 with stride patch*(1-overlap); a coordinate is kept
// iff the tissue fraction under its patch reaches min_tissue_fraction. The
// grid stops where a whole patch no longer fits. An empty mask yields an
// empty list (logged, not an error).
CoordinateList mine_patches(const TiledImage& tiled, const TissueMask& mask, const Coords& patch_size,
                            double overlap, double min_tissue_fraction,
                            const std::function<void(const std::string&)>& log = {});

void write_coordinate_list(const std::string& path, const CoordinateList& coords);
CoordinateList read_coordinate_list(const std::string& path);

struct TiledInferResult {
    Image labels;             // argmax classes, lowest index on ties
    PredictionMap prediction; // per-voxel averaged class probabilities
    CountMap counts;          // reciprocal coverage; 0 marks voxels no patch reached
};

// Forward each listed patch from level 0 and average the per-voxel class
// probabilities (accumulated probabilities times reciprocal coverage).
// Voxels no patch covers stay 0 in both maps.
TiledInferResult tiled_infer(ModelGraph& model, const TiledImage& tiled, const CoordinateList& coords,
                             const Coords& patch_size);

} // namespace patchwork
