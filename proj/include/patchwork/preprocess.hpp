#pragma once

#include <optional>
#include <vector>

#include "patchwork/image.hpp"

namespace patchwork {

struct IntensityRange {
    double min;
    double max;

    void validate() const; // min <= max, neither NaN
};

// Zero out samples falling outside the range; keep the rest unchanged.
Image threshold(const Image& image, IntensityRange range);

// Saturate samples to the range bounds.
Image clip(const Image& image, IntensityRange range);

// Affine map of [image min, image max] onto [out_min, out_max], computed over
// all channels together.
Image rescale(const Image& image, double out_min, double out_max);

enum class ZscoreMode { full, nonzero };

// Normalize each channel to zero mean, unit population standard deviation.
// In nonzero mode the statistics skip zero-valued samples and those samples
// stay zero. The masked overload uses mask > 0 as the region for every
// channel and zeroes everything outside it.
Image zscore(const Image& image, ZscoreMode mode);
Image zscore(const Image& image, const Image& mask);

enum class Interp { linear, nearest };

struct ResampleTarget {
    std::optional<std::vector<double>> spacing; // exactly one of the two is set
    std::optional<Coords> extents;

    static ResampleTarget to_spacing(std::vector<double> s);
    static ResampleTarget to_extents(Coords e);
};

// Resample onto a new grid sharing the origin. Grid point i on axis k maps to
// continuous source index i * (new_spacing / old_spacing), clamped at the
// edges. Target spacing keeps the physical extent within one voxel; target
// extents derive the spacing from the physical extent.
Image resample(const Image& image, const ResampleTarget& target, Interp interp);

struct CropRecord {
    Coords offset;           // index of the kept block in the original grid
    Coords extents;          // kept block size
    Coords original_extents;
};

struct CropResult {
    Image image;
    std::vector<Image> companions;
    CropRecord record;
};

// Strip leading/trailing hyperplanes that are zero in every channel of the
// primary image; companions (e.g. masks) get the identical crop.
CropResult crop_zero_planes(const Image& image, const std::vector<Image>& companions = {});

// Inverse of crop_zero_planes: re-embed into the original extents, zero-filled.
Image pad_back(const Image& image, const CropRecord& record);

} // namespace patchwork
