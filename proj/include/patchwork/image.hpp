#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "patchwork/errors.hpp"
#include "patchwork/ndindex.hpp"
#include "patchwork/tensor.hpp"

namespace patchwork {

// Physical geometry of a raster grid. Axes are listed slowest-varying first,
// matching the value layout below (the last axis is contiguous in memory).
struct ImageGeometry {
    std::vector<double> spacing; // physical step per axis, strictly positive
    std::vector<double> origin;  // physical position of the first sample

    void validate(std::size_t rank) const;
};

// A multi-channel raster image. Values are stored channel-planar: all of
// channel 0 in row-major order, then channel 1, and so on.
struct Image {
    ImageGeometry geometry;
    Coords extents;
    std::int64_t channels = 1;
    std::vector<real_t> values;

    std::int64_t plane_size() const;
    std::span<real_t> channel(std::int64_t c);
    std::span<const real_t> channel(std::int64_t c) const;
    void validate() const;
};

Image make_image(Coords extents, std::int64_t channels);

// Supported extensions: .mha (any rank, with geometry), .pgm / .ppm
// (2D, 8-bit, unit geometry).
Image read_image(const std::string& path);
void write_image(const Image& image, const std::string& path);

struct SubjectRecord {
    std::string subject_id;
    std::vector<std::string> channel_paths;
    std::variant<std::string, double> target; // mask path, or scalar label
};

enum class ManifestTask { segmentation, regression, classification };

// Parses a subject manifest CSV with header SubjectID,Channel_0..Channel_{N-1},Label.
// Relative paths are resolved against the manifest's directory; every
// referenced file must exist. Row order is preserved.
std::vector<SubjectRecord> read_manifest(const std::string& path, ManifestTask task);

} // namespace patchwork
