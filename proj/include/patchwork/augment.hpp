#pragma once

#include <optional>
#include <string>
#include <vector>

#include "patchwork/image.hpp"
#include "patchwork/rng.hpp"

namespace patchwork {

// One training example: intensity image plus an optional label mask that must
// follow every geometric transform (with nearest interpolation).
struct Sample {
    Image image;
    std::optional<Image> mask;
};

void validate_sample(const Sample& s);

// ---- spatial ----
Sample flip_axes(const Sample& s, const Coords& axes);
// turns in {1,2,3}; 90-degree steps in the (axis_a, axis_b) plane. Odd turn
// counts require that plane to be square so extents stay fixed.
Sample rotate_quarter(const Sample& s, int turns, std::int64_t axis_a, std::int64_t axis_b);

struct AffineDraw {
    std::vector<double> angles_deg; // one per axis pair, lexicographic order
    std::vector<double> scales;     // one per axis
    std::vector<double> shifts;     // voxels, one per axis
};
Sample affine_warp(const Sample& s, const AffineDraw& draw);

// Random displacement field on a coarse control grid, linearly upsampled.
Sample elastic_warp(const Sample& s, double control_spacing, double max_displacement, Rng& rng);

// Down- then up-sample along one axis, degrading resolution in place.
Sample anisotropy(const Sample& s, std::int64_t axis, double factor);

// ---- intensity (mask untouched) ----
Sample gaussian_blur(const Sample& s, double sigma); // circular boundary, mean preserving
Sample add_noise(const Sample& s, double mean, double sigma, Rng& rng);
Sample gamma_transform(const Sample& s, double gamma); // rescale to [0,1], pow, map back

// ---- k-space and field artifacts (single-channel images) ----
Sample bias_field(const Sample& s, int order, double coeff_range, Rng& rng);
// Average of the spectrum with spectra of circularly shifted copies.
Sample motion_blend(const Sample& s, const std::vector<std::vector<double>>& shifts);
// Scale every num_ghosts-th plane along the axis (DC plane kept) by 1 - intensity.
Sample ghosting(const Sample& s, int num_ghosts, std::int64_t axis, double intensity);
// Add a real constant to the spectrum at each position (and its mirror).
Sample spike_noise(const Sample& s, const std::vector<Coords>& positions, double intensity);

// ---- stochastic plan ----
enum class AugmentKind {
    flip,
    rotate,
    affine,
    elastic,
    anisotropy,
    blur,
    noise,
    gamma,
    bias_field,
    motion,
    ghosting,
    spike,
};

AugmentKind augment_kind_from_string(const std::string& name);
std::string augment_kind_name(AugmentKind kind);

struct AugmentEntry {
    AugmentKind kind;
    double probability = 0.35;
    Coords axes; // candidate axes for flip/rotate/anisotropy/ghosting; empty = all

    double degrees = 10.0;                      // affine rotation bound
    double scale_min = 0.9, scale_max = 1.1;    // affine per-axis scale range
    double shift = 2.0;                         // affine translation bound (voxels)
    double elastic_spacing = 8.0;               // control point spacing (voxels)
    double elastic_magnitude = 2.0;             // displacement bound (voxels)
    double aniso_min = 1.5, aniso_max = 3.0;    // anisotropy factor range
    double sigma_min = 0.5, sigma_max = 1.5;    // blur sigma range
    double noise_mean = 0.0, noise_sigma = 0.1; // noise: sigma drawn from [0, noise_sigma]
    double gamma_min = 0.7, gamma_max = 1.5;
    int bias_order = 3;
    double bias_coeff = 0.5;
    int motion_transforms = 2;
    double motion_shift = 2.0;
    int num_ghosts = 4;
    double ghost_intensity = 0.5; // drawn from [0, ghost_intensity]
    int num_spikes = 1;
    double spike_intensity = 1.0;

    void validate(std::size_t rank) const;
};

struct AugmentationPlan {
    std::vector<AugmentEntry> entries;

    void validate(std::size_t rank) const;
};

// Applies each entry with its probability, in order, drawing every random
// parameter from rng. Fixed seed gives bitwise-identical decisions.
Sample compose(const AugmentationPlan& plan, const Sample& s, Rng& rng);

// Applies one entry unconditionally (still drawing its parameters from rng).
Sample apply_entry(const AugmentEntry& entry, const Sample& s, Rng& rng);

} // namespace patchwork
