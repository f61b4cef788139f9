#pragma once

#include <functional>
#include <string>
#include <vector>

#include "patchwork/image.hpp"
#include "patchwork/models.hpp"

namespace patchwork {

// Per-class probability grid, class-planar like Image channels.
struct PredictionMap {
    Coords extents;
    std::int64_t classes = 1;
    std::vector<real_t> values;
    bool normalized = false;

    std::int64_t plane_size() const { return product(extents); }
    std::span<real_t> class_plane(std::int64_t c);
    std::span<const real_t> class_plane(std::int64_t c) const;
};

// Per-voxel contribution weights from overlapping patches.
struct CountMap {
    Coords extents;
    std::vector<real_t> values;
};

enum class StitchMode { average, crop };

StitchMode stitch_mode_from_string(const std::string& name);
std::string stitch_mode_name(StitchMode mode);

struct StitchResult {
    PredictionMap prediction;
    CountMap counts;
};

// Cover the image with a patch grid of stride patch*(1-overlap), clamping the
// final patch to the border, forward each patch, and stitch. Average mode
// divides accumulated probabilities by coverage; crop mode keeps each patch's
// central slab (margins survive only at the borders) so regions tile exactly.
// Images smaller than the patch are zero-padded and cropped back, with a note
// through the log hook.
StitchResult sliding_window_infer(ModelGraph& model, const Image& image, const Coords& patch_size,
                                  double overlap, StitchMode mode,
                                  const std::function<void(const std::string&)>& log = {});

// Voxelwise mean of normalized per-fold probability maps.
PredictionMap aggregate_segmentation(const std::vector<PredictionMap>& folds);

// Argmax over classes; ties resolve to the lowest class index.
Image argmax_labels(const PredictionMap& map);

double aggregate_regression(const std::vector<double>& fold_values);

// Majority vote over per-fold class probabilities; ties break by mean probability.
std::int64_t aggregate_classification(const std::vector<std::vector<double>>& fold_probs);

struct DiceReport {
    std::vector<double> per_class; // labels 0..classes-1
    double foreground_macro = 0;   // mean over labels >= 1 (all labels when classes == 1)
};

// Both masks must hold integral labels; empty-vs-empty counts as full overlap.
double dice_coefficient(const Image& pred, const Image& gt, std::int64_t label);
DiceReport dice_per_class(const Image& pred, const Image& gt, std::int64_t classes);

double mse_metric(std::span<const real_t> pred, std::span<const real_t> gt);

} // namespace patchwork
