#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchwork/augment.hpp"
#include "patchwork/inference.hpp"
#include "patchwork/losses.hpp"
#include "patchwork/models.hpp"
#include "patchwork/preprocess.hpp"
#include "patchwork/sampler.hpp"

namespace patchwork {

struct SchedulerSpec {
    enum class Kind { constant, step };
    Kind kind = Kind::constant;
    double gamma = 0.5;       // step decay factor, must be > 0
    std::int64_t period = 1;  // epochs between decays

    bool operator==(const SchedulerSpec&) const = default;
};

double schedule_lr(double base_lr, const SchedulerSpec& scheduler, std::int64_t epoch);

struct PreprocessStep {
    enum class Kind { threshold, clip, rescale, zscore, resample, crop_zero_planes };
    Kind kind = Kind::zscore;
    double min = 0, max = 0;                   // threshold / clip / rescale bounds
    ZscoreMode zscore_mode = ZscoreMode::full; // zscore
    std::vector<double> spacing;               // resample, spacing form
    Coords extents;                            // resample, extents form

    bool operator==(const PreprocessStep&) const = default;
};

// Full experiment description. Defaults are applied during parsing, so a
// parsed config is always complete; render_config echoes every key back out
// and the echo re-parses to the same value.
struct PipelineConfig {
    std::string version_min = kArtifactVersion;
    std::string version_max = kArtifactVersion;
    Task task = Task::segmentation;
    ArchSpec model;
    Coords patch_size;
    std::int64_t batch_size = 1;
    std::int64_t epochs = 1;
    double learning_rate = 0.01;
    SchedulerSpec scheduler;
    LossKind loss = LossKind::dice;
    double momentum = 0.9;
    std::int64_t k_outer = 5; // nested_training.testing
    std::int64_t k_inner = 5; // nested_training.validation
    bool single_fold = false;
    std::vector<PreprocessStep> preprocessing;
    AugmentationPlan augmentation;
    QueueSpec queue;
    SamplerPolicy sampler;
    double overlap = 0.0;
    StitchMode stitch_mode = StitchMode::average;
    std::uint64_t seed = 0;

    void validate() const;
};

PipelineConfig parse_config(const std::string& path);
// origin labels error messages when the text does not come from a file.
PipelineConfig parse_config_text(const std::string& text, const std::string& origin);

std::string render_config(const PipelineConfig& cfg);
void write_resolved_config(const PipelineConfig& cfg, const std::string& path);

} // namespace patchwork
