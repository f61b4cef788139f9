#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "patchwork/config.hpp"
#include "patchwork/inference.hpp"
#include "patchwork/sampler.hpp"

namespace patchwork {

inline constexpr const char* kLogsHeader = "epoch,train_loss,val_loss,val_metric,lr,seconds";

struct TrainLogRow {
    std::int64_t epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    double val_metric = 0;
    double lr = 0;
    double seconds = 0;
};

struct FoldOutcome {
    std::int64_t best_epoch = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<TrainLogRow> rows;
    std::string latest_path;
    std::string best_path;
    std::string logs_path;
    std::string config_path;
};

// Zero-embed so every extent reaches at least min_extent, content kept at the
// origin corner. Returns the input unchanged when it is already big enough.
Image embed_min(const Image& image, std::int64_t min_extent);

// Stack patch values into [N, channels, patch...].
Tensor batch_inputs(const std::vector<Patch>& batch);

// One-hot mask planes for segmentation, a scalar column for regression, and
// one-hot class rows for classification (scalar targets must be integral
// class indices within [0, classes)).
Tensor batch_targets(const std::vector<Patch>& batch, Task task, std::int64_t classes);

struct ValScore {
    double loss = 0;
    double metric = 0; // foreground-macro Dice for segmentation, MSE otherwise
};

// Whole-subject evaluation: stitched sliding-window prediction for
// segmentation, a single forward pass per subject otherwise.
ValScore evaluate(ModelGraph& model, const std::vector<LoadedSubject>& subjects, const PipelineConfig& cfg);

// Read a subject's channel images (and mask or scalar target) off disk.
LoadedSubject load_subject(const SubjectRecord& record, ManifestTask task);

// Apply cfg.preprocessing in order. Intensity steps touch only the image;
// resampling moves the mask along with nearest interpolation; zero-plane
// cropping crops image and mask together.
LoadedSubject preprocess_subject(const LoadedSubject& subject, const std::vector<PreprocessStep>& steps);

// Train on patches streamed from the queue, validate once per epoch, and keep
// two checkpoints: model_latest (every epoch) and model_best (lowest
// validation loss). Appends one row per epoch to logs.csv and writes the
// resolved config next to it. Aborts with NumericError on a non-finite loss,
// naming the epoch and batch.
FoldOutcome train_one_fold(const PipelineConfig& cfg, const std::vector<LoadedSubject>& train_subjects,
                           const std::vector<LoadedSubject>& val_subjects, const std::string& out_dir,
                           std::uint64_t fold_seed, const std::function<void(const std::string&)>& log = {});

} // namespace patchwork
