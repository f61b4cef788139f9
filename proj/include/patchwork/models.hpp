#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "patchwork/kernels.hpp"
#include "patchwork/optim.hpp"

namespace patchwork {

inline constexpr const char* kArtifactVersion = "0.1.0";

enum class Architecture { unet, resunet, uinc, fcn, vgg11, vgg13, vgg16, vgg19 };
enum class Task { segmentation, regression, classification };
enum class FinalActivation { softmax, sigmoid, none };

Architecture architecture_from_string(const std::string& name);
std::string architecture_name(Architecture a);
Task task_from_string(const std::string& name);
std::string task_name(Task t);
FinalActivation final_activation_from_string(const std::string& name);
std::string final_activation_name(FinalActivation a);

struct ArchSpec {
    Architecture architecture = Architecture::unet;
    std::int64_t dims = 2;
    std::int64_t in_channels = 1;
    std::int64_t classes = 2;
    std::int64_t base_filters = 8;
    std::int64_t depth = 3;
    FinalActivation final_activation = FinalActivation::softmax;
    bool batch_norm = false;

    void validate() const;
    bool operator==(const ArchSpec&) const = default;
};

// A built network: owned parameters plus a forward program. The ParamStore
// lives behind a stable pointer so layer closures can reference parameters by
// name across moves.
struct ModelGraph {
    ArchSpec spec;
    Task task = Task::segmentation;
    std::unique_ptr<ParamStore> params;
    std::function<Tensor(const Tensor&, bool training, Tape*)> program;

    // Training mode follows the tape: recording implies batch statistics for
    // any batch-norm layers, inference uses running buffers.
    Tensor forward(const Tensor& batch, Tape* tape) const {
        if (tape) params->attach(*tape);
        return program(batch, tape != nullptr, tape);
    }
};

// Dispatches on spec.architecture; parameters drawn from Rng(seed)
// (Kaiming-uniform fan-in for weights, zero bias), so the same spec and seed
// rebuild identical values.
ModelGraph build_model(const ArchSpec& spec, Task task, std::uint64_t seed);

struct CheckpointMeta {
    std::string artifact_version;
    std::int64_t epoch = 0;
    double val_loss = 0;
};

void save_checkpoint(const std::string& path, const ModelGraph& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    ModelGraph model;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace patchwork
