#include "patchwork/config.hpp"

#include <yaml-cpp/yaml.h>

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "patchwork/detail/numfmt.hpp"
#include "patchwork/errors.hpp"

namespace patchwork {

namespace {

using detail::format_double;
using detail::format_double_list;
using detail::format_int_list;

std::array<int, 3> parse_version(const std::string& text, const std::string& where) {
    std::array<int, 3> out{};
    std::size_t pos = 0;
    for (int part = 0; part < 3; ++part) {
        if (pos >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos])))
            throw ConfigError(where + ": version '" + text + "' is not of the form MAJOR.MINOR.PATCH");
        std::size_t used = 0;
        out[static_cast<std::size_t>(part)] = std::stoi(text.substr(pos), &used);
        pos += used;
        if (part < 2) {
            if (pos >= text.size() || text[pos] != '.')
                throw ConfigError(where + ": version '" + text + "' is not of the form MAJOR.MINOR.PATCH");
            ++pos;
        }
    }
    if (pos != text.size())
        throw ConfigError(where + ": version '" + text + "' is not of the form MAJOR.MINOR.PATCH");
    return out;
}

int compare_versions(const std::array<int, 3>& a, const std::array<int, 3>& b) {
    for (int i = 0; i < 3; ++i) {
        if (a[static_cast<std::size_t>(i)] < b[static_cast<std::size_t>(i)]) return -1;
        if (a[static_cast<std::size_t>(i)] > b[static_cast<std::size_t>(i)]) return 1;
    }
    return 0;
}

void check_version_window(const std::string& lo, const std::string& hi) {
    const auto min_v = parse_version(lo, "version_min");
    const auto max_v = parse_version(hi, "version_max");
    const auto art = parse_version(kArtifactVersion, "artifact");
    if (compare_versions(min_v, max_v) > 0)
        throw ConfigError("version_min " + lo + " exceeds version_max " + hi);
    if (compare_versions(art, min_v) < 0 || compare_versions(art, max_v) > 0)
        throw ConfigError("configuration requires artifact version between " + lo + " and " + hi +
                          ", but this build is " + std::string(kArtifactVersion));
}

template <typename T>
T as_scalar(const YAML::Node& node, const std::string& where, const char* expected) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(where + " expects " + expected);
    }
}

std::vector<std::int64_t> as_int_list(const YAML::Node& node, const std::string& where) {
    if (!node.IsSequence()) throw ConfigError(where + " expects a list of integers");
    std::vector<std::int64_t> out;
    out.reserve(node.size());
    for (const auto& item : node) out.push_back(as_scalar<std::int64_t>(item, where, "an integer"));
    return out;
}

std::vector<double> as_double_list(const YAML::Node& node, const std::string& where) {
    if (!node.IsSequence()) throw ConfigError(where + " expects a list of numbers");
    std::vector<double> out;
    out.reserve(node.size());
    for (const auto& item : node) out.push_back(as_scalar<double>(item, where, "a number"));
    return out;
}

// Strict mapping walker: every key must be taken, leftovers are config errors.
class MapReader {
  public:
    MapReader(const YAML::Node& node, std::string where) : node_(node), where_(std::move(where)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where_ + " must be a mapping");
    }

    YAML::Node take(const std::string& key) {
        seen_.insert(key);
        if (!node_ || node_.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
        return node_[key];
    }

    YAML::Node require(const std::string& key, const std::string& example) {
        YAML::Node n = take(key);
        if (!n || n.IsNull())
            throw ConfigError("missing mandatory key '" + key + "' in " + where_ + " (example: " + example + ")");
        return n;
    }

    void finish() const {
        if (!node_ || node_.IsNull()) return;
        for (const auto& kv : node_) {
            const std::string key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError("unknown configuration key '" + key + "' in " + where_);
        }
    }

    const std::string& where() const { return where_; }

  private:
    YAML::Node node_;
    std::string where_;
    std::set<std::string> seen_;
};

double take_double(MapReader& m, const std::string& key, double fallback) {
    YAML::Node n = m.take(key);
    if (!n || n.IsNull()) return fallback;
    return as_scalar<double>(n, "key '" + key + "' in " + m.where(), "a number");
}

std::int64_t take_int(MapReader& m, const std::string& key, std::int64_t fallback) {
    YAML::Node n = m.take(key);
    if (!n || n.IsNull()) return fallback;
    return as_scalar<std::int64_t>(n, "key '" + key + "' in " + m.where(), "an integer");
}

bool take_bool(MapReader& m, const std::string& key, bool fallback) {
    YAML::Node n = m.take(key);
    if (!n || n.IsNull()) return fallback;
    return as_scalar<bool>(n, "key '" + key + "' in " + m.where(), "a boolean");
}

std::string take_string(MapReader& m, const std::string& key, const std::string& fallback) {
    YAML::Node n = m.take(key);
    if (!n || n.IsNull()) return fallback;
    return as_scalar<std::string>(n, "key '" + key + "' in " + m.where(), "a string");
}

const std::vector<std::string>& augment_keys(AugmentKind kind) {
    static const std::vector<std::string> flip{"probability", "axes"};
    static const std::vector<std::string> rotate{"probability", "axes"};
    static const std::vector<std::string> affine{"probability", "degrees", "scale_min", "scale_max", "shift"};
    static const std::vector<std::string> elastic{"probability", "elastic_spacing", "elastic_magnitude"};
    static const std::vector<std::string> aniso{"probability", "axes", "aniso_min", "aniso_max"};
    static const std::vector<std::string> blur{"probability", "sigma_min", "sigma_max"};
    static const std::vector<std::string> noise{"probability", "noise_mean", "noise_sigma"};
    static const std::vector<std::string> gamma{"probability", "gamma_min", "gamma_max"};
    static const std::vector<std::string> bias{"probability", "bias_order", "bias_coeff"};
    static const std::vector<std::string> motion{"probability", "motion_transforms", "motion_shift"};
    static const std::vector<std::string> ghosting{"probability", "axes", "num_ghosts", "ghost_intensity"};
    static const std::vector<std::string> spike{"probability", "num_spikes", "spike_intensity"};
    switch (kind) {
        case AugmentKind::flip: return flip;
        case AugmentKind::rotate: return rotate;
        case AugmentKind::affine: return affine;
        case AugmentKind::elastic: return elastic;
        case AugmentKind::anisotropy: return aniso;
        case AugmentKind::blur: return blur;
        case AugmentKind::noise: return noise;
        case AugmentKind::gamma: return gamma;
        case AugmentKind::bias_field: return bias;
        case AugmentKind::motion: return motion;
        case AugmentKind::ghosting: return ghosting;
        case AugmentKind::spike: return spike;
    }
    throw ContractError("unhandled augmentation kind");
}

AugmentEntry parse_augment_entry(AugmentKind kind, const YAML::Node& node, const std::string& where) {
    AugmentEntry entry;
    entry.kind = kind;
    MapReader m(node, where);
    for (const std::string& key : augment_keys(kind)) {
        YAML::Node n = m.take(key);
        if (!n || n.IsNull()) continue;
        const std::string ctx = "key '" + key + "' in " + where;
        if (key == "probability") entry.probability = as_scalar<double>(n, ctx, "a number");
        else if (key == "axes") entry.axes = as_int_list(n, ctx);
        else if (key == "degrees") entry.degrees = as_scalar<double>(n, ctx, "a number");
        else if (key == "scale_min") entry.scale_min = as_scalar<double>(n, ctx, "a number");
        else if (key == "scale_max") entry.scale_max = as_scalar<double>(n, ctx, "a number");
        else if (key == "shift") entry.shift = as_scalar<double>(n, ctx, "a number");
        else if (key == "elastic_spacing") entry.elastic_spacing = as_scalar<double>(n, ctx, "a number");
        else if (key == "elastic_magnitude") entry.elastic_magnitude = as_scalar<double>(n, ctx, "a number");
        else if (key == "aniso_min") entry.aniso_min = as_scalar<double>(n, ctx, "a number");
        else if (key == "aniso_max") entry.aniso_max = as_scalar<double>(n, ctx, "a number");
        else if (key == "sigma_min") entry.sigma_min = as_scalar<double>(n, ctx, "a number");
        else if (key == "sigma_max") entry.sigma_max = as_scalar<double>(n, ctx, "a number");
        else if (key == "noise_mean") entry.noise_mean = as_scalar<double>(n, ctx, "a number");
        else if (key == "noise_sigma") entry.noise_sigma = as_scalar<double>(n, ctx, "a number");
        else if (key == "gamma_min") entry.gamma_min = as_scalar<double>(n, ctx, "a number");
        else if (key == "gamma_max") entry.gamma_max = as_scalar<double>(n, ctx, "a number");
        else if (key == "bias_order") entry.bias_order = static_cast<int>(as_scalar<std::int64_t>(n, ctx, "an integer"));
        else if (key == "bias_coeff") entry.bias_coeff = as_scalar<double>(n, ctx, "a number");
        else if (key == "motion_transforms")
            entry.motion_transforms = static_cast<int>(as_scalar<std::int64_t>(n, ctx, "an integer"));
        else if (key == "motion_shift") entry.motion_shift = as_scalar<double>(n, ctx, "a number");
        else if (key == "num_ghosts") entry.num_ghosts = static_cast<int>(as_scalar<std::int64_t>(n, ctx, "an integer"));
        else if (key == "ghost_intensity") entry.ghost_intensity = as_scalar<double>(n, ctx, "a number");
        else if (key == "num_spikes") entry.num_spikes = static_cast<int>(as_scalar<std::int64_t>(n, ctx, "an integer"));
        else if (key == "spike_intensity") entry.spike_intensity = as_scalar<double>(n, ctx, "a number");
    }
    m.finish();
    return entry;
}

std::string augment_entry_value(const AugmentEntry& e, const std::string& key) {
    if (key == "probability") return format_double(e.probability);
    if (key == "axes") return format_int_list(e.axes);
    if (key == "degrees") return format_double(e.degrees);
    if (key == "scale_min") return format_double(e.scale_min);
    if (key == "scale_max") return format_double(e.scale_max);
    if (key == "shift") return format_double(e.shift);
    if (key == "elastic_spacing") return format_double(e.elastic_spacing);
    if (key == "elastic_magnitude") return format_double(e.elastic_magnitude);
    if (key == "aniso_min") return format_double(e.aniso_min);
    if (key == "aniso_max") return format_double(e.aniso_max);
    if (key == "sigma_min") return format_double(e.sigma_min);
    if (key == "sigma_max") return format_double(e.sigma_max);
    if (key == "noise_mean") return format_double(e.noise_mean);
    if (key == "noise_sigma") return format_double(e.noise_sigma);
    if (key == "gamma_min") return format_double(e.gamma_min);
    if (key == "gamma_max") return format_double(e.gamma_max);
    if (key == "bias_order") return std::to_string(e.bias_order);
    if (key == "bias_coeff") return format_double(e.bias_coeff);
    if (key == "motion_transforms") return std::to_string(e.motion_transforms);
    if (key == "motion_shift") return format_double(e.motion_shift);
    if (key == "num_ghosts") return std::to_string(e.num_ghosts);
    if (key == "ghost_intensity") return format_double(e.ghost_intensity);
    if (key == "num_spikes") return std::to_string(e.num_spikes);
    if (key == "spike_intensity") return format_double(e.spike_intensity);
    throw ContractError("unhandled augmentation key '" + key + "'");
}

PreprocessStep parse_preprocess_step(const YAML::Node& item, std::size_t index) {
    const std::string where = "data_preprocessing step " + std::to_string(index + 1);
    std::string name;
    YAML::Node params;
    if (item.IsScalar()) {
        name = item.as<std::string>();
    } else if (item.IsMap()) {
        if (item.size() != 1)
            throw ConfigError(where + " must be a single '<step>: {...}' mapping");
        auto kv = item.begin();
        name = kv->first.as<std::string>();
        params = kv->second;
    } else {
        throw ConfigError(where + " must be a step name or a single '<step>: {...}' mapping");
    }

    PreprocessStep step;
    MapReader m(params, "step '" + name + "'");
    if (name == "threshold" || name == "clip") {
        step.kind = name == "threshold" ? PreprocessStep::Kind::threshold : PreprocessStep::Kind::clip;
        step.min = as_scalar<double>(m.require("min", "min: 0"), "key 'min' in step '" + name + "'", "a number");
        step.max = as_scalar<double>(m.require("max", "max: 100"), "key 'max' in step '" + name + "'", "a number");
    } else if (name == "rescale") {
        step.kind = PreprocessStep::Kind::rescale;
        step.min = take_double(m, "min", 0.0);
        step.max = take_double(m, "max", 1.0);
    } else if (name == "zscore") {
        step.kind = PreprocessStep::Kind::zscore;
        const std::string mode = take_string(m, "mode", "full");
        if (mode == "full") step.zscore_mode = ZscoreMode::full;
        else if (mode == "nonzero") step.zscore_mode = ZscoreMode::nonzero;
        else throw ConfigError("zscore mode must be 'full' or 'nonzero', got '" + mode + "'");
    } else if (name == "resample") {
        step.kind = PreprocessStep::Kind::resample;
        YAML::Node spacing = m.take("spacing");
        YAML::Node extents = m.take("extents");
        const bool has_spacing = spacing && !spacing.IsNull();
        const bool has_extents = extents && !extents.IsNull();
        if (has_spacing == has_extents)
            throw ConfigError("resample needs exactly one of 'spacing' or 'extents'");
        if (has_spacing) step.spacing = as_double_list(spacing, "key 'spacing' in step 'resample'");
        if (has_extents) step.extents = as_int_list(extents, "key 'extents' in step 'resample'");
    } else if (name == "crop_zero_planes") {
        step.kind = PreprocessStep::Kind::crop_zero_planes;
    } else {
        throw ConfigError("unknown preprocessing step '" + name + "'");
    }
    m.finish();
    return step;
}

void render_preprocess_step(std::ostringstream& out, const PreprocessStep& step) {
    switch (step.kind) {
        case PreprocessStep::Kind::threshold:
        case PreprocessStep::Kind::clip:
        case PreprocessStep::Kind::rescale:
            out << "  - " << (step.kind == PreprocessStep::Kind::threshold ? "threshold"
                              : step.kind == PreprocessStep::Kind::clip    ? "clip"
                                                                           : "rescale")
                << ":\n";
            out << "      min: " << format_double(step.min) << "\n";
            out << "      max: " << format_double(step.max) << "\n";
            break;
        case PreprocessStep::Kind::zscore:
            out << "  - zscore:\n";
            out << "      mode: " << (step.zscore_mode == ZscoreMode::full ? "full" : "nonzero") << "\n";
            break;
        case PreprocessStep::Kind::resample:
            out << "  - resample:\n";
            if (!step.spacing.empty()) out << "      spacing: " << format_double_list(step.spacing) << "\n";
            else out << "      extents: " << format_int_list(step.extents) << "\n";
            break;
        case PreprocessStep::Kind::crop_zero_planes:
            out << "  - crop_zero_planes\n";
            break;
    }
}

} // namespace

double schedule_lr(double base_lr, const SchedulerSpec& scheduler, std::int64_t epoch) {
    if (epoch < 0) throw ContractError("epoch index must be non-negative, got " + std::to_string(epoch));
    if (scheduler.kind == SchedulerSpec::Kind::constant) return base_lr;
    if (scheduler.gamma <= 0)
        throw ConfigError("scheduler gamma must be positive, got " + format_double(scheduler.gamma));
    if (scheduler.period < 1)
        throw ConfigError("scheduler period must be at least 1, got " + std::to_string(scheduler.period));
    return base_lr * std::pow(scheduler.gamma, static_cast<double>(epoch / scheduler.period));
}

PipelineConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

PipelineConfig parse_config_text(const std::string& text, const std::string& origin) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!root.IsMap()) throw ParseError(origin + ": configuration must be a YAML mapping");

    PipelineConfig cfg;
    MapReader top(root, "the configuration");

    cfg.version_min = take_string(top, "version_min", kArtifactVersion);
    cfg.version_max = take_string(top, "version_max", kArtifactVersion);
    check_version_window(cfg.version_min, cfg.version_max);

    cfg.task = task_from_string(
        as_scalar<std::string>(top.require("task", "task: segmentation"), "key 'task'", "a string"));

    {
        MapReader model(top.require("model", "model: {architecture: unet}"), "model");
        cfg.model.architecture = architecture_from_string(as_scalar<std::string>(
            model.require("architecture", "architecture: resunet"), "key 'architecture'", "a string"));
        cfg.model.dims = take_int(model, "dims", 2);
        cfg.model.in_channels = take_int(model, "in_channels", 1);
        cfg.model.classes = take_int(model, "classes", cfg.task == Task::regression ? 1 : 2);
        cfg.model.base_filters = take_int(model, "base_filters", 8);
        cfg.model.depth = take_int(model, "depth", 3);
        const std::string fallback_act = cfg.task == Task::regression ? "none" : "softmax";
        cfg.model.final_activation = final_activation_from_string(take_string(model, "final_activation", fallback_act));
        cfg.model.batch_norm = take_bool(model, "batch_norm", false);
        model.finish();
    }

    cfg.patch_size = as_int_list(top.require("patch_size", "patch_size: [64, 64]"), "key 'patch_size'");
    cfg.batch_size = take_int(top, "batch_size", 1);
    cfg.epochs = as_scalar<std::int64_t>(top.require("epochs", "epochs: 20"), "key 'epochs'", "an integer");
    cfg.learning_rate =
        as_scalar<double>(top.require("learning_rate", "learning_rate: 0.01"), "key 'learning_rate'", "a number");

    {
        YAML::Node node = top.take("scheduler");
        if (node && !node.IsNull()) {
            std::string kind;
            if (node.IsScalar()) {
                kind = node.as<std::string>();
                if (kind != "constant")
                    throw ConfigError("scheduler '" + kind + "' needs its parameters; write it as a mapping");
                cfg.scheduler.kind = SchedulerSpec::Kind::constant;
            } else {
                MapReader sched(node, "scheduler");
                kind = as_scalar<std::string>(sched.require("kind", "kind: step"), "key 'kind' in scheduler",
                                              "a string");
                if (kind == "constant") {
                    cfg.scheduler.kind = SchedulerSpec::Kind::constant;
                } else if (kind == "step") {
                    cfg.scheduler.kind = SchedulerSpec::Kind::step;
                    cfg.scheduler.gamma = as_scalar<double>(sched.require("gamma", "gamma: 0.5"),
                                                            "key 'gamma' in scheduler", "a number");
                    cfg.scheduler.period = as_scalar<std::int64_t>(sched.require("period", "period: 10"),
                                                                   "key 'period' in scheduler", "an integer");
                } else {
                    throw ConfigError("unknown scheduler kind '" + kind + "' (expected constant or step)");
                }
                sched.finish();
            }
        }
    }

    cfg.loss = loss_kind_from_string(
        as_scalar<std::string>(top.require("loss", "loss: dice"), "key 'loss'", "a string"));

    {
        YAML::Node node = top.take("optimizer");
        if (node && !node.IsNull()) {
            MapReader opt(node, "optimizer");
            const std::string kind = take_string(opt, "kind", "sgd");
            if (kind != "sgd") throw ConfigError("unknown optimizer kind '" + kind + "' (only sgd is available)");
            cfg.momentum = take_double(opt, "momentum", 0.9);
            opt.finish();
        }
    }

    {
        YAML::Node node = top.take("nested_training");
        if (node && !node.IsNull()) {
            MapReader nested(node, "nested_training");
            cfg.k_outer = take_int(nested, "testing", 5);
            cfg.k_inner = take_int(nested, "validation", 5);
            cfg.single_fold = take_bool(nested, "single_fold", false);
            nested.finish();
        }
    }

    {
        YAML::Node node = top.take("data_preprocessing");
        if (node && !node.IsNull()) {
            if (!node.IsSequence()) throw ConfigError("data_preprocessing must be a list of steps");
            std::size_t index = 0;
            for (const auto& item : node) cfg.preprocessing.push_back(parse_preprocess_step(item, index++));
        }
    }

    {
        YAML::Node node = top.take("data_augmentation");
        if (node && !node.IsNull()) {
            if (!node.IsMap()) throw ConfigError("data_augmentation must map transform names to their parameters");
            for (const auto& kv : node) {
                const std::string name = kv.first.as<std::string>();
                const AugmentKind kind = augment_kind_from_string(name);
                cfg.augmentation.entries.push_back(parse_augment_entry(kind, kv.second, "augmentation '" + name + "'"));
            }
        }
    }

    cfg.queue.samples_per_volume = take_int(top, "q_samples_per_volume", 1);
    cfg.queue.max_queue_length = take_int(top, "q_max_length", 32);
    cfg.queue.workers = take_int(top, "q_num_workers", 1);
    cfg.queue.shuffle = take_bool(top, "q_shuffle", true);

    {
        YAML::Node node = top.take("sampler");
        if (node && !node.IsNull()) {
            MapReader sampler(node, "sampler");
            cfg.sampler.foreground_biased = take_bool(sampler, "foreground_biased", false);
            cfg.sampler.foreground_ratio = take_double(sampler, "foreground_ratio", 0.5);
            const std::string pad = take_string(sampler, "pad", "zero");
            if (pad == "zero") cfg.sampler.pad = PadPolicy::zero;
            else if (pad == "reflect") cfg.sampler.pad = PadPolicy::reflect;
            else throw ConfigError("sampler pad must be 'zero' or 'reflect', got '" + pad + "'");
            sampler.finish();
        }
    }

    {
        YAML::Node node = top.take("inference");
        if (node && !node.IsNull()) {
            MapReader inf(node, "inference");
            cfg.overlap = take_double(inf, "overlap", 0.0);
            cfg.stitch_mode = stitch_mode_from_string(take_string(inf, "mode", "average"));
            inf.finish();
        }
    }

    {
        YAML::Node n = top.take("seed");
        if (n && !n.IsNull()) cfg.seed = as_scalar<std::uint64_t>(n, "key 'seed'", "a non-negative integer");
    }

    top.finish();
    cfg.validate();
    return cfg;
}

void PipelineConfig::validate() const {
    check_version_window(version_min, version_max);
    model.validate();

    const bool classifier = model.architecture == Architecture::vgg11 || model.architecture == Architecture::vgg13 ||
                            model.architecture == Architecture::vgg16 || model.architecture == Architecture::vgg19;
    if (classifier && task == Task::segmentation)
        throw ConfigError("architecture '" + architecture_name(model.architecture) +
                          "' has no decoder and cannot run task 'segmentation'");
    if (!classifier && task != Task::segmentation)
        throw ConfigError("architecture '" + architecture_name(model.architecture) +
                          "' produces dense maps and only runs task 'segmentation', got '" + task_name(task) + "'");

    switch (loss) {
        case LossKind::dice:
            if (task != Task::segmentation)
                throw ConfigError("loss 'dice' requires task 'segmentation', got '" + task_name(task) + "'");
            break;
        case LossKind::mse:
            if (task == Task::classification)
                throw ConfigError("loss 'mse' is incompatible with task 'classification' (use cross_entropy)");
            break;
        case LossKind::cross_entropy:
            if (task == Task::regression)
                throw ConfigError("loss 'cross_entropy' is incompatible with task 'regression' (use mse)");
            break;
    }

    if (task == Task::regression && model.classes != 1)
        throw ConfigError("regression targets are scalars; model.classes must be 1, got " +
                          std::to_string(model.classes));
    if (task == Task::regression && model.final_activation == FinalActivation::softmax)
        throw ConfigError("final_activation 'softmax' over a single regression output is constant; use none");
    if (task == Task::classification && model.classes < 2)
        throw ConfigError("classification needs model.classes of at least 2, got " + std::to_string(model.classes));

    if (patch_size.empty()) throw ConfigError("patch_size must not be empty");
    if (static_cast<std::int64_t>(patch_size.size()) != model.dims)
        throw ConfigError("patch_size has " + std::to_string(patch_size.size()) + " entries but model.dims is " +
                          std::to_string(model.dims));
    for (auto e : patch_size)
        if (e < 1) throw ConfigError("patch extents must be positive, got " + format_int_list(patch_size));
    if (!classifier) {
        const std::int64_t factor = std::int64_t(1) << (model.depth - 1);
        for (auto e : patch_size)
            if (e % factor != 0)
                throw ConfigError("patch extent " + std::to_string(e) + " is not divisible by " +
                                  std::to_string(factor) + ", required at depth " + std::to_string(model.depth));
    } else {
        for (auto e : patch_size)
            if (e < 32)
                throw ConfigError("patch extent " + std::to_string(e) +
                                  " is too small for the five pooling stages (needs at least 32)");
    }

    if (epochs < 1) throw ConfigError("epochs must be at least 1, got " + std::to_string(epochs));
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1, got " + std::to_string(batch_size));
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be positive and finite, got " + format_double(learning_rate));
    if (scheduler.kind == SchedulerSpec::Kind::step) {
        if (scheduler.gamma <= 0)
            throw ConfigError("scheduler gamma must be positive, got " + format_double(scheduler.gamma));
        if (scheduler.period < 1)
            throw ConfigError("scheduler period must be at least 1, got " + std::to_string(scheduler.period));
    }
    if (!(momentum >= 0 && momentum < 1))
        throw ConfigError("momentum must lie in [0, 1), got " + format_double(momentum));
    if (k_outer < 2) throw ConfigError("nested_training.testing must be at least 2, got " + std::to_string(k_outer));
    if (k_inner < 2)
        throw ConfigError("nested_training.validation must be at least 2, got " + std::to_string(k_inner));

    for (const auto& step : preprocessing) {
        switch (step.kind) {
            case PreprocessStep::Kind::threshold:
            case PreprocessStep::Kind::clip:
                IntensityRange{step.min, step.max}.validate();
                break;
            case PreprocessStep::Kind::rescale:
                if (!(step.min < step.max))
                    throw ConfigError("rescale needs min < max, got [" + format_double(step.min) + ", " +
                                      format_double(step.max) + "]");
                break;
            case PreprocessStep::Kind::zscore:
            case PreprocessStep::Kind::crop_zero_planes:
                break;
            case PreprocessStep::Kind::resample:
                if (step.spacing.empty() == step.extents.empty())
                    throw ConfigError("resample needs exactly one of 'spacing' or 'extents'");
                if (!step.spacing.empty()) {
                    if (static_cast<std::int64_t>(step.spacing.size()) != model.dims)
                        throw ConfigError("resample spacing has " + std::to_string(step.spacing.size()) +
                                          " entries but model.dims is " + std::to_string(model.dims));
                    for (double s : step.spacing)
                        if (!(s > 0) || !std::isfinite(s))
                            throw ConfigError("resample spacing entries must be positive, got " +
                                              format_double_list(step.spacing));
                } else {
                    if (static_cast<std::int64_t>(step.extents.size()) != model.dims)
                        throw ConfigError("resample extents has " + std::to_string(step.extents.size()) +
                                          " entries but model.dims is " + std::to_string(model.dims));
                    for (auto e : step.extents)
                        if (e < 1)
                            throw ConfigError("resample extents must be positive, got " +
                                              format_int_list(step.extents));
                }
                break;
        }
    }

    augmentation.validate(static_cast<std::size_t>(model.dims));
    queue.validate();
    if (!(sampler.foreground_ratio >= 0 && sampler.foreground_ratio <= 1))
        throw ConfigError("sampler foreground_ratio must lie in [0, 1], got " + format_double(sampler.foreground_ratio));
    if (!(overlap >= 0 && overlap < 1))
        throw ConfigError("inference overlap must lie in [0, 1), got " + format_double(overlap));
}

std::string render_config(const PipelineConfig& c) {
    std::ostringstream out;
    out << "version_min: " << c.version_min << "\n";
    out << "version_max: " << c.version_max << "\n";
    out << "task: " << task_name(c.task) << "\n";
    out << "model:\n";
    out << "  architecture: " << architecture_name(c.model.architecture) << "\n";
    out << "  dims: " << c.model.dims << "\n";
    out << "  in_channels: " << c.model.in_channels << "\n";
    out << "  classes: " << c.model.classes << "\n";
    out << "  base_filters: " << c.model.base_filters << "\n";
    out << "  depth: " << c.model.depth << "\n";
    out << "  final_activation: " << final_activation_name(c.model.final_activation) << "\n";
    out << "  batch_norm: " << (c.model.batch_norm ? "true" : "false") << "\n";
    out << "patch_size: " << format_int_list(c.patch_size) << "\n";
    out << "batch_size: " << c.batch_size << "\n";
    out << "epochs: " << c.epochs << "\n";
    out << "learning_rate: " << format_double(c.learning_rate) << "\n";
    out << "scheduler:\n";
    if (c.scheduler.kind == SchedulerSpec::Kind::constant) {
        out << "  kind: constant\n";
    } else {
        out << "  kind: step\n";
        out << "  gamma: " << format_double(c.scheduler.gamma) << "\n";
        out << "  period: " << c.scheduler.period << "\n";
    }
    out << "loss: " << loss_kind_name(c.loss) << "\n";
    out << "optimizer:\n";
    out << "  kind: sgd\n";
    out << "  momentum: " << format_double(c.momentum) << "\n";
    out << "nested_training:\n";
    out << "  testing: " << c.k_outer << "\n";
    out << "  validation: " << c.k_inner << "\n";
    out << "  single_fold: " << (c.single_fold ? "true" : "false") << "\n";
    if (c.preprocessing.empty()) {
        out << "data_preprocessing: []\n";
    } else {
        out << "data_preprocessing:\n";
        for (const auto& step : c.preprocessing) render_preprocess_step(out, step);
    }
    if (c.augmentation.entries.empty()) {
        out << "data_augmentation: {}\n";
    } else {
        out << "data_augmentation:\n";
        for (const auto& entry : c.augmentation.entries) {
            out << "  " << augment_kind_name(entry.kind) << ":\n";
            for (const std::string& key : augment_keys(entry.kind))
                out << "    " << key << ": " << augment_entry_value(entry, key) << "\n";
        }
    }
    out << "q_samples_per_volume: " << c.queue.samples_per_volume << "\n";
    out << "q_max_length: " << c.queue.max_queue_length << "\n";
    out << "q_num_workers: " << c.queue.workers << "\n";
    out << "q_shuffle: " << (c.queue.shuffle ? "true" : "false") << "\n";
    out << "sampler:\n";
    out << "  foreground_biased: " << (c.sampler.foreground_biased ? "true" : "false") << "\n";
    out << "  foreground_ratio: " << format_double(c.sampler.foreground_ratio) << "\n";
    out << "  pad: " << (c.sampler.pad == PadPolicy::zero ? "zero" : "reflect") << "\n";
    out << "inference:\n";
    out << "  overlap: " << format_double(c.overlap) << "\n";
    out << "  mode: " << stitch_mode_name(c.stitch_mode) << "\n";
    out << "seed: " << c.seed << "\n";
    return out.str();
}

void write_resolved_config(const PipelineConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write resolved config to " + path);
    out << render_config(cfg);
    if (!out) throw IoError("failed while writing resolved config to " + path);
}

} // namespace patchwork
