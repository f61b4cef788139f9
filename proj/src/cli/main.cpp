#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "patchwork/config.hpp"
#include "patchwork/crossval.hpp"
#include "patchwork/detail/numfmt.hpp"
#include "patchwork/histology.hpp"
#include "patchwork/trainer.hpp"

namespace fs = std::filesystem;
using namespace patchwork;

namespace {

constexpr double kMinedTissueFraction = 0.25; // mining bar for pyramid subjects

struct CommonArgs {
    std::string data;
    std::string config;
    std::string output;
    std::string device = "cpu";
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--data", args.data, "subject manifest CSV")->required();
    cmd->add_option("--config", args.config, "experiment configuration YAML")->required();
    cmd->add_option("--output", args.output, "output directory")->required();
    cmd->add_option("--device", args.device, "compute device")->check(CLI::IsMember({"cpu"}));
    cmd->add_option("--seed", args.seed, "override the configured seed")
        ->each([&args](const std::string&) { args.seed_given = true; });
}

std::uint64_t resolve_seed(const PipelineConfig& cfg, const CommonArgs& args) {
    if (args.seed_given) return args.seed;
    if (const char* env = std::getenv("PATCHWORK_SEED")) {
        std::uint64_t value = 0;
        const std::string text(env);
        const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
        if (res.ec != std::errc() || res.ptr != text.data() + text.size())
            throw ConfigError("PATCHWORK_SEED must be a nonnegative integer, got '" + text + "'");
        return value;
    }
    return cfg.seed;
}

ManifestTask manifest_task(Task task) {
    switch (task) {
    case Task::segmentation: return ManifestTask::segmentation;
    case Task::regression: return ManifestTask::regression;
    default: return ManifestTask::classification;
    }
}

void log_line(const std::string& message) { std::cerr << message << "\n"; }

// Loads the config and manifest and pins the effective seed into the config,
// so downstream consumers (resolved configs, split plans, fold seeds) all see
// one value.
struct LoadedExperiment {
    PipelineConfig cfg;
    std::vector<SubjectRecord> records;
};

LoadedExperiment load_experiment(const CommonArgs& args, std::string& stage) {
    LoadedExperiment exp;
    stage = "parsing configuration " + args.config;
    exp.cfg = parse_config(args.config);
    exp.cfg.seed = resolve_seed(exp.cfg, args);
    stage = "reading manifest " + args.data;
    exp.records = read_manifest(args.data, manifest_task(exp.cfg.task));
    if (exp.records.empty()) throw ValidationError(args.data + ": manifest lists no subjects");
    return exp;
}

SplitPlan plan_splits(const LoadedExperiment& exp) {
    std::vector<std::string> ids;
    ids.reserve(exp.records.size());
    for (const auto& r : exp.records) ids.push_back(r.subject_id);
    const SplitMode mode = exp.cfg.single_fold ? SplitMode::single_fold : SplitMode::nested;
    return make_nested_splits(std::move(ids), exp.cfg.k_outer, exp.cfg.k_inner, exp.cfg.seed, mode);
}

SplitPlan obtain_splits(const LoadedExperiment& exp, const std::string& output, std::string& stage) {
    stage = "planning splits";
    const std::string plan_path = output + "/split_plan.csv";
    if (fs::exists(plan_path)) {
        SplitPlan plan = read_split_plan(plan_path);
        if (plan.k_outer != exp.cfg.k_outer || plan.k_inner != exp.cfg.k_inner)
            throw ConfigError(plan_path + " was made for k_outer " + std::to_string(plan.k_outer) + ", k_inner " +
                              std::to_string(plan.k_inner) + " but the config asks for " +
                              std::to_string(exp.cfg.k_outer) + ", " + std::to_string(exp.cfg.k_inner) +
                              "; point --output at a fresh directory");
        return plan;
    }
    SplitPlan plan = plan_splits(exp);
    std::error_code ec;
    fs::create_directories(output, ec);
    if (ec) throw IoError("cannot create directory " + output + ": " + ec.message());
    write_split_plan(plan, plan_path);
    return plan;
}

std::string fold_dir_name(const FoldSplit& fold) {
    return "outer_" + std::to_string(fold.outer) + "/inner_" + std::to_string(fold.inner);
}

// Subjects are preprocessed once and shared across folds; the patch sampler
// and trainer never write back into them.
using SubjectCache = std::map<std::string, LoadedSubject>;

const LoadedSubject& cached_subject(SubjectCache& cache, const std::map<std::string, const SubjectRecord*>& by_id,
                                    const std::string& id, const PipelineConfig& cfg) {
    auto hit = cache.find(id);
    if (hit != cache.end()) return hit->second;
    auto rec = by_id.find(id);
    if (rec == by_id.end()) throw ValidationError("split plan references unknown subject '" + id + "'");
    LoadedSubject subject = load_subject(*rec->second, manifest_task(cfg.task));
    subject = preprocess_subject(subject, cfg.preprocessing);
    return cache.emplace(id, std::move(subject)).first->second;
}

void train_fold(const LoadedExperiment& exp, const SplitPlan& plan, std::size_t fold_index,
                const std::string& output, SubjectCache& cache, std::string& stage) {
    const FoldSplit& fold = plan.folds[fold_index];
    const std::string name = fold_dir_name(fold);
    stage = "training fold " + name;

    std::map<std::string, const SubjectRecord*> by_id;
    for (const auto& r : exp.records) by_id[r.subject_id] = &r;
    std::vector<LoadedSubject> train_subjects, val_subjects;
    for (const auto& id : fold.train) train_subjects.push_back(cached_subject(cache, by_id, id, exp.cfg));
    for (const auto& id : fold.validation) val_subjects.push_back(cached_subject(cache, by_id, id, exp.cfg));

    const std::uint64_t fold_seed = derive_seed(exp.cfg.seed, static_cast<std::uint64_t>(fold_index));
    FoldOutcome outcome = train_one_fold(exp.cfg, train_subjects, val_subjects, output + "/" + name, fold_seed,
                                         [&name](const std::string& m) { log_line(name + " " + m); });
    log_line(name + " done: best epoch " + std::to_string(outcome.best_epoch) + ", val loss " +
             detail::format_double(outcome.best_val_loss));
}

std::string self_executable(const char* argv0) {
    std::error_code ec;
    const fs::path link = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) return link.string();
    return argv0;
}

int run_parallel_folds(const CommonArgs& args, const SplitPlan& plan, std::uint64_t seed, std::int64_t workers,
                       const char* argv0) {
    const std::string exe = self_executable(argv0);
    std::map<pid_t, std::string> running;
    std::vector<std::string> failures;

    auto reap_one = [&]() {
        int status = 0;
        const pid_t pid = ::waitpid(-1, &status, 0);
        if (pid <= 0) return;
        auto it = running.find(pid);
        if (it == running.end()) return;
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
        if (code != 0) failures.push_back("fold " + it->second + " failed with exit code " + std::to_string(code));
        running.erase(it);
    };

    for (std::size_t i = 0; i < plan.folds.size(); ++i) {
        while (static_cast<std::int64_t>(running.size()) >= workers) reap_one();
        const std::string name = fold_dir_name(plan.folds[i]);
        const std::string fold_arg =
            std::to_string(plan.folds[i].outer) + ":" + std::to_string(plan.folds[i].inner);
        std::vector<std::string> argv_text = {exe,      "train",    "--data",   args.data, "--config",
                                              args.config, "--output", args.output, "--seed",
                                              std::to_string(seed),    "--fold",   fold_arg};
        std::vector<char*> argv;
        for (auto& a : argv_text) argv.push_back(a.data());
        argv.push_back(nullptr);

        const pid_t pid = ::fork();
        if (pid < 0) {
            failures.push_back("fold " + name + " could not be launched");
            break;
        }
        if (pid == 0) {
            ::execv(exe.c_str(), argv.data());
            std::perror("execv");
            ::_exit(127);
        }
        log_line("launched fold " + name + " (pid " + std::to_string(pid) + ")");
        running.emplace(pid, name);
    }
    while (!running.empty()) reap_one();

    for (const auto& f : failures) log_line(f);
    return failures.empty() ? 0 : 1;
}

int cmd_split(const CommonArgs& args, std::string& stage) {
    LoadedExperiment exp = load_experiment(args, stage);
    stage = "planning splits";
    SplitPlan plan = plan_splits(exp);
    stage = "writing split plan";
    std::error_code ec;
    fs::create_directories(args.output, ec);
    if (ec) throw IoError("cannot create directory " + args.output + ": " + ec.message());
    write_split_plan(plan, args.output + "/split_plan.csv");
    log_line("planned " + std::to_string(plan.folds.size()) + " folds over " + std::to_string(exp.records.size()) +
             " subjects -> " + args.output + "/split_plan.csv");
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& fold_arg, std::int64_t parallel, const char* argv0,
              std::string& stage) {
    LoadedExperiment exp = load_experiment(args, stage);
    SplitPlan plan = obtain_splits(exp, args.output, stage);

    std::size_t only_fold = plan.folds.size();
    if (!fold_arg.empty()) {
        std::int64_t outer = -1, inner = -1;
        const auto colon = fold_arg.find(':');
        bool ok = colon != std::string::npos;
        if (ok) {
            const auto ro = std::from_chars(fold_arg.data(), fold_arg.data() + colon, outer);
            const auto ri =
                std::from_chars(fold_arg.data() + colon + 1, fold_arg.data() + fold_arg.size(), inner);
            ok = ro.ec == std::errc() && ro.ptr == fold_arg.data() + colon && ri.ec == std::errc() &&
                 ri.ptr == fold_arg.data() + fold_arg.size();
        }
        if (!ok) throw ConfigError("--fold expects OUTER:INNER, e.g. --fold 0:1, got '" + fold_arg + "'");
        for (std::size_t i = 0; i < plan.folds.size(); ++i)
            if (plan.folds[i].outer == outer && plan.folds[i].inner == inner) only_fold = i;
        if (only_fold == plan.folds.size())
            throw ConfigError("fold " + fold_arg + " is not in the split plan (k_outer " +
                              std::to_string(plan.k_outer) + ", k_inner " + std::to_string(plan.k_inner) + ")");
    }

    SubjectCache cache;
    if (only_fold < plan.folds.size()) {
        train_fold(exp, plan, only_fold, args.output, cache, stage);
        return 0;
    }
    if (parallel > 1 && plan.folds.size() > 1) {
        stage = "launching fold processes";
        return run_parallel_folds(args, plan, exp.cfg.seed, parallel, argv0);
    }
    for (std::size_t i = 0; i < plan.folds.size(); ++i) train_fold(exp, plan, i, args.output, cache, stage);
    log_line("trained " + std::to_string(plan.folds.size()) + " folds into " + args.output);
    return 0;
}

struct FoldModel {
    std::int64_t outer = 0;
    std::int64_t inner = 0;
    LoadedCheckpoint checkpoint;
};

std::vector<FoldModel> load_fold_models(const std::string& output, const PipelineConfig& cfg) {
    std::vector<std::pair<std::pair<std::int64_t, std::int64_t>, std::string>> found;
    std::error_code ec;
    for (const auto& outer_entry : fs::directory_iterator(output, ec)) {
        const std::string outer_name = outer_entry.path().filename().string();
        if (outer_name.rfind("outer_", 0) != 0 || !outer_entry.is_directory()) continue;
        std::int64_t outer = 0;
        const std::string outer_digits = outer_name.substr(6);
        if (std::from_chars(outer_digits.data(), outer_digits.data() + outer_digits.size(), outer).ec !=
            std::errc())
            continue;
        for (const auto& inner_entry : fs::directory_iterator(outer_entry.path())) {
            const std::string inner_name = inner_entry.path().filename().string();
            if (inner_name.rfind("inner_", 0) != 0 || !inner_entry.is_directory()) continue;
            std::int64_t inner = 0;
            const std::string inner_digits = inner_name.substr(6);
            if (std::from_chars(inner_digits.data(), inner_digits.data() + inner_digits.size(), inner).ec !=
                std::errc())
                continue;
            const fs::path model = inner_entry.path() / "model_best";
            if (fs::exists(model)) found.push_back({{outer, inner}, model.string()});
        }
    }
    if (ec) throw IoError("cannot scan " + output + ": " + ec.message());
    if (found.empty())
        throw IoError("no trained models under " + output + " (expected outer_*/inner_*/model_best)");
    std::sort(found.begin(), found.end());

    std::vector<FoldModel> models;
    models.reserve(found.size());
    for (auto& [key, path] : found) {
        FoldModel fm;
        fm.outer = key.first;
        fm.inner = key.second;
        fm.checkpoint = load_checkpoint(path);
        const ArchSpec& spec = fm.checkpoint.model.spec;
        if (spec.dims != cfg.model.dims || spec.in_channels != cfg.model.in_channels ||
            spec.classes != cfg.model.classes)
            throw ConfigError(path + " holds a " + std::to_string(spec.dims) + "D model with " +
                              std::to_string(spec.in_channels) + " input channels and " +
                              std::to_string(spec.classes) + " classes, but the config describes " +
                              std::to_string(cfg.model.dims) + "D/" + std::to_string(cfg.model.in_channels) +
                              "/" + std::to_string(cfg.model.classes));
        models.push_back(std::move(fm));
    }
    return models;
}

Image probability_image(const PredictionMap& map, const ImageGeometry& geometry) {
    Image img;
    img.extents = map.extents;
    img.channels = map.classes;
    img.values = map.values;
    img.geometry = geometry;
    return img;
}

std::vector<double> scalar_forward(ModelGraph& model, const Image& image) {
    const Image ready = embed_min(image, 32);
    Shape shape = {1, ready.channels};
    for (auto e : ready.extents) shape.push_back(e);
    Tensor out = model.forward(Tensor::from_data(std::move(shape), ready.values), nullptr);
    const Shape expected = {1, model.spec.classes};
    if (out.shape() != expected)
        throw DimensionError("model produced " + shape_str(out.shape()) + " for a whole subject; expected " +
                             shape_str(expected));
    auto v = out.values();
    return std::vector<double>(v.begin(), v.end());
}

bool is_pyramid_subject(const SubjectRecord& record) {
    return record.channel_paths.size() == 1 && fs::is_directory(record.channel_paths.front()) &&
           fs::exists(fs::path(record.channel_paths.front()) / "pyramid.meta");
}

// Mines tissue coordinates at the coarsest level, forwards every fold model
// over the mined patches, and averages the fold probability maps.
DiceReport infer_pyramid_subject(const SubjectRecord& record, std::vector<FoldModel>& models,
                                 const PipelineConfig& cfg, const std::string& predictions_dir) {
    const TiledImage tiled = read_pyramid(record.channel_paths.front());
    const TissueMask mask = tissue_mask(tiled, tiled.level_count() - 1);
    const CoordinateList coords =
        mine_patches(tiled, mask, cfg.patch_size, cfg.overlap, kMinedTissueFraction, log_line);
    write_coordinate_list(predictions_dir + "/" + record.subject_id + "_coordinates.csv", coords);

    std::vector<PredictionMap> fold_maps;
    fold_maps.reserve(models.size());
    for (auto& fm : models)
        fold_maps.push_back(tiled_infer(fm.checkpoint.model, tiled, coords, cfg.patch_size).prediction);
    PredictionMap combined = aggregate_segmentation(fold_maps);
    Image labels = argmax_labels(combined);
    labels.geometry = tiled.level(0).geometry;
    write_image(labels, predictions_dir + "/" + record.subject_id + "_labels.mha");
    write_image(probability_image(combined, tiled.level(0).geometry),
                predictions_dir + "/" + record.subject_id + "_probabilities.mha");

    Image gt = read_image(std::get<std::string>(record.target));
    if (gt.extents != labels.extents)
        throw ValidationError("subject " + record.subject_id + ": mask extents " + shape_str(gt.extents) +
                              " do not match level 0 extents " + shape_str(labels.extents));
    return dice_per_class(labels, gt, cfg.model.classes);
}

int cmd_infer(const CommonArgs& args, std::string& stage) {
    LoadedExperiment exp = load_experiment(args, stage);
    stage = "loading trained models from " + args.output;
    std::vector<FoldModel> models = load_fold_models(args.output, exp.cfg);
    log_line("loaded " + std::to_string(models.size()) + " fold models");

    const std::string predictions_dir = args.output + "/predictions";
    std::error_code ec;
    fs::create_directories(predictions_dir, ec);
    if (ec) throw IoError("cannot create directory " + predictions_dir + ": " + ec.message());

    std::ofstream results(args.output + "/results.csv", std::ios::binary);
    if (!results) throw IoError("cannot write " + args.output + "/results.csv");

    const std::int64_t classes = exp.cfg.model.classes;
    if (exp.cfg.task == Task::segmentation) {
        results << "subject_id";
        for (std::int64_t c = 0; c < classes; ++c) results << ",dice_" << c;
        results << ",dice_foreground\n";
        std::vector<double> sums(static_cast<std::size_t>(classes) + 1, 0);
        for (const auto& record : exp.records) {
            stage = "running inference on subject '" + record.subject_id + "'";
            DiceReport report;
            if (is_pyramid_subject(record)) {
                report = infer_pyramid_subject(record, models, exp.cfg, predictions_dir);
            } else {
                LoadedSubject subject = load_subject(record, ManifestTask::segmentation);
                subject = preprocess_subject(subject, exp.cfg.preprocessing);
                std::vector<PredictionMap> fold_maps;
                fold_maps.reserve(models.size());
                for (auto& fm : models)
                    fold_maps.push_back(sliding_window_infer(fm.checkpoint.model, subject.image, exp.cfg.patch_size,
                                                             exp.cfg.overlap, exp.cfg.stitch_mode, log_line)
                                            .prediction);
                PredictionMap combined = aggregate_segmentation(fold_maps);
                Image labels = argmax_labels(combined);
                labels.geometry = subject.image.geometry;
                write_image(labels, predictions_dir + "/" + record.subject_id + "_labels.mha");
                write_image(probability_image(combined, subject.image.geometry),
                            predictions_dir + "/" + record.subject_id + "_probabilities.mha");
                report = dice_per_class(labels, *subject.mask, classes);
            }
            results << record.subject_id;
            for (std::int64_t c = 0; c < classes; ++c) {
                results << ',' << detail::format_double(report.per_class[static_cast<std::size_t>(c)]);
                sums[static_cast<std::size_t>(c)] += report.per_class[static_cast<std::size_t>(c)];
            }
            results << ',' << detail::format_double(report.foreground_macro) << '\n';
            sums.back() += report.foreground_macro;
            log_line("subject '" + record.subject_id + "': foreground dice " +
                     detail::format_double(report.foreground_macro));
        }
        const double n = static_cast<double>(exp.records.size());
        results << "aggregate";
        for (auto s : sums) results << ',' << detail::format_double(s / n);
        results << '\n';
    } else {
        const bool regression = exp.cfg.task == Task::regression;
        results << (regression ? "subject_id,prediction,target,squared_error\n"
                               : "subject_id,prediction,target,correct\n");
        double aggregate = 0;
        for (const auto& record : exp.records) {
            stage = "running inference on subject '" + record.subject_id + "'";
            LoadedSubject subject = load_subject(record, manifest_task(exp.cfg.task));
            subject = preprocess_subject(subject, exp.cfg.preprocessing);
            if (regression) {
                std::vector<double> fold_values;
                for (auto& fm : models) fold_values.push_back(scalar_forward(fm.checkpoint.model, subject.image)[0]);
                const double prediction = aggregate_regression(fold_values);
                const double err = (prediction - subject.scalar_target) * (prediction - subject.scalar_target);
                aggregate += err;
                results << record.subject_id << ',' << detail::format_double(prediction) << ','
                        << detail::format_double(subject.scalar_target) << ',' << detail::format_double(err) << '\n';
                log_line("subject '" + record.subject_id + "': prediction " + detail::format_double(prediction) +
                         ", target " + detail::format_double(subject.scalar_target));
            } else {
                std::vector<std::vector<double>> fold_probs;
                for (auto& fm : models) fold_probs.push_back(scalar_forward(fm.checkpoint.model, subject.image));
                const std::int64_t predicted = aggregate_classification(fold_probs);
                const std::int64_t target = static_cast<std::int64_t>(subject.scalar_target);
                const int correct = predicted == target ? 1 : 0;
                aggregate += correct;
                results << record.subject_id << ',' << predicted << ',' << target << ',' << correct << '\n';
                log_line("subject '" + record.subject_id + "': class " + std::to_string(predicted) + ", target " +
                         std::to_string(target));
            }
        }
        results << "aggregate,,," << detail::format_double(aggregate / static_cast<double>(exp.records.size()))
                << '\n';
    }
    results.flush();
    if (!results) throw IoError("failed while writing " + args.output + "/results.csv");
    log_line("wrote " + args.output + "/results.csv");
    return 0;
}

int cmd_preview(const CommonArgs& args, std::string& stage) {
    LoadedExperiment exp = load_experiment(args, stage);
    const SubjectRecord& record = exp.records.front();
    if (is_pyramid_subject(record))
        throw ConfigError("preview needs a raster subject, but '" + record.subject_id + "' is a pyramid bundle");

    stage = "previewing subject '" + record.subject_id + "'";
    LoadedSubject subject = load_subject(record, manifest_task(exp.cfg.task));
    subject = preprocess_subject(subject, exp.cfg.preprocessing);

    Sample before;
    before.image = subject.image;
    before.mask = subject.mask;

    // Every configured augmentation is applied unconditionally so the output
    // actually shows each transform; training draws them by probability.
    Sample after = before;
    Rng rng(exp.cfg.seed);
    for (const auto& entry : exp.cfg.augmentation.entries) after = apply_entry(entry, after, rng);
    if (exp.cfg.augmentation.entries.empty()) log_line("no augmentations configured; after equals before");

    const std::string preview_dir = args.output + "/preview";
    std::error_code ec;
    fs::create_directories(preview_dir, ec);
    if (ec) throw IoError("cannot create directory " + preview_dir + ": " + ec.message());

    const std::string base = preview_dir + "/" + record.subject_id;
    write_image(before.image, base + "_before.mha");
    write_image(after.image, base + "_after.mha");
    if (before.mask) write_image(*before.mask, base + "_mask_before.mha");
    if (after.mask) write_image(*after.mask, base + "_mask_after.mha");
    log_line("wrote preview images for subject '" + record.subject_id + "' into " + preview_dir);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"config-driven training and inference for patch-based medical imaging models"};
    app.require_subcommand(1);

    CommonArgs split_args, train_args, infer_args, preview_args;
    std::string fold_arg;
    std::int64_t parallel = 1;

    CLI::App* split_cmd = app.add_subcommand("split", "write the cross-validation split plan");
    add_common_flags(split_cmd, split_args);
    CLI::App* train_cmd = app.add_subcommand("train", "train every fold of the split plan");
    add_common_flags(train_cmd, train_args);
    train_cmd->add_option("--fold", fold_arg, "train a single fold, OUTER:INNER");
    train_cmd->add_option("--parallel", parallel, "number of concurrent fold processes")
        ->check(CLI::PositiveNumber);
    CLI::App* infer_cmd = app.add_subcommand("infer", "run trained fold models over a manifest");
    add_common_flags(infer_cmd, infer_args);
    CLI::App* preview_cmd = app.add_subcommand("preview", "write before/after augmentation images");
    add_common_flags(preview_cmd, preview_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n"
                  << "run '" << (argc > 0 ? argv[0] : "patchwork") << " --help' for usage\n";
        return 2;
    }

    std::string stage = "starting";
    try {
        if (split_cmd->parsed()) return cmd_split(split_args, stage);
        if (train_cmd->parsed()) return cmd_train(train_args, fold_arg, parallel, argv[0], stage);
        if (infer_cmd->parsed()) return cmd_infer(infer_args, stage);
        return cmd_preview(preview_args, stage);
    } catch (const Error& e) {
        std::cerr << "error while " << stage << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error while " << stage << ": " << e.what() << "\n";
        return 1;
    }
}
