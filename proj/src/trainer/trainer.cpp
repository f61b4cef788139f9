#include "patchwork/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "patchwork/detail/numfmt.hpp"
#include "patchwork/errors.hpp"
#include "patchwork/losses.hpp"
#include "patchwork/ndindex.hpp"
#include "patchwork/optim.hpp"
#include "patchwork/preprocess.hpp"
#include "patchwork/rng.hpp"

namespace patchwork {

namespace {

using detail::format_double;

bool near(double a, double b) { return std::abs(a - b) <= 1e-6; }

// One-hot class planes from integral labels; planar [classes][n].
std::vector<real_t> one_hot_labels(std::span<const real_t> labels, std::int64_t classes, const std::string& subject) {
    const std::int64_t n = static_cast<std::int64_t>(labels.size());
    std::vector<real_t> out(static_cast<std::size_t>(classes * n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const real_t v = labels[static_cast<std::size_t>(i)];
        const std::int64_t label = std::llround(v);
        if (v != std::floor(v) || label < 0 || label >= classes)
            throw ValidationError("subject " + subject + ": mask label " + std::to_string(static_cast<double>(v)) +
                                  " is outside [0, " + std::to_string(classes) + ")");
        out[static_cast<std::size_t>(label * n + i)] = 1;
    }
    return out;
}

} // namespace

Image embed_min(const Image& image, std::int64_t min_extent) {
    bool needs = false;
    Coords target = image.extents;
    for (auto& e : target)
        if (e < min_extent) {
            e = min_extent;
            needs = true;
        }
    if (!needs) return image;
    Image out;
    out.geometry = image.geometry;
    out.extents = target;
    out.channels = image.channels;
    out.values.assign(static_cast<std::size_t>(product(target)) * image.channels, 0);
    const auto src_strides = row_major_strides(image.extents);
    const auto dst_strides = row_major_strides(target);
    for (std::int64_t c = 0; c < image.channels; ++c) {
        auto src = image.channel(c);
        auto dst = out.channel(c);
        Coords idx(image.extents.size(), 0);
        do {
            dst[flat_offset(idx, dst_strides)] = src[flat_offset(idx, src_strides)];
        } while (advance(idx, image.extents));
    }
    return out;
}

Tensor batch_inputs(const std::vector<Patch>& batch) {
    if (batch.empty()) throw ContractError("batch must not be empty");
    const Patch& first = batch.front();
    for (const Patch& p : batch)
        if (p.size != first.size || p.channels != first.channels)
            throw DimensionError("patches in one batch disagree in shape (subject " + p.subject_id + ")");
    Shape shape{static_cast<std::int64_t>(batch.size()), first.channels};
    for (auto e : first.size) shape.push_back(e);
    Tensor out(shape);
    auto dst = out.values();
    const std::size_t per = first.values.size();
    for (std::size_t n = 0; n < batch.size(); ++n) {
        if (batch[n].values.size() != per)
            throw DimensionError("patch value buffer of subject " + batch[n].subject_id + " has the wrong length");
        std::copy(batch[n].values.begin(), batch[n].values.end(), dst.begin() + n * per);
    }
    return out;
}

Tensor batch_targets(const std::vector<Patch>& batch, Task task, std::int64_t classes) {
    if (batch.empty()) throw ContractError("batch must not be empty");
    const std::int64_t n = static_cast<std::int64_t>(batch.size());
    if (task == Task::segmentation) {
        const Patch& first = batch.front();
        const std::int64_t plane = product(first.size);
        Shape shape{n, classes};
        for (auto e : first.size) shape.push_back(e);
        Tensor out(shape);
        auto dst = out.values();
        for (std::int64_t i = 0; i < n; ++i) {
            const Patch& p = batch[static_cast<std::size_t>(i)];
            if (!p.has_mask)
                throw ValidationError("subject " + p.subject_id + " has no mask but the task is segmentation");
            auto planes = one_hot_labels(p.mask_values, classes, p.subject_id);
            std::copy(planes.begin(), planes.end(), dst.begin() + static_cast<std::size_t>(i * classes * plane));
        }
        return out;
    }
    if (task == Task::regression) {
        Tensor out(Shape{n, 1});
        auto dst = out.values();
        for (std::int64_t i = 0; i < n; ++i) dst[static_cast<std::size_t>(i)] =
            static_cast<real_t>(batch[static_cast<std::size_t>(i)].scalar_target);
        return out;
    }
    Tensor out(Shape{n, classes});
    auto dst = out.values();
    for (std::int64_t i = 0; i < n; ++i) {
        const Patch& p = batch[static_cast<std::size_t>(i)];
        const double v = p.scalar_target;
        const std::int64_t label = std::llround(v);
        if (v != std::floor(v) || label < 0 || label >= classes)
            throw ValidationError("subject " + p.subject_id + ": class target " + std::to_string(v) +
                                  " is outside [0, " + std::to_string(classes) + ")");
        dst[static_cast<std::size_t>(i * classes + label)] = 1;
    }
    return out;
}

ValScore evaluate(ModelGraph& model, const std::vector<LoadedSubject>& subjects, const PipelineConfig& cfg) {
    if (subjects.empty()) throw ValidationError("evaluation needs at least one subject");
    double loss_sum = 0, metric_sum = 0;
    for (const LoadedSubject& s : subjects) {
        if (cfg.task == Task::segmentation) {
            if (!s.mask)
                throw ValidationError("subject " + s.subject_id + " has no mask but the task is segmentation");
            auto stitched = sliding_window_infer(model, s.image, cfg.patch_size, cfg.overlap, cfg.stitch_mode);
            Shape shape{1, cfg.model.classes};
            for (auto e : s.image.extents) shape.push_back(e);
            Tensor pred = Tensor::from_data(shape, stitched.prediction.values);
            Tensor target = Tensor::from_data(shape, one_hot_labels(s.mask->channel(0), cfg.model.classes, s.subject_id));
            loss_sum += compute_loss(pred, target, cfg.loss, nullptr).item();
            Image labels = argmax_labels(stitched.prediction);
            labels.geometry = s.mask->geometry;
            metric_sum += dice_per_class(labels, *s.mask, cfg.model.classes).foreground_macro;
        } else {
            const Image padded = embed_min(s.image, 32);
            Shape shape{1, padded.channels};
            for (auto e : padded.extents) shape.push_back(e);
            Tensor x = Tensor::from_data(shape, padded.values);
            Tensor out = model.forward(x, nullptr);
            if (cfg.task == Task::regression) {
                Tensor target = Tensor::from_data(Shape{1, 1}, {static_cast<real_t>(s.scalar_target)});
                const double loss = compute_loss(out, target, cfg.loss, nullptr).item();
                loss_sum += loss;
                metric_sum += mse_metric(out.values(), target.values());
            } else {
                std::vector<real_t> hot(static_cast<std::size_t>(cfg.model.classes), 0);
                const std::int64_t label = std::llround(s.scalar_target);
                if (s.scalar_target != std::floor(s.scalar_target) || label < 0 || label >= cfg.model.classes)
                    throw ValidationError("subject " + s.subject_id + ": class target " +
                                          std::to_string(s.scalar_target) + " is outside [0, " +
                                          std::to_string(cfg.model.classes) + ")");
                hot[static_cast<std::size_t>(label)] = 1;
                Tensor target = Tensor::from_data(Shape{1, cfg.model.classes}, std::move(hot));
                loss_sum += compute_loss(out, target, cfg.loss, nullptr).item();
                metric_sum += mse_metric(out.values(), target.values());
            }
        }
    }
    const double n = static_cast<double>(subjects.size());
    return {loss_sum / n, metric_sum / n};
}

LoadedSubject load_subject(const SubjectRecord& record, ManifestTask task) {
    LoadedSubject subject;
    subject.subject_id = record.subject_id;
    bool first = true;
    for (const std::string& path : record.channel_paths) {
        Image img = read_image(path);
        if (first) {
            subject.image = std::move(img);
            first = false;
            continue;
        }
        Image& base = subject.image;
        if (img.extents != base.extents)
            throw ValidationError("subject " + record.subject_id + ": channel file " + path + " has extents " +
                                  shape_str(img.extents) + " but earlier channels have " + shape_str(base.extents));
        for (std::size_t k = 0; k < base.extents.size(); ++k)
            if (!near(img.geometry.spacing[k], base.geometry.spacing[k]) ||
                !near(img.geometry.origin[k], base.geometry.origin[k]))
                throw ValidationError("subject " + record.subject_id + ": channel file " + path +
                                      " disagrees with earlier channels on spacing or origin");
        base.values.insert(base.values.end(), img.values.begin(), img.values.end());
        base.channels += img.channels;
    }
    if (first) throw ValidationError("subject " + record.subject_id + " lists no channel files");

    if (task == ManifestTask::segmentation) {
        const std::string& mask_path = std::get<std::string>(record.target);
        Image mask = read_image(mask_path);
        if (mask.channels != 1)
            throw ValidationError("subject " + record.subject_id + ": mask " + mask_path + " must have one channel");
        if (mask.extents != subject.image.extents)
            throw ValidationError("subject " + record.subject_id + ": mask extents " + shape_str(mask.extents) +
                                  " do not match image extents " + shape_str(subject.image.extents));
        subject.mask = std::move(mask);
    } else {
        subject.scalar_target = std::get<double>(record.target);
    }
    return subject;
}

LoadedSubject preprocess_subject(const LoadedSubject& subject, const std::vector<PreprocessStep>& steps) {
    LoadedSubject out = subject;
    for (const PreprocessStep& step : steps) {
        switch (step.kind) {
            case PreprocessStep::Kind::threshold:
                out.image = threshold(out.image, {step.min, step.max});
                break;
            case PreprocessStep::Kind::clip:
                out.image = clip(out.image, {step.min, step.max});
                break;
            case PreprocessStep::Kind::rescale:
                out.image = rescale(out.image, step.min, step.max);
                break;
            case PreprocessStep::Kind::zscore:
                out.image = zscore(out.image, step.zscore_mode);
                break;
            case PreprocessStep::Kind::resample: {
                const ResampleTarget target = step.spacing.empty() ? ResampleTarget::to_extents(step.extents)
                                                                   : ResampleTarget::to_spacing(step.spacing);
                out.image = resample(out.image, target, Interp::linear);
                if (out.mask) out.mask = resample(*out.mask, target, Interp::nearest);
                break;
            }
            case PreprocessStep::Kind::crop_zero_planes: {
                if (out.mask) {
                    auto result = crop_zero_planes(out.image, {*out.mask});
                    out.image = std::move(result.image);
                    out.mask = std::move(result.companions[0]);
                } else {
                    out.image = crop_zero_planes(out.image).image;
                }
                break;
            }
        }
    }
    return out;
}

FoldOutcome train_one_fold(const PipelineConfig& cfg, const std::vector<LoadedSubject>& train_subjects,
                           const std::vector<LoadedSubject>& val_subjects, const std::string& out_dir,
                           std::uint64_t fold_seed, const std::function<void(const std::string&)>& log) {
    cfg.validate();
    if (train_subjects.empty()) throw ValidationError("training needs at least one subject");
    if (val_subjects.empty()) throw ValidationError("validation needs at least one subject");
    for (const auto* group : {&train_subjects, &val_subjects})
        for (const LoadedSubject& s : *group) {
            if (s.image.channels != cfg.model.in_channels)
                throw ValidationError("subject " + s.subject_id + " has " + std::to_string(s.image.channels) +
                                      " channels but the model expects " + std::to_string(cfg.model.in_channels));
            if (cfg.task == Task::segmentation && !s.mask)
                throw ValidationError("subject " + s.subject_id + " has no mask but the task is segmentation");
        }

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

    FoldOutcome outcome;
    outcome.config_path = out_dir + "/resolved_config";
    outcome.latest_path = out_dir + "/model_latest";
    outcome.best_path = out_dir + "/model_best";
    outcome.logs_path = out_dir + "/logs.csv";
    write_resolved_config(cfg, outcome.config_path);

    ModelGraph model = build_model(cfg.model, cfg.task, derive_seed(fold_seed, 1));
    PatchQueue queue(train_subjects, cfg.patch_size, cfg.queue, cfg.sampler,
                     cfg.augmentation.entries.empty() ? nullptr : &cfg.augmentation, derive_seed(fold_seed, 2),
                     log);

    std::ofstream logs(outcome.logs_path, std::ios::binary);
    if (!logs) throw IoError("cannot write " + outcome.logs_path);
    logs << kLogsHeader << "\n";
    logs.flush();

    using clock = std::chrono::steady_clock;
    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = clock::now();
        const double lr = schedule_lr(cfg.learning_rate, cfg.scheduler, epoch);
        queue.begin_epoch(epoch);

        double train_sum = 0;
        std::int64_t seen = 0, batch_index = 0;
        std::vector<Patch> batch;
        for (;;) {
            batch.clear();
            while (static_cast<std::int64_t>(batch.size()) < cfg.batch_size) {
                auto p = queue.next();
                if (!p) break;
                batch.push_back(std::move(*p));
            }
            if (batch.empty()) break;
            Tensor x = batch_inputs(batch);
            Tensor y = batch_targets(batch, cfg.task, cfg.model.classes);
            Tape tape;
            Tensor pred = model.forward(x, &tape);
            Tensor loss = compute_loss(pred, y, cfg.loss, &tape);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw NumericError("training aborted: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index));
            backward(tape, loss, *model.params);
            sgd_step(*model.params, lr, cfg.momentum);
            train_sum += value * static_cast<double>(batch.size());
            seen += static_cast<std::int64_t>(batch.size());
            ++batch_index;
        }
        const double train_loss = train_sum / static_cast<double>(seen);

        ValScore val = evaluate(model, val_subjects, cfg);
        if (!std::isfinite(val.loss))
            throw NumericError("training aborted: non-finite validation loss at epoch " + std::to_string(epoch));

        const double seconds = std::chrono::duration<double>(clock::now() - t0).count();
        TrainLogRow row{epoch, train_loss, val.loss, val.metric, lr, seconds};
        outcome.rows.push_back(row);
        logs << epoch << ',' << format_double(train_loss) << ',' << format_double(val.loss) << ','
             << format_double(val.metric) << ',' << format_double(lr) << ',' << format_double(seconds) << "\n";
        logs.flush();
        if (!logs) throw IoError("failed while appending to " + outcome.logs_path);

        save_checkpoint(outcome.latest_path, model, {kArtifactVersion, epoch, val.loss});
        if (val.loss < outcome.best_val_loss) {
            outcome.best_val_loss = val.loss;
            outcome.best_epoch = epoch;
            save_checkpoint(outcome.best_path, model, {kArtifactVersion, epoch, val.loss});
        }
        if (log)
            log("epoch " + std::to_string(epoch) + ": train " + format_double(train_loss) + ", val " +
                format_double(val.loss) + ", metric " + format_double(val.metric));
    }
    return outcome;
}

} // namespace patchwork
