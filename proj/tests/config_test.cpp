#include <string>

#include "doctest.h"
#include "patchwork/config.hpp"

using namespace patchwork;

namespace {

const char* kMinimalSeg = R"(
task: segmentation
model:
  architecture: resunet
patch_size: [16, 16]
loss: dice
epochs: 2
learning_rate: 0.01
)";

PipelineConfig parse(const std::string& text) { return parse_config_text(text, "test-config"); }

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("minimal config parses with defaults filled") {
    PipelineConfig cfg = parse(kMinimalSeg);
    CHECK(cfg.version_min == kArtifactVersion);
    CHECK(cfg.version_max == kArtifactVersion);
    CHECK(cfg.task == Task::segmentation);
    CHECK(cfg.model.architecture == Architecture::resunet);
    CHECK(cfg.model.dims == 2);
    CHECK(cfg.model.in_channels == 1);
    CHECK(cfg.model.classes == 2);
    CHECK(cfg.model.base_filters == 8);
    CHECK(cfg.model.depth == 3);
    CHECK(cfg.model.final_activation == FinalActivation::softmax);
    CHECK(cfg.model.batch_norm == false);
    CHECK(cfg.patch_size == Coords{16, 16});
    CHECK(cfg.batch_size == 1);
    CHECK(cfg.epochs == 2);
    CHECK(cfg.learning_rate == 0.01);
    CHECK(cfg.scheduler.kind == SchedulerSpec::Kind::constant);
    CHECK(cfg.loss == LossKind::dice);
    CHECK(cfg.momentum == 0.9);
    CHECK(cfg.k_outer == 5);
    CHECK(cfg.k_inner == 5);
    CHECK(cfg.single_fold == false);
    CHECK(cfg.preprocessing.empty());
    CHECK(cfg.augmentation.entries.empty());
    CHECK(cfg.queue.samples_per_volume == 1);
    CHECK(cfg.queue.max_queue_length == 32);
    CHECK(cfg.queue.workers == 1);
    CHECK(cfg.queue.shuffle == true);
    CHECK(cfg.sampler.foreground_biased == false);
    CHECK(cfg.sampler.foreground_ratio == 0.5);
    CHECK(cfg.sampler.pad == PadPolicy::zero);
    CHECK(cfg.overlap == 0.0);
    CHECK(cfg.stitch_mode == StitchMode::average);
    CHECK(cfg.seed == 0);
}

TEST_CASE("resolved config renders and re-parses to identical bytes") {
    PipelineConfig cfg = parse(kMinimalSeg);
    const std::string once = render_config(cfg);
    const std::string twice = render_config(parse(once));
    CHECK(once == twice);
}

TEST_CASE("a config using every section round-trips") {
    const std::string text = R"(
version_min: 0.1.0
version_max: 0.1.0
task: segmentation
model:
  architecture: unet
  dims: 3
  in_channels: 2
  classes: 3
  base_filters: 4
  depth: 2
  final_activation: softmax
  batch_norm: false
patch_size: [8, 8, 8]
batch_size: 3
epochs: 7
learning_rate: 0.02
scheduler:
  kind: step
  gamma: 0.5
  period: 3
loss: dice
optimizer:
  kind: sgd
  momentum: 0.8
nested_training:
  testing: 3
  validation: 4
  single_fold: true
data_preprocessing:
  - clip:
      min: -100
      max: 300
  - threshold:
      min: 0
      max: 250
  - rescale:
      min: 0
      max: 1
  - zscore:
      mode: nonzero
  - resample:
      spacing: [1.5, 2, 1]
  - crop_zero_planes
data_augmentation:
  flip:
    probability: 0.5
    axes: [0, 2]
  noise:
    probability: 0.25
    noise_mean: 0
    noise_sigma: 0.05
  gamma:
    probability: 0.3
    gamma_min: 0.8
    gamma_max: 1.2
  spike:
    probability: 0.1
    num_spikes: 2
    spike_intensity: 0.4
q_samples_per_volume: 4
q_max_length: 16
q_num_workers: 2
q_shuffle: false
sampler:
  foreground_biased: true
  foreground_ratio: 0.75
  pad: reflect
inference:
  overlap: 0.25
  mode: crop
seed: 99
)";
    PipelineConfig cfg = parse(text);
    CHECK(cfg.model.dims == 3);
    CHECK(cfg.model.in_channels == 2);
    CHECK(cfg.scheduler.kind == SchedulerSpec::Kind::step);
    CHECK(cfg.scheduler.gamma == 0.5);
    CHECK(cfg.scheduler.period == 3);
    CHECK(cfg.momentum == 0.8);
    CHECK(cfg.k_outer == 3);
    CHECK(cfg.k_inner == 4);
    CHECK(cfg.single_fold == true);
    REQUIRE(cfg.preprocessing.size() == 6);
    CHECK(cfg.preprocessing[0].kind == PreprocessStep::Kind::clip);
    CHECK(cfg.preprocessing[0].min == -100);
    CHECK(cfg.preprocessing[1].kind == PreprocessStep::Kind::threshold);
    CHECK(cfg.preprocessing[2].kind == PreprocessStep::Kind::rescale);
    CHECK(cfg.preprocessing[3].zscore_mode == ZscoreMode::nonzero);
    CHECK(cfg.preprocessing[4].spacing == std::vector<double>{1.5, 2, 1});
    CHECK(cfg.preprocessing[5].kind == PreprocessStep::Kind::crop_zero_planes);
    REQUIRE(cfg.augmentation.entries.size() == 4);
    CHECK(cfg.augmentation.entries[0].kind == AugmentKind::flip);
    CHECK(cfg.augmentation.entries[0].probability == 0.5);
    CHECK(cfg.augmentation.entries[0].axes == Coords{0, 2});
    CHECK(cfg.augmentation.entries[1].kind == AugmentKind::noise);
    CHECK(cfg.augmentation.entries[1].noise_sigma == 0.05);
    CHECK(cfg.augmentation.entries[2].kind == AugmentKind::gamma);
    CHECK(cfg.augmentation.entries[3].kind == AugmentKind::spike);
    CHECK(cfg.augmentation.entries[3].num_spikes == 2);
    CHECK(cfg.queue.workers == 2);
    CHECK(cfg.queue.shuffle == false);
    CHECK(cfg.sampler.pad == PadPolicy::reflect);
    CHECK(cfg.overlap == 0.25);
    CHECK(cfg.stitch_mode == StitchMode::crop);
    CHECK(cfg.seed == 99);

    const std::string once = render_config(cfg);
    CHECK(render_config(parse(once)) == once);
}

TEST_CASE("missing mandatory keys name the key and give an example") {
    auto drop_line = [](const std::string& needle) {
        std::string text = kMinimalSeg;
        const auto pos = text.find(needle);
        REQUIRE(pos != std::string::npos);
        const auto end = text.find('\n', pos);
        text.erase(pos, end - pos + 1);
        return text;
    };
    for (const char* key : {"task", "patch_size", "loss", "epochs", "learning_rate"}) {
        CAPTURE(key);
        const std::string msg = message_of([&] { parse(drop_line(key)); });
        CHECK(msg.find("missing mandatory key") != std::string::npos);
        CHECK(msg.find(key) != std::string::npos);
        CHECK(msg.find("example") != std::string::npos);
    }
    const std::string no_arch = message_of([&] { parse(drop_line("architecture")); });
    CHECK(no_arch.find("architecture") != std::string::npos);
    CHECK(no_arch.find("example") != std::string::npos);
    std::string no_model = kMinimalSeg;
    const auto pos = no_model.find("model:");
    no_model.erase(pos, no_model.find("patch_size") - pos);
    const std::string msg = message_of([&] { parse(no_model); });
    CHECK(msg.find("'model'") != std::string::npos);
}

TEST_CASE("unknown keys are rejected wherever they appear") {
    const std::string top = std::string(kMinimalSeg) + "lraning_rate: 0.1\n";
    CHECK(message_of([&] { parse(top); }).find("lraning_rate") != std::string::npos);

    std::string in_model = kMinimalSeg;
    in_model.insert(in_model.find("patch_size"), "  dpeth: 3\n");
    CHECK(message_of([&] { parse(in_model); }).find("dpeth") != std::string::npos);

    const std::string sched = std::string(kMinimalSeg) + "scheduler:\n  kind: constant\n  gamma: 0.5\n";
    CHECK(message_of([&] { parse(sched); }).find("gamma") != std::string::npos);

    const std::string aug = std::string(kMinimalSeg) + "data_augmentation:\n  flip:\n    sigma_min: 1\n";
    CHECK(message_of([&] { parse(aug); }).find("sigma_min") != std::string::npos);

    const std::string prep = std::string(kMinimalSeg) + "data_preprocessing:\n  - zscore:\n      window: 3\n";
    CHECK(message_of([&] { parse(prep); }).find("window") != std::string::npos);
}

TEST_CASE("version window is enforced against the artifact version") {
    const std::string too_new = std::string(kMinimalSeg) + "version_min: 99.0.0\nversion_max: 99.1.0\n";
    const std::string msg = message_of([&] { parse(too_new); });
    CHECK(msg.find("99.0.0") != std::string::npos);
    CHECK(msg.find(kArtifactVersion) != std::string::npos);

    const std::string too_old = std::string(kMinimalSeg) + "version_max: 0.0.1\nversion_min: 0.0.1\n";
    CHECK_THROWS_AS(parse(too_old), ConfigError);

    const std::string malformed = std::string(kMinimalSeg) + "version_min: '1.2'\n";
    CHECK_THROWS_AS(parse(malformed), ConfigError);

    const std::string inverted = std::string(kMinimalSeg) + "version_min: 0.2.0\nversion_max: 0.1.0\n";
    CHECK_THROWS_AS(parse(inverted), ConfigError);
}

TEST_CASE("loss and task compatibility is checked") {
    auto cfg_with = [](const std::string& task, const std::string& arch, const std::string& loss,
                       const std::string& extra_model = "") {
        return "task: " + task + "\nmodel:\n  architecture: " + arch + "\n" + extra_model +
               "patch_size: [32, 32]\nloss: " + loss + "\nepochs: 1\nlearning_rate: 0.01\n";
    };
    CHECK_THROWS_AS(parse(cfg_with("regression", "vgg11", "dice", "  classes: 1\n")), ConfigError);
    CHECK_THROWS_AS(parse(cfg_with("classification", "vgg11", "mse")), ConfigError);
    CHECK_THROWS_AS(parse(cfg_with("regression", "vgg11", "cross_entropy", "  classes: 1\n")), ConfigError);
    CHECK_THROWS_AS(parse(cfg_with("segmentation", "vgg11", "dice")), ConfigError);
    CHECK_THROWS_AS(parse(cfg_with("regression", "unet", "mse", "  classes: 1\n")), ConfigError);
    CHECK_NOTHROW(parse(cfg_with("regression", "vgg11", "mse")));
    CHECK_NOTHROW(parse(cfg_with("regression", "vgg11", "mse", "  classes: 1\n")));
    CHECK_THROWS_AS(parse(cfg_with("regression", "vgg11", "mse", "  classes: 2\n")), ConfigError);
    CHECK_NOTHROW(parse(cfg_with("classification", "vgg11", "cross_entropy")));
    CHECK_THROWS_AS(parse(cfg_with("classification", "vgg11", "cross_entropy", "  classes: 1\n")), ConfigError);
}

TEST_CASE("patch size must fit the architecture") {
    std::string deep = kMinimalSeg;
    deep.insert(deep.find("patch_size"), "  depth: 4\n");
    deep.replace(deep.find("[16, 16]"), 8, "[20, 20]");
    std::string msg = message_of([&] { parse(deep); });
    CHECK(msg.find("divisible") != std::string::npos);

    const std::string vgg_small = "task: classification\nmodel:\n  architecture: vgg11\npatch_size: [16, 16]\n"
                                  "loss: cross_entropy\nepochs: 1\nlearning_rate: 0.01\n";
    CHECK(message_of([&] { parse(vgg_small); }).find("32") != std::string::npos);

    std::string wrong_rank = kMinimalSeg;
    wrong_rank.replace(wrong_rank.find("[16, 16]"), 8, "[16]");
    CHECK_THROWS_AS(parse(wrong_rank), ConfigError);
}

TEST_CASE("scheduler parsing and learning-rate schedule") {
    const std::string scalar_form = std::string(kMinimalSeg) + "scheduler: constant\n";
    CHECK(parse(scalar_form).scheduler.kind == SchedulerSpec::Kind::constant);

    const std::string no_gamma = std::string(kMinimalSeg) + "scheduler:\n  kind: step\n  period: 5\n";
    CHECK(message_of([&] { parse(no_gamma); }).find("gamma") != std::string::npos);

    const std::string bad_gamma = std::string(kMinimalSeg) + "scheduler:\n  kind: step\n  gamma: 0\n  period: 5\n";
    CHECK_THROWS_AS(parse(bad_gamma), ConfigError);

    const std::string alien = std::string(kMinimalSeg) + "scheduler:\n  kind: cosine\n";
    CHECK_THROWS_AS(parse(alien), ConfigError);

    SchedulerSpec constant;
    CHECK(schedule_lr(0.3, constant, 0) == 0.3);
    CHECK(schedule_lr(0.3, constant, 100) == 0.3);

    SchedulerSpec step{SchedulerSpec::Kind::step, 0.5, 10};
    CHECK(schedule_lr(1.0, step, 0) == 1.0);
    CHECK(schedule_lr(1.0, step, 9) == 1.0);
    CHECK(schedule_lr(1.0, step, 10) == 0.5);
    CHECK(schedule_lr(1.0, step, 25) == 0.25);
    CHECK(schedule_lr(1.0, step, 30) == 0.125);
    CHECK_THROWS_AS(schedule_lr(1.0, SchedulerSpec{SchedulerSpec::Kind::step, 0.0, 5}, 3), ConfigError);
    CHECK_THROWS_AS(schedule_lr(1.0, constant, -1), ContractError);
}

TEST_CASE("preprocessing list validation") {
    const std::string both = std::string(kMinimalSeg) +
                             "data_preprocessing:\n  - resample:\n      spacing: [1, 1]\n      extents: [4, 4]\n";
    CHECK_THROWS_AS(parse(both), ConfigError);
    const std::string neither = std::string(kMinimalSeg) + "data_preprocessing:\n  - resample: {}\n";
    CHECK_THROWS_AS(parse(neither), ConfigError);
    const std::string alien = std::string(kMinimalSeg) + "data_preprocessing:\n  - sharpen\n";
    CHECK(message_of([&] { parse(alien); }).find("sharpen") != std::string::npos);
    const std::string wrong_len = std::string(kMinimalSeg) + "data_preprocessing:\n  - resample:\n      spacing: [1, 1, 1]\n";
    CHECK_THROWS_AS(parse(wrong_len), ConfigError);
    const std::string no_min = std::string(kMinimalSeg) + "data_preprocessing:\n  - clip:\n      max: 5\n";
    CHECK(message_of([&] { parse(no_min); }).find("min") != std::string::npos);
}

TEST_CASE("augmentation entries keep document order and reject junk") {
    const std::string text = std::string(kMinimalSeg) +
                             "data_augmentation:\n  gamma:\n  flip:\n    probability: 0.9\n  blur:\n";
    PipelineConfig cfg = parse(text);
    REQUIRE(cfg.augmentation.entries.size() == 3);
    CHECK(cfg.augmentation.entries[0].kind == AugmentKind::gamma);
    CHECK(cfg.augmentation.entries[0].probability == 0.35);
    CHECK(cfg.augmentation.entries[1].kind == AugmentKind::flip);
    CHECK(cfg.augmentation.entries[1].probability == 0.9);
    CHECK(cfg.augmentation.entries[2].kind == AugmentKind::blur);

    const std::string bad_kind = std::string(kMinimalSeg) + "data_augmentation:\n  emboss:\n";
    CHECK_THROWS_AS(parse(bad_kind), ConfigError);
    const std::string bad_prob = std::string(kMinimalSeg) + "data_augmentation:\n  flip:\n    probability: 1.5\n";
    CHECK_THROWS_AS(parse(bad_prob), ConfigError);
}

TEST_CASE("queue, sampler, and inference bounds") {
    CHECK_THROWS_AS(parse(std::string(kMinimalSeg) + "q_num_workers: 0\n"), ConfigError);
    CHECK_THROWS_AS(parse(std::string(kMinimalSeg) + "sampler:\n  foreground_ratio: 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse(std::string(kMinimalSeg) + "sampler:\n  pad: wrap\n"), ConfigError);
    CHECK_THROWS_AS(parse(std::string(kMinimalSeg) + "inference:\n  overlap: 1\n"), ConfigError);
    CHECK_THROWS_AS(parse(std::string(kMinimalSeg) + "inference:\n  mode: blend\n"), ConfigError);
    CHECK(parse(std::string(kMinimalSeg) + "seed: 1234\n").seed == 1234);
}

TEST_CASE("config file and text error channels") {
    CHECK_THROWS_AS(parse_config("/nonexistent/path/config.yaml"), IoError);
    const std::string msg = message_of([&] { parse_config_text("task: [unclosed", "my-origin"); });
    CHECK(msg.find("my-origin") != std::string::npos);
    CHECK_THROWS_AS(parse_config_text("- a\n- b\n", "seq"), ParseError);
    CHECK_THROWS_AS(parse_config_text("epochs: not_a_number\ntask: segmentation\nmodel:\n  architecture: unet\n"
                                      "patch_size: [16, 16]\nloss: dice\nlearning_rate: 0.01\n",
                                      "types"),
                    ConfigError);
}
