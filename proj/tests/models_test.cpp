#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "patchwork/losses.hpp"
#include "patchwork/models.hpp"
#include "support.hpp"

using namespace patchwork;
using testsupport::max_abs_diff;
using testsupport::random_tensor;

namespace {

ArchSpec seg_spec(Architecture arch, std::int64_t dims = 2, std::int64_t base = 4, std::int64_t depth = 3) {
    ArchSpec s;
    s.architecture = arch;
    s.dims = dims;
    s.in_channels = 1;
    s.classes = 2;
    s.base_filters = base;
    s.depth = depth;
    s.final_activation = FinalActivation::softmax;
    return s;
}

// Independent parameter tally for the plain UNet layout: two 3x3 conv units
// with per-channel norm per block, transpose-conv upsampling, 1x1 head.
std::int64_t unet_param_oracle(std::int64_t dims, std::int64_t in_ch, std::int64_t classes,
                               std::int64_t base, std::int64_t depth) {
    const std::int64_t k3 = dims == 2 ? 9 : 27;
    const std::int64_t k2 = dims == 2 ? 4 : 8;
    auto block = [&](std::int64_t cin, std::int64_t cout) {
        const auto conv1 = cout * cin * k3 + cout;
        const auto conv2 = cout * cout * k3 + cout;
        const auto norms = 2 * cout + 2 * cout;
        return conv1 + conv2 + norms;
    };
    std::int64_t total = 0;
    std::int64_t prev = in_ch;
    for (std::int64_t i = 0; i < depth; ++i) {
        const auto c = base << i;
        total += block(prev, c);
        prev = c;
    }
    for (std::int64_t i = depth - 2; i >= 0; --i) {
        const auto c = base << i;
        total += (2 * c) * c * k2;  // upsampling transpose conv, no bias
        total += block(2 * c, c);
    }
    total += classes * base * 1 + classes; // 1x1 head
    return total;
}

std::int64_t count_nonzero_grads(ModelGraph& model, const Tensor& x, const Tensor& target, LossKind kind) {
    Tape tape;
    auto pred = model.forward(x, &tape);
    auto loss = compute_loss(pred, target, kind, &tape);
    backward(tape, loss, *model.params);
    std::int64_t dead = 0;
    for (const auto& p : model.params->params()) {
        bool any = false;
        for (auto g : p.grad) {
            if (g != real_t(0)) {
                any = true;
                break;
            }
        }
        if (!any) {
            ++dead;
            MESSAGE("zero gradient for parameter ", p.name);
        }
    }
    return dead;
}

Tensor one_hot_target(std::int64_t b, std::int64_t classes, Coords spatial, std::uint64_t seed) {
    Shape s{b, classes};
    s.insert(s.end(), spatial.begin(), spatial.end());
    Tensor t(s);
    const auto plane = product(spatial);
    Rng rng(seed);
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t i = 0; i < plane; ++i) {
            const auto c = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
            t.values()[static_cast<std::size_t>((bi * classes + c) * plane + i)] = 1;
        }
    return t;
}

} // namespace

TEST_CASE("unet shape contract and parameter count oracle") {
    auto model = build_model(seg_spec(Architecture::unet), Task::segmentation, 1);
    auto x = random_tensor({2, 1, 32, 32}, 10);
    auto y = model.forward(x, nullptr);
    CHECK(y.shape() == Shape{2, 2, 32, 32});
    CHECK(model.params->count_values() == unet_param_oracle(2, 1, 2, 4, 3));

    auto m3 = build_model(seg_spec(Architecture::unet, 3), Task::segmentation, 1);
    auto x3 = random_tensor({1, 1, 8, 8, 8}, 11);
    CHECK(m3.forward(x3, nullptr).shape() == Shape{1, 2, 8, 8, 8});
    CHECK(m3.params->count_values() == unet_param_oracle(3, 1, 2, 4, 3));
}

TEST_CASE("residual flag keeps shapes and adds projections") {
    auto plain = build_model(seg_spec(Architecture::unet), Task::segmentation, 2);
    auto res = build_model(seg_spec(Architecture::resunet), Task::segmentation, 2);
    auto x = random_tensor({1, 1, 16, 16}, 12);
    CHECK(plain.forward(x, nullptr).shape() == res.forward(x, nullptr).shape());
    CHECK(res.params->count_values() > plain.params->count_values());
}

TEST_CASE("uinc inception blocks: path split and gradient flow") {
    auto model = build_model(seg_spec(Architecture::uinc, 2, 6), Task::segmentation, 3);
    auto x = random_tensor({1, 1, 16, 16}, 13);
    CHECK(model.forward(x, nullptr).shape() == Shape{1, 2, 16, 16});

    // 6 filters split 2/2/2 over the 1x1 / 3x3 / 5x5 paths
    CHECK(model.params->get("enc0.p1.c.w").value.shape() == Shape{2, 1, 1, 1});
    CHECK(model.params->get("enc0.p3.c.w").value.shape() == Shape{2, 1, 3, 3});
    CHECK(model.params->get("enc0.p5.c.w").value.shape() == Shape{2, 1, 5, 5});
    // 8 filters split 2/4/2, remainder to the 3x3 path
    auto m8 = build_model(seg_spec(Architecture::uinc, 2, 8), Task::segmentation, 3);
    CHECK(m8.params->get("enc0.p1.c.w").value.shape()[0] == 2);
    CHECK(m8.params->get("enc0.p3.c.w").value.shape()[0] == 4);
    CHECK(m8.params->get("enc0.p5.c.w").value.shape()[0] == 2);

    auto target = one_hot_target(1, 2, {16, 16}, 14);
    CHECK(count_nonzero_grads(model, x, target, LossKind::dice) == 0);
}

TEST_CASE("fcn upsamples encoder features and stays smaller than unet") {
    auto fcn = build_model(seg_spec(Architecture::fcn), Task::segmentation, 4);
    auto unet = build_model(seg_spec(Architecture::unet), Task::segmentation, 4);
    auto x = random_tensor({1, 1, 32, 32}, 15);
    CHECK(fcn.forward(x, nullptr).shape() == Shape{1, 2, 32, 32});
    CHECK(fcn.params->count_values() < unet.params->count_values());

    auto f3 = build_model(seg_spec(Architecture::fcn, 3), Task::segmentation, 4);
    auto x3 = random_tensor({1, 1, 16, 16, 16}, 16);
    CHECK(f3.forward(x3, nullptr).shape() == Shape{1, 2, 16, 16, 16});
}

TEST_CASE("vgg layer tallies and heads") {
    ArchSpec spec = seg_spec(Architecture::vgg16);
    spec.final_activation = FinalActivation::softmax;
    spec.classes = 3;
    auto model = build_model(spec, Task::classification, 5);
    int convs = 0, denses = 0;
    for (const auto& p : model.params->params()) {
        if (p.name.starts_with("conv") && p.name.ends_with(".w")) ++convs;
        if (p.name.starts_with("fc") && p.name.ends_with(".w")) ++denses;
    }
    CHECK(convs == 13);
    CHECK(denses == 3);

    auto x = random_tensor({2, 1, 32, 32}, 17);
    auto y = model.forward(x, nullptr);
    REQUIRE(y.shape() == Shape{2, 3});
    for (std::int64_t b = 0; b < 2; ++b) {
        double s = 0;
        for (std::int64_t c = 0; c < 3; ++c) s += y.values()[static_cast<std::size_t>(b * 3 + c)];
        CHECK(std::abs(s - 1.0) < 1e-9);
    }

    ArchSpec reg = seg_spec(Architecture::vgg11);
    reg.classes = 1;
    reg.final_activation = FinalActivation::none;
    auto rmodel = build_model(reg, Task::regression, 6);
    CHECK(rmodel.forward(random_tensor({3, 1, 32, 32}, 18), nullptr).shape() == Shape{3, 1});

    int expected[] = {8, 10, 13, 16};
    Architecture archs[] = {Architecture::vgg11, Architecture::vgg13, Architecture::vgg16, Architecture::vgg19};
    for (int i = 0; i < 4; ++i) {
        ArchSpec s = reg;
        s.architecture = archs[i];
        auto m = build_model(s, Task::regression, 7);
        int n = 0;
        for (const auto& p : m.params->params())
            if (p.name.starts_with("conv") && p.name.ends_with(".w")) ++n;
        CHECK(n == expected[i]);
    }
}

TEST_CASE("zero final layer gives constant output") {
    ArchSpec reg = seg_spec(Architecture::vgg11);
    reg.classes = 1;
    reg.final_activation = FinalActivation::none;
    auto model = build_model(reg, Task::regression, 8);
    auto& w = model.params->get("fc3.w").value;
    for (auto& v : w.values()) v = 0;
    model.params->get("fc3.b").value.values()[0] = real_t(0.7);
    auto y = model.forward(random_tensor({4, 1, 32, 32}, 19), nullptr);
    for (auto v : y.values()) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("forward is deterministic and finite across architectures") {
    const Architecture archs[] = {Architecture::unet, Architecture::resunet, Architecture::uinc,
                                  Architecture::fcn};
    auto x = random_tensor({1, 1, 16, 16}, 20);
    for (auto a : archs) {
        auto model = build_model(seg_spec(a), Task::segmentation, 9);
        auto y1 = model.forward(x, nullptr);
        auto y2 = model.forward(x, nullptr);
        CHECK(max_abs_diff(y1.values(), y2.values()) == 0);
        for (auto v : y1.values()) CHECK(std::isfinite(double(v)));
    }
    ArchSpec vspec = seg_spec(Architecture::vgg11);
    vspec.classes = 2;
    auto vm = build_model(vspec, Task::classification, 9);
    auto vy = vm.forward(random_tensor({2, 1, 32, 32}, 21), nullptr);
    for (auto v : vy.values()) CHECK(std::isfinite(double(v)));
}

TEST_CASE("same spec and seed build identical parameters") {
    auto a = build_model(seg_spec(Architecture::resunet), Task::segmentation, 1234);
    auto b = build_model(seg_spec(Architecture::resunet), Task::segmentation, 1234);
    auto c = build_model(seg_spec(Architecture::resunet), Task::segmentation, 1235);
    REQUIRE(a.params->params().size() == b.params->params().size());
    bool all_equal = true, any_diff_c = false;
    for (std::size_t i = 0; i < a.params->params().size(); ++i) {
        if (max_abs_diff(a.params->params()[i].value.values(), b.params->params()[i].value.values()) != 0)
            all_equal = false;
        if (max_abs_diff(a.params->params()[i].value.values(), c.params->params()[i].value.values()) != 0)
            any_diff_c = true;
    }
    CHECK(all_equal);
    CHECK(any_diff_c);
}

TEST_CASE("no dead subgraphs in any architecture") {
    auto x = random_tensor({2, 1, 16, 16}, 22);
    auto target = one_hot_target(2, 2, {16, 16}, 23);
    for (auto a : {Architecture::unet, Architecture::resunet, Architecture::uinc, Architecture::fcn}) {
        auto model = build_model(seg_spec(a), Task::segmentation, 24);
        CHECK(count_nonzero_grads(model, x, target, LossKind::dice) == 0);
    }
    ArchSpec vspec = seg_spec(Architecture::vgg11);
    vspec.classes = 2;
    vspec.batch_norm = true;
    auto vm = build_model(vspec, Task::classification, 25);
    Tensor ct({2, 2});
    ct.values()[0] = 1;
    ct.values()[3] = 1;
    CHECK(count_nonzero_grads(vm, random_tensor({2, 1, 32, 32}, 26), ct, LossKind::cross_entropy) == 0);
}

TEST_CASE("model input validation") {
    auto model = build_model(seg_spec(Architecture::unet), Task::segmentation, 27);
    CHECK_THROWS_AS(model.forward(random_tensor({1, 2, 16, 16}, 28), nullptr), DimensionError);
    CHECK_THROWS_WITH_AS(model.forward(random_tensor({1, 1, 10, 16}, 29), nullptr),
                         doctest::Contains("divisible by 4"), ConfigError);

    CHECK_THROWS_AS(build_model(seg_spec(Architecture::vgg11), Task::segmentation, 30), ConfigError);
    CHECK_THROWS_AS(build_model(seg_spec(Architecture::unet), Task::regression, 30), ConfigError);
    ArchSpec bad = seg_spec(Architecture::unet);
    bad.batch_norm = true;
    CHECK_THROWS_AS(build_model(bad, Task::segmentation, 30), ConfigError);
    ArchSpec d1 = seg_spec(Architecture::unet);
    d1.depth = 1;
    CHECK_THROWS_AS(build_model(d1, Task::segmentation, 30), ConfigError);
}

TEST_CASE("checkpoint round trip preserves everything") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "patchwork_ckpt_test";
    fs::create_directories(dir);
    const auto path = (dir / "model_latest").string();

    ArchSpec vspec = seg_spec(Architecture::vgg11);
    vspec.classes = 2;
    vspec.batch_norm = true;
    auto model = build_model(vspec, Task::classification, 31);
    // make running buffers non-trivial before saving
    Tape tape;
    auto pred = model.forward(random_tensor({2, 1, 32, 32}, 32), &tape);

    CheckpointMeta meta;
    meta.epoch = 3;
    meta.val_loss = 0.25;
    save_checkpoint(path, model, meta);

    auto loaded = load_checkpoint(path);
    CHECK(loaded.meta.epoch == 3);
    CHECK(loaded.meta.val_loss == 0.25);
    CHECK(loaded.meta.artifact_version == kArtifactVersion);
    CHECK(loaded.model.spec == vspec);
    CHECK(loaded.model.task == Task::classification);
    REQUIRE(loaded.model.params->params().size() == model.params->params().size());
    for (std::size_t i = 0; i < model.params->params().size(); ++i) {
        const auto& orig = model.params->params()[i];
        const auto& back = loaded.model.params->params()[i];
        CHECK(orig.name == back.name);
        CHECK(max_abs_diff(orig.value.values(), back.value.values()) == 0);
    }
    REQUIRE(loaded.model.params->buffers().size() == model.params->buffers().size());
    for (std::size_t i = 0; i < model.params->buffers().size(); ++i) {
        const auto& [name, data] = model.params->buffers()[i];
        const auto& [lname, ldata] = loaded.model.params->buffers()[i];
        CHECK(name == lname);
        CHECK(max_abs_diff({data.data(), data.size()}, {ldata.data(), ldata.size()}) == 0);
    }

    // inference on the reloaded model must reproduce the original bitwise
    auto x = random_tensor({1, 1, 32, 32}, 33);
    CHECK(max_abs_diff(model.forward(x, nullptr).values(), loaded.model.forward(x, nullptr).values()) == 0);

    // corrupted magic is rejected
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "NOPE this is not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing").string()), IoError);
    fs::remove_all(dir);
}
