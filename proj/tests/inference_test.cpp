#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "patchwork/inference.hpp"
#include "patchwork/ndindex.hpp"
#include "patchwork/rng.hpp"
#include "support.hpp"

using namespace patchwork;
using testsupport::max_abs_diff;

namespace {

// Output depends on each voxel alone, so any stitching of overlapping patches
// must reproduce the whole-image forward exactly (in average mode).
ModelGraph voxelwise_model(std::int64_t in_channels, std::int64_t classes, std::int64_t dims) {
    ModelGraph m;
    m.spec.architecture = Architecture::fcn;
    m.spec.dims = dims;
    m.spec.in_channels = in_channels;
    m.spec.classes = classes;
    m.task = Task::segmentation;
    m.params = std::make_unique<ParamStore>();
    m.program = [in_channels, classes](const Tensor& x, bool, Tape*) {
        const Shape& s = x.shape();
        Shape out_shape = s;
        out_shape[1] = classes;
        Tensor out(out_shape);
        std::int64_t plane = 1;
        for (std::size_t k = 2; k < s.size(); ++k) plane *= s[k];
        auto xv = x.values();
        auto ov = out.values();
        const std::int64_t batch = s[0];
        for (std::int64_t n = 0; n < batch; ++n)
            for (std::int64_t v = 0; v < plane; ++v) {
                real_t mix = 0;
                for (std::int64_t c = 0; c < in_channels; ++c)
                    mix += xv[static_cast<std::size_t>((n * in_channels + c) * plane + v)];
                real_t z = 0;
                for (std::int64_t c = 0; c < classes; ++c) {
                    const real_t raw = std::sin(real_t(0.7) * mix + real_t(0.3) * static_cast<real_t>(c));
                    const real_t p = raw / 2 + real_t(0.5);
                    ov[static_cast<std::size_t>((n * classes + c) * plane + v)] = p;
                    z += p;
                }
                for (std::int64_t c = 0; c < classes; ++c)
                    ov[static_cast<std::size_t>((n * classes + c) * plane + v)] /= z;
            }
        return out;
    };
    return m;
}

ModelGraph constant_model(std::int64_t classes, std::int64_t dims, real_t value) {
    ModelGraph m;
    m.spec.architecture = Architecture::fcn;
    m.spec.dims = dims;
    m.spec.in_channels = 1;
    m.spec.classes = classes;
    m.task = Task::segmentation;
    m.params = std::make_unique<ParamStore>();
    m.program = [classes, value](const Tensor& x, bool, Tape*) {
        Shape out_shape = x.shape();
        out_shape[1] = classes;
        return Tensor(out_shape, value);
    };
    return m;
}

Image random_image(const Coords& extents, std::int64_t channels, std::uint64_t seed) {
    Image img = make_image(extents, channels);
    Rng rng(seed);
    for (auto& v : img.values) v = static_cast<real_t>(rng.uniform(-1.0, 1.0));
    return img;
}

Image label_image(const Coords& extents, const std::vector<real_t>& values) {
    Image img = make_image(extents, 1);
    img.values = values;
    return img;
}

std::vector<std::int64_t> expected_positions(std::int64_t extent, std::int64_t patch, double overlap) {
    const auto stride =
        std::max<std::int64_t>(1, std::llround(static_cast<double>(patch) * (1.0 - overlap)));
    std::vector<std::int64_t> pos;
    for (std::int64_t p = 0;; p += stride) {
        if (p + patch >= extent) {
            pos.push_back(extent - patch);
            break;
        }
        pos.push_back(p);
    }
    return pos;
}

} // namespace

TEST_CASE("average stitching of a voxelwise model matches whole-image forward") {
    auto model = voxelwise_model(2, 3, 2);
    const Coords extents{10, 14};
    Image img = random_image(extents, 2, 91);

    Shape whole_shape{1, 2, 10, 14};
    Tensor whole = Tensor::from_data(whole_shape, img.values);
    Tensor direct = model.forward(whole, nullptr);

    for (double overlap : {0.0, 0.25, 0.5}) {
        CAPTURE(overlap);
        auto result = sliding_window_infer(model, img, {4, 4}, overlap, StitchMode::average);
        REQUIRE(result.prediction.extents == extents);
        REQUIRE(result.prediction.classes == 3);
        CHECK(max_abs_diff(result.prediction.values, direct.values()) < 1e-9);
    }
}

TEST_CASE("crop stitching of a voxelwise model matches whole-image forward") {
    auto model = voxelwise_model(1, 2, 2);
    const Coords extents{8, 8};
    Image img = random_image(extents, 1, 17);
    Tensor whole = Tensor::from_data({1, 1, 8, 8}, img.values);
    Tensor direct = model.forward(whole, nullptr);

    for (double overlap : {0.0, 0.5}) {
        CAPTURE(overlap);
        auto result = sliding_window_infer(model, img, {4, 4}, overlap, StitchMode::crop);
        CHECK(max_abs_diff(result.prediction.values, direct.values()) < 1e-9);
        for (real_t c : result.counts.values) CHECK(c == 1);
    }
}

TEST_CASE("count map totals patches times patch volume in average mode") {
    auto model = constant_model(2, 2, 0.5);
    for (double overlap : {0.0, 0.5}) {
        CAPTURE(overlap);
        const Coords extents{10, 8};
        Image img = make_image(extents, 1);
        auto result = sliding_window_infer(model, img, {4, 4}, overlap, StitchMode::average);
        const auto rows = expected_positions(10, 4, overlap);
        const auto cols = expected_positions(8, 4, overlap);
        const double patches = static_cast<double>(rows.size() * cols.size());
        const double total = std::accumulate(result.counts.values.begin(), result.counts.values.end(), 0.0);
        CHECK(total == patches * 16.0);
        for (real_t v : result.prediction.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("crop regions tile exactly for a clamped final patch") {
    auto model = constant_model(1, 2, 1.0);
    Image img = make_image({10, 7}, 1);
    auto result = sliding_window_infer(model, img, {4, 4}, 0.5, StitchMode::crop);
    for (real_t c : result.counts.values) CHECK(c == 1);
    for (real_t v : result.prediction.values) CHECK(v == 1.0);
}

TEST_CASE("images smaller than the patch are padded, inferred, and cropped back") {
    auto model = voxelwise_model(1, 2, 2);
    Image img = random_image({3, 5}, 1, 7);
    std::vector<std::string> notes;
    auto result = sliding_window_infer(model, img, {4, 4}, 0.0, StitchMode::average,
                                       [&](const std::string& msg) { notes.push_back(msg); });
    REQUIRE(result.prediction.extents == Coords{3, 5});
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].find("zero-padding") != std::string::npos);

    Tensor whole = Tensor::from_data({1, 1, 3, 5}, img.values);
    Tensor direct = model.forward(whole, nullptr);
    CHECK(max_abs_diff(result.prediction.values, direct.values()) < 1e-9);
    for (real_t c : result.counts.values) CHECK(c >= 1);
}

TEST_CASE("sliding window works in 3d") {
    auto model = voxelwise_model(1, 2, 3);
    const Coords extents{6, 5, 7};
    Image img = random_image(extents, 1, 23);
    Tensor whole = Tensor::from_data({1, 1, 6, 5, 7}, img.values);
    Tensor direct = model.forward(whole, nullptr);
    auto result = sliding_window_infer(model, img, {4, 4, 4}, 0.25, StitchMode::average);
    CHECK(max_abs_diff(result.prediction.values, direct.values()) < 1e-9);
    auto crop = sliding_window_infer(model, img, {4, 4, 4}, 0.25, StitchMode::crop);
    CHECK(max_abs_diff(crop.prediction.values, direct.values()) < 1e-9);
    for (real_t c : crop.counts.values) CHECK(c == 1);
}

TEST_CASE("sliding window validates its inputs") {
    auto model = voxelwise_model(1, 2, 2);
    Image img = make_image({8, 8}, 1);
    CHECK_THROWS_AS(sliding_window_infer(model, img, {4, 4}, 1.0, StitchMode::average), ConfigError);
    CHECK_THROWS_AS(sliding_window_infer(model, img, {4, 4}, -0.1, StitchMode::average), ConfigError);
    CHECK_THROWS_AS(sliding_window_infer(model, img, {4}, 0.0, StitchMode::average), DimensionError);
    Image wrong_channels = make_image({8, 8}, 3);
    CHECK_THROWS_AS(sliding_window_infer(model, wrong_channels, {4, 4}, 0.0, StitchMode::average), DimensionError);

    ModelGraph flat;
    flat.spec.in_channels = 1;
    flat.spec.classes = 2;
    flat.params = std::make_unique<ParamStore>();
    flat.program = [](const Tensor& x, bool, Tape*) { return Tensor(Shape{x.shape()[0], 2}, 0.5); };
    CHECK_THROWS_AS(sliding_window_infer(flat, img, {4, 4}, 0.0, StitchMode::average), DimensionError);
}

TEST_CASE("stitch mode names round-trip and reject junk") {
    CHECK(stitch_mode_from_string("average") == StitchMode::average);
    CHECK(stitch_mode_from_string("crop") == StitchMode::crop);
    CHECK(stitch_mode_name(StitchMode::crop) == "crop");
    CHECK_THROWS_AS(stitch_mode_from_string("blend"), ConfigError);
}

TEST_CASE("fold aggregation averages probabilities and is order-invariant") {
    PredictionMap a{{2, 2}, 2, {0.8, 0.2, 0.4, 0.6, 0.2, 0.8, 0.6, 0.4}, true};
    PredictionMap b{{2, 2}, 2, {0.4, 0.6, 0.8, 0.2, 0.6, 0.4, 0.2, 0.8}, true};
    auto ab = aggregate_segmentation({a, b});
    auto ba = aggregate_segmentation({b, a});
    CHECK(ab.values == ba.values);
    CHECK(ab.values[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(ab.values[4] == doctest::Approx(0.4).epsilon(1e-12));

    PredictionMap c{{2, 3}, 2, std::vector<real_t>(12, 0.5), true};
    CHECK_THROWS_AS(aggregate_segmentation({a, c}), DimensionError);
    PredictionMap raw = a;
    raw.normalized = false;
    CHECK_THROWS_AS(aggregate_segmentation({raw}), ContractError);
    CHECK_THROWS_AS(aggregate_segmentation({}), ContractError);
}

TEST_CASE("argmax labels pick the most probable class with low-index ties") {
    PredictionMap m{{2, 2}, 3, {0.5, 0.2, 0.4, 0.3, 0.3, 0.2, 0.4, 0.3, 0.2, 0.6, 0.2, 0.4}, true};
    Image labels = argmax_labels(m);
    CHECK(labels.values == std::vector<real_t>{0, 2, 0, 2});
}

TEST_CASE("regression and classification fold aggregation") {
    CHECK(aggregate_regression({1.0, 2.0, 3.0}) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(aggregate_regression({}), ContractError);

    CHECK(aggregate_classification({{0.8, 0.2}, {0.6, 0.4}, {0.3, 0.7}}) == 0);
    CHECK(aggregate_classification({{0.9, 0.1}, {0.2, 0.8}}) == 0);
    CHECK(aggregate_classification({{0.6, 0.4}, {0.1, 0.9}}) == 1);
    CHECK_THROWS_AS(aggregate_classification({{0.5, 0.5}, {0.5}}), DimensionError);
    CHECK_THROWS_AS(aggregate_classification({}), ContractError);
}

TEST_CASE("dice fixture: nested 2x2 against 2x3 blocks scores 0.8") {
    Image pred = label_image({4, 4}, {0, 0, 0, 0, //
                                      0, 1, 1, 0, //
                                      0, 1, 1, 0, //
                                      0, 0, 0, 0});
    Image gt = label_image({4, 4}, {0, 0, 0, 0, //
                                    0, 1, 1, 1, //
                                    0, 1, 1, 1, //
                                    0, 0, 0, 0});
    CHECK(dice_coefficient(pred, gt, 1) == 0.8);
    CHECK(dice_coefficient(gt, pred, 1) == 0.8);
}

TEST_CASE("dice edge cases and validation") {
    Image empty_a = label_image({2, 2}, {0, 0, 0, 0});
    Image empty_b = label_image({2, 2}, {0, 0, 0, 0});
    Image one = label_image({2, 2}, {0, 1, 0, 0});
    CHECK(dice_coefficient(empty_a, empty_b, 1) == 1.0);
    CHECK(dice_coefficient(empty_a, one, 1) == 0.0);
    CHECK(dice_coefficient(one, empty_a, 1) == 0.0);
    CHECK(dice_coefficient(one, one, 1) == 1.0);

    Image other = label_image({2, 3}, {0, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(dice_coefficient(one, other, 1), DimensionError);
    Image fractional = label_image({2, 2}, {0, 0.5, 0, 0});
    CHECK_THROWS_AS(dice_coefficient(fractional, one, 1), ValidationError);
}

TEST_CASE("per-class dice reports every label and the foreground macro") {
    Image pred = label_image({2, 3}, {0, 1, 1, 2, 2, 0});
    Image gt = label_image({2, 3}, {0, 1, 1, 2, 0, 0});
    auto report = dice_per_class(pred, gt, 3);
    REQUIRE(report.per_class.size() == 3);
    CHECK(report.per_class[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(report.per_class[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.per_class[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(report.foreground_macro == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));

    auto single = dice_per_class(pred, gt, 1);
    CHECK(single.foreground_macro == single.per_class[0]);
}

TEST_CASE("mse metric fixtures") {
    std::vector<real_t> a{1, 2};
    std::vector<real_t> b{0, 0};
    CHECK(mse_metric(a, b) == doctest::Approx(2.5).epsilon(1e-15));
    std::vector<real_t> same{3, 3, 3};
    CHECK(mse_metric(same, same) == 0.0);
    std::vector<real_t> shorter{1};
    CHECK_THROWS_AS(mse_metric(a, shorter), DimensionError);
}
