// End-to-end acceptance suite. Each check prints exactly one PASS/FAIL line;
// the process exits 0 only if every selected check passes.
//
//   acceptance [--cli <path>] [--only <n> ...]
//
// --cli points at the command-line binary (default: ./patchwork next to this
// executable); --only restricts the run to the listed check numbers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "patchwork/augment.hpp"
#include "patchwork/config.hpp"
#include "patchwork/crossval.hpp"
#include "patchwork/fft.hpp"
#include "patchwork/histology.hpp"
#include "patchwork/image.hpp"
#include "patchwork/inference.hpp"
#include "patchwork/kernels.hpp"
#include "patchwork/losses.hpp"
#include "patchwork/models.hpp"
#include "patchwork/rng.hpp"
#include "patchwork/trainer.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace patchwork;
using testsupport::gradcheck;
using testsupport::naive_dft;
using testsupport::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Options {
    std::string cli;
};

std::string fresh_dir(const std::string& tag) {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("acceptance_" + std::to_string(::getpid()) + "_" + tag + "_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. finite-difference gradient sweep
// ---------------------------------------------------------------------------

Outcome check_gradients(const Options&) {
    std::deque<Tensor> arena; // stable addresses for leaf pointers
    auto keep = [&arena](Tensor t) -> Tensor* {
        arena.push_back(std::move(t));
        return &arena.back();
    };
    // Keep ReLU-family inputs away from the kink so central differences stay
    // valid at h = 1e-5.
    auto away_from_zero = [](Tensor t) {
        for (auto& v : t.values()) v += (v >= 0 ? real_t(0.05) : real_t(-0.05));
        return t;
    };

    struct Case {
        std::string name;
        std::vector<Tensor*> leaves;
        std::function<Tensor(Tape*)> f;
    };
    std::vector<Case> cases;
    std::uint64_t target_seed = 9000;
    // Compare against a fixed random target through the mean-squared error so
    // every output element carries a distinct gradient.
    auto scalarized = [&](std::function<Tensor(Tape*)> op) {
        Tensor probe = op(nullptr);
        Tensor target = random_tensor(probe.shape(), target_seed++, -0.5, 0.5);
        return std::function<Tensor(Tape*)>(
            [op = std::move(op), target = std::move(target)](Tape* tape) { return mse_loss(op(tape), target, tape); });
    };

    {
        auto* x = keep(random_tensor({2, 3, 6, 5}, 101));
        auto* w = keep(random_tensor({4, 3, 3, 3}, 102));
        auto* b = keep(random_tensor({4}, 103));
        cases.push_back({"conv2d pad1", {x, w, b},
                         scalarized([=](Tape* t) { return ops::conv_nd(*x, *w, *b, {1, 1}, {1, 1}, t); })});
    }
    {
        auto* x = keep(random_tensor({1, 2, 7, 7}, 104));
        auto* w = keep(random_tensor({2, 2, 2, 2}, 105));
        auto* b = keep(random_tensor({2}, 106));
        cases.push_back({"conv2d stride2", {x, w, b},
                         scalarized([=](Tape* t) { return ops::conv_nd(*x, *w, *b, {2, 2}, {0, 0}, t); })});
    }
    {
        auto* x = keep(random_tensor({1, 2, 4, 5, 4}, 107));
        auto* w = keep(random_tensor({2, 2, 3, 3, 3}, 108));
        auto* b = keep(random_tensor({2}, 109));
        cases.push_back({"conv3d", {x, w, b},
                         scalarized([=](Tape* t) { return ops::conv_nd(*x, *w, *b, {1, 1, 1}, {1, 1, 1}, t); })});
    }
    {
        auto* x = keep(random_tensor({1, 2, 3, 4}, 110));
        auto* w = keep(random_tensor({2, 3, 2, 2}, 111));
        cases.push_back({"transpose conv2d", {x, w},
                         scalarized([=](Tape* t) { return ops::transpose_conv_nd(*x, *w, {2, 2}, t); })});
    }
    {
        auto* x = keep(random_tensor({1, 2, 3, 3, 2}, 112));
        auto* w = keep(random_tensor({2, 2, 2, 2, 2}, 113));
        cases.push_back({"transpose conv3d", {x, w},
                         scalarized([=](Tape* t) { return ops::transpose_conv_nd(*x, *w, {1, 1, 1}, t); })});
    }
    {
        auto* x = keep(random_tensor({1, 2, 6, 6}, 114));
        cases.push_back({"max pool", {x},
                         scalarized([=](Tape* t) { return ops::pool_nd(*x, ops::PoolKind::max, {2, 2}, {2, 2}, t); })});
    }
    {
        auto* x = keep(random_tensor({1, 2, 6, 6}, 115));
        cases.push_back(
            {"average pool", {x},
             scalarized([=](Tape* t) { return ops::pool_nd(*x, ops::PoolKind::average, {2, 2}, {2, 2}, t); })});
    }
    {
        auto* x = keep(random_tensor({2, 3, 4, 5}, 116));
        cases.push_back(
            {"global average pool", {x},
             scalarized([=](Tape* t) { return ops::pool_nd(*x, ops::PoolKind::global_average, {}, {}, t); })});
    }
    {
        auto* x = keep(away_from_zero(random_tensor({2, 8}, 117)));
        cases.push_back({"relu", {x}, scalarized([=](Tape* t) { return ops::relu(*x, t); })});
    }
    {
        auto* x = keep(away_from_zero(random_tensor({2, 8}, 118)));
        cases.push_back(
            {"leaky relu", {x}, scalarized([=](Tape* t) { return ops::leaky_relu(*x, real_t(0.01), t); })});
    }
    {
        auto* x = keep(random_tensor({2, 8}, 119));
        cases.push_back({"sigmoid", {x}, scalarized([=](Tape* t) { return ops::sigmoid(*x, t); })});
    }
    {
        auto* x = keep(random_tensor({3, 5}, 120));
        cases.push_back({"softmax", {x}, scalarized([=](Tape* t) { return ops::softmax(*x, 1, t); })});
    }
    {
        auto* x = keep(random_tensor({3, 5}, 121));
        auto* w = keep(random_tensor({5, 4}, 122));
        auto* b = keep(random_tensor({4}, 123));
        cases.push_back({"dense", {x, w, b}, scalarized([=](Tape* t) { return ops::dense(*x, *w, *b, t); })});
    }
    {
        auto* a = keep(random_tensor({2, 3, 4}, 124));
        auto* b = keep(random_tensor({2, 3, 4}, 125));
        cases.push_back({"add", {a, b}, scalarized([=](Tape* t) { return ops::add(*a, *b, t); })});
    }
    {
        auto* a = keep(random_tensor({2, 2, 3}, 126));
        auto* b = keep(random_tensor({2, 3, 3}, 127));
        cases.push_back(
            {"concat", {a, b}, scalarized([=](Tape* t) { return ops::concat({*a, *b}, 1, t); })});
    }
    {
        auto* x = keep(random_tensor({2, 3, 4}, 128));
        cases.push_back({"reshape", {x}, scalarized([=](Tape* t) { return ops::reshape(*x, {4, 6}, t); })});
    }
    {
        auto* x = keep(random_tensor({1, 2, 3, 3}, 129));
        cases.push_back(
            {"upsample nearest", {x}, scalarized([=](Tape* t) { return ops::upsample_nearest(*x, {2, 2}, t); })});
    }
    {
        auto* x = keep(random_tensor({2, 5}, 130));
        cases.push_back({"sum", {x}, scalarized([=](Tape* t) { return ops::sum(*x, t); })});
    }
    {
        auto* x = keep(random_tensor({2, 3, 4, 4}, 131));
        auto* g = keep(random_tensor({3}, 132, real_t(0.8), real_t(1.2)));
        auto* b = keep(random_tensor({3}, 133));
        cases.push_back({"instance norm", {x, g, b},
                         scalarized([=](Tape* t) { return ops::instance_norm(*x, *g, *b, real_t(1e-5), t); })});
    }
    {
        auto* x = keep(random_tensor({2, 3, 4, 4}, 134));
        auto* g = keep(random_tensor({3}, 135, real_t(0.8), real_t(1.2)));
        auto* b = keep(random_tensor({3}, 136));
        cases.push_back({"batch norm", {x, g, b}, scalarized([=](Tape* t) {
                             std::vector<real_t> rm(3, 0), rv(3, 1);
                             return ops::batch_norm(*x, *g, *b, rm, rv, real_t(0.1), real_t(1e-5), true, t);
                         })});
    }
    {
        auto* x = keep(random_tensor({2, 2, 3, 3}, 137));
        Tensor onehot({2, 2, 3, 3}, 0);
        {
            Rng rng(138);
            auto ov = onehot.values();
            for (std::int64_t n = 0; n < 2; ++n)
                for (std::int64_t v = 0; v < 9; ++v) {
                    const std::int64_t c = static_cast<std::int64_t>(rng.next_u64() % 2);
                    ov[static_cast<std::size_t>((n * 2 + c) * 9 + v)] = 1;
                }
        }
        cases.push_back({"dice loss", {x}, [x, onehot](Tape* t) {
                             return dice_loss(ops::softmax(*x, 1, t), onehot, t);
                         }});
    }
    {
        auto* x = keep(random_tensor({2, 6}, 139));
        Tensor target = random_tensor({2, 6}, 140);
        cases.push_back({"mse loss", {x}, [x, target](Tape* t) { return mse_loss(ops::sigmoid(*x, t), target, t); }});
    }
    {
        auto* x = keep(random_tensor({3, 4}, 141));
        Tensor onehot({3, 4}, 0);
        {
            Rng rng(142);
            auto ov = onehot.values();
            for (std::int64_t n = 0; n < 3; ++n)
                ov[static_cast<std::size_t>(n * 4 + static_cast<std::int64_t>(rng.next_u64() % 4))] = 1;
        }
        cases.push_back({"cross entropy loss", {x}, [x, onehot](Tape* t) {
                             return cross_entropy_loss(ops::softmax(*x, 1, t), onehot, t);
                         }});
    }

    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0;
    std::string worst_name = "none";
    for (auto& c : cases) {
        const double err = gradcheck(c.f, c.leaves);
        if (err > worst) {
            worst = err;
            worst_name = c.name;
        }
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = worst < 1e-4 && elapsed < 120.0;
    return {pass, "worst rel err " + fmt(worst) + " (" + worst_name + ") over " + std::to_string(cases.size()) +
                      " ops in " + fmt(elapsed) + "s"};
}

// ---------------------------------------------------------------------------
// 2. nested cross-validation partitions
// ---------------------------------------------------------------------------

Outcome check_splits(const Options&) {
    std::vector<std::string> ids;
    for (int i = 0; i < 100; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "s%03d", i);
        ids.emplace_back(buf);
    }
    SplitPlan plan = make_nested_splits(ids, 5, 5, 42, SplitMode::nested);
    if (plan.folds.size() != 25) return {false, "expected 25 folds, got " + std::to_string(plan.folds.size())};

    auto within_one = [](std::size_t got, std::size_t want) {
        return got + 1 >= want && got <= want + 1;
    };
    for (const auto& fold : plan.folds) {
        if (!within_one(fold.test.size(), 20) || !within_one(fold.validation.size(), 16) ||
            !within_one(fold.train.size(), 64)) {
            return {false, "fold " + std::to_string(fold.outer) + "/" + std::to_string(fold.inner) + " sizes " +
                               std::to_string(fold.train.size()) + "/" + std::to_string(fold.validation.size()) +
                               "/" + std::to_string(fold.test.size()) + " differ from 64/16/20"};
        }
        std::vector<std::string> all;
        all.insert(all.end(), fold.train.begin(), fold.train.end());
        all.insert(all.end(), fold.validation.begin(), fold.validation.end());
        all.insert(all.end(), fold.test.begin(), fold.test.end());
        std::sort(all.begin(), all.end());
        if (all.size() != 100 || std::adjacent_find(all.begin(), all.end()) != all.end())
            return {false, "fold " + std::to_string(fold.outer) + "/" + std::to_string(fold.inner) +
                               " roles overlap or drop a subject"};
    }
    // every inner fold of one outer fold holds the same test set
    for (std::int64_t o = 0; o < 5; ++o) {
        auto test0 = plan.fold(o, 0).test;
        std::sort(test0.begin(), test0.end());
        for (std::int64_t i = 1; i < 5; ++i) {
            auto t = plan.fold(o, i).test;
            std::sort(t.begin(), t.end());
            if (t != test0) return {false, "outer fold " + std::to_string(o) + " test set varies across inner folds"};
        }
    }

    const std::string dir = fresh_dir("splits");
    SplitPlan again = make_nested_splits(ids, 5, 5, 42, SplitMode::nested);
    write_split_plan(plan, dir + "/a.csv");
    write_split_plan(again, dir + "/b.csv");
    if (read_file(dir + "/a.csv") != read_file(dir + "/b.csv"))
        return {false, "two seeded runs produced different plan files"};
    return {true, "25 folds, 64/16/20 membership, partitions hold, plans byte-identical"};
}

// ---------------------------------------------------------------------------
// 3. synthetic ellipse segmentation end to end
// ---------------------------------------------------------------------------

LoadedSubject ellipse_subject(int idx, std::uint64_t seed) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(idx)));
    LoadedSubject s;
    s.subject_id = "e" + std::to_string(idx);
    s.image = make_image({64, 64}, 1);
    Image mask = make_image({64, 64}, 1);
    const double cr = rng.uniform(20, 44), cc = rng.uniform(20, 44);
    const double a = rng.uniform(8, 18), b = rng.uniform(8, 18);
    const double th = rng.uniform(0, 3.14159265);
    const double ct = std::cos(th), st = std::sin(th);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            const double dr = r - cr, dc = c - cc;
            const double u = (dr * ct + dc * st) / a, v = (-dr * st + dc * ct) / b;
            const bool inside = u * u + v * v <= 1.0;
            s.image.channel(0)[r * 64 + c] =
                inside ? static_cast<real_t>(rng.uniform(0.7, 1.0)) : static_cast<real_t>(rng.uniform(0.0, 0.25));
            mask.channel(0)[r * 64 + c] = inside ? 1 : 0;
        }
    s.mask = mask;
    return s;
}

void split_subjects(const std::vector<LoadedSubject>& all, std::uint64_t seed,
                    std::vector<LoadedSubject>& train, std::vector<LoadedSubject>& val,
                    std::vector<LoadedSubject>& test) {
    std::vector<std::string> ids;
    for (const auto& s : all) ids.push_back(s.subject_id);
    SplitPlan plan = make_nested_splits(ids, 5, 5, seed, SplitMode::single_fold);
    auto pick = [&](const std::vector<std::string>& want, std::vector<LoadedSubject>& out) {
        for (const auto& id : want)
            for (const auto& s : all)
                if (s.subject_id == id) out.push_back(s);
    };
    pick(plan.folds.front().train, train);
    pick(plan.folds.front().validation, val);
    pick(plan.folds.front().test, test);
}

Outcome check_segmentation_e2e(const Options&) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<LoadedSubject> all;
    for (int i = 0; i < 200; ++i) all.push_back(ellipse_subject(i, 7));

    PipelineConfig cfg;
    cfg.task = Task::segmentation;
    cfg.model.architecture = Architecture::resunet;
    cfg.model.base_filters = 8;
    cfg.model.depth = 3;
    cfg.model.classes = 2;
    cfg.patch_size = {32, 32};
    cfg.batch_size = 8;
    cfg.epochs = 20;
    cfg.learning_rate = 0.1;
    cfg.loss = LossKind::dice;
    cfg.single_fold = true;
    cfg.sampler.foreground_biased = true;
    cfg.sampler.foreground_ratio = 0.5;
    cfg.queue.samples_per_volume = 1;
    cfg.queue.workers = 1;
    cfg.seed = 99;
    cfg.validate();

    std::vector<LoadedSubject> train, val, test;
    split_subjects(all, cfg.seed, train, val, test);

    const std::string dir = fresh_dir("seg");
    FoldOutcome outcome = train_one_fold(cfg, train, val, dir, 1234);
    LoadedCheckpoint best = load_checkpoint(outcome.best_path);

    double dice = 0;
    for (const auto& s : test) {
        auto res = sliding_window_infer(best.model, s.image, cfg.patch_size, 0.0, StitchMode::average);
        Image labels = argmax_labels(res.prediction);
        dice += dice_per_class(labels, *s.mask, 2).foreground_macro;
    }
    dice /= static_cast<double>(test.size());
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = dice >= 0.90 && elapsed < 600.0;
    return {pass, "stitched test dice " + fmt(dice) + " (need >= 0.9) in " + fmt(elapsed) + "s (budget 600s)"};
}

// ---------------------------------------------------------------------------
// 4. synthetic mean-intensity regression end to end
// ---------------------------------------------------------------------------

LoadedSubject intensity_subject(int idx, std::uint64_t seed) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(idx)));
    LoadedSubject s;
    s.subject_id = "m" + std::to_string(idx);
    s.image = make_image({32, 32}, 1);
    const double base = rng.uniform(0.2, 0.8);
    double sum = 0;
    for (auto& v : s.image.values) {
        v = static_cast<real_t>(base + rng.uniform(-0.15, 0.15));
        sum += v;
    }
    s.scalar_target = sum / static_cast<double>(s.image.values.size());
    return s;
}

Outcome check_regression_e2e(const Options&) {
    std::vector<LoadedSubject> all;
    for (int i = 0; i < 200; ++i) all.push_back(intensity_subject(i, 8));

    PipelineConfig cfg;
    cfg.task = Task::regression;
    cfg.model.architecture = Architecture::vgg11;
    cfg.model.base_filters = 8;
    cfg.model.classes = 1;
    cfg.model.final_activation = FinalActivation::none;
    cfg.patch_size = {32, 32};
    cfg.batch_size = 8;
    cfg.epochs = 20;
    cfg.learning_rate = 0.01;
    cfg.loss = LossKind::mse;
    cfg.single_fold = true;
    cfg.queue.samples_per_volume = 4;
    cfg.queue.workers = 1;
    cfg.seed = 99;
    cfg.validate();

    std::vector<LoadedSubject> train, val, test;
    split_subjects(all, cfg.seed, train, val, test);

    const std::string dir = fresh_dir("reg");
    FoldOutcome outcome = train_one_fold(cfg, train, val, dir, 1234);
    LoadedCheckpoint best = load_checkpoint(outcome.best_path);

    double mean = 0;
    for (const auto& s : test) mean += s.scalar_target;
    mean /= static_cast<double>(test.size());
    double var = 0;
    for (const auto& s : test) var += (s.scalar_target - mean) * (s.scalar_target - mean);
    var /= static_cast<double>(test.size());

    double mse = 0;
    for (const auto& s : test) {
        Tensor out = best.model.forward(Tensor::from_data({1, 1, 32, 32}, s.image.values), nullptr);
        const double pred = out.values()[0];
        mse += (pred - s.scalar_target) * (pred - s.scalar_target);
    }
    mse /= static_cast<double>(test.size());
    const bool pass = mse < 0.1 * var;
    return {pass, "test mse " + fmt(mse) + " vs bound " + fmt(0.1 * var) + " (target variance " + fmt(var) + ")"};
}

// ---------------------------------------------------------------------------
// 5. sliding-window stitching against a whole-image forward
// ---------------------------------------------------------------------------

ModelGraph voxelwise_gray_model() {
    ModelGraph m;
    m.spec.architecture = Architecture::fcn;
    m.spec.dims = 2;
    m.spec.in_channels = 1;
    m.spec.classes = 2;
    m.task = Task::segmentation;
    m.params = std::make_unique<ParamStore>();
    m.program = [](const Tensor& x, bool, Tape*) {
        const Shape& s = x.shape();
        Shape out_shape = s;
        out_shape[1] = 2;
        Tensor out(out_shape);
        std::int64_t plane = 1;
        for (std::size_t k = 2; k < s.size(); ++k) plane *= s[k];
        auto xv = x.values();
        auto ov = out.values();
        for (std::int64_t n = 0; n < s[0]; ++n)
            for (std::int64_t v = 0; v < plane; ++v) {
                const real_t p0 = real_t(0.5) + real_t(0.45) * std::sin(3 * xv[static_cast<std::size_t>(n * plane + v)]);
                ov[static_cast<std::size_t>((n * 2 + 0) * plane + v)] = p0;
                ov[static_cast<std::size_t>((n * 2 + 1) * plane + v)] = 1 - p0;
            }
        return out;
    };
    return m;
}

Outcome check_stitching(const Options&) {
    ModelGraph model = voxelwise_gray_model();
    Image image = make_image({37, 41}, 1);
    {
        Rng rng(321);
        for (auto& v : image.values) v = static_cast<real_t>(rng.uniform(0, 1));
    }
    Tensor whole = model.forward(Tensor::from_data({1, 1, 37, 41}, image.values), nullptr);

    for (double overlap : {0.0, 0.25, 0.5}) {
        StitchResult res = sliding_window_infer(model, image, {16, 16}, overlap, StitchMode::average);
        const double diff = testsupport::max_abs_diff(res.prediction.values, whole.values());
        if (diff >= 1e-9)
            return {false, "average stitch at overlap " + fmt(overlap) + " differs from whole-image forward by " +
                               fmt(diff)};
    }
    StitchResult crop = sliding_window_infer(model, image, {16, 16}, 0.5, StitchMode::crop);
    for (const auto c : crop.counts.values)
        if (c != 1) return {false, "crop stitch coverage is not exactly one everywhere"};
    const double crop_diff = testsupport::max_abs_diff(crop.prediction.values, whole.values());
    if (crop_diff >= 1e-9) return {false, "crop stitch differs from whole-image forward by " + fmt(crop_diff)};
    return {true, "average mode matches whole-image forward at overlaps 0/0.25/0.5; crop tiles exactly"};
}

// ---------------------------------------------------------------------------
// 6. Otsu threshold against exhaustive search
// ---------------------------------------------------------------------------

int exhaustive_otsu(std::span<const std::int64_t> hist) {
    std::int64_t total = 0;
    for (const auto h : hist) total += h;
    int best_t = -1;
    double best_var = -1;
    for (int t = 0; t < 256; ++t) {
        std::int64_t w0 = 0, m0 = 0;
        for (int b = 0; b <= t; ++b) {
            w0 += hist[static_cast<std::size_t>(b)];
            m0 += hist[static_cast<std::size_t>(b)] * b;
        }
        const std::int64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        std::int64_t m1 = 0;
        for (int b = t + 1; b < 256; ++b) m1 += hist[static_cast<std::size_t>(b)] * b;
        const double mu0 = static_cast<double>(m0) / static_cast<double>(w0);
        const double mu1 = static_cast<double>(m1) / static_cast<double>(w1);
        const double d = mu0 - mu1;
        const double var = static_cast<double>(w0) * static_cast<double>(w1) * d * d;
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

Outcome check_otsu(const Options&) {
    Rng rng(606);
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::int64_t> hist(256, 0);
        switch (trial % 3) {
        case 0: // dense
            for (auto& h : hist) h = static_cast<std::int64_t>(rng.next_u64() % 51);
            break;
        case 1: { // a few spikes
            const int spikes = 2 + static_cast<int>(rng.next_u64() % 7);
            for (int s = 0; s < spikes; ++s)
                hist[rng.next_u64() % 256] += 1 + static_cast<std::int64_t>(rng.next_u64() % 1000);
            break;
        }
        default: { // two humps
            const double c0 = rng.uniform(30, 100), c1 = rng.uniform(140, 230);
            const double s0 = rng.uniform(5, 25), s1 = rng.uniform(5, 25);
            for (int b = 0; b < 256; ++b) {
                const double g0 = 400 * std::exp(-(b - c0) * (b - c0) / (2 * s0 * s0));
                const double g1 = 300 * std::exp(-(b - c1) * (b - c1) / (2 * s1 * s1));
                hist[static_cast<std::size_t>(b)] = static_cast<std::int64_t>(g0 + g1);
            }
            break;
        }
        }
        int nonempty = 0;
        for (const auto h : hist) nonempty += h > 0;
        if (nonempty < 2) {
            hist[10] += 5;
            hist[200] += 5;
        }
        const int got = otsu_threshold(hist);
        const int want = exhaustive_otsu(hist);
        if (got != want)
            return {false, "trial " + std::to_string(trial) + ": threshold " + std::to_string(got) +
                               " != exhaustive " + std::to_string(want)};
        ++checked;
    }
    return {true, std::to_string(checked) + " random histograms, zero mismatches"};
}

// ---------------------------------------------------------------------------
// 7. FFT correctness
// ---------------------------------------------------------------------------

Outcome check_fft(const Options&) {
    Rng rng(707);
    for (const std::size_t n : {7u, 12u, 16u, 32u}) {
        std::vector<cplx> x(n);
        for (auto& v : x) v = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));

        std::vector<cplx> fast = x;
        fft(fast, false);
        const std::vector<cplx> slow = naive_dft(x, false);
        double diff = 0;
        for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(fast[i] - slow[i]));
        if (diff >= 1e-10) return {false, "size " + std::to_string(n) + ": fast vs direct transform differ by " + fmt(diff)};

        std::vector<cplx> back = fast;
        fft(back, true);
        double rt = 0;
        for (std::size_t i = 0; i < n; ++i) rt = std::max(rt, std::abs(back[i] - x[i]));
        if (rt >= 1e-10) return {false, "size " + std::to_string(n) + ": round trip error " + fmt(rt)};

        double time_energy = 0, freq_energy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            time_energy += std::norm(x[i]);
            freq_energy += std::norm(fast[i]);
        }
        const double parseval = std::abs(time_energy - freq_energy / static_cast<double>(n));
        if (parseval >= 1e-10) return {false, "size " + std::to_string(n) + ": energy mismatch " + fmt(parseval)};
    }
    return {true, "sizes 7/12/16/32: direct-transform equality, round trip, and energy conservation"};
}

// ---------------------------------------------------------------------------
// 8. augmentation identities and seeded reproducibility
// ---------------------------------------------------------------------------

Sample random_sample(std::uint64_t seed) {
    Sample s;
    s.image = make_image({9, 9}, 1);
    Image mask = make_image({9, 9}, 1);
    Rng rng(seed);
    for (auto& v : s.image.values) v = static_cast<real_t>(rng.uniform(0.05, 0.95));
    for (auto& v : mask.values) v = static_cast<real_t>(rng.next_u64() % 2);
    s.mask = mask;
    return s;
}

bool sample_close(const Sample& a, const Sample& b, double tol, double& worst) {
    worst = testsupport::max_abs_diff(a.image.values, b.image.values);
    if (a.mask && b.mask) worst = std::max(worst, testsupport::max_abs_diff(a.mask->values, b.mask->values));
    return worst <= tol;
}

Outcome check_augment_identities(const Options&) {
    const Sample s = random_sample(808);
    double worst = 0;

    for (const Coords& axes : {Coords{0}, Coords{1}, Coords{0, 1}}) {
        if (!sample_close(flip_axes(flip_axes(s, axes), axes), s, 0, worst))
            return {false, "double flip is not the identity (diff " + fmt(worst) + ")"};
    }
    Sample r = s;
    for (int i = 0; i < 4; ++i) r = rotate_quarter(r, 1, 0, 1);
    if (!sample_close(r, s, 0, worst)) return {false, "four quarter turns drift by " + fmt(worst)};
    if (!sample_close(gamma_transform(s, 1.0), s, 1e-12, worst))
        return {false, "gamma 1 drifts by " + fmt(worst)};
    {
        Rng rng(809);
        if (!sample_close(elastic_warp(s, 4.0, 0.0, rng), s, 1e-12, worst))
            return {false, "zero-magnitude elastic warp drifts by " + fmt(worst)};
    }
    if (!sample_close(ghosting(s, 4, 0, 0.0), s, 1e-12, worst))
        return {false, "zero-intensity ghosting drifts by " + fmt(worst)};
    if (!sample_close(spike_noise(s, {Coords{2, 3}}, 0.0), s, 1e-12, worst))
        return {false, "zero-intensity spike drifts by " + fmt(worst)};
    {
        Rng rng(810);
        if (!sample_close(bias_field(s, 3, 0.0, rng), s, 1e-12, worst))
            return {false, "zero-coefficient bias field drifts by " + fmt(worst)};
    }

    AugmentationPlan plan;
    for (const AugmentKind kind : {AugmentKind::flip, AugmentKind::noise, AugmentKind::gamma, AugmentKind::blur}) {
        AugmentEntry e;
        e.kind = kind;
        e.probability = 0.6;
        plan.entries.push_back(e);
    }
    Rng rng_a(811), rng_b(811);
    const Sample out_a = compose(plan, s, rng_a);
    const Sample out_b = compose(plan, s, rng_b);
    if (!sample_close(out_a, out_b, 0, worst))
        return {false, "same-seed composition differs across runs by " + fmt(worst)};
    return {true, "inverse-pair and zero-parameter transforms are identities; seeded composition repeats bitwise"};
}

// ---------------------------------------------------------------------------
// 9. histology pipeline: mask quality and tiled inference oracle
// ---------------------------------------------------------------------------

ModelGraph voxelwise_rgb_model() {
    ModelGraph m;
    m.spec.architecture = Architecture::fcn;
    m.spec.dims = 2;
    m.spec.in_channels = 3;
    m.spec.classes = 2;
    m.task = Task::segmentation;
    m.params = std::make_unique<ParamStore>();
    m.program = [](const Tensor& x, bool, Tape*) {
        const Shape& s = x.shape();
        Shape out_shape = s;
        out_shape[1] = 2;
        Tensor out(out_shape);
        std::int64_t plane = 1;
        for (std::size_t k = 2; k < s.size(); ++k) plane *= s[k];
        auto xv = x.values();
        auto ov = out.values();
        for (std::int64_t n = 0; n < s[0]; ++n)
            for (std::int64_t v = 0; v < plane; ++v) {
                real_t mix = 0;
                for (std::int64_t c = 0; c < 3; ++c) mix += xv[static_cast<std::size_t>((n * 3 + c) * plane + v)];
                const real_t p0 = real_t(0.5) + real_t(0.45) * std::sin(real_t(0.01) * mix);
                ov[static_cast<std::size_t>((n * 2 + 0) * plane + v)] = p0;
                ov[static_cast<std::size_t>((n * 2 + 1) * plane + v)] = 1 - p0;
            }
        return out;
    };
    return m;
}

Outcome check_histology(const Options&) {
    const std::int64_t side = 512;
    Image slide = make_image({side, side}, 3);
    std::vector<std::uint8_t> oracle(static_cast<std::size_t>(side * side), 0);
    {
        Rng rng(909);
        const double cr = 256, cc = 256, radius = 120;
        for (std::int64_t r = 0; r < side; ++r)
            for (std::int64_t c = 0; c < side; ++c) {
                const std::size_t at = static_cast<std::size_t>(r * side + c);
                const bool tissue = (r - cr) * (r - cr) + (c - cc) * (c - cc) <= radius * radius;
                oracle[at] = tissue ? 1 : 0;
                for (std::int64_t ch = 0; ch < 3; ++ch)
                    slide.channel(ch)[at] = tissue ? static_cast<real_t>(std::floor(rng.uniform(50, 70)))
                                                   : static_cast<real_t>(std::floor(rng.uniform(246, 256)));
            }
    }
    TiledImage tiled = build_tiled_pyramid(slide, 3, 2, 64);

    TissueMask mask = tissue_mask(tiled, 0);
    std::int64_t inter = 0, mask_count = 0, oracle_count = 0;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        inter += mask.values[i] && oracle[i];
        mask_count += mask.values[i];
        oracle_count += oracle[i];
    }
    const double mask_dice = 2.0 * static_cast<double>(inter) / static_cast<double>(mask_count + oracle_count);
    if (mask_dice < 0.95) return {false, "tissue mask dice " + fmt(mask_dice) + " below 0.95"};

    CoordinateList coords = mine_patches(tiled, mask, {64, 64}, 0.5, 0.2);
    if (coords.empty()) return {false, "patch mining returned no coordinates"};

    ModelGraph model = voxelwise_rgb_model();
    TiledInferResult result = tiled_infer(model, tiled, coords, {64, 64});
    for (const auto v : result.prediction.values)
        if (!(v >= 0.0 && v <= 1.0)) return {false, "final probability map leaves [0, 1]"};

    // independent per-voxel accumulation of the same patch forwards
    const std::size_t plane = static_cast<std::size_t>(side * side);
    std::vector<double> acc(plane * 2, 0);
    std::vector<double> cover(plane, 0);
    const Image& level0 = tiled.level(0);
    for (const auto& coord : coords) {
        std::vector<real_t> region(static_cast<std::size_t>(3 * 64 * 64));
        for (std::int64_t ch = 0; ch < 3; ++ch) {
            auto src = level0.channel(ch);
            for (std::int64_t r = 0; r < 64; ++r)
                for (std::int64_t c = 0; c < 64; ++c)
                    region[static_cast<std::size_t>((ch * 64 + r) * 64 + c)] =
                        src[static_cast<std::size_t>((coord.corner[0] + r) * side + coord.corner[1] + c)];
        }
        Tensor out = model.forward(Tensor::from_data({1, 3, 64, 64}, std::move(region)), nullptr);
        auto ov = out.values();
        for (std::int64_t r = 0; r < 64; ++r)
            for (std::int64_t c = 0; c < 64; ++c) {
                const std::size_t at = static_cast<std::size_t>((coord.corner[0] + r) * side + coord.corner[1] + c);
                cover[at] += 1;
                for (std::int64_t cls = 0; cls < 2; ++cls)
                    acc[static_cast<std::size_t>(cls) * plane + at] +=
                        ov[static_cast<std::size_t>((cls * 64 + r) * 64 + c)];
            }
    }
    double worst = 0;
    for (std::size_t cls = 0; cls < 2; ++cls)
        for (std::size_t at = 0; at < plane; ++at) {
            const double want = cover[at] > 0 ? acc[cls * plane + at] / cover[at] : 0.0;
            worst = std::max(worst, std::abs(want - static_cast<double>(result.prediction.values[cls * plane + at])));
        }
    if (worst >= 1e-6) return {false, "tiled inference differs from per-voxel average by " + fmt(worst)};
    return {true, "mask dice " + fmt(mask_dice) + ", " + std::to_string(coords.size()) +
                      " mined patches, stitched map within " + fmt(worst) + " of the dense average"};
}

// ---------------------------------------------------------------------------
// 10. metric fixtures
// ---------------------------------------------------------------------------

Outcome check_metrics(const Options&) {
    Image pred = make_image({2, 3}, 1);
    Image gt = make_image({2, 3}, 1);
    // prediction marks two voxels, truth marks three, two of them shared
    pred.values = {1, 1, 0, 0, 0, 0};
    gt.values = {1, 1, 1, 0, 0, 0};
    if (dice_coefficient(pred, gt, 1) != 0.8) return {false, "2-vs-3 overlap dice is not exactly 0.8"};
    if (dice_coefficient(gt, pred, 1) != 0.8) return {false, "dice is not symmetric on the 2-vs-3 fixture"};

    const std::vector<real_t> a = {0.5, 1.5}, b = {0.0, 1.0};
    if (mse_metric(a, b) != 0.25) return {false, "mse fixture (0.5,1.5)-(0,1) is not exactly 0.25"};
    const std::vector<real_t> c = {2, 0}, d = {0, 0};
    if (mse_metric(c, d) != 2.0) return {false, "mse fixture (2,0)-(0,0) is not exactly 2"};
    const std::vector<real_t> e = {1, 2, 3};
    if (mse_metric(e, e) != 0.0) return {false, "mse of identical vectors is not zero"};
    return {true, "dice 2-vs-3 fixture is exactly 0.8 both ways; mse fixtures match hand evaluation"};
}

// ---------------------------------------------------------------------------
// 11. command-line determinism
// ---------------------------------------------------------------------------

int run_cli(const std::string& command) {
    const int status = std::system(command.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome check_cli_determinism(const Options& opts) {
    if (!fs::exists(opts.cli)) return {false, "command-line binary not found at " + opts.cli};
    const std::string dir = fresh_dir("cli");
    fs::create_directories(dir + "/images");
    fs::create_directories(dir + "/masks");

    std::ofstream manifest(dir + "/manifest.csv");
    manifest << "SubjectID,Channel_0,Label\n";
    for (int i = 0; i < 12; ++i) {
        Rng rng(derive_seed(4200, static_cast<std::uint64_t>(i)));
        Image image = make_image({16, 16}, 1);
        Image mask = make_image({16, 16}, 1);
        for (auto& v : image.values) v = static_cast<real_t>(rng.uniform(0, 1));
        const std::int64_t r0 = static_cast<std::int64_t>(rng.next_u64() % 10);
        const std::int64_t c0 = static_cast<std::int64_t>(rng.next_u64() % 10);
        for (std::int64_t r = r0; r < r0 + 5; ++r)
            for (std::int64_t c = c0; c < c0 + 5; ++c) mask.values[static_cast<std::size_t>(r * 16 + c)] = 1;
        char name[8];
        std::snprintf(name, sizeof(name), "s%02d", i);
        write_image(image, dir + "/images/" + name + ".mha");
        write_image(mask, dir + "/masks/" + name + ".mha");
        manifest << name << ",images/" << name << ".mha,masks/" << name << ".mha\n";
    }
    manifest.close();

    PipelineConfig cfg;
    cfg.task = Task::segmentation;
    cfg.model.architecture = Architecture::unet;
    cfg.model.base_filters = 4;
    cfg.model.depth = 2;
    cfg.model.classes = 2;
    cfg.patch_size = {8, 8};
    cfg.batch_size = 2;
    cfg.epochs = 2;
    cfg.learning_rate = 0.05;
    cfg.loss = LossKind::dice;
    cfg.k_outer = 2;
    cfg.k_inner = 2;
    cfg.queue.samples_per_volume = 2;
    cfg.queue.max_queue_length = 8;
    cfg.queue.workers = 2;
    cfg.sampler.foreground_biased = true;
    cfg.seed = 5;
    cfg.validate();
    std::ofstream(dir + "/config.yaml") << render_config(cfg);

    const std::string base = "\"" + opts.cli + "\"";
    const std::string common = " --data " + dir + "/manifest.csv --config " + dir + "/config.yaml";
    auto invoke = [&](const std::string& sub, const std::string& out) {
        return run_cli(base + " " + sub + common + " --output " + out + " >> " + dir + "/cli.log 2>&1");
    };

    if (invoke("split", dir + "/s1") != 0 || invoke("split", dir + "/s2") != 0)
        return {false, "split invocation failed (see " + dir + "/cli.log)"};
    if (read_file(dir + "/s1/split_plan.csv") != read_file(dir + "/s2/split_plan.csv"))
        return {false, "two seeded split runs wrote different plans"};

    if (invoke("train", dir + "/t1") != 0 || invoke("train", dir + "/t2") != 0)
        return {false, "train invocation failed (see " + dir + "/cli.log)"};
    if (read_file(dir + "/t1/split_plan.csv") != read_file(dir + "/t2/split_plan.csv"))
        return {false, "train runs wrote different split plans"};

    int folds_compared = 0;
    for (std::int64_t o = 0; o < 2; ++o)
        for (std::int64_t i = 0; i < 2; ++i) {
            const std::string rel = "/outer_" + std::to_string(o) + "/inner_" + std::to_string(i) + "/logs.csv";
            std::ifstream log1(dir + "/t1" + rel), log2(dir + "/t2" + rel);
            if (!log1 || !log2) return {false, "missing logs.csv for fold " + std::to_string(o) + ":" + std::to_string(i)};
            std::string line1, line2;
            int row = 0;
            while (std::getline(log1, line1)) {
                if (!std::getline(log2, line2)) return {false, rel + " row counts differ"};
                if (row++ == 0) {
                    if (line1 != line2) return {false, rel + " headers differ"};
                    continue;
                }
                std::stringstream ss1(line1), ss2(line2);
                std::string f1, f2;
                for (int col = 0; col < 6; ++col) {
                    if (!std::getline(ss1, f1, ',') || !std::getline(ss2, f2, ','))
                        return {false, rel + " row " + std::to_string(row) + " is short"};
                    if (col == 5) continue; // wall-clock seconds may differ
                    const double diff = std::abs(std::stod(f1) - std::stod(f2));
                    if (diff > 1e-12)
                        return {false, rel + " row " + std::to_string(row) + " column " + std::to_string(col) +
                                           " differs by " + fmt(diff)};
                }
            }
            if (std::getline(log2, line2)) return {false, rel + " row counts differ"};
            ++folds_compared;
        }
    return {true, "split plans byte-identical; " + std::to_string(folds_compared) +
                      " fold logs numerically identical within 1e-12"};
}

} // namespace

int main(int argc, char** argv) {
    Options opts;
    opts.cli = (fs::path(argv[0]).parent_path() / "patchwork").string();
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc) {
            opts.cli = argv[++i];
        } else if (arg == "--only" && i + 1 < argc) {
            only.push_back(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: %s [--cli <path>] [--only <n> ...]\n", argv[0]);
            return 2;
        }
    }

    struct Entry {
        int number;
        const char* label;
        Outcome (*fn)(const Options&);
    };
    const Entry entries[] = {
        {1, "kernel and loss gradients", check_gradients},
        {2, "nested cross-validation splits", check_splits},
        {3, "ellipse segmentation end to end", check_segmentation_e2e},
        {4, "mean-intensity regression end to end", check_regression_e2e},
        {5, "sliding-window stitching", check_stitching},
        {6, "threshold search", check_otsu},
        {7, "fourier transform", check_fft},
        {8, "augmentation identities", check_augment_identities},
        {9, "histology pipeline", check_histology},
        {10, "metric fixtures", check_metrics},
        {11, "command-line determinism", check_cli_determinism},
    };

    bool all_pass = true;
    for (const auto& entry : entries) {
        if (!only.empty() && std::find(only.begin(), only.end(), entry.number) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = entry.fn(opts);
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%2d] %s  %s: %s (%.1fs)\n", entry.number, outcome.pass ? "PASS" : "FAIL", entry.label,
                    outcome.detail.c_str(), elapsed);
        std::fflush(stdout);
        all_pass = all_pass && outcome.pass;
    }
    return all_pass ? 0 : 1;
}
