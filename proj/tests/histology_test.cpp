#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "patchwork/histology.hpp"
#include "patchwork/ndindex.hpp"
#include "patchwork/rng.hpp"
#include "support.hpp"

using namespace patchwork;
using testsupport::max_abs_diff;

namespace {

struct TempDir {
    std::string path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("patchwork_histology_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

Image rgb_image(const Coords& extents, const std::function<std::array<real_t, 3>(std::int64_t, std::int64_t)>& paint) {
    Image img = make_image(extents, 3);
    const std::int64_t cols = extents[1];
    for (std::int64_t r = 0; r < extents[0]; ++r)
        for (std::int64_t c = 0; c < extents[1]; ++c) {
            const auto px = paint(r, c);
            for (std::int64_t ch = 0; ch < 3; ++ch) img.channel(ch)[r * cols + c] = px[static_cast<std::size_t>(ch)];
        }
    return img;
}

Image random_rgb(const Coords& extents, std::uint64_t seed) {
    Image img = make_image(extents, 3);
    Rng rng(seed);
    for (auto& v : img.values) v = static_cast<real_t>(rng.uniform(0.0, 255.0));
    return img;
}

double channel_mean(const Image& img, std::int64_t c) {
    double sum = 0;
    for (auto v : img.channel(c)) sum += v;
    return sum / static_cast<double>(img.plane_size());
}

// Direct recomputation of the best histogram cut: try every split point,
// strict improvement only, so ties keep the lowest threshold.
int exhaustive_otsu(const std::array<std::int64_t, 256>& hist) {
    int best_t = -1;
    double best = -1;
    for (int t = 0; t < 255; ++t) {
        std::int64_t w0 = 0, w1 = 0, m0 = 0, m1 = 0;
        for (int i = 0; i <= t; ++i) {
            w0 += hist[static_cast<std::size_t>(i)];
            m0 += static_cast<std::int64_t>(i) * hist[static_cast<std::size_t>(i)];
        }
        for (int i = t + 1; i < 256; ++i) {
            w1 += hist[static_cast<std::size_t>(i)];
            m1 += static_cast<std::int64_t>(i) * hist[static_cast<std::size_t>(i)];
        }
        if (w0 == 0 || w1 == 0) continue;
        const double mu0 = static_cast<double>(m0) / static_cast<double>(w0);
        const double mu1 = static_cast<double>(m1) / static_cast<double>(w1);
        const double d = mu0 - mu1;
        const double var = static_cast<double>(w0) * static_cast<double>(w1) * d * d;
        if (var > best) {
            best = var;
            best_t = t;
        }
    }
    return best_t;
}

ModelGraph constant_rgb_model(std::int64_t classes, real_t value) {
    ModelGraph m;
    m.spec.architecture = Architecture::fcn;
    m.spec.dims = 2;
    m.spec.in_channels = 3;
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

ModelGraph voxelwise_rgb_model(std::int64_t classes) {
    ModelGraph m;
    m.spec.architecture = Architecture::fcn;
    m.spec.dims = 2;
    m.spec.in_channels = 3;
    m.spec.classes = classes;
    m.task = Task::segmentation;
    m.params = std::make_unique<ParamStore>();
    m.program = [classes](const Tensor& x, bool, Tape*) {
        const Shape& s = x.shape();
        Shape out_shape = s;
        out_shape[1] = classes;
        Tensor out(out_shape);
        std::int64_t plane = 1;
        for (std::size_t k = 2; k < s.size(); ++k) plane *= s[k];
        auto xv = x.values();
        auto ov = out.values();
        for (std::int64_t n = 0; n < s[0]; ++n)
            for (std::int64_t v = 0; v < plane; ++v) {
                real_t mix = 0;
                for (std::int64_t c = 0; c < 3; ++c) mix += xv[static_cast<std::size_t>((n * 3 + c) * plane + v)];
                real_t z = 0;
                for (std::int64_t c = 0; c < classes; ++c) {
                    const real_t raw = std::sin(real_t(0.01) * mix + real_t(0.4) * static_cast<real_t>(c));
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

TissueMask full_mask(const TiledImage& tiled, std::int64_t level) {
    TissueMask mask;
    mask.level = level;
    mask.extents = tiled.level(level).extents;
    mask.values.assign(static_cast<std::size_t>(product(mask.extents)), 1);
    return mask;
}

} // namespace

TEST_CASE("pyramid construction rejects bad parameters") {
    Image rgb = random_rgb({8, 8}, 3);
    CHECK_THROWS_AS(build_tiled_pyramid(rgb, 2, 1, 64), ConfigError);
    CHECK_THROWS_AS(build_tiled_pyramid(rgb, 0, 2, 64), ConfigError);
    CHECK_THROWS_AS(build_tiled_pyramid(rgb, 2, 2, 0), ConfigError);
    Image gray = make_image({8, 8}, 1);
    CHECK_THROWS_AS(build_tiled_pyramid(gray, 2, 2, 64), DimensionError);
    Image volume = make_image({4, 4, 4}, 3);
    CHECK_THROWS_AS(build_tiled_pyramid(volume, 2, 2, 64), DimensionError);
}

TEST_CASE("single-level pyramid is the original image") {
    Image rgb = random_rgb({9, 13}, 5);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    REQUIRE(tiled.level_count() == 1);
    CHECK(tiled.level(0).extents == rgb.extents);
    CHECK(tiled.level(0).values == rgb.values);
}

TEST_CASE("constant image stays constant at every level") {
    Image rgb = rgb_image({8, 8}, [](std::int64_t, std::int64_t) { return std::array<real_t, 3>{40, 90, 200}; });
    TiledImage tiled = build_tiled_pyramid(rgb, 3, 2, 4);
    REQUIRE(tiled.level_count() == 3);
    CHECK(tiled.level(1).extents == Coords{4, 4});
    CHECK(tiled.level(2).extents == Coords{2, 2});
    const std::array<real_t, 3> want{40, 90, 200};
    for (std::int64_t l = 0; l < 3; ++l)
        for (std::int64_t c = 0; c < 3; ++c)
            for (auto v : tiled.level(l).channel(c)) CHECK(v == doctest::Approx(want[static_cast<std::size_t>(c)]).epsilon(1e-12));
}

TEST_CASE("coarser levels are block means of the finest level") {
    Image rgb = random_rgb({16, 16}, 77);
    TiledImage tiled = build_tiled_pyramid(rgb, 3, 2, 8);

    for (std::int64_t c = 0; c < 3; ++c) {
        auto fine = tiled.level(0).channel(c);
        auto mid = tiled.level(1).channel(c);
        auto coarse = tiled.level(2).channel(c);
        for (std::int64_t i = 0; i < 8; ++i)
            for (std::int64_t j = 0; j < 8; ++j) {
                double sum = 0;
                for (std::int64_t r = 2 * i; r < 2 * i + 2; ++r)
                    for (std::int64_t k = 2 * j; k < 2 * j + 2; ++k) sum += fine[r * 16 + k];
                CHECK(std::abs(mid[i * 8 + j] - sum / 4.0) < 1e-9);
            }
        for (std::int64_t i = 0; i < 4; ++i)
            for (std::int64_t j = 0; j < 4; ++j) {
                double sum = 0;
                for (std::int64_t r = 4 * i; r < 4 * i + 4; ++r)
                    for (std::int64_t k = 4 * j; k < 4 * j + 4; ++k) sum += fine[r * 16 + k];
                CHECK(std::abs(coarse[i * 4 + j] - sum / 16.0) < 1e-9);
            }
    }
}

TEST_CASE("pyramid levels conserve the global mean on divisible extents") {
    Image rgb = random_rgb({16, 16}, 3100);
    TiledImage tiled = build_tiled_pyramid(rgb, 4, 2, 8);
    for (std::int64_t c = 0; c < 3; ++c) {
        const double base = channel_mean(tiled.level(0), c);
        for (std::int64_t l = 1; l < tiled.level_count(); ++l)
            CHECK(std::abs(channel_mean(tiled.level(l), c) - base) < 1e-9);
    }
}

TEST_CASE("odd extents round up and edge boxes average what they cover") {
    Image rgb = random_rgb({5, 7}, 12);
    TiledImage tiled = build_tiled_pyramid(rgb, 2, 2, 4);
    REQUIRE(tiled.level(1).extents == Coords{3, 4});

    auto fine = tiled.level(0).channel(1);
    auto down = tiled.level(1).channel(1);
    CHECK(std::abs(down[0 * 4 + 0] - (fine[0] + fine[1] + fine[7] + fine[8]) / 4.0) < 1e-12);
    CHECK(std::abs(down[0 * 4 + 3] - (fine[6] + fine[13]) / 2.0) < 1e-12);
    CHECK(std::abs(down[2 * 4 + 0] - (fine[4 * 7 + 0] + fine[4 * 7 + 1]) / 2.0) < 1e-12);
    CHECK(std::abs(down[2 * 4 + 3] - fine[4 * 7 + 6]) < 1e-12);
}

TEST_CASE("region reads match direct slices and touch only intersecting tiles") {
    Image rgb = random_rgb({24, 40}, 99);
    TiledImage tiled = build_tiled_pyramid(rgb, 2, 2, 8);

    tiled.tiles_touched = 0;
    Image region = tiled.read_region(0, {5, 9}, {10, 14});
    REQUIRE(region.extents == Coords{10, 14});
    REQUIRE(region.channels == 3);
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t r = 0; r < 10; ++r)
            for (std::int64_t k = 0; k < 14; ++k)
                CHECK(region.channel(c)[r * 14 + k] == rgb.channel(c)[(5 + r) * 40 + 9 + k]);

    // Rows 5..14 cross tile rows 0..1, cols 9..22 cross tile cols 1..2.
    CHECK(tiled.tiles_touched == 4);

    tiled.tiles_touched = 0;
    tiled.read_region(0, {8, 16}, {8, 8});
    CHECK(tiled.tiles_touched == 1);

    tiled.tiles_touched = 0;
    tiled.read_region(1, {0, 0}, {12, 20});
    CHECK(tiled.tiles_touched == 6);

    CHECK(region.geometry.origin[0] == doctest::Approx(5.0));
    CHECK(region.geometry.origin[1] == doctest::Approx(9.0));

    CHECK_THROWS_AS(tiled.read_region(0, {20, 0}, {8, 8}), ContractError);
    CHECK_THROWS_AS(tiled.read_region(0, {-1, 0}, {4, 4}), ContractError);
    CHECK_THROWS_AS(tiled.read_region(0, {0, 0}, {0, 4}), ContractError);
    CHECK_THROWS_AS(tiled.read_region(2, {0, 0}, {2, 2}), ContractError);
}

TEST_CASE("pyramid bundles survive a write and read round trip") {
    TempDir dir;
    Image rgb = random_rgb({11, 18}, 41);
    TiledImage tiled = build_tiled_pyramid(rgb, 3, 2, 8);
    const std::string bundle = dir.path + "/slide";
    write_pyramid(tiled, bundle);

    TiledImage back = read_pyramid(bundle);
    CHECK(back.factor == 2);
    CHECK(back.tile == 8);
    REQUIRE(back.level_count() == 3);
    for (std::int64_t l = 0; l < 3; ++l) {
        CHECK(back.levels[static_cast<std::size_t>(l)].extents == tiled.levels[static_cast<std::size_t>(l)].extents);
        CHECK(back.levels[static_cast<std::size_t>(l)].values == tiled.levels[static_cast<std::size_t>(l)].values);
    }
}

TEST_CASE("pyramid bundle reader rejects malformed metadata") {
    TempDir dir;
    Image rgb = random_rgb({8, 8}, 4);
    TiledImage tiled = build_tiled_pyramid(rgb, 2, 2, 8);
    const std::string bundle = dir.path + "/slide";
    write_pyramid(tiled, bundle);

    CHECK_THROWS_AS(read_pyramid(dir.path + "/absent"), IoError);

    {
        std::ofstream meta(bundle + "/pyramid.meta", std::ios::binary);
        meta << "Factor = 2\nTile = 8\nLevels = 2\nColor = red\n";
    }
    CHECK_THROWS_AS(read_pyramid(bundle), ParseError);

    {
        std::ofstream meta(bundle + "/pyramid.meta", std::ios::binary);
        meta << "Factor = 2\nTile = 8\n";
    }
    CHECK_THROWS_AS(read_pyramid(bundle), ParseError);

    {
        std::ofstream meta(bundle + "/pyramid.meta", std::ios::binary);
        meta << "Factor = 1\nTile = 8\nLevels = 2\n";
    }
    CHECK_THROWS_AS(read_pyramid(bundle), FormatError);

    {
        std::ofstream meta(bundle + "/pyramid.meta", std::ios::binary);
        meta << "Factor = 2\nTile = 8\nLevels = 3\n";
    }
    CHECK_THROWS_AS(read_pyramid(bundle), IoError);

    {
        std::ofstream meta(bundle + "/pyramid.meta", std::ios::binary);
        meta << "Factor = 3\nTile = 8\nLevels = 2\n";
    }
    CHECK_THROWS_AS(read_pyramid(bundle), ValidationError);
}

TEST_CASE("otsu threshold matches an exhaustive search over every cut point") {
    Rng rng(2026);
    for (int trial = 0; trial < 200; ++trial) {
        std::array<std::int64_t, 256> hist{};
        if (trial % 2 == 0) {
            for (auto& h : hist) h = rng.next_u64() % 50;
        } else {
            const int spikes = 2 + static_cast<int>(rng.next_u64() % 6);
            for (int s = 0; s < spikes; ++s)
                hist[static_cast<std::size_t>(rng.next_u64() % 256)] += 1 + static_cast<std::int64_t>(rng.next_u64() % 1000);
        }
        std::int64_t nonempty = 0;
        for (auto h : hist) nonempty += h > 0;
        if (nonempty < 2) continue;
        CAPTURE(trial);
        CHECK(otsu_threshold(hist) == exhaustive_otsu(hist));
    }
}

TEST_CASE("otsu threshold keeps the lowest cut on ties and rejects degenerate input") {
    std::array<std::int64_t, 256> two_poles{};
    two_poles[0] = 5;
    two_poles[255] = 5;
    CHECK(otsu_threshold(two_poles) == 0);

    std::array<std::int64_t, 256> single{};
    single[17] = 100;
    CHECK_THROWS_AS(otsu_threshold(single), DegenerateInputError);

    std::array<std::int64_t, 256> empty{};
    CHECK_THROWS_AS(otsu_threshold(empty), DegenerateInputError);

    std::vector<std::int64_t> short_hist(100, 1);
    CHECK_THROWS_AS(otsu_threshold(short_hist), ContractError);
}

TEST_CASE("half dark and half bright splits exactly at the dark half") {
    Image rgb = rgb_image({8, 8}, [](std::int64_t r, std::int64_t) {
        const real_t v = r < 4 ? real_t(0) : real_t(255);
        return std::array<real_t, 3>{v, v, v};
    });
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    TissueMask mask = tissue_mask(tiled, 0);
    CHECK(mask.threshold == 0);
    REQUIRE(mask.extents == Coords{8, 8});
    for (std::int64_t r = 0; r < 8; ++r)
        for (std::int64_t c = 0; c < 8; ++c) CHECK(mask.values[static_cast<std::size_t>(r * 8 + c)] == (r < 4 ? 1 : 0));
}

TEST_CASE("near-white pixels are never tissue even below the threshold") {
    Image rgb = rgb_image({8, 8}, [](std::int64_t r, std::int64_t) {
        const real_t v = r < 4 ? real_t(245) : real_t(255);
        return std::array<real_t, 3>{v, v, v};
    });
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    TissueMask mask = tissue_mask(tiled, 0);
    CHECK(mask.count() == 0);
}

TEST_CASE("tissue masking works on coarser levels and rejects bad input") {
    Image rgb = rgb_image({16, 16}, [](std::int64_t r, std::int64_t c) {
        const real_t v = (r < 8 && c < 8) ? real_t(60) : real_t(250);
        return std::array<real_t, 3>{v, v, v};
    });
    TiledImage tiled = build_tiled_pyramid(rgb, 2, 2, 8);
    TissueMask mask = tissue_mask(tiled, 1);
    REQUIRE(mask.extents == Coords{8, 8});
    std::int64_t dark = 0;
    for (std::int64_t r = 0; r < 8; ++r)
        for (std::int64_t c = 0; c < 8; ++c) dark += mask.values[static_cast<std::size_t>(r * 8 + c)];
    CHECK(dark == 16);
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t c = 0; c < 4; ++c) CHECK(mask.values[static_cast<std::size_t>(r * 8 + c)] == 1);

    Image flat = rgb_image({4, 4}, [](std::int64_t, std::int64_t) { return std::array<real_t, 3>{128, 128, 128}; });
    TiledImage flat_tiled = build_tiled_pyramid(flat, 1, 2, 4);
    CHECK_THROWS_AS(tissue_mask(flat_tiled, 0), DegenerateInputError);
    CHECK_THROWS_AS(tissue_mask(flat_tiled, 1), ContractError);

    TiledImage gray_levels;
    gray_levels.levels.push_back(make_image({4, 4}, 1));
    CHECK_THROWS_AS(tissue_mask(gray_levels, 0), ContractError);
}

TEST_CASE("mining a full mask with no overlap tiles by floor counts") {
    Image rgb = random_rgb({16, 16}, 8);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    TissueMask mask = full_mask(tiled, 0);

    CoordinateList quarters = mine_patches(tiled, mask, {4, 4}, 0.0, 0.5);
    REQUIRE(quarters.size() == 16);
    std::size_t i = 0;
    for (std::int64_t r = 0; r < 16; r += 4)
        for (std::int64_t c = 0; c < 16; c += 4) {
            CHECK(quarters[i].corner == Coords{r, c});
            CHECK(quarters[i].tissue_fraction == doctest::Approx(1.0));
            ++i;
        }

    CHECK(mine_patches(tiled, mask, {5, 5}, 0.0, 0.0).size() == 9);
    CHECK(mine_patches(tiled, mask, {4, 4}, 0.5, 0.0).size() == 49);
    CHECK(mine_patches(tiled, mask, {16, 16}, 0.0, 0.0).size() == 1);
    CHECK(mine_patches(tiled, mask, {17, 17}, 0.0, 0.0).empty());
}

TEST_CASE("mining keeps exactly the coordinates whose tissue fraction clears the bar") {
    Image rgb = random_rgb({16, 16}, 21);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    TissueMask mask = full_mask(tiled, 0);
    for (std::int64_t r = 0; r < 16; ++r)
        for (std::int64_t c = 0; c < 16; ++c)
            if (r >= 6 || c >= 10) mask.values[static_cast<std::size_t>(r * 16 + c)] = 0;

    const double bar = 0.4;
    CoordinateList kept = mine_patches(tiled, mask, {4, 4}, 0.0, bar);
    std::size_t next = 0;
    for (std::int64_t r = 0; r + 4 <= 16; r += 4)
        for (std::int64_t c = 0; c + 4 <= 16; c += 4) {
            std::int64_t tissue = 0;
            for (std::int64_t i = r; i < r + 4; ++i)
                for (std::int64_t j = c; j < c + 4; ++j) tissue += mask.values[static_cast<std::size_t>(i * 16 + j)];
            const double fraction = static_cast<double>(tissue) / 16.0;
            if (fraction >= bar) {
                REQUIRE(next < kept.size());
                CHECK(kept[next].corner == Coords{r, c});
                CHECK(kept[next].tissue_fraction == doctest::Approx(fraction));
                ++next;
            }
        }
    CHECK(next == kept.size());

    CHECK(mine_patches(tiled, mask, {4, 4}, 0.0, 0.0).size() == 16);
}

TEST_CASE("mining scales fractions through the mask level") {
    Image rgb = random_rgb({8, 8}, 30);
    TiledImage tiled = build_tiled_pyramid(rgb, 2, 2, 8);
    TissueMask mask = full_mask(tiled, 1);
    REQUIRE(mask.extents == Coords{4, 4});
    mask.values.assign(16, 0);
    mask.values[0] = 1;
    mask.values[1] = 1;
    mask.values[2] = 1;

    CoordinateList kept = mine_patches(tiled, mask, {4, 4}, 0.0, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].corner == Coords{0, 0});
    CHECK(kept[0].tissue_fraction == doctest::Approx(0.5));

    CoordinateList loose = mine_patches(tiled, mask, {4, 4}, 0.0, 0.25);
    REQUIRE(loose.size() == 2);
    CHECK(loose[1].corner == Coords{0, 4});
    CHECK(loose[1].tissue_fraction == doctest::Approx(0.25));
}

TEST_CASE("mining an empty mask yields an empty logged list") {
    Image rgb = random_rgb({8, 8}, 31);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    TissueMask mask = full_mask(tiled, 0);
    mask.values.assign(mask.values.size(), 0);

    std::vector<std::string> notes;
    CoordinateList kept = mine_patches(tiled, mask, {4, 4}, 0.0, 0.0, [&](const std::string& m) { notes.push_back(m); });
    CHECK(kept.empty());
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].find("empty") != std::string::npos);
}

TEST_CASE("mining rejects out-of-range parameters and mismatched masks") {
    Image rgb = random_rgb({8, 8}, 32);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    TissueMask mask = full_mask(tiled, 0);

    CHECK_THROWS_AS(mine_patches(tiled, mask, {4, 4}, 1.0, 0.5), ConfigError);
    CHECK_THROWS_AS(mine_patches(tiled, mask, {4, 4}, -0.1, 0.5), ConfigError);
    CHECK_THROWS_AS(mine_patches(tiled, mask, {4, 4}, 0.0, 1.5), ConfigError);
    CHECK_THROWS_AS(mine_patches(tiled, mask, {4, 4, 4}, 0.0, 0.5), DimensionError);
    CHECK_THROWS_AS(mine_patches(tiled, mask, {0, 4}, 0.0, 0.5), DimensionError);

    TissueMask shrunk = mask;
    shrunk.extents = {4, 4};
    shrunk.values.assign(16, 1);
    CHECK_THROWS_AS(mine_patches(tiled, shrunk, {4, 4}, 0.0, 0.5), ContractError);
    TissueMask deep = mask;
    deep.level = 3;
    CHECK_THROWS_AS(mine_patches(tiled, deep, {4, 4}, 0.0, 0.5), ContractError);
}

TEST_CASE("coordinate lists survive a CSV round trip with a stable header") {
    TempDir dir;
    CoordinateList coords;
    coords.push_back({{0, 4}, 0.25});
    coords.push_back({{8, 12}, 1.0});
    coords.push_back({{16, 0}, 0.6875});
    const std::string path = dir.path + "/coords.csv";
    write_coordinate_list(path, coords);

    std::ifstream in(path, std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header == "x,y,tissue_fraction");
    std::string first;
    std::getline(in, first);
    CHECK(first == "4,0,0.25");

    CoordinateList back = read_coordinate_list(path);
    REQUIRE(back.size() == coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        CHECK(back[i].corner == coords[i].corner);
        CHECK(back[i].tissue_fraction == doctest::Approx(coords[i].tissue_fraction).epsilon(1e-12));
    }

    const std::string again = dir.path + "/coords2.csv";
    write_coordinate_list(again, back);
    std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
    std::string text_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string text_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(text_a == text_b);
}

TEST_CASE("coordinate list reader rejects malformed files") {
    TempDir dir;
    const std::string path = dir.path + "/bad.csv";
    {
        std::ofstream out(path, std::ios::binary);
        out << "col,row,frac\n";
    }
    CHECK_THROWS_AS(read_coordinate_list(path), FormatError);
    {
        std::ofstream out(path, std::ios::binary);
        out << "x,y,tissue_fraction\n1,2\n";
    }
    CHECK_THROWS_AS(read_coordinate_list(path), FormatError);
    {
        std::ofstream out(path, std::ios::binary);
        out << "x,y,tissue_fraction\na,2,0.5\n";
    }
    CHECK_THROWS_AS(read_coordinate_list(path), FormatError);
    CHECK_THROWS_AS(read_coordinate_list(dir.path + "/absent.csv"), IoError);
}

TEST_CASE("tiled inference averages covered voxels and leaves the rest flagged") {
    Image rgb = random_rgb({12, 12}, 50);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    auto model = constant_rgb_model(2, real_t(0.7));

    CoordinateList coords;
    coords.push_back({{0, 0}, 1.0});
    coords.push_back({{0, 4}, 1.0});
    coords.push_back({{4, 0}, 1.0});
    TiledInferResult result = tiled_infer(model, tiled, coords, {4, 4});

    REQUIRE(result.prediction.extents == Coords{12, 12});
    REQUIRE(result.prediction.classes == 2);
    CHECK(result.prediction.normalized);
    auto covered = [](std::int64_t r, std::int64_t c) { return (r < 4 && c < 8) || (r >= 4 && r < 8 && c < 4); };
    for (std::int64_t r = 0; r < 12; ++r)
        for (std::int64_t c = 0; c < 12; ++c) {
            const std::size_t off = static_cast<std::size_t>(r * 12 + c);
            if (covered(r, c)) {
                CHECK(result.prediction.class_plane(0)[r * 12 + c] == doctest::Approx(0.7));
                CHECK(result.prediction.class_plane(1)[r * 12 + c] == doctest::Approx(0.7));
                CHECK(result.counts.values[off] == doctest::Approx(1.0));
            } else {
                CHECK(result.prediction.class_plane(0)[r * 12 + c] == 0);
                CHECK(result.counts.values[off] == 0);
            }
            CHECK(result.labels.channel(0)[r * 12 + c] == 0);
        }
}

TEST_CASE("tiled inference over a full grid matches sliding-window averaging") {
    Image rgb = random_rgb({16, 16}, 51);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    auto model = voxelwise_rgb_model(3);

    TissueMask mask = full_mask(tiled, 0);
    CoordinateList coords = mine_patches(tiled, mask, {4, 4}, 0.0, 0.0);
    REQUIRE(coords.size() == 16);
    TiledInferResult tiled_result = tiled_infer(model, tiled, coords, {4, 4});

    StitchResult window = sliding_window_infer(model, rgb, {4, 4}, 0.0, StitchMode::average);
    CHECK(max_abs_diff(tiled_result.prediction.values, window.prediction.values) < 1e-9);
    for (auto v : tiled_result.counts.values) CHECK(v == doctest::Approx(1.0));
    for (auto v : tiled_result.prediction.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    Image direct_labels = argmax_labels(window.prediction);
    CHECK(tiled_result.labels.values == direct_labels.values);
}

TEST_CASE("overlapping tiled patches average like a brute-force accumulator") {
    Image rgb = random_rgb({8, 8}, 52);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    auto model = voxelwise_rgb_model(2);

    CoordinateList coords;
    coords.push_back({{0, 0}, 1.0});
    coords.push_back({{0, 2}, 1.0});
    TiledInferResult result = tiled_infer(model, tiled, coords, {4, 4});

    std::vector<double> acc(2 * 64, 0);
    std::vector<double> hits(64, 0);
    for (const auto& coord : coords) {
        Image region = tiled.read_region(0, coord.corner, {4, 4});
        Tensor batch = Tensor::from_data({1, 3, 4, 4}, region.values);
        Tensor out = model.forward(batch, nullptr);
        auto ov = out.values();
        for (std::int64_t i = 0; i < 4; ++i)
            for (std::int64_t j = 0; j < 4; ++j) {
                const std::int64_t off = (coord.corner[0] + i) * 8 + coord.corner[1] + j;
                hits[static_cast<std::size_t>(off)] += 1;
                for (std::int64_t c = 0; c < 2; ++c)
                    acc[static_cast<std::size_t>(c * 64 + off)] += ov[static_cast<std::size_t>(c * 16 + i * 4 + j)];
            }
    }
    for (std::int64_t off = 0; off < 64; ++off)
        for (std::int64_t c = 0; c < 2; ++c) {
            const double want = hits[static_cast<std::size_t>(off)] > 0
                                    ? acc[static_cast<std::size_t>(c * 64 + off)] / hits[static_cast<std::size_t>(off)]
                                    : 0.0;
            CHECK(std::abs(result.prediction.values[static_cast<std::size_t>(c * 64 + off)] - want) < 1e-9);
        }
    CHECK(result.counts.values[0 * 8 + 0] == doctest::Approx(1.0));
    CHECK(result.counts.values[0 * 8 + 2] == doctest::Approx(0.5));
}

TEST_CASE("tiled inference validates coordinates and model compatibility") {
    Image rgb = random_rgb({8, 8}, 53);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);

    auto model = constant_rgb_model(2, real_t(0.5));
    CoordinateList outside;
    outside.push_back({{6, 0}, 1.0});
    CHECK_THROWS_AS(tiled_infer(model, tiled, outside, {4, 4}), ContractError);
    CoordinateList negative;
    negative.push_back({{-1, 0}, 1.0});
    CHECK_THROWS_AS(tiled_infer(model, tiled, negative, {4, 4}), ContractError);

    auto volumetric = constant_rgb_model(2, real_t(0.5));
    volumetric.spec.dims = 3;
    CoordinateList ok;
    ok.push_back({{0, 0}, 1.0});
    CHECK_THROWS_AS(tiled_infer(volumetric, tiled, ok, {4, 4}), ContractError);

    auto gray_model = constant_rgb_model(2, real_t(0.5));
    gray_model.spec.in_channels = 1;
    CHECK_THROWS_AS(tiled_infer(gray_model, tiled, ok, {4, 4}), DimensionError);

    CHECK_THROWS_AS(tiled_infer(model, tiled, ok, {4, 4, 4}), DimensionError);
}

TEST_CASE("tiled inference reads patches with tile locality") {
    Image rgb = random_rgb({16, 16}, 54);
    TiledImage tiled = build_tiled_pyramid(rgb, 1, 2, 8);
    auto model = constant_rgb_model(2, real_t(0.5));

    CoordinateList coords;
    coords.push_back({{0, 0}, 1.0});
    coords.push_back({{0, 8}, 1.0});
    coords.push_back({{8, 0}, 1.0});
    tiled.tiles_touched = 0;
    tiled_infer(model, tiled, coords, {8, 8});
    CHECK(tiled.tiles_touched == 3);
}
