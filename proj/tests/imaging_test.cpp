#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "patchwork/image.hpp"
#include "patchwork/rng.hpp"
#include "support.hpp"

using namespace patchwork;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path dir;
    TempDir(const std::string& name) : dir(fs::temp_directory_path() / name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string file(const std::string& name) const { return (dir / name).string(); }
};

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image random_image(Coords extents, std::int64_t channels, std::uint64_t seed) {
    auto img = make_image(std::move(extents), channels);
    Rng rng(seed);
    for (auto& v : img.values) v = static_cast<real_t>(rng.uniform(-100.0, 100.0));
    return img;
}

} // namespace

TEST_CASE("mha round trip preserves values and geometry") {
    TempDir tmp("patchwork_io_mha");
    auto img = random_image({4, 8, 8}, 1, 1);
    img.geometry.spacing = {2.0, 1.0, 1.0};
    img.geometry.origin = {-3.5, 0.25, 10.0};
    const auto path = tmp.file("vol.mha");
    write_image(img, path);
    auto back = read_image(path);
    REQUIRE(back.extents == img.extents);
    CHECK(back.channels == 1);
    CHECK(testsupport::max_abs_diff({back.values.data(), back.values.size()},
                                    {img.values.data(), img.values.size()}) == 0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.geometry.spacing[i] == doctest::Approx(img.geometry.spacing[i]).epsilon(1e-9));
        CHECK(back.geometry.origin[i] == doctest::Approx(img.geometry.origin[i]).epsilon(1e-9));
    }

    auto multi = random_image({5, 6}, 3, 2);
    write_image(multi, tmp.file("multi.mha"));
    auto mback = read_image(tmp.file("multi.mha"));
    CHECK(mback.channels == 3);
    CHECK(testsupport::max_abs_diff({mback.values.data(), mback.values.size()},
                                    {multi.values.data(), multi.values.size()}) == 0);
}

TEST_CASE("mha fixture parses the text header convention") {
    TempDir tmp("patchwork_io_fixture");
    std::string header =
        "ObjectType = Image\n"
        "NDims = 2\n"
        "DimSize = 3 2\n"
        "ElementSpacing = 1.5 2.5\n"
        "Offset = 10 20\n"
        "ElementType = MET_UCHAR\n"
        "ElementDataFile = LOCAL\n";
    std::string payload = {1, 2, 3, 4, 5, 6};
    const auto path = tmp.file("fixture.mha");
    write_bytes(path, header + payload);

    auto img = read_image(path);
    CHECK(img.extents == Coords{2, 3}); // y rows of x samples
    CHECK(img.channels == 1);
    CHECK(img.geometry.spacing == std::vector<double>{2.5, 1.5});
    CHECK(img.geometry.origin == std::vector<double>{20.0, 10.0});
    for (int i = 0; i < 6; ++i) CHECK(img.values[static_cast<std::size_t>(i)] == real_t(i + 1));

    // 16-bit signed little-endian: -2 = 0xFFFE
    std::string h16 =
        "NDims = 1\nDimSize = 2\nElementType = MET_SHORT\nElementDataFile = LOCAL\n";
    std::string p16 = {'\x05', '\x00', '\xFE', '\xFF'};
    write_bytes(tmp.file("s16.mha"), h16 + p16);
    auto s16 = read_image(tmp.file("s16.mha"));
    CHECK(s16.values[0] == real_t(5));
    CHECK(s16.values[1] == real_t(-2));
    CHECK(s16.geometry.spacing == std::vector<double>{1.0}); // defaulted

    std::string hf =
        "NDims = 1\nDimSize = 1\nElementType = MET_FLOAT\nElementDataFile = LOCAL\n";
    const float fval = 3.25f;
    std::string pf(reinterpret_cast<const char*>(&fval), sizeof(float));
    write_bytes(tmp.file("f32.mha"), hf + pf);
    CHECK(read_image(tmp.file("f32.mha")).values[0] == real_t(3.25));
}

TEST_CASE("mha malformed inputs are rejected with positions") {
    TempDir tmp("patchwork_io_bad");
    auto expect_parse = [&](const std::string& name, const std::string& content) {
        write_bytes(tmp.file(name), content);
        CHECK_THROWS_WITH_AS(read_image(tmp.file(name)), doctest::Contains("byte"), ParseError);
    };
    expect_parse("no_eq.mha", "NDims 2\nElementDataFile = LOCAL\n");
    expect_parse("no_data.mha", "NDims = 2\nDimSize = 2 2\nElementType = MET_UCHAR\n");
    expect_parse("mismatch.mha",
                 "NDims = 3\nDimSize = 2 2\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n");
    expect_parse("short_payload.mha",
                 "NDims = 1\nDimSize = 4\nElementType = MET_UCHAR\nElementDataFile = LOCAL\nab");

    write_bytes(tmp.file("badtype.mha"),
                "NDims = 1\nDimSize = 1\nElementType = MET_LONG\nElementDataFile = LOCAL\nx");
    CHECK_THROWS_AS(read_image(tmp.file("badtype.mha")), FormatError);
    write_bytes(tmp.file("ext.mha"),
                "NDims = 1\nDimSize = 1\nElementType = MET_UCHAR\nElementDataFile = data.raw\n");
    CHECK_THROWS_AS(read_image(tmp.file("ext.mha")), FormatError);
    CHECK_THROWS_AS(read_image(tmp.file("absent.mha")), IoError);
    CHECK_THROWS_AS(read_image(tmp.file("wat.tiff")), FormatError);
}

TEST_CASE("pgm fixture and round trip") {
    TempDir tmp("patchwork_io_pgm");
    std::string fixture = "P5\n# a comment\n3 2\n255\n";
    std::string pixels = {'\x00', '\x40', '\x80', '\xC0', '\xFF', '\x01'};
    write_bytes(tmp.file("g.pgm"), fixture + pixels);
    auto img = read_image(tmp.file("g.pgm"));
    CHECK(img.extents == Coords{2, 3});
    CHECK(img.channels == 1);
    const real_t want[] = {0, 64, 128, 192, 255, 1};
    for (int i = 0; i < 6; ++i) CHECK(img.values[static_cast<std::size_t>(i)] == want[i]);
    CHECK(img.geometry.spacing == std::vector<double>{1.0, 1.0});

    write_image(img, tmp.file("copy.pgm"));
    auto back = read_image(tmp.file("copy.pgm"));
    CHECK(back.extents == img.extents);
    CHECK(testsupport::max_abs_diff({back.values.data(), back.values.size()},
                                    {img.values.data(), img.values.size()}) == 0);

    write_bytes(tmp.file("deep.pgm"), "P5\n1 1\n65535\n\x01\x01");
    CHECK_THROWS_AS(read_image(tmp.file("deep.pgm")), FormatError);

    auto bad = make_image({2, 2}, 1);
    bad.values[0] = real_t(0.5);
    CHECK_THROWS_AS(write_image(bad, tmp.file("frac.pgm")), ValidationError);
    auto rgb = make_image({2, 2}, 3);
    CHECK_THROWS_AS(write_image(rgb, tmp.file("rgb.pgm")), DimensionError);
}

TEST_CASE("ppm stores channels planar in memory, interleaved on disk") {
    TempDir tmp("patchwork_io_ppm");
    // one row, two pixels: (10,20,30) then (40,50,60)
    std::string fixture = "P6\n2 1\n255\n";
    std::string pixels = {10, 20, 30, 40, 50, 60};
    write_bytes(tmp.file("c.ppm"), fixture + pixels);
    auto img = read_image(tmp.file("c.ppm"));
    CHECK(img.extents == Coords{1, 2});
    CHECK(img.channels == 3);
    const real_t want[] = {10, 40, 20, 50, 30, 60};
    for (int i = 0; i < 6; ++i) CHECK(img.values[static_cast<std::size_t>(i)] == want[i]);

    write_image(img, tmp.file("copy.ppm"));
    std::ifstream f(tmp.file("copy.ppm"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(bytes.substr(bytes.size() - 6) == pixels);
}

TEST_CASE("manifest parses rows in order with resolved paths") {
    TempDir tmp("patchwork_manifest");
    for (const auto& name : {"a0.mha", "a1.mha", "b0.mha", "b1.mha", "c0.mha", "c1.mha",
                             "ma.mha", "mb.mha", "mc.mha"})
        write_image(make_image({2, 2}, 1), tmp.file(name));
    write_bytes(tmp.file("subjects.csv"),
                "SubjectID,Channel_0,Channel_1,Label\n"
                "sub_a,a0.mha,a1.mha,ma.mha\n"
                "sub_b,b0.mha,b1.mha,mb.mha\n"
                "sub_c,c0.mha,c1.mha,mc.mha\n");
    auto recs = read_manifest(tmp.file("subjects.csv"), ManifestTask::segmentation);
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].subject_id == "sub_a");
    CHECK(recs[1].subject_id == "sub_b");
    CHECK(recs[2].subject_id == "sub_c");
    REQUIRE(recs[0].channel_paths.size() == 2);
    CHECK(recs[0].channel_paths[0] == tmp.file("a0.mha"));
    CHECK(std::get<std::string>(recs[2].target) == tmp.file("mc.mha"));

    write_bytes(tmp.file("reg.csv"),
                "SubjectID,Channel_0,Label\n"
                "r1,a0.mha,63.5\n"
                "r2,b0.mha,-2\n");
    auto reg = read_manifest(tmp.file("reg.csv"), ManifestTask::regression);
    CHECK(std::get<double>(reg[0].target) == 63.5);
    CHECK(std::get<double>(reg[1].target) == -2.0);
}

TEST_CASE("manifest error reporting") {
    TempDir tmp("patchwork_manifest_bad");
    write_image(make_image({2, 2}, 1), tmp.file("x.mha"));

    write_bytes(tmp.file("ragged.csv"),
                "SubjectID,Channel_0,Channel_1,Label\n"
                "a,x.mha,x.mha,x.mha\n"
                "b,x.mha,x.mha\n");
    CHECK_THROWS_WITH_AS(read_manifest(tmp.file("ragged.csv"), ManifestTask::segmentation),
                         doctest::Contains("line 3"), ParseError);

    write_bytes(tmp.file("dups.csv"),
                "SubjectID,Channel_0,Label\n"
                "a,x.mha,x.mha\n"
                "a,x.mha,x.mha\n"
                "b,x.mha,x.mha\n"
                "b,x.mha,x.mha\n");
    try {
        read_manifest(tmp.file("dups.csv"), ManifestTask::segmentation);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("a") != std::string::npos);
        CHECK(msg.find("b") != std::string::npos);
    }

    write_bytes(tmp.file("missing.csv"),
                "SubjectID,Channel_0,Label\n"
                "a,gone1.mha,x.mha\n"
                "b,x.mha,gone2.mha\n");
    try {
        read_manifest(tmp.file("missing.csv"), ManifestTask::segmentation);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("gone1.mha") != std::string::npos);
        CHECK(msg.find("gone2.mha") != std::string::npos);
    }

    write_bytes(tmp.file("badlabel.csv"),
                "SubjectID,Channel_0,Label\n"
                "a,x.mha,not_a_number\n");
    CHECK_THROWS_WITH_AS(read_manifest(tmp.file("badlabel.csv"), ManifestTask::regression),
                         doctest::Contains("line 2"), ParseError);

    write_bytes(tmp.file("badheader.csv"), "Subject,Chan,Label\na,x.mha,1\n");
    CHECK_THROWS_AS(read_manifest(tmp.file("badheader.csv"), ManifestTask::regression), ParseError);
    CHECK_THROWS_AS(read_manifest(tmp.file("nope.csv"), ManifestTask::regression), IoError);
}
