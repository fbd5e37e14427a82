#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <zlib.h>

#include "cdsl/data.hpp"
#include "cdsl/png_io.hpp"

using namespace cdsl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("cdsl_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// hand-assembled PNG with an arbitrary color type, for rejection tests
void write_png_with_color_type(const fs::path& path, int w, int h, int color_type,
                               int channels) {
    std::vector<std::uint8_t> raw;
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w * channels; ++x) raw.push_back(static_cast<std::uint8_t>(x));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(bound);
    REQUIRE(compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) == Z_OK);
    z.resize(bound);

    auto be32 = [](std::vector<std::uint8_t>& out, std::uint32_t v) {
        out.push_back(v >> 24);
        out.push_back((v >> 16) & 0xff);
        out.push_back((v >> 8) & 0xff);
        out.push_back(v & 0xff);
    };
    auto chunk = [&](std::vector<std::uint8_t>& out, const char* type,
                     const std::vector<std::uint8_t>& payload) {
        be32(out, static_cast<std::uint32_t>(payload.size()));
        const std::size_t start = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), payload.begin(), payload.end());
        const uLong crc =
            ::crc32(::crc32(0L, Z_NULL, 0), out.data() + start, static_cast<uInt>(out.size() - start));
        be32(out, static_cast<std::uint32_t>(crc));
    };
    std::vector<std::uint8_t> png = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<std::uint8_t> ihdr;
    be32(ihdr, static_cast<std::uint32_t>(w));
    be32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);
    ihdr.push_back(static_cast<std::uint8_t>(color_type));
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk(png, "IHDR", ihdr);
    chunk(png, "IDAT", z);
    chunk(png, "IEND", {});
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
}

} // namespace

TEST_CASE("png gray8 round-trips exactly") {
    TempDir tmp("png");
    GrayImage img;
    img.width = 33;
    img.height = 7;
    img.pixels.resize(33 * 7);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>((i * 37) % 256);
    const std::string p = (tmp.path / "x.png").string();
    write_png_gray8(p, img);
    const GrayImage back = read_png_gray8(p);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.pixels == img.pixels);
}

TEST_CASE("png reader rejects multi-channel and missing files") {
    TempDir tmp("png_reject");
    const fs::path rgb = tmp.path / "rgb.png";
    write_png_with_color_type(rgb, 4, 4, 2, 3); // color type 2 = RGB
    CHECK_THROWS_AS(read_png_gray8(rgb.string()), DataError);
    CHECK_THROWS_AS(read_png_gray8((tmp.path / "absent.png").string()), DataError);
    const fs::path junk = tmp.path / "junk.png";
    std::ofstream(junk) << "not a png";
    CHECK_THROWS_AS(read_png_gray8(junk.string()), DataError);
}

TEST_CASE("load_dataset: 3 matched pairs load in id order with normalized values") {
    TempDir tmp("load3");
    std::vector<ImageSample> samples = synth_dataset(3, 32, 5);
    // force known pixel values into one image / mask
    samples[0].image.at(0, 0) = 1.0f;  // pixel 255
    samples[0].mask.at(0, 0) = 1.0f;   // pixel 255 >= 128
    save_dataset(tmp.path.string(), samples);
    const auto loaded = load_dataset(tmp.path.string());
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].id == "synth_0000");
    CHECK(loaded[1].id == "synth_0001");
    CHECK(loaded[2].id == "synth_0002");
    CHECK(loaded[0].image.at(0, 0) == 1.0f);
    CHECK(loaded[0].mask.at(0, 0) == 1.0f);
    for (const auto& s : loaded)
        for (const float v : s.mask.v) CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("load_dataset round-trips mask bits exactly") {
    TempDir tmp("roundtrip");
    const auto samples = synth_dataset(4, 32, 11);
    save_dataset(tmp.path.string(), samples);
    const auto loaded = load_dataset(tmp.path.string());
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) CHECK(loaded[i].mask == samples[i].mask);
}

TEST_CASE("load_dataset failure modes") {
    TempDir tmp("fail");
    const auto samples = synth_dataset(2, 32, 3);
    save_dataset(tmp.path.string(), samples);

    SUBCASE("missing mask names the id") {
        fs::remove(tmp.path / "masks" / "synth_0001.png");
        try {
            load_dataset(tmp.path.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("synth_0001") != std::string::npos);
        }
    }
    SUBCASE("mask without image names the id") {
        fs::remove(tmp.path / "images" / "synth_0000.png");
        try {
            load_dataset(tmp.path.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("synth_0000") != std::string::npos);
        }
    }
    SUBCASE("size mismatch is a hard error") {
        GrayImage small;
        small.width = small.height = 32;
        small.pixels.assign(32 * 32, 0);
        GrayImage other;
        other.width = other.height = 64;
        other.pixels.assign(64 * 64, 0);
        write_png_gray8((tmp.path / "images" / "synth_0000.png").string(), other);
        CHECK_THROWS_AS(load_dataset(tmp.path.string()), DataError);
    }
    SUBCASE("non-divisible-by-32 dimensions instruct a resize") {
        GrayImage odd;
        odd.width = odd.height = 40;
        odd.pixels.assign(40 * 40, 128);
        write_png_gray8((tmp.path / "images" / "synth_0000.png").string(), odd);
        write_png_gray8((tmp.path / "masks" / "synth_0000.png").string(), odd);
        try {
            load_dataset(tmp.path.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("resize") != std::string::npos);
        }
    }
    SUBCASE("missing directories") {
        CHECK_THROWS_AS(load_dataset((tmp.path / "nope").string()), DataError);
    }
}

TEST_CASE("meta.csv attaches direction and tumor type") {
    TempDir tmp("meta");
    auto samples = synth_dataset(2, 32, 9);
    samples[0].direction = Direction::coronal;
    samples[0].tumor_type = TumorType::glioma;
    samples[1].direction = Direction::axial;
    samples[1].tumor_type = TumorType::pituitary;
    save_dataset(tmp.path.string(), samples);
    const auto loaded = load_dataset(tmp.path.string());
    CHECK(loaded[0].direction == Direction::coronal);
    CHECK(loaded[0].tumor_type == TumorType::glioma);
    CHECK(loaded[1].direction == Direction::axial);
    CHECK(loaded[1].tumor_type == TumorType::pituitary);
}

TEST_CASE("resize_bilinear: 4x4 ramp at factor 1/2 matches the reference convention") {
    // reference: out(i,j) samples src (2i+0.5, 2j+0.5) -> mean of each 2x2 block
    Grid ramp(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) ramp.at(y, x) = static_cast<float>(4 * y + x);
    const Grid half = resize_bilinear(ramp, 2);
    REQUIRE(half.h == 2);
    REQUIRE(half.w == 2);
    CHECK(half.at(0, 0) == doctest::Approx(2.5));
    CHECK(half.at(0, 1) == doctest::Approx(4.5));
    CHECK(half.at(1, 0) == doctest::Approx(10.5));
    CHECK(half.at(1, 1) == doctest::Approx(12.5));

    // independent per-pixel evaluation of the stated convention
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double sy = (i + 0.5) / 0.5 - 0.5, sx = (j + 0.5) / 0.5 - 0.5;
            const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
            const double fy = sy - y0, fx = sx - x0;
            const double expect =
                (1 - fy) * ((1 - fx) * ramp.at(y0, x0) + fx * ramp.at(y0, x0 + 1)) +
                fy * ((1 - fx) * ramp.at(y0 + 1, x0) + fx * ramp.at(y0 + 1, x0 + 1));
            CHECK(half.at(i, j) == doctest::Approx(expect).epsilon(1e-6));
        }
}

TEST_CASE("resize_bilinear shapes, constants, range and errors") {
    Grid big(512, 512);
    for (auto& v : big.v) v = 0.25f;
    const Grid half = resize_bilinear(big, 2);
    CHECK(half.h == 256);
    CHECK(half.w == 256);
    for (const float v : half.v) CHECK(v == doctest::Approx(0.25f));

    Grid odd(34, 34);
    CHECK_THROWS(resize_bilinear(odd, 4)); // 34/4 is not an integer
    Grid g(32, 32);
    CHECK_THROWS(resize_bilinear(g, 3)); // factor outside {1/2,1/4,1/8}
}

TEST_CASE("make_folds partitions ids evenly and deterministically") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("id" + std::to_string(i));
    const FoldPlan plan = make_folds(ids, 5, 42);
    std::vector<int> counts(5, 0);
    for (const auto& [id, f] : plan.assignment) {
        CHECK(f >= 0);
        CHECK(f < 5);
        ++counts[f];
    }
    for (const int c : counts) CHECK(c == 2);
    CHECK(plan.assignment.size() == 10);

    const FoldPlan again = make_folds(ids, 5, 42);
    CHECK(plan.assignment == again.assignment);
    const FoldPlan other = make_folds(ids, 5, 43);
    CHECK(plan.assignment != other.assignment);
}

TEST_CASE("make_folds on 3064 ids gives sizes {613,613,613,613,612}") {
    std::vector<std::string> ids;
    for (int i = 0; i < 3064; ++i) ids.push_back("img" + std::to_string(i));
    const FoldPlan plan = make_folds(ids, 5, 7);
    std::vector<int> counts(5, 0);
    for (const auto& [id, f] : plan.assignment) ++counts[f];
    std::multiset<int> sizes(counts.begin(), counts.end());
    CHECK(sizes == std::multiset<int>{612, 613, 613, 613, 613});
}

TEST_CASE("make_folds rejects bad input") {
    std::vector<std::string> ids = {"a", "b", "c"};
    CHECK_THROWS(make_folds(ids, 1, 0));
    CHECK_THROWS(make_folds(ids, 4, 0));
    ids.push_back("a"); // duplicate
    CHECK_THROWS(make_folds(ids, 2, 0));
}

TEST_CASE("fold partition property across k and seeds") {
    std::vector<std::string> ids;
    for (int i = 0; i < 23; ++i) ids.push_back("s" + std::to_string(i));
    for (const int k : {2, 3, 5, 7}) {
        for (const std::uint32_t seed : {1u, 9u, 77u}) {
            const FoldPlan plan = make_folds(ids, k, seed);
            std::set<std::string> seen;
            std::vector<int> counts(k, 0);
            for (const auto& [id, f] : plan.assignment) {
                seen.insert(id);
                ++counts[f];
            }
            CHECK(seen.size() == ids.size()); // exhaustive and disjoint
            const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
            CHECK(*hi - *lo <= 1);
        }
    }
}

TEST_CASE("split_train_val: sizes, partition and determinism") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("x" + std::to_string(i));
    const auto [train, val] = split_train_val(ids, 0.2, 3);
    CHECK(val.size() == 2);
    CHECK(train.size() == 8);
    std::set<std::string> all(train.begin(), train.end());
    all.insert(val.begin(), val.end());
    CHECK(all.size() == 10);

    const auto [train2, val2] = split_train_val(ids, 0.2, 3);
    CHECK(train == train2);
    CHECK(val == val2);

    // one CV training split of 3064: ceil(0.2 * 2451) = 491
    std::vector<std::string> big;
    for (int i = 0; i < 2451; ++i) big.push_back("b" + std::to_string(i));
    CHECK(split_train_val(big, 0.2, 1).second.size() == 491);

    CHECK_THROWS(split_train_val({}, 0.2, 1));
    CHECK_THROWS(split_train_val(ids, 0.0, 1));
    CHECK_THROWS(split_train_val(ids, 1.0, 1));
}

TEST_CASE("synth_dataset: deterministic, nonempty masks, bounded foreground") {
    const auto a = synth_dataset(8, 64, 7);
    const auto b = synth_dataset(8, 64, 7);
    REQUIRE(a.size() == 8);
    CHECK(a == b); // bit-identical
    for (const auto& s : a) {
        CHECK(s.image.h == 64);
        CHECK(s.image.w == 64);
        std::size_t fg = 0;
        for (const float v : s.mask.v) {
            CHECK((v == 0.0f || v == 1.0f));
            fg += v > 0.5f;
        }
        CHECK(fg > 0);
        for (const float v : s.image.v) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("synth foreground fraction stays within [0.02, 0.30] over 100 generations") {
    for (std::uint32_t seed = 0; seed < 100; ++seed) {
        const auto samples = synth_dataset(1, 64, seed);
        std::size_t fg = 0;
        for (const float v : samples[0].mask.v) fg += v > 0.5f;
        const double frac = static_cast<double>(fg) / (64.0 * 64.0);
        CHECK(frac >= 0.02);
        CHECK(frac <= 0.30);
    }
}

TEST_CASE("synth_dataset precondition checks") {
    CHECK_THROWS(synth_dataset(0, 64, 1));
    CHECK_THROWS(synth_dataset(4, 48, 1)); // not divisible by 32
}

TEST_CASE("to_net_samples and collate stack tensors in order") {
    const auto samples = to_net_samples(synth_dataset(5, 32, 2));
    REQUIRE(samples.size() == 5);
    CHECK(samples[0].input.shape == Shape4{1, 1, 32, 32});
    CHECK(samples[0].mask.shape == Shape4{1, 1, 32, 32});
    const std::vector<int> order = {3, 1, 4};
    const auto [batch, masks] = collate(samples, order, 0, 3);
    CHECK(batch.shape == Shape4{3, 1, 32, 32});
    CHECK(masks.shape == Shape4{3, 1, 32, 32});
    for (int i = 0; i < 32 * 32; ++i) {
        CHECK(batch.data[i] == samples[3].input.data[i]);
        CHECK(batch.data[32 * 32 + i] == samples[1].input.data[i]);
        CHECK(masks.data[2 * 32 * 32 + i] == samples[4].mask.data[i]);
    }
}
