#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "voxseg/nifti.hpp"
#include "voxseg/rng.hpp"
#include "voxseg/volume.hpp"

using namespace voxseg;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
    static int counter = 0;
    const auto d = fs::temp_directory_path() / ("voxseg_io_" + std::to_string(::getpid()) +
                                                "_" + std::to_string(counter++));
    fs::create_directories(d);
    return d.string();
}

CtVolume random_ct(uint64_t seed, Dims3 dims) {
    Rng r(seed);
    CtVolume v;
    v.dims = dims;
    v.spacing = {0.8, 0.8, 1.5};
    v.voxels.resize(static_cast<size_t>(dims.count()));
    for (auto& x : v.voxels) x = static_cast<float>(r.next_normal() * 120.0);
    return v;
}

} // namespace

TEST_CASE("hand-written 2x2x2 raw file loads with the documented axis order") {
    const std::string dir = temp_dir();
    {
        std::ofstream j(dir + "/t.json");
        j << R"({"dims":[2,2,2],"spacing":[1,1,1],"kind":"intensity","order":"xyz"})";
    }
    {
        std::ofstream raw(dir + "/t.f32raw", std::ios::binary);
        for (int i = 0; i < 8; ++i) {
            const float f = static_cast<float>(i);
            raw.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
    CtVolume v = load_ct(dir + "/t");
    CHECK(v.dims == Dims3{2, 2, 2});
    CHECK(v.at(0, 0, 0) == 0.0f);
    CHECK(v.at(1, 0, 0) == 1.0f); // x fastest
    CHECK(v.at(0, 1, 0) == 2.0f);
    CHECK(v.at(0, 0, 1) == 4.0f);
    CHECK(v.at(1, 1, 1) == 7.0f);
}

TEST_CASE("payload size mismatch is rejected") {
    const std::string dir = temp_dir();
    {
        std::ofstream j(dir + "/bad.json");
        j << R"({"dims":[4,4,4],"spacing":[1,1,1],"kind":"intensity","order":"xyz"})";
    }
    {
        std::ofstream raw(dir + "/bad.f32raw", std::ios::binary);
        for (int i = 0; i < 63; ++i) {
            const float f = 0.0f;
            raw.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
    CHECK_THROWS_WITH_AS(load_volume(dir + "/bad"),
                         doctest::Contains("size mismatch"), std::runtime_error);
}

TEST_CASE("missing file and empty path errors") {
    CHECK_THROWS(load_volume("/nonexistent/nowhere"));
    CHECK_THROWS(load_volume(""));
    CtVolume v = random_ct(1, {2, 2, 2});
    CHECK_THROWS(save_volume(v, ""));
}

TEST_CASE("save/load round trip is bitwise on a random volume") {
    const std::string dir = temp_dir();
    CtVolume v = random_ct(2, {8, 8, 8});
    save_volume(v, dir + "/r");
    CtVolume u = load_ct(dir + "/r");
    CHECK(u.dims == v.dims);
    CHECK(u.spacing == v.spacing);
    CHECK(std::memcmp(u.voxels.data(), v.voxels.data(), v.voxels.size() * 4) == 0);
}

TEST_CASE("mask volumes record their kind and load as labels") {
    const std::string dir = temp_dir();
    LabelVolume m;
    m.dims = {4, 4, 4};
    m.mask.assign(64, 0);
    m.mask[5] = 1;
    m.mask[13] = 1;
    save_volume(m, dir + "/m");
    {
        std::ifstream j(dir + "/m.json");
        std::string text((std::istreambuf_iterator<char>(j)),
                         std::istreambuf_iterator<char>());
        CHECK(text.find("\"mask\"") != std::string::npos);
    }
    LabelVolume back = load_label(dir + "/m");
    CHECK(back.mask == m.mask);
    CHECK_THROWS(load_ct(dir + "/m")); // kind mismatch surfaces as an error
}

TEST_CASE("truncation clamps to [-100, 240] and is idempotent") {
    CtVolume v = random_ct(3, {6, 6, 6});
    v.voxels[0] = 500.0f;
    v.voxels[1] = -200.0f;
    v.voxels[2] = 100.0f;
    CtVolume t = truncate_intensity(v);
    CHECK(t.voxels[0] == 240.0f);
    CHECK(t.voxels[1] == -100.0f);
    CHECK(t.voxels[2] == 100.0f);
    for (float x : t.voxels) {
        CHECK(x >= -100.0f);
        CHECK(x <= 240.0f);
    }
    CtVolume t2 = truncate_intensity(t);
    CHECK(std::memcmp(t.voxels.data(), t2.voxels.data(), t.voxels.size() * 4) == 0);
    CHECK(t.spacing == v.spacing);
    CHECK_THROWS(truncate_intensity(v, 10.0f, 10.0f));
}

TEST_CASE("normalization: constant volume maps to zeros, {-1,1} is unchanged") {
    CtVolume c;
    c.dims = {2, 2, 2};
    c.voxels.assign(8, 7.0f);
    CtVolume n = normalize_zero_mean_unit_var(c);
    for (float x : n.voxels) CHECK(x == 0.0f);

    CtVolume two;
    two.dims = {2, 1, 1};
    two.voxels = {-1.0f, 1.0f};
    CtVolume n2 = normalize_zero_mean_unit_var(two);
    CHECK(n2.voxels[0] == -1.0f);
    CHECK(n2.voxels[1] == 1.0f);
}

TEST_CASE("normalization puts a random 16^3 volume at zero mean, unit variance") {
    CtVolume v = random_ct(4, {16, 16, 16});
    CtVolume n = normalize_zero_mean_unit_var(v);
    double sum = 0, ss = 0;
    for (float x : n.voxels) {
        sum += x;
        ss += static_cast<double>(x) * x;
    }
    const double mean = sum / static_cast<double>(n.voxels.size());
    const double var = ss / static_cast<double>(n.voxels.size()) - mean * mean;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(std::fabs(var - 1.0) < 1e-5);
    CHECK(n.spacing == v.spacing);

    // applying twice equals applying once within 1e-5 per voxel
    CtVolume n2 = normalize_zero_mean_unit_var(n);
    for (size_t i = 0; i < n.voxels.size(); ++i)
        CHECK(std::fabs(n.voxels[i] - n2.voxels[i]) < 1e-5f);
}

TEST_CASE("NIfTI round trip preserves voxels and spacing") {
    const std::string dir = temp_dir();
    CtVolume v = random_ct(5, {6, 5, 4});
    save_volume(v, dir + "/n.nii");
    CtVolume u = load_ct(dir + "/n.nii");
    CHECK(u.dims == v.dims);
    CHECK(std::fabs(u.spacing.x - v.spacing.x) < 1e-6);
    CHECK(std::memcmp(u.voxels.data(), v.voxels.data(), v.voxels.size() * 4) == 0);

    LabelVolume m;
    m.dims = {4, 4, 4};
    m.mask.assign(64, 0);
    m.mask[7] = 1;
    save_volume(m, dir + "/m.nii");
    LabelVolume mb = load_label(dir + "/m.nii");
    CHECK(mb.mask == m.mask);
}

TEST_CASE("NIfTI rejects unsupported datatypes") {
    const std::string dir = temp_dir();
    CtVolume v = random_ct(6, {3, 3, 3});
    save_volume(v, dir + "/d.nii");
    // flip the datatype code to float64 (64), unsupported in this subset
    std::fstream f(dir + "/d.nii", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(70);
    const int16_t dt = 64;
    f.write(reinterpret_cast<const char*>(&dt), 2);
    f.close();
    CHECK_THROWS_WITH_AS(load_volume(dir + "/d.nii"),
                         doctest::Contains("unsupported datatype"), std::runtime_error);
}
