#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

using namespace embreg;

namespace {

Volume filled(Dims d, float value) {
    Volume v(d);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = value;
    return v;
}

void paint_cube(Volume& v, int lo, int hi, float value) {
    for (int z = lo; z < hi; ++z)
        for (int y = lo; y < hi; ++y)
            for (int x = lo; x < hi; ++x) v(z, y, x) = value;
}

}  // namespace

TEST_CASE("image rejects inconsistent geometry") {
    CHECK_THROWS_AS(Volume(Dims{2, 2, 2}, {1, 1, 1}, {0, 0, 0}, std::vector<float>(7)), std::invalid_argument);
    CHECK_THROWS_AS(Volume(Dims{2, 2, 2}, {1, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(Volume(Dims{0, 2, 2}), std::invalid_argument);
    CHECK(Dims{2, 3, 4}.index(1, 2, 3) == (1 * 3 + 2) * 4 + 3);
}

TEST_CASE("window_normalize maps the HU window onto [-1, 1]") {
    Volume v(Dims{1, 1, 5});
    const float hu[5] = {-800, 400, -200, -3000, 3000};
    for (int i = 0; i < 5; ++i) v[i] = hu[i];
    const Volume w = window_normalize(v, -800, 400);
    CHECK(w[0] == doctest::Approx(-1.0));
    CHECK(w[1] == doctest::Approx(1.0));
    CHECK(w[2] == doctest::Approx(0.0));
    CHECK(w[3] == -1.0f);
    CHECK(w[4] == 1.0f);
    CHECK(w.dims() == v.dims());
    CHECK_THROWS_AS(window_normalize(v, 400, -800), std::invalid_argument);
    CHECK_THROWS_AS(window_normalize(v, 10, 10), std::invalid_argument);
}

TEST_CASE("window_normalize is monotone") {
    Rng rng(11);
    Volume v(Dims{1, 1, 400});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(-1500 + 3 * static_cast<double>(i) + rng.uniform());
    for (int trial = 0; trial < 5; ++trial) {
        const double lo = rng.uniform(-1200, 0), hi = lo + rng.uniform(1, 1500);
        const Volume w = window_normalize(v, lo, hi);
        for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] >= w[i - 1]);
    }
}

TEST_CASE("resample_isotropic") {
    SUBCASE("same spacing is the identity") {
        Rng rng(2);
        Volume v(Dims{5, 6, 7}, {2, 2, 2}, {1, 2, 3});
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(rng.uniform(-1, 1));
        const Volume r = resample_isotropic(v, 2.0);
        REQUIRE(r.dims() == v.dims());
        CHECK(r.origin() == v.origin());
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(r[i] - v[i]) <= 1e-6);
    }
    SUBCASE("8 cubed at 1 mm becomes 4 cubed at 2 mm") {
        const Volume r = resample_isotropic(Volume(Dims{8, 8, 8}), 2.0);
        CHECK(r.dims() == Dims{4, 4, 4});
        CHECK(r.spacing() == Vec3{2, 2, 2});
    }
    SUBCASE("ramp along x follows the analytic ramp") {
        Volume v(Dims{4, 4, 8});
        for (int z = 0; z < 4; ++z)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 8; ++x) v(z, y, x) = 0.25f * x - 1.0f;
        const Volume r = resample_isotropic(v, 2.0);
        REQUIRE(r.dims() == Dims{2, 2, 4});
        for (int z = 0; z < 2; ++z)
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 4; ++x) CHECK(std::abs(r(z, y, x) - (0.25 * (2.0 * x) - 1.0)) <= 1e-5);
    }
    SUBCASE("anisotropic input and minimum extent") {
        const Volume r = resample_isotropic(Volume(Dims{3, 10, 10}, {5, 1, 1}), 2.0);
        CHECK(r.dims() == Dims{8, 5, 5});
        CHECK(resample_isotropic(Volume(Dims{1, 4, 4}), 4.0).dims() == Dims{1, 1, 1});
    }
    CHECK_THROWS_AS(resample_isotropic(Volume(Dims{2, 2, 2}), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(resample_isotropic(Volume(Dims{2, 2, 2}), -1.0), std::invalid_argument);
}

TEST_CASE("compute_body_mask") {
    const Dims d{16, 16, 16};
    SUBCASE("empty candidate set") {
        CHECK_THROWS_WITH(compute_body_mask(filled(d, -1.0f), -0.5), doctest::Contains("no body found"));
    }
    SUBCASE("solid cube") {
        Volume v = filled(d, -1.0f);
        paint_cube(v, 4, 12, 0.5f);
        const BodyMask m = compute_body_mask(v, -0.5);
        CHECK(m.voxel_count() == 512);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(m[i] == (v[i] > 0.0f));
    }
    SUBCASE("hollow cube gets its cavity filled") {
        Volume v = filled(d, -1.0f);
        paint_cube(v, 4, 12, 0.5f);
        paint_cube(v, 7, 9, -1.0f);
        const BodyMask m = compute_body_mask(v, -0.5);
        CHECK(m.voxel_count() == 512);
        CHECK(m(7, 7, 7));
        CHECK(m(8, 8, 8));
    }
    SUBCASE("only the largest component survives") {
        Volume v = filled(d, -1.0f);
        paint_cube(v, 6, 12, 0.5f);
        v(1, 1, 1) = 0.9f;
        v(1, 1, 2) = 0.9f;
        const BodyMask m = compute_body_mask(v, -0.5);
        CHECK(m.voxel_count() == 216);
        CHECK_FALSE(m(1, 1, 1));
    }
    SUBCASE("sub-threshold clutter outside the body is ignored") {
        Volume v = filled(d, -1.0f);
        paint_cube(v, 4, 12, 0.5f);
        const BodyMask before = compute_body_mask(v, -0.5);
        Rng rng(5);
        for (int k = 0; k < 200; ++k) {
            const int z = static_cast<int>(rng.index(16)), y = static_cast<int>(rng.index(16)),
                      x = static_cast<int>(rng.index(16));
            if (!before(z, y, x)) v(z, y, x) = static_cast<float>(rng.uniform(-1.0, -0.5000001));
        }
        const BodyMask after = compute_body_mask(v, -0.5);
        CHECK(after.image() == before.image());
    }
}

TEST_CASE("crop and reframe keep physical positions") {
    Volume v(Dims{6, 6, 6}, {2, 2, 2}, {10, 20, 30});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
    const Volume c = crop(v, CropBox{1, 4, 2, 5, 0, 6});
    CHECK(c.dims() == Dims{3, 3, 6});
    CHECK(c.origin() == Vec3{12, 24, 30});
    CHECK(c(0, 0, 0) == v(1, 2, 0));
    CHECK_THROWS_AS(crop(v, CropBox{0, 7, 0, 6, 0, 6}), std::invalid_argument);

    const Volume r = reframe(c, v.dims(), v.spacing(), v.origin());
    CHECK(r(2, 3, 4) == v(2, 3, 4));
    CHECK(r(1, 2, 0) == c(0, 0, 0));
}
