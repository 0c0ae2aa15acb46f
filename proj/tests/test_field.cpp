#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

using namespace embreg;

namespace {

MatchSet nodes(const std::vector<std::pair<std::array<int, 3>, std::array<int, 3>>>& pairs) {
    MatchSet ms;
    for (const auto& [f, disp] : pairs) {
        ms.fixed_points.push_back(f);
        ms.moving_points.push_back({f[0] + disp[0], f[1] + disp[1], f[2] + disp[2]});
        ms.similarities.push_back(1.0);
    }
    return ms;
}

}  // namespace

TEST_CASE("build_coarse_field") {
    const Dims d{17, 17, 17};
    SUBCASE("zero displacements") {
        const auto f = build_coarse_field(nodes({{{0, 0, 0}, {0, 0, 0}}, {{8, 8, 8}, {0, 0, 0}}}), d, 8);
        for (float v : f.data()) CHECK(v == 0.0f);
    }
    SUBCASE("single node fills everything") {
        const auto f = build_coarse_field(nodes({{{8, 8, 8}, {0, 0, 4}}}), d, 8);
        for (std::size_t i = 0; i < f.voxels(); ++i) {
            CHECK(f(0, i) == 0.0f);
            CHECK(f(1, i) == 0.0f);
            CHECK(f(2, i) == 4.0f);
        }
    }
    SUBCASE("linear between adjacent nodes") {
        const auto f = build_coarse_field(nodes({{{0, 0, 0}, {0, 0, 0}}, {{0, 0, 8}, {0, 0, 8}}}), Dims{1, 1, 9}, 8);
        CHECK(std::abs(f(2, 4) - 4.0) <= 1e-6);
        for (int x = 0; x <= 8; ++x) CHECK(std::abs(f(2, x) - x) <= 1e-6);
    }
    SUBCASE("exact at knots and bounded by the largest node displacement") {
        Rng rng(3);
        MatchSet ms;
        double biggest = 0;
        for (int z = 0; z < d.d; z += 8)
            for (int y = 0; y < d.h; y += 8)
                for (int x = 0; x < d.w; x += 8) {
                    if (rng.uniform() < 0.3) continue;
                    const std::array<int, 3> disp{int(rng.index(9)) - 4, int(rng.index(9)) - 4, int(rng.index(9)) - 4};
                    ms.fixed_points.push_back({z, y, x});
                    ms.moving_points.push_back({z + disp[0], y + disp[1], x + disp[2]});
                    ms.similarities.push_back(1.0);
                    biggest = std::max(biggest, std::sqrt(double(disp[0] * disp[0] + disp[1] * disp[1] + disp[2] * disp[2])));
                }
        const auto f = build_coarse_field(ms, d, 8);
        for (std::size_t k = 0; k < ms.size(); ++k) {
            const auto& p = ms.fixed_points[k];
            const std::size_t i = d.index(p[0], p[1], p[2]);
            for (int a = 0; a < 3; ++a) CHECK(f(a, i) == float(ms.moving_points[k][a] - p[a]));
        }
        CHECK(max_magnitude(f) <= biggest + 1e-6);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(build_coarse_field(MatchSet{}, d, 8), std::invalid_argument);
        CHECK_THROWS_AS(build_coarse_field(nodes({{{3, 0, 0}, {0, 0, 0}}}), d, 8), std::invalid_argument);
    }
}

TEST_CASE("warps by a zero field are the identity") {
    const Dims d{6, 7, 8};
    Rng rng(1);
    const DisplacementField zero(d);
    const Volume v = testutil::random_volume(rng, d);
    const Volume w = warp_by_field(v, zero);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(w[i] - v[i]) <= 1e-6);
    const auto e = testutil::random_embedding(rng, 5, d);
    const auto we = warp_embedding_by_field(e, zero);
    for (std::size_t i = 0; i < e.data().size(); ++i) CHECK(std::abs(we.data()[i] - e.data()[i]) <= 1e-6);
    LabelVolume l(d);
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<std::uint16_t>(rng.index(6));
    CHECK(warp_labels_by_field(l, zero) == l);
}

TEST_CASE("constant integer field is an exact shift") {
    const Dims d{5, 6, 9};
    Rng rng(2);
    const Volume v = testutil::random_volume(rng, d);
    const Volume w = warp_by_field(v, DisplacementField::constant(d, {0, 0, 2}));
    LabelVolume l(d);
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<std::uint16_t>(rng.index(4));
    const LabelVolume wl = warp_labels_by_field(l, DisplacementField::constant(d, {0, 0, 2}));
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                CHECK(w(z, y, x) == v(z, y, std::min(d.w - 1, x + 2)));
                CHECK(wl(z, y, x) == l(z, y, std::min(d.w - 1, x + 2)));
            }
    CHECK_THROWS_AS(warp_by_field(v, DisplacementField(Dims{5, 6, 8})), std::invalid_argument);
}

TEST_CASE("compose_fields") {
    const Dims d{20, 20, 20};
    Rng rng(5);
    SUBCASE("zero inner leaves outer") {
        const auto outer = testutil::random_field(rng, d, 3);
        const auto c = compose_fields(outer, DisplacementField(d));
        for (std::size_t i = 0; i < outer.data().size(); ++i) CHECK(std::abs(c.data()[i] - outer.data()[i]) <= 1e-6);
    }
    SUBCASE("constants add") {
        const auto c = compose_fields(DisplacementField::constant(d, {0, 0, 1}), DisplacementField::constant(d, {0, 0, 2}));
        for (std::size_t i = 0; i < c.voxels(); ++i) {
            CHECK(c(0, i) == 0.0f);
            CHECK(c(2, i) == 3.0f);
        }
    }
    SUBCASE("two-step warp matches the composed warp") {
        const Dims big{32, 32, 32};
        const Volume v = testutil::smooth_volume(big, 7, 6, 4.0, 6.0);
        Rng r2(11);
        const auto outer = random_smooth_field(r2, big, 2.5);
        const auto inner = random_smooth_field(r2, big, 2.5);
        const Volume two = warp_by_field(warp_by_field(v, outer), inner);
        const Volume one = warp_by_field(v, compose_fields(outer, inner));
        double worst = 0;
        for (int z = 6; z < 26; ++z)
            for (int y = 6; y < 26; ++y)
                for (int x = 6; x < 26; ++x) worst = std::max(worst, double(std::abs(two(z, y, x) - one(z, y, x))));
        CHECK(worst < 0.02);
    }
    CHECK_THROWS_AS(compose_fields(DisplacementField(d), DisplacementField(Dims{2, 2, 2})), std::invalid_argument);
}

TEST_CASE("field container") {
    std::vector<float> bad(3 * 8, 0.0f);
    bad[5] = std::nanf("");
    CHECK_THROWS_AS(DisplacementField(Dims{2, 2, 2}, {1, 1, 1}, {0, 0, 0}, bad), std::invalid_argument);
    const auto f = DisplacementField::constant(Dims{2, 2, 2}, {3, 0, 4});
    CHECK(mean_magnitude(f) == doctest::Approx(5.0));
    CHECK(max_magnitude(f) == doctest::Approx(5.0));
}
