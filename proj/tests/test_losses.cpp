#include <cmath>

#include "doctest.h"
#include "embreg/losses.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace embreg;

namespace {

BodyMask random_mask(Rng& rng, Dims d, double p = 0.6) {
    Image<std::uint8_t> m(d);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < p ? 1 : 0;
    m[0] = 1;
    return BodyMask(m);
}

EmbeddingVolume basis(int c, int channels, Dims d) {
    EmbeddingVolume e(channels, d);
    for (std::size_t i = 0; i < e.voxels(); ++i) e(c, i) = 1.0f;
    e.set_normalized(true);
    return e;
}

}  // namespace

TEST_CASE("local NCC") {
    const Dims d{9, 9, 9};
    Rng rng(1);
    const Volume f = testutil::random_volume(rng, d);
    const auto full = BodyMask::full(d);
    SUBCASE("identical images") {
        CHECK(local_ncc_similarity(f, f, full, 2) == doctest::Approx(1.0).epsilon(1e-4));
    }
    SUBCASE("affine intensity change") {
        Volume m(d);
        for (std::size_t i = 0; i < f.size(); ++i) m[i] = 2.5f * f[i] + 0.7f;
        CHECK(local_ncc_similarity(f, m, full, 2) == doctest::Approx(1.0).epsilon(1e-3));
    }
    SUBCASE("direct summation oracle") {
        const Volume m = testutil::random_volume(rng, d);
        const auto mask = random_mask(rng, d);
        for (int r : {1, 2, 3})
            CHECK(std::abs(local_ncc_similarity(f, m, mask, r) - oracle::ncc_similarity(f, m, mask, r)) <= 1e-6);
    }
    SUBCASE("flat windows score zero") {
        Volume flat(d);
        CHECK(local_ncc_similarity(flat, flat, full, 1) == 0.0);
    }
    CHECK_THROWS_AS(local_ncc_similarity(f, Volume(Dims{2, 2, 2}), full, 2), std::invalid_argument);
    CHECK_THROWS_AS(local_ncc_similarity(f, f, full, 0), std::invalid_argument);
}

TEST_CASE("SAM loss") {
    const Dims d{6, 6, 6};
    const auto full = BodyMask::full(d);
    Rng rng(2);
    const auto e = testutil::random_embedding(rng, 8, d);
    CHECK(sam_loss(e, e, full) == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(sam_loss(basis(0, 4, d), basis(1, 4, d), full) == doctest::Approx(1.0).epsilon(1e-5));

    // cosine 1 on the lower half, 0 on the upper half
    EmbeddingVolume m = basis(0, 4, d);
    for (std::size_t i = 0; i < m.voxels() / 2; ++i) {
        m(0, i) = 0.0f;
        m(2, i) = 1.0f;
    }
    CHECK(std::abs(sam_loss(basis(0, 4, d), m, full) - 0.5) <= 1e-5);

    const auto g = testutil::random_embedding(rng, 8, d);
    const auto mask = random_mask(rng, d);
    CHECK(std::abs(sam_loss(e, g, mask) - oracle::sam(e, g, mask)) <= 1e-6);

    EmbeddingVolume raw(8, d);
    CHECK_THROWS_AS(sam_loss(e, raw, full), std::invalid_argument);
    CHECK_THROWS_AS(sam_loss(e, testutil::random_embedding(rng, 8, Dims{2, 2, 2}), full), std::invalid_argument);
}

TEST_CASE("smoothness loss") {
    const Dims d{7, 8, 9};
    const auto full = BodyMask::full(d);
    CHECK(smoothness_loss(DisplacementField::constant(d, {1.5, -2, 3}), full) == 0.0);

    const double s = 0.3;
    DisplacementField lin(d);
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) lin(2, d.index(z, y, x)) = static_cast<float>(s * x);
    CHECK(std::abs(smoothness_loss(lin, full) - s * s) <= 1e-6);

    Rng rng(3);
    const auto f = testutil::random_field(rng, d, 2);
    const auto mask = random_mask(rng, d);
    CHECK(std::abs(smoothness_loss(f, mask) - oracle::smoothness(f, mask)) <= 1e-6);
    CHECK(smoothness_loss(f, mask) >= 0.0);
}

TEST_CASE("correlation feature") {
    Rng rng(4);
    SUBCASE("self correlation") {
        const Dims d{6, 6, 6};
        const auto e = testutil::random_embedding(rng, 8, d);
        const auto cf = correlation_feature(e, e);
        for (std::size_t i = 0; i < e.voxels(); ++i) CHECK(std::abs(cf(13, i) - 1.0) <= 1e-5);
        CHECK(cf.displacement(13) == std::array<int, 3>{0, 0, 0});
        CHECK(cf.displacement(0) == std::array<int, 3>{-2, -2, -2});
        CHECK(cf.displacement(14) == std::array<int, 3>{0, 0, 2});
    }
    SUBCASE("brute force over all 27 channels and the centre channel is the cosine map") {
        const Dims d{6, 6, 6};
        const auto f = testutil::random_embedding(rng, 8, d);
        const auto m = testutil::random_embedding(rng, 8, d);
        const auto cf = correlation_feature(f, m, 2);
        for (int ch = 0; ch < 27; ++ch) {
            const int dz = (ch / 9 - 1) * 2, dy = (ch / 3 % 3 - 1) * 2, dx = (ch % 3 - 1) * 2;
            for (int z = 0; z < 6; ++z)
                for (int y = 0; y < 6; ++y)
                    for (int x = 0; x < 6; ++x) {
                        const std::size_t i = d.index(z, y, x);
                        const std::size_t j = d.index(std::clamp(z + dz, 0, 5), std::clamp(y + dy, 0, 5),
                                                      std::clamp(x + dx, 0, 5));
                        double s = 0;
                        for (int c = 0; c < 8; ++c) s += double(f(c, i)) * m(c, j);
                        CHECK(std::abs(cf(ch, i) - s) <= 1e-6);
                    }
        }
        for (std::size_t i = 0; i < f.voxels(); ++i) {
            double s = 0;
            for (int c = 0; c < 8; ++c) s += double(f(c, i)) * m(c, i);
            CHECK(cf(13, i) == static_cast<float>(s));
        }
    }
    SUBCASE("a shift by two voxels along x shows up in its channel") {
        const Dims d{10, 10, 14};
        const auto f = testutil::random_embedding(rng, 16, d);
        EmbeddingVolume m(16, d);
        // m(u + (0,0,2)) = f(u)
        for (int z = 0; z < d.d; ++z)
            for (int y = 0; y < d.h; ++y)
                for (int x = 0; x < d.w; ++x)
                    for (int c = 0; c < 16; ++c) m(c, d.index(z, y, x)) = f(c, d.index(z, y, std::max(0, x - 2)));
        m.set_normalized(true);
        const auto cf = correlation_feature(f, m, 2);
        const auto arg = cf.argmax_field();
        for (int z = 2; z < 8; ++z)
            for (int y = 2; y < 8; ++y)
                for (int x = 2; x < 10; ++x) {
                    const std::size_t i = d.index(z, y, x);
                    CHECK(cf(14, i) > cf(13, i));
                    CHECK(arg(2, i) == 2.0f);
                }
    }
}

TEST_CASE("composite loss terms add up") {
    const Dims d{8, 8, 8};
    Rng rng(5);
    const Volume f = testutil::smooth_volume(d, 1), m = testutil::smooth_volume(d, 2);
    const auto ef = testutil::random_embedding(rng, 6, d), em = testutil::random_embedding(rng, 6, d);
    const auto mask = random_mask(rng, d, 0.8);
    const CompositeLoss loss(f, m, ef, em, mask, {2, 1.0, 0.5});
    const auto tau = testutil::random_field(rng, d, 1.5);
    const std::vector<double> t(tau.data().begin(), tau.data().end());
    const LossValues v = loss.evaluate(t);
    CHECK(v.total == doctest::Approx((1 - v.ncc_similarity) + 1.0 * v.sam + 0.5 * v.smooth).epsilon(1e-12));
    CHECK(v.sam >= 0);
    CHECK(v.smooth >= 0);
    CHECK(v.ncc_similarity >= 0);
    CHECK(v.ncc_similarity <= 1);

    // at tau = 0 each term equals its standalone counterpart
    const std::vector<double> zero(3 * d.count(), 0.0);
    const LossValues z = loss.evaluate(zero);
    CHECK(std::abs(z.ncc_similarity - local_ncc_similarity(f, m, mask, 2)) <= 1e-9);
    CHECK(std::abs(z.sam - sam_loss(ef, em, mask)) <= 1e-6);
    CHECK(z.smooth == 0.0);
    CHECK(std::abs(v.smooth - smoothness_loss(tau, mask)) <= 1e-9);
}
