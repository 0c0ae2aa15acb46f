#include <cmath>
#include <fstream>

#include "doctest.h"
#include "embreg/losses.hpp"
#include "embreg/optimize.hpp"
#include "helpers.hpp"

using namespace embreg;

namespace {

struct Blob {
    double z, y, x, s, a;
};

std::vector<Blob> make_blobs(std::uint64_t seed, Dims d, int count) {
    Rng rng(seed);
    std::vector<Blob> b;
    for (int i = 0; i < count; ++i)
        b.push_back({rng.uniform(0, d.d), rng.uniform(0, d.h), rng.uniform(0, d.w), rng.uniform(2.5, 4.0),
                     rng.uniform(-1.0, 1.0)});
    return b;
}

double blob_value(const std::vector<Blob>& bs, double z, double y, double x) {
    double s = 0;
    for (const auto& b : bs) {
        const double r2 = (z - b.z) * (z - b.z) + (y - b.y) * (y - b.y) + (x - b.x) * (x - b.x);
        s += b.a * std::exp(-r2 / (2 * b.s * b.s));
    }
    return std::tanh(s);
}

// Trilinear sample of one field component, clamped.
double sample(const DisplacementField& f, int axis, double z, double y, double x) {
    const Dims d = f.dims();
    const double p[3] = {std::clamp(z, 0.0, d.d - 1.0), std::clamp(y, 0.0, d.h - 1.0), std::clamp(x, 0.0, d.w - 1.0)};
    int i0[3], i1[3];
    double t[3];
    for (int a = 0; a < 3; ++a) {
        i0[a] = static_cast<int>(std::floor(p[a]));
        i1[a] = std::min(i0[a] + 1, d[a] - 1);
        t[a] = p[a] - i0[a];
    }
    double s = 0;
    for (int k = 0; k < 8; ++k) {
        const int c[3] = {k & 4 ? i1[0] : i0[0], k & 2 ? i1[1] : i0[1], k & 1 ? i1[2] : i0[2]};
        const double w = (k & 4 ? t[0] : 1 - t[0]) * (k & 2 ? t[1] : 1 - t[1]) * (k & 1 ? t[2] : 1 - t[2]);
        s += w * f(axis, d.index(c[0], c[1], c[2]));
    }
    return s;
}

}  // namespace

TEST_CASE("pyramid radii follow the level") {
    OptParams p;
    CHECK(ncc_radius_for_level(p, 2) == 2);
    CHECK(ncc_radius_for_level(p, 1) == 3);
    CHECK(ncc_radius_for_level(p, 0) == 4);
    CHECK(p.lambda == 1.0);
    CHECK(p.gamma == 0.5);
    p.levels = 1;
    CHECK(ncc_radius_for_level(p, 0) == 4);
}

TEST_CASE("gradient checks") {
    const Dims d{12, 12, 12};
    Rng rng(7);
    const Volume f = testutil::smooth_volume(d, 1, 10), m = testutil::smooth_volume(d, 2, 10);
    const auto ef = synth_descriptors(f, 16), em = synth_descriptors(m, 16);
    const CompositeLoss loss(f, m, ef, em, BodyMask::full(d), {2, 1.0, 0.5});
    const auto tau = testutil::random_field(rng, d, 1.2);
    const std::vector<double> t(tau.data().begin(), tau.data().end());
    CHECK(gradient_check(loss, LossTerm::Smooth, t, 50, 1) < 1e-4);
    CHECK(gradient_check(loss, LossTerm::Sam, t, 50, 2) < 1e-3);
    CHECK(gradient_check(loss, LossTerm::Ncc, t, 50, 3) < 1e-2);
    CHECK(gradient_check(loss, LossTerm::Total, t, 50, 4) < 1e-2);
    CHECK_THROWS_AS(gradient_check(loss, LossTerm::Smooth, t, 0, 1), std::invalid_argument);
}

TEST_CASE("smoothness gradient vanishes on a constant field") {
    const Dims d{6, 6, 6};
    const Volume f = testutil::smooth_volume(d);
    const CompositeLoss loss(f, f, EmbeddingVolume{}, EmbeddingVolume{}, BodyMask::full(d), {2, 1.0, 0.5});
    const auto c = DisplacementField::constant(d, {0.25, -0.5, 0.75});
    std::vector<double> t(c.data().begin(), c.data().end()), g(t.size());
    loss.evaluate(t, g, LossTerm::Smooth);
    const double h = 1e-3;
    for (int z = 1; z < 5; ++z)
        for (int y = 1; y < 5; ++y)
            for (int x = 1; x < 5; ++x)
                for (int a = 0; a < 3; ++a) {
                    const std::size_t k = a * d.count() + d.index(z, y, x);
                    CHECK(g[k] == 0.0);
                    const double orig = t[k];
                    t[k] = orig + h;
                    const double up = loss.evaluate(t).smooth;
                    t[k] = orig - h;
                    const double down = loss.evaluate(t).smooth;
                    t[k] = orig;
                    CHECK(std::abs((up - down) / (2 * h)) <= 1e-8);
                }
}

TEST_CASE("identical inputs are a fixed point") {
    const Dims d{24, 24, 24};
    const Volume f = testutil::smooth_volume(d, 4, 12);
    const auto e = synth_descriptors(f);
    const auto mask = BodyMask::full(d);
    OptParams p;
    const OptResult r = optimize_field(f, f, e, e, mask, p);
    CHECK_FALSE(r.diverged);
    CHECK(mean_magnitude(r.field) < 0.1);
    REQUIRE_FALSE(r.history.empty());
    const CompositeLoss loss(f, f, e, e, mask, {4, 1.0, 0.5});
    const std::vector<double> zero(3 * d.count(), 0.0), t(r.field.data().begin(), r.field.data().end());
    CHECK(std::abs(loss.evaluate(t).total - loss.evaluate(zero).total) < 1e-3);
}

TEST_CASE("recovers a known smooth deformation") {
    const Dims d{40, 40, 40};
    const auto blobs = make_blobs(5, d, 60);
    Rng rng(17);
    const DisplacementField r = random_smooth_field(rng, d, 4.0);
    Volume fixed(d), moving(d);
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                const std::size_t i = d.index(z, y, x);
                fixed[i] = static_cast<float>(blob_value(blobs, z, y, x));
                moving[i] = static_cast<float>(blob_value(blobs, z + r(0, i), y + r(1, i), x + r(2, i)));
            }
    // truth: tau(u) = -r(u + tau(u)), solved by fixed-point iteration
    DisplacementField truth(d);
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                double t[3] = {0, 0, 0};
                for (int it = 0; it < 50; ++it)
                    for (int a = 0; a < 3; ++a) t[a] = -sample(r, a, z + t[0], y + t[1], x + t[2]);
                for (int a = 0; a < 3; ++a) truth(a, d.index(z, y, x)) = static_cast<float>(t[a]);
            }
    const auto mask = BodyMask::full(d);
    const OptResult res = optimize_field(fixed, moving, synth_descriptors(fixed), synth_descriptors(moving), mask, {});
    double before = 0, after = 0;
    int count = 0;
    for (int z = 6; z < 34; ++z)
        for (int y = 6; y < 34; ++y)
            for (int x = 6; x < 34; ++x) {
                const std::size_t i = d.index(z, y, x);
                double e0 = 0, e1 = 0;
                for (int a = 0; a < 3; ++a) {
                    e0 += truth(a, i) * truth(a, i);
                    e1 += (res.field(a, i) - truth(a, i)) * (res.field(a, i) - truth(a, i));
                }
                before += std::sqrt(e0);
                after += std::sqrt(e1);
                ++count;
            }
    MESSAGE("endpoint error before ", before / count, " after ", after / count);
    CHECK(after / count < 1.0);
    CHECK(after < before);

    // the returned field is the best one visited at full resolution
    double best0 = 1e300;
    for (const auto& h : res.history)
        if (h.level == 0) best0 = std::min(best0, h.total);
    const CompositeLoss loss(fixed, moving, synth_descriptors(fixed), synth_descriptors(moving), mask, {4, 1.0, 0.5});
    const std::vector<double> t(res.field.data().begin(), res.field.data().end());
    CHECK(loss.evaluate(t).total == doctest::Approx(best0).epsilon(1e-5));
    for (const auto& h : res.history) CHECK(h.total == doctest::Approx(h.ncc + h.sam + 0.5 * h.smooth).epsilon(1e-12));

    SUBCASE("heavier regularisation gives a smoother field") {
        OptParams stiff;
        stiff.gamma = 1e3;
        const OptResult s = optimize_field(fixed, moving, synth_descriptors(fixed), synth_descriptors(moving), mask, stiff);
        CHECK(smoothness_loss(s.field, mask) < smoothness_loss(res.field, mask));
    }
}

TEST_CASE("loss history csv") {
    const auto dir = testutil::scratch_dir("opt_csv");
    std::vector<LossReport> h{{0.5, 0.25, 0.125, 0.9375, 0, 2}, {0.4, 0.2, 0.1, 0.65, 1, 2}};
    write_loss_history_csv(h, dir / "l.csv");
    std::ifstream is(dir / "l.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "iteration,level,ncc,sam,smooth,total");
    std::getline(is, line);
    CHECK(line == "0,2,0.5,0.25,0.125,0.9375");
}

TEST_CASE("parameter validation") {
    const Dims d{8, 8, 8};
    const Volume f(d);
    OptParams p;
    p.levels = 0;
    CHECK_THROWS_AS(optimize_field(f, f, {}, {}, BodyMask::full(d), p), std::invalid_argument);
    CHECK_THROWS_AS(optimize_field(f, Volume(Dims{4, 4, 4}), {}, {}, BodyMask::full(d), {}), std::invalid_argument);
}
