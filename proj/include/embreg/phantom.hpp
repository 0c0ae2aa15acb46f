// Analytic multi-organ phantom for synthetic benchmarks and tests.
//
// The phantom is a continuous function of position (voxel units on a given
// grid), so deformed copies are rendered exactly instead of by resampling.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "embreg/affine.hpp"
#include "embreg/field.hpp"
#include "embreg/volume.hpp"

namespace embreg {

/// Platform-independent uniform draws on top of mt19937_64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t bits() { return gen_(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
    /// Marsaglia polar method.
    double normal();

private:
    std::mt19937_64 gen_;
};

inline constexpr int kPhantomLabels = 5;

struct PhantomOptions {
    Dims dims{64, 64, 64};
    Vec3 spacing{2.0, 2.0, 2.0};
    std::uint64_t seed = 1;
    int texture_blobs = -1;  // -1: scale with the grid volume
};

class Phantom {
public:
    explicit Phantom(const PhantomOptions& opts);

    const Dims& dims() const { return opts_.dims; }
    const Vec3& spacing() const { return opts_.spacing; }

    /// Hounsfield-like intensity; -1000 outside the body.
    double intensity(const Vec3& p) const;
    /// 0 = background or unlabelled body, 1..kPhantomLabels organs.
    std::uint16_t label(const Vec3& p) const;

    using Mapping = std::function<Vec3(const Vec3&)>;
    /// Image whose voxel u shows the phantom at map(u); identity when map is empty.
    Volume render(const Mapping& map = {}) const;
    LabelVolume render_labels(const Mapping& map = {}) const;

private:
    struct Ellipsoid {
        Vec3 centre, radii;
        double hu;
    };
    struct Blob {
        Vec3 centre;
        double sigma, hu;
    };

    static constexpr int kCell = 8;
    static constexpr double kBlobDensity = 300.0 / (64.0 * 64.0 * 64.0);

    PhantomOptions opts_;
    Ellipsoid body_;
    std::vector<Ellipsoid> organs_;  // organ i carries label i + 1
    std::vector<Blob> blobs_;
    int cells_[3] = {1, 1, 1};
    std::vector<std::vector<int>> buckets_;
};

/// Random affine about the grid centre: rotation angle <= max_rotation_deg
/// about a random axis, per-axis scale in [1 - s, 1 + s], translation of norm
/// <= max_translation voxels.
AffineTransform random_affine(Rng& rng, const Dims& dims, double max_rotation_deg, double max_scale_dev,
                              double max_translation);

/// Smooth random field: a sum of Gaussian bumps rescaled so the largest
/// voxel displacement is exactly max_displacement.
DisplacementField random_smooth_field(Rng& rng, const Dims& dims, double max_displacement, int bumps = 8,
                                      double sigma_fraction = 0.15);

struct SyntheticPair {
    Volume fixed_hu, moving_hu;
    LabelVolume fixed_labels, moving_labels;
    /// Moving voxel m shows the fixed-space phantom at truth(m).
    Phantom::Mapping truth;
};

/// Moving image generated by a known affine A: moving(m) = fixed(A m).
/// A registration that maps moving toward fixed should recover A itself.
SyntheticPair make_affine_pair(const Phantom& phantom, const AffineTransform& a);

/// Moving image generated by m -> A (m + r(m)) with r a smooth field.
SyntheticPair make_deformed_pair(const Phantom& phantom, const AffineTransform& a, const DisplacementField& r);

/// Fixed benchmark misalignment: 14 degree rotation about an oblique axis,
/// per-axis scale (1.08, 0.93, 1.07) and a translation of about 9.3 voxels,
/// all about the grid centre.
AffineTransform benchmark_affine(const Dims& dims);

struct BenchmarkOptions {
    int size = 96;
    std::uint64_t seed = 7;
    double max_field = 6.0;  // voxels
};

struct Benchmark {
    SyntheticPair pair;
    AffineTransform affine;
    DisplacementField field;
};

/// Phantom pair deformed by benchmark_affine plus a smooth random field.
Benchmark make_benchmark(const BenchmarkOptions& opts);

}  // namespace embreg
