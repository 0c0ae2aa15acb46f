#include "embreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "embreg/interp.hpp"

namespace embreg {

double Rng::normal() {
    for (;;) {
        const double u = uniform(-1.0, 1.0), v = uniform(-1.0, 1.0);
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

namespace {

double ellipsoid_radius(const Vec3& p, const Vec3& c, const Vec3& r) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double t = (p[a] - c[a]) / r[a];
        s += t * t;
    }
    return std::sqrt(s);
}

// Soft inside indicator with a transition about one voxel wide.
double soft_inside(double rho, double mean_radius) {
    return 1.0 / (1.0 + std::exp((rho - 1.0) * mean_radius * 2.5));
}

double mean_radius(const Vec3& r) { return (r[0] + r[1] + r[2]) / 3.0; }

}  // namespace

Phantom::Phantom(const PhantomOptions& opts) : opts_(opts) {
    const Dims& d = opts.dims;
    auto at = [&](double fz, double fy, double fx) { return Vec3{fz * (d.d - 1), fy * (d.h - 1), fx * (d.w - 1)}; };
    auto rad = [&](double fz, double fy, double fx) { return Vec3{fz * d.d, fy * d.h, fx * d.w}; };
    body_ = {at(0.5, 0.5, 0.5), rad(0.36, 0.32, 0.38), 40.0};
    organs_ = {
        {at(0.46, 0.45, 0.33), rad(0.20, 0.14, 0.10), -720.0},  // left lung
        {at(0.44, 0.43, 0.68), rad(0.17, 0.13, 0.09), -640.0},  // right lung, smaller
        {at(0.40, 0.53, 0.55), rad(0.09, 0.09, 0.08), 140.0},   // heart
        {at(0.70, 0.52, 0.40), rad(0.08, 0.11, 0.13), 260.0},   // liver
        {at(0.50, 0.72, 0.50), rad(0.30, 0.05, 0.05), 380.0},   // spine
    };
    Rng rng(opts.seed);
    const double scale = std::min({d.d, d.h, d.w}) / 64.0;
    const int blobs = opts.texture_blobs >= 0
                          ? opts.texture_blobs
                          : static_cast<int>(std::lround(kBlobDensity * static_cast<double>(d.count())));
    for (int b = 0; b < blobs; ++b) {
        // Rejection-sample centres inside the body.
        Vec3 c;
        do {
            c = {rng.uniform(0, d.d - 1), rng.uniform(0, d.h - 1), rng.uniform(0, d.w - 1)};
        } while (ellipsoid_radius(c, body_.centre, body_.radii) > 0.95);
        const double sigma = rng.uniform(1.2, 3.0) * scale;
        const double hu = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(120.0, 320.0);
        blobs_.push_back({c, sigma, hu});
    }
    // Bucket blobs by the cells their 4-sigma support touches.
    for (int a = 0; a < 3; ++a) cells_[a] = std::max(1, (d[a] + kCell - 1) / kCell);
    buckets_.assign(static_cast<std::size_t>(cells_[0]) * cells_[1] * cells_[2], {});
    for (std::size_t b = 0; b < blobs_.size(); ++b) {
        int lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            const double reach = 4.0 * blobs_[b].sigma;
            lo[a] = std::clamp(static_cast<int>(std::floor((blobs_[b].centre[a] - reach) / kCell)), 0, cells_[a] - 1);
            hi[a] = std::clamp(static_cast<int>(std::floor((blobs_[b].centre[a] + reach) / kCell)), 0, cells_[a] - 1);
        }
        for (int z = lo[0]; z <= hi[0]; ++z)
            for (int y = lo[1]; y <= hi[1]; ++y)
                for (int x = lo[2]; x <= hi[2]; ++x)
                    buckets_[(static_cast<std::size_t>(z) * cells_[1] + y) * cells_[2] + x].push_back(
                        static_cast<int>(b));
    }
}

double Phantom::intensity(const Vec3& p) const {
    const double in_body = soft_inside(ellipsoid_radius(p, body_.centre, body_.radii), mean_radius(body_.radii));
    if (in_body < 1e-12) return -1000.0;
    double hu = body_.hu;
    for (const auto& o : organs_) {
        const double w = soft_inside(ellipsoid_radius(p, o.centre, o.radii), mean_radius(o.radii));
        hu = (1.0 - w) * hu + w * o.hu;
    }
    int cell[3];
    for (int a = 0; a < 3; ++a) cell[a] = std::clamp(static_cast<int>(std::floor(p[a] / kCell)), 0, cells_[a] - 1);
    for (int b : buckets_[(static_cast<std::size_t>(cell[0]) * cells_[1] + cell[1]) * cells_[2] + cell[2]]) {
        const Blob& bl = blobs_[b];
        double r2 = 0.0;
        for (int a = 0; a < 3; ++a) r2 += (p[a] - bl.centre[a]) * (p[a] - bl.centre[a]);
        if (r2 < 16.0 * bl.sigma * bl.sigma) hu += bl.hu * std::exp(-r2 / (2.0 * bl.sigma * bl.sigma));
    }
    return -1000.0 + in_body * (hu + 1000.0);
}

std::uint16_t Phantom::label(const Vec3& p) const {
    if (ellipsoid_radius(p, body_.centre, body_.radii) > 1.0) return 0;
    std::uint16_t l = 0;
    // Later organs overwrite earlier ones, matching the intensity blending order.
    for (std::size_t i = 0; i < organs_.size(); ++i)
        if (ellipsoid_radius(p, organs_[i].centre, organs_[i].radii) <= 1.0) l = static_cast<std::uint16_t>(i + 1);
    return l;
}

Volume Phantom::render(const Mapping& map) const {
    Volume v(opts_.dims, opts_.spacing);
    std::size_t i = 0;
    for (int z = 0; z < dims().d; ++z)
        for (int y = 0; y < dims().h; ++y)
            for (int x = 0; x < dims().w; ++x, ++i) {
                const Vec3 u{double(z), double(y), double(x)};
                v[i] = static_cast<float>(intensity(map ? map(u) : u));
            }
    return v;
}

LabelVolume Phantom::render_labels(const Mapping& map) const {
    LabelVolume v(opts_.dims, opts_.spacing);
    std::size_t i = 0;
    for (int z = 0; z < dims().d; ++z)
        for (int y = 0; y < dims().h; ++y)
            for (int x = 0; x < dims().w; ++x, ++i) {
                const Vec3 u{double(z), double(y), double(x)};
                v[i] = label(map ? map(u) : u);
            }
    return v;
}

AffineTransform random_affine(Rng& rng, const Dims& dims, double max_rotation_deg, double max_scale_dev,
                              double max_translation) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    const double angle = rng.uniform(-1.0, 1.0) * max_rotation_deg * std::numbers::pi / 180.0;
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    Eigen::Vector3d scale;
    for (int a = 0; a < 3; ++a) scale[a] = rng.uniform(1.0 - max_scale_dev, 1.0 + max_scale_dev);
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    const Eigen::Vector3d t = dir * rng.uniform(0.0, max_translation);

    const Eigen::Vector3d c((dims.d - 1) / 2.0, (dims.h - 1) / 2.0, (dims.w - 1) / 2.0);
    const Eigen::Matrix3d lin = rot * scale.asDiagonal();
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = lin;
    m.topRightCorner<3, 1>() = c - lin * c + t;
    return AffineTransform(m);
}

DisplacementField random_smooth_field(Rng& rng, const Dims& dims, double max_displacement, int bumps,
                                      double sigma_fraction) {
    struct Bump {
        Vec3 c, amp;
        double sigma;
    };
    std::vector<Bump> bs;
    const double base = sigma_fraction * std::min({dims.d, dims.h, dims.w});
    for (int b = 0; b < bumps; ++b) {
        Bump k;
        for (int a = 0; a < 3; ++a) {
            k.c[a] = rng.uniform(0.2, 0.8) * (dims[a] - 1);
            k.amp[a] = rng.normal();
        }
        k.sigma = base * rng.uniform(0.8, 1.2);
        bs.push_back(k);
    }
    DisplacementField f(dims);
    const std::size_t n = dims.count();
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i) {
                Vec3 v{0, 0, 0};
                for (const auto& k : bs) {
                    const double r2 = (z - k.c[0]) * (z - k.c[0]) + (y - k.c[1]) * (y - k.c[1]) +
                                      (x - k.c[2]) * (x - k.c[2]);
                    const double g = std::exp(-r2 / (2.0 * k.sigma * k.sigma));
                    for (int a = 0; a < 3; ++a) v[a] += k.amp[a] * g;
                }
                for (int a = 0; a < 3; ++a) f.data()[a * n + i] = static_cast<float>(v[a]);
            }
    const double peak = max_magnitude(f);
    if (peak > 0.0)
        for (auto& c : f.data()) c = static_cast<float>(c * (max_displacement / peak));
    return f;
}

SyntheticPair make_affine_pair(const Phantom& phantom, const AffineTransform& a) {
    SyntheticPair p;
    p.truth = [a](const Vec3& m) { return a.apply(m); };
    p.fixed_hu = phantom.render();
    p.fixed_labels = phantom.render_labels();
    p.moving_hu = phantom.render(p.truth);
    p.moving_labels = phantom.render_labels(p.truth);
    return p;
}

SyntheticPair make_deformed_pair(const Phantom& phantom, const AffineTransform& a, const DisplacementField& r) {
    if (r.dims() != phantom.dims()) throw std::invalid_argument("make_deformed_pair: field dims differ from phantom");
    SyntheticPair p;
    const Dims d = r.dims();
    // Share the field with the closure so the pair stays self-contained.
    auto field = std::make_shared<const DisplacementField>(r);
    p.truth = [a, field, d](const Vec3& m) {
        const TrilinearStencil st(d, m[0], m[1], m[2]);
        Vec3 q;
        for (int ax = 0; ax < 3; ++ax) q[ax] = m[ax] + st.sample(field->component(ax).data());
        return a.apply(q);
    };
    p.fixed_hu = phantom.render();
    p.fixed_labels = phantom.render_labels();
    p.moving_hu = phantom.render(p.truth);
    p.moving_labels = phantom.render_labels(p.truth);
    return p;
}

AffineTransform benchmark_affine(const Dims& dims) {
    const Eigen::Vector3d axis = Eigen::Vector3d(0.3, 0.5, 0.8).normalized();
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(14.0 * std::numbers::pi / 180.0, axis).toRotationMatrix();
    const Eigen::Matrix3d lin = rot * Eigen::Vector3d(1.08, 0.93, 1.07).asDiagonal();
    const Eigen::Vector3d c((dims.d - 1) / 2.0, (dims.h - 1) / 2.0, (dims.w - 1) / 2.0);
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = lin;
    m.topRightCorner<3, 1>() = c - lin * c + Eigen::Vector3d(6.0, -5.0, 5.0);
    return AffineTransform(m);
}

Benchmark make_benchmark(const BenchmarkOptions& opts) {
    const Dims d{opts.size, opts.size, opts.size};
    const Phantom phantom(PhantomOptions{d, {2.0, 2.0, 2.0}, opts.seed});
    Rng rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
    Benchmark b{{}, benchmark_affine(d), random_smooth_field(rng, d, opts.max_field)};
    b.pair = make_deformed_pair(phantom, b.affine, b.field);
    return b;
}

}  // namespace embreg
