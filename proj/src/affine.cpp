#include "embreg/affine.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "embreg/interp.hpp"
#include "embreg/io.hpp"

namespace embreg {

AffineTransform::AffineTransform(const Eigen::Matrix4d& m) : m_(m) {
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
        throw std::invalid_argument("affine matrix last row must be (0, 0, 0, 1)");
}

Vec3 AffineTransform::apply(const Vec3& p) const {
    const Eigen::Vector4d h(p[0], p[1], p[2], 1.0);
    const Eigen::Vector4d r = m_ * h;
    return {r[0], r[1], r[2]};
}

bool AffineTransform::invertible() const { return std::abs(linear_determinant()) > 1e-8; }

AffineTransform AffineTransform::inverse() const {
    if (!invertible()) throw std::domain_error("affine transform is singular");
    Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
    const Eigen::Matrix3d lin_inv = m_.topLeftCorner<3, 3>().inverse();
    inv.topLeftCorner<3, 3>() = lin_inv;
    inv.topRightCorner<3, 1>() = -lin_inv * m_.topRightCorner<3, 1>();
    return AffineTransform(inv);
}

AffineTransform AffineTransform::translation(const Vec3& t) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 3) = t[0];
    m(1, 3) = t[1];
    m(2, 3) = t[2];
    return AffineTransform(m);
}

namespace {

int centered_rank(std::span<const Vec3> pts) {
    Eigen::MatrixXd c(pts.size(), 3);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int a = 0; a < 3; ++a) c(i, a) = pts[i][a];
    c.rowwise() -= c.colwise().mean();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(c);
    const auto& s = svd.singularValues();
    if (s[0] <= 0.0) return 0;
    int rank = 0;
    for (int i = 0; i < 3; ++i)
        if (s[i] > 1e-9 * s[0]) ++rank;
    return rank;
}

}  // namespace

AffineFit fit_affine(std::span<const Vec3> fixed_points, std::span<const Vec3> moving_points) {
    if (fixed_points.size() != moving_points.size())
        throw std::invalid_argument("fixed and moving point counts differ");
    const std::size_t k = fixed_points.size();
    if (k < 4)
        throw AffineFitError(AffineFitError::Kind::Insufficient,
                             "insufficient correspondences: need at least 4, got " + std::to_string(k));
    if (centered_rank(fixed_points) < 3 || centered_rank(moving_points) < 3)
        throw AffineFitError(AffineFitError::Kind::Degenerate,
                             "degenerate configuration: matched points are coplanar or collinear");

    Eigen::MatrixXd X(k, 4);
    Eigen::MatrixXd Y(k, 3);
    for (std::size_t i = 0; i < k; ++i) {
        for (int a = 0; a < 3; ++a) {
            X(i, a) = moving_points[i][a];
            Y(i, a) = fixed_points[i][a];
        }
        X(i, 3) = 1.0;
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < 4)
        throw AffineFitError(AffineFitError::Kind::Degenerate, "degenerate configuration: design matrix rank deficient");
    const Eigen::MatrixXd B = qr.solve(Y);  // 4 x 3

    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topRows<3>() = B.transpose();
    AffineFit fit{AffineTransform(m), 0.0, k};
    const Eigen::MatrixXd residual = X * B - Y;
    fit.residual_rms = std::sqrt(residual.squaredNorm() / static_cast<double>(k));
    return fit;
}

AffineFit fit_affine(const MatchSet& matches) {
    auto to_vec = [](const std::vector<std::array<int, 3>>& pts) {
        std::vector<Vec3> out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = {double(pts[i][0]), double(pts[i][1]), double(pts[i][2])};
        return out;
    };
    return fit_affine(to_vec(matches.fixed_points), to_vec(matches.moving_points));
}

namespace {

template <class Fn>
void for_each_pullback(const AffineTransform& a, const Dims& dims, Fn&& fn) {
    const Eigen::Matrix4d inv = a.inverse().matrix();
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i) {
                const double pz = inv(0, 0) * z + inv(0, 1) * y + inv(0, 2) * x + inv(0, 3);
                const double py = inv(1, 0) * z + inv(1, 1) * y + inv(1, 2) * x + inv(1, 3);
                const double px = inv(2, 0) * z + inv(2, 1) * y + inv(2, 2) * x + inv(2, 3);
                fn(i, pz, py, px);
            }
}

}  // namespace

Volume apply_affine(const Volume& v, const AffineTransform& a) {
    Volume out(v.dims(), v.spacing(), v.origin());
    const float* src = v.data().data();
    for_each_pullback(a, v.dims(), [&](std::size_t i, double z, double y, double x) {
        out[i] = static_cast<float>(sample_trilinear(src, v.dims(), z, y, x));
    });
    return out;
}

EmbeddingVolume apply_affine_embedding(const EmbeddingVolume& e, const AffineTransform& a) {
    EmbeddingVolume out(e.channels(), e.dims(), e.spacing(), e.origin());
    const std::size_t n = e.voxels();
    for_each_pullback(a, e.dims(), [&](std::size_t i, double z, double y, double x) {
        const TrilinearStencil st(e.dims(), z, y, x);
        for (int c = 0; c < e.channels(); ++c)
            out(c, i) = static_cast<float>(st.sample(e.data().data() + c * n));
    });
    return normalize_embedding(out);
}

LabelVolume apply_affine_labels(const LabelVolume& labels, const AffineTransform& a) {
    LabelVolume out(labels.dims(), labels.spacing(), labels.origin());
    for_each_pullback(a, labels.dims(), [&](std::size_t i, double z, double y, double x) {
        out[i] = labels[nearest_index(labels.dims(), z, y, x)];
    });
    return out;
}

DisplacementField affine_to_field(const AffineTransform& a, const Dims& dims) {
    DisplacementField f(dims);
    const std::size_t n = dims.count();
    auto data = f.data();
    for_each_pullback(a, dims, [&](std::size_t i, double z, double y, double x) {
        const auto vz = static_cast<double>(i / (static_cast<std::size_t>(dims.h) * dims.w));
        const auto vy = static_cast<double>((i / dims.w) % dims.h);
        const auto vx = static_cast<double>(i % dims.w);
        data[i] = static_cast<float>(z - vz);
        data[n + i] = static_cast<float>(y - vy);
        data[2 * n + i] = static_cast<float>(x - vx);
    });
    return f;
}

void save_affine(const AffineTransform& a, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << std::setprecision(17);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) os << (c ? " " : "") << a.matrix()(r, c);
        os << "\n";
    }
    if (!os) throw IoError("write failed: " + path.string());
}

AffineTransform load_affine(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            if (!(is >> m(r, c))) throw IoError(path.string() + ": expected 16 numbers");
    double extra;
    if (is >> extra) throw IoError(path.string() + ": more than 16 numbers");
    return AffineTransform(m);
}

}  // namespace embreg
