// Least-squares affine estimation from correspondences and affine warping.
//
// The 4x4 matrix acts on homogeneous voxel coordinates (z, y, x, 1) and maps
// moving-space positions toward fixed space. Warping pulls back: the output
// voxel u samples the moving image at A^{-1} u.
#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <stdexcept>

#include "embreg/embedding.hpp"
#include "embreg/field.hpp"
#include "embreg/volume.hpp"

namespace embreg {

class AffineTransform {
public:
    AffineTransform() : m_(Eigen::Matrix4d::Identity()) {}
    explicit AffineTransform(const Eigen::Matrix4d& m);

    const Eigen::Matrix4d& matrix() const { return m_; }
    Vec3 apply(const Vec3& p) const;
    double linear_determinant() const { return m_.topLeftCorner<3, 3>().determinant(); }
    bool invertible() const;
    /// Throws std::domain_error when the linear block is singular.
    AffineTransform inverse() const;

    static AffineTransform identity() { return {}; }
    static AffineTransform translation(const Vec3& t);

private:
    Eigen::Matrix4d m_;
};

class AffineFitError : public std::runtime_error {
public:
    enum class Kind { Insufficient, Degenerate };
    AffineFitError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct AffineFit {
    AffineTransform transform;
    double residual_rms = 0.0;  // voxels
    std::size_t k = 0;
};

/// argmin_A ||A P_m - P_f||_F^2 with last row (0, 0, 0, 1), via column-pivoted
/// Householder QR. Requires k >= 4 and non-coplanar point sets.
AffineFit fit_affine(const MatchSet& matches);
AffineFit fit_affine(std::span<const Vec3> fixed_points, std::span<const Vec3> moving_points);

Volume apply_affine(const Volume& v, const AffineTransform& a);
EmbeddingVolume apply_affine_embedding(const EmbeddingVolume& e, const AffineTransform& a);
LabelVolume apply_affine_labels(const LabelVolume& labels, const AffineTransform& a);

/// Dense field equivalent of the pull-back warp: tau(u) = A^{-1} u - u.
DisplacementField affine_to_field(const AffineTransform& a, const Dims& dims);

/// 16 whitespace-separated decimals, row-major.
void save_affine(const AffineTransform& a, const std::filesystem::path& path);
AffineTransform load_affine(const std::filesystem::path& path);

}  // namespace embreg
