// Dense displacement fields, coarse field construction from sparse matches,
// and pull-back warping.
//
// Convention: warp(I)(u) = I(u + tau(u)), tau in voxel units, (z, y, x).
#pragma once

#include <array>
#include <span>
#include <vector>

#include "embreg/embedding.hpp"
#include "embreg/volume.hpp"

namespace embreg {

class DisplacementField {
public:
    DisplacementField() = default;
    explicit DisplacementField(Dims dims, Vec3 spacing = {1.0, 1.0, 1.0}, Vec3 origin = {0.0, 0.0, 0.0});
    DisplacementField(Dims dims, Vec3 spacing, Vec3 origin, std::vector<float> data);

    const Dims& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& origin() const { return origin_; }
    std::size_t voxels() const { return dims_.count(); }

    std::span<const float> component(int axis) const { return {data_.data() + axis * voxels(), voxels()}; }
    std::span<float> component(int axis) { return {data_.data() + axis * voxels(), voxels()}; }
    float operator()(int axis, std::size_t i) const { return data_[axis * voxels() + i]; }
    float& operator()(int axis, std::size_t i) { return data_[axis * voxels() + i]; }
    std::array<double, 3> at(std::size_t i) const {
        return {data_[i], data_[voxels() + i], data_[2 * voxels() + i]};
    }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    /// Constant-displacement field.
    static DisplacementField constant(Dims dims, const Vec3& value);

    bool operator==(const DisplacementField&) const = default;

private:
    Dims dims_{};
    Vec3 spacing_{1.0, 1.0, 1.0};
    Vec3 origin_{0.0, 0.0, 0.0};
    std::vector<float> data_;
};

/// Dense field from matches on the regular fixed grid. Node displacement is
/// moving - fixed; filtered nodes take the nearest surviving node; voxels are
/// trilinearly interpolated between nodes and clamped beyond the last node.
DisplacementField build_coarse_field(const MatchSet& matches, const Dims& dims, int grid_stride);

Volume warp_by_field(const Volume& v, const DisplacementField& tau);
EmbeddingVolume warp_embedding_by_field(const EmbeddingVolume& e, const DisplacementField& tau);
LabelVolume warp_labels_by_field(const LabelVolume& labels, const DisplacementField& tau);

/// result(u) = inner(u) + outer(u + inner(u)); warping by the result equals
/// warping by `outer` first and then by `inner`.
DisplacementField compose_fields(const DisplacementField& outer, const DisplacementField& inner);

double mean_magnitude(const DisplacementField& tau, const BodyMask* mask = nullptr);
double max_magnitude(const DisplacementField& tau);

}  // namespace embreg
