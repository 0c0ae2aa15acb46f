// Per-voxel descriptor volumes and correspondence search.
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "embreg/volume.hpp"

namespace embreg {

/// C-channel descriptor field, channel-major: value(c, i) = data[c * N + i].
class EmbeddingVolume {
public:
    EmbeddingVolume() = default;
    EmbeddingVolume(int channels, Dims dims, Vec3 spacing = {1.0, 1.0, 1.0}, Vec3 origin = {0.0, 0.0, 0.0});
    EmbeddingVolume(int channels, Dims dims, Vec3 spacing, Vec3 origin, std::vector<float> data,
                    bool normalized = false);

    int channels() const { return channels_; }
    const Dims& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& origin() const { return origin_; }
    std::size_t voxels() const { return dims_.count(); }
    bool normalized() const { return normalized_; }
    void set_normalized(bool v) { normalized_ = v; }

    std::span<const float> channel(int c) const { return {data_.data() + c * voxels(), voxels()}; }
    std::span<float> channel(int c) { return {data_.data() + c * voxels(), voxels()}; }
    float operator()(int c, std::size_t i) const { return data_[c * voxels() + i]; }
    float& operator()(int c, std::size_t i) { return data_[c * voxels() + i]; }

    /// Copy of the C-vector at voxel i.
    std::vector<float> vector_at(std::size_t i) const;
    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    bool operator==(const EmbeddingVolume&) const = default;

private:
    int channels_ = 0;
    Dims dims_{};
    Vec3 spacing_{1.0, 1.0, 1.0};
    Vec3 origin_{0.0, 0.0, 0.0};
    bool normalized_ = false;
    std::vector<float> data_;
};

/// Per-voxel L2 normalisation. Zero vectors become the first basis vector.
EmbeddingVolume normalize_embedding(const EmbeddingVolume& e);

/// Number of channels produced by synth_descriptors before padding.
inline constexpr int kSynthFeatureChannels = 30;
inline constexpr int kSynthMinChannels = 8;

/// Handcrafted descriptor stand-in for a learned embedding network.
/// Channels, in order: local mean (r = 1, 2, 4), local standard deviation
/// (r = 1, 2, 4), central-difference gradient at two scales (6), a position
/// code built from coordinates scaled to [0, 1] (6), then context: radius-4
/// box means sampled 8 and 16 voxels away along each axis (12). Appearance
/// and context share one block normalisation; the position block carries a
/// fixed 10% of the squared norm. The vector is padded with zeros or
/// truncated to `channels` and unit-normalised.
EmbeddingVolume synth_descriptors(const Volume& v, int channels = kSynthFeatureChannels);

struct Match {
    std::array<int, 3> coord{};
    double similarity = 0.0;
};

/// Argmax of <query, target(u)> over the stride-decimated target, refined by
/// exhaustive search in the (2*stride+1)^3 full-resolution neighbourhood of the
/// coarse winner. Ties go to the smaller linear index.
Match match_point(std::span<const float> query, const EmbeddingVolume& target, int stride);

struct MatchSet {
    std::vector<std::array<int, 3>> fixed_points;
    std::vector<std::array<int, 3>> moving_points;
    std::vector<double> similarities;
    std::size_t candidates = 0;  // grid points considered before θ filtering
    std::size_t size() const { return similarities.size(); }
};

struct GridMatchParams {
    int grid_stride = 8;
    double threshold = 0.7;
    int search_stride = 4;
};

class NoCorrespondenceError : public std::runtime_error {
public:
    NoCorrespondenceError(std::size_t candidates, double threshold);
    std::size_t candidates() const { return candidates_; }

private:
    std::size_t candidates_;
};

/// Match every grid_stride-th fixed voxel inside `mask` and keep pairs with
/// similarity >= threshold. Output order is z-major grid order.
MatchSet grid_match(const EmbeddingVolume& fixed, const EmbeddingVolume& moving, const BodyMask& mask,
                    const GridMatchParams& params);

}  // namespace embreg
