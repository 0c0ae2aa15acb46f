// Similarity and regularisation terms of the deformable objective
//
//   L(tau) = (1 - NCC(X_f, X_m o tau)) + lambda * (1 - <S_f, S_m o tau>) + gamma * |grad tau|^2
//
// with every mean taken over the body mask. CompositeLoss evaluates the terms
// and their analytic gradients with respect to a dense displacement field.
#pragma once

#include <array>
#include <span>
#include <vector>

#include "embreg/embedding.hpp"
#include "embreg/field.hpp"
#include "embreg/volume.hpp"

namespace embreg {

inline constexpr double kNccEpsilon = 1e-5;

/// Mean over the mask of CC(u)^2 for windows of radius `radius`, in [0, 1].
/// Windows are clipped at the volume border; zero-variance windows give 0.
double local_ncc_similarity(const Volume& fixed, const Volume& moving, const BodyMask& mask, int radius);

/// 1 - mean over the mask of <S_f(u), S_m(u)>. Both inputs must be normalized.
double sam_loss(const EmbeddingVolume& fixed, const EmbeddingVolume& moving, const BodyMask& mask);

/// Mean over the mask of the squared forward-difference gradient norm of tau
/// (backward difference on the last index of an axis).
double smoothness_loss(const DisplacementField& tau, const BodyMask& mask);

/// 27-channel embedding correlation <S_f(u), S_m(u + d)>, d in {-r, 0, r}^3 in
/// (z, y, x)-lexicographic order; channel 13 is d = 0. Border clamped.
class CorrelationFeature {
public:
    static constexpr int kChannels = 27;
    static constexpr int kCenterChannel = 13;

    CorrelationFeature(Dims dims, int radius);

    const Dims& dims() const { return dims_; }
    int radius() const { return radius_; }
    std::array<int, 3> displacement(int channel) const;
    float operator()(int channel, std::size_t i) const { return data_[channel * dims_.count() + i]; }
    float& operator()(int channel, std::size_t i) { return data_[channel * dims_.count() + i]; }
    std::span<const float> data() const { return data_; }

    /// Per-voxel displacement of the best channel (ties to the lower channel).
    DisplacementField argmax_field() const;

private:
    Dims dims_;
    int radius_;
    std::vector<float> data_;
};

CorrelationFeature correlation_feature(const EmbeddingVolume& fixed, const EmbeddingVolume& moving, int radius = 2);

enum class LossTerm { Ncc, Sam, Smooth, Total };

struct LossValues {
    double ncc_similarity = 0.0;  // mean CC^2, higher is better
    double sam = 0.0;             // 1 - mean cosine
    double smooth = 0.0;
    double total = 0.0;           // (1 - ncc_similarity) + lambda * sam + gamma * smooth
};

struct LossConfig {
    int ncc_radius = 2;
    double lambda = 1.0;
    double gamma = 0.5;
};

/// The composite objective on one grid. `tau` and `grad` are channel-major
/// 3*N arrays in voxel units; the moving inputs are warped by tau internally.
class CompositeLoss {
public:
    CompositeLoss(Volume fixed, Volume moving, EmbeddingVolume fixed_embedding, EmbeddingVolume moving_embedding,
                  BodyMask mask, LossConfig config);

    const Dims& dims() const { return dims_; }
    const LossConfig& config() const { return config_; }
    const BodyMask& mask() const { return mask_; }
    bool has_embeddings() const { return channels_ > 0; }

    /// Evaluates every term. When `grad` is non-empty it receives the gradient
    /// of the selected term (Total includes the weights).
    LossValues evaluate(std::span<const double> tau, std::span<double> grad = {},
                        LossTerm term = LossTerm::Total) const;

private:
    double ncc_term(std::span<const double> tau, std::span<double> grad, double scale) const;
    double sam_term(std::span<const double> tau, std::span<double> grad, double scale) const;
    double smooth_term(std::span<const double> tau, std::span<double> grad, double scale) const;

    Dims dims_;
    LossConfig config_;
    BodyMask mask_;
    std::vector<double> fixed_;
    std::vector<float> moving_;
    int channels_ = 0;
    std::vector<float> fixed_embedding_;
    std::vector<float> moving_embedding_;
    // Fixed-image window statistics, computed once.
    std::vector<double> count_, fixed_sum_, fixed_var_;
};

}  // namespace embreg
