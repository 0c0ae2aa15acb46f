// Multi-resolution gradient descent on a dense displacement field.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "embreg/embedding.hpp"
#include "embreg/field.hpp"
#include "embreg/losses.hpp"
#include "embreg/volume.hpp"

namespace embreg {

struct OptParams {
    int levels = 3;
    /// Iteration cap per level, coarsest level first. The last entry is
    /// reused when fewer entries than levels are given.
    std::vector<int> iterations{200, 100, 40};
    double lambda = 1.0;
    double gamma = 0.5;
    int ncc_radius_coarse = 2;
    int ncc_radius_fine = 4;
    double momentum = 0.9;
    double max_first_step = 0.5;  // voxels, max-norm of the first update per level
    double tolerance = 1e-4;      // relative improvement of the best loss ...
    int patience = 10;            // ... over this many iterations
    bool seed_from_correlation = false;
};

/// One row of the loss history. `ncc` is the minimised term 1 - mean CC^2, so
/// total = ncc + lambda * sam + gamma * smooth. Level 0 is full resolution.
struct LossReport {
    double ncc = 0.0;
    double sam = 0.0;
    double smooth = 0.0;
    double total = 0.0;
    int iteration = 0;
    int level = 0;
};

struct OptResult {
    DisplacementField field;
    std::vector<LossReport> history;
    bool diverged = false;
};

OptResult optimize_field(const Volume& fixed, const Volume& moving, const EmbeddingVolume& fixed_embedding,
                         const EmbeddingVolume& moving_embedding, const BodyMask& mask, const OptParams& params);

/// NCC window radius used at a pyramid level (0 = full resolution).
int ncc_radius_for_level(const OptParams& params, int level);

void write_loss_history_csv(const std::vector<LossReport>& history, const std::filesystem::path& path);

/// Max relative error between analytic and central-difference derivatives of
/// one loss term at `samples` random (mask voxel, component) coordinates.
/// Coordinates whose sample position lies within 2h of a lattice plane are
/// redrawn, since the interpolant is not differentiable there.
double gradient_check(const CompositeLoss& loss, LossTerm term, std::span<const double> tau, int samples,
                      std::uint64_t seed, double h = 1e-3);

}  // namespace embreg
