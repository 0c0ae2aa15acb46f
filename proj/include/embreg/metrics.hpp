// Registration quality metrics over label maps and displacement fields.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "json.hpp"

#include "embreg/field.hpp"
#include "embreg/volume.hpp"

namespace embreg {

struct DiceResult {
    std::map<std::uint16_t, double> per_label;
    double mean = 0.0;
    /// Labels present in exactly one input; scored 0.
    std::vector<std::uint16_t> one_sided;
};

/// Per-label 2|A∩B|/(|A|+|B|) over every nonzero label present in either input.
DiceResult dice(const LabelVolume& a, const LabelVolume& b);

struct SurfaceDistanceResult {
    std::map<std::uint16_t, double> per_label_mm;
    double mean_mm = 0.0;
    /// Labels present in only one input; no distance is defined for them.
    std::vector<std::uint16_t> skipped;
};

/// Symmetric mean distance between label surfaces, in mm. A surface voxel has
/// at least one 6-neighbour outside the label (the volume exterior counts as
/// outside). Uses an exact Euclidean distance transform.
SurfaceDistanceResult average_surface_distance(const LabelVolume& a, const LabelVolume& b, const Vec3& spacing);

/// Surface voxels of one label, as z-major linear indices.
std::vector<std::size_t> surface_voxels(const LabelVolume& labels, std::uint16_t label);

struct JacobianStats {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation of det(I + d tau / du)
    double negative_fraction = 0.0;  // det <= 0
};

JacobianStats jacobian_stats(const DisplacementField& tau, const BodyMask& mask);

/// Determinant map of I + d tau/du, central differences, one-sided at borders.
std::vector<double> jacobian_determinants(const DisplacementField& tau);

struct MetricsReport {
    DiceResult dice;
    std::optional<SurfaceDistanceResult> asd;
    std::optional<JacobianStats> jacobian;
};

MetricsReport compute_metrics(const LabelVolume& fixed_labels, const LabelVolume& warped_labels,
                              const DisplacementField* field, const BodyMask* mask, bool with_asd = true);

nlohmann::json to_json(const MetricsReport& report);
void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);
/// One row per label: label,dice,asd_mm; then a "mean" row.
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace embreg
