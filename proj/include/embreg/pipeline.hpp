// The registration cascade: affine from embedding matches, coarse field from
// the same matches after affine alignment, then dense deformable refinement.
#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "embreg/config.hpp"
#include "embreg/embedding.hpp"
#include "embreg/field.hpp"
#include "embreg/metrics.hpp"
#include "embreg/volume.hpp"

namespace embreg {

/// Error raised inside a named stage; what() is prefixed with "[stage] ".
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct StageReport {
    Stage stage = Stage::Affine;
    double seconds = 0.0;
    std::optional<MetricsReport> metrics;  // of the cumulative total field
    std::filesystem::path warped, field, total_field, embedding;
};

struct RunReport {
    double preprocess_seconds = 0.0;
    double embedding_seconds = 0.0;
    std::optional<MetricsReport> initial_metrics;
    std::vector<StageReport> stages;

    std::size_t affine_k = 0;
    std::size_t affine_candidates = 0;
    double affine_residual_rms = 0.0;
    std::size_t coarse_k = 0;
    bool deform_diverged = false;

    std::filesystem::path total_field, affine_file, loss_history, report_json;
    std::vector<std::filesystem::path> slices;

    const StageReport* find(Stage s) const;
};

/// Inputs before preprocessing. Intensities are in HU.
struct PipelineInputs {
    Volume fixed, moving;
    std::optional<LabelVolume> fixed_labels, moving_labels;
    std::optional<EmbeddingVolume> fixed_embedding, moving_embedding;
};

/// Loads every input named by the config.
PipelineInputs load_inputs(const PipelineConfig& cfg);

/// Runs the configured stages and writes all artifacts under cfg.output_dir.
RunReport run_pipeline(const PipelineConfig& cfg, const PipelineInputs& inputs);
RunReport run_pipeline(const PipelineConfig& cfg);

nlohmann::json to_json(const RunReport& report);

}  // namespace embreg
