// Pipeline configuration: a key = value text file plus command-line overrides.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "embreg/embedding.hpp"
#include "embreg/optimize.hpp"
#include "embreg/slices.hpp"
#include "embreg/volume.hpp"

namespace embreg {

enum class Stage { Affine, Coarse, Deform };

std::string stage_name(Stage s);
Stage parse_stage(const std::string& s);

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    std::filesystem::path fixed, moving;
    std::filesystem::path fixed_labels, moving_labels;  // optional
    /// "synth" or a pair of .evol files.
    std::string embeddings = "synth";
    std::filesystem::path fixed_embedding, moving_embedding;
    int synth_channels = kSynthFeatureChannels;
    std::filesystem::path output_dir = "out";

    std::vector<Stage> stages{Stage::Affine, Stage::Coarse, Stage::Deform};

    // preprocessing
    double hu_lo = -800.0;
    double hu_hi = 400.0;
    double target_spacing = 2.0;  // <= 0 keeps the input grid
    double body_threshold = -0.5;
    std::optional<CropBox> crop;

    // matching
    double theta = 0.7;
    int grid_stride = 8;
    int search_stride = 4;

    OptParams opt;

    std::uint64_t seed = 0;

    bool write_embeddings = true;
    bool write_slices = true;
    SliceAxis slice_axis = SliceAxis::Z;
    int slice_index = -1;  // -1: middle slice
    bool with_asd = true;

    bool has_stage(Stage s) const;
    bool has_labels() const { return !fixed_labels.empty() && !moving_labels.empty(); }
};

/// Applies one "key = value" assignment. Unknown keys and malformed values throw.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
/// Accepts "key=value" (whitespace around '=' allowed).
void apply_override(PipelineConfig& cfg, const std::string& assignment);

/// Parses a config file. '#' starts a comment; relative paths resolve against
/// the file's directory.
PipelineConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError when the stage list or any knob is invalid.
void validate(const PipelineConfig& cfg);
/// Input paths present and paired (labels, external embeddings).
void validate_paths(const PipelineConfig& cfg);

/// Config rendered back as key = value lines.
std::string to_text(const PipelineConfig& cfg);

}  // namespace embreg
