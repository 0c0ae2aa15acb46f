// Static slice panels for visual inspection of registration results.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "embreg/volume.hpp"

namespace embreg {

enum class SliceAxis { Z, Y, X };

SliceAxis parse_slice_axis(const std::string& s);

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    std::array<std::uint8_t, 3> pixel(int row, int col) const {
        const std::size_t k = 3 * (static_cast<std::size_t>(row) * width + col);
        return {rgb[k], rgb[k + 1], rgb[k + 2]};
    }
};

/// Colour used for a label's contour.
std::array<std::uint8_t, 3> label_colour(std::uint16_t label);

/// Grayscale rendering of one slice, intensities [-1, 1] mapped to [0, 255].
/// With labels, pixels on a label boundary (a 4-neighbour in the slice carries
/// a different label, or the pixel touches the slice edge) take the label colour.
RgbImage render_slice(const Volume& v, const LabelVolume* labels, SliceAxis axis, int index);

void write_png(const RgbImage& img, const std::filesystem::path& path);

struct SlicePanel {
    std::string name;
    const Volume* volume = nullptr;
    const LabelVolume* labels = nullptr;
};

/// Writes <out_dir>/<name>.png for every panel; returns the paths.
std::vector<std::filesystem::path> emit_slices(const std::vector<SlicePanel>& panels, SliceAxis axis, int index,
                                               const std::filesystem::path& out_dir);

}  // namespace embreg
