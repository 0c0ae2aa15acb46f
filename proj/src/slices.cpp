#include "embreg/slices.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "embreg/io.hpp"

namespace embreg {

SliceAxis parse_slice_axis(const std::string& s) {
    if (s == "z") return SliceAxis::Z;
    if (s == "y") return SliceAxis::Y;
    if (s == "x") return SliceAxis::X;
    throw std::invalid_argument("slice axis must be one of z, y, x; got '" + s + "'");
}

std::array<std::uint8_t, 3> label_colour(std::uint16_t label) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 8> palette{{
        {230, 25, 75},
        {60, 180, 75},
        {255, 225, 25},
        {0, 130, 200},
        {245, 130, 48},
        {145, 30, 180},
        {70, 240, 240},
        {240, 50, 230},
    }};
    return palette[(label - 1u) % palette.size()];
}

namespace {

struct SliceGeometry {
    int rows, cols;
};

SliceGeometry geometry(const Dims& d, SliceAxis axis) {
    switch (axis) {
        case SliceAxis::Z: return {d.h, d.w};
        case SliceAxis::Y: return {d.d, d.w};
        case SliceAxis::X: return {d.d, d.h};
    }
    return {0, 0};
}

std::size_t voxel(const Dims& d, SliceAxis axis, int index, int row, int col) {
    switch (axis) {
        case SliceAxis::Z: return d.index(index, row, col);
        case SliceAxis::Y: return d.index(row, index, col);
        case SliceAxis::X: return d.index(row, col, index);
    }
    return 0;
}

}  // namespace

RgbImage render_slice(const Volume& v, const LabelVolume* labels, SliceAxis axis, int index) {
    const Dims& d = v.dims();
    const int depth = axis == SliceAxis::Z ? d.d : (axis == SliceAxis::Y ? d.h : d.w);
    if (index < 0 || index >= depth)
        throw std::out_of_range("slice index " + std::to_string(index) + " outside [0, " + std::to_string(depth) + ")");
    if (labels && labels->dims() != d) throw std::invalid_argument("render_slice: label dims differ from volume");
    const auto g = geometry(d, axis);
    RgbImage img{g.cols, g.rows, std::vector<std::uint8_t>(3 * static_cast<std::size_t>(g.rows) * g.cols)};
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) {
            const double t = (std::clamp(static_cast<double>(v[voxel(d, axis, index, r, c)]), -1.0, 1.0) + 1.0) / 2.0;
            const auto gray = static_cast<std::uint8_t>(std::lround(t * 255.0));
            std::array<std::uint8_t, 3> px{gray, gray, gray};
            if (labels) {
                const auto l = (*labels)[voxel(d, axis, index, r, c)];
                if (l) {
                    bool edge = false;
                    const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
                    for (const auto& p : nb) {
                        if (p[0] < 0 || p[1] < 0 || p[0] >= g.rows || p[1] >= g.cols ||
                            (*labels)[voxel(d, axis, index, p[0], p[1])] != l) {
                            edge = true;
                            break;
                        }
                    }
                    if (edge) px = label_colour(l);
                }
            }
            const std::size_t k = 3 * (static_cast<std::size_t>(r) * g.cols + c);
            img.rgb[k] = px[0];
            img.rgb[k + 1] = px[1];
            img.rgb[k + 2] = px[2];
        }
    return img;
}

void write_png(const RgbImage& img, const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG encoding failed: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < img.height; ++r)
        png_write_row(png, img.rgb.data() + 3 * static_cast<std::size_t>(r) * img.width);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("write failed: " + path.string());
}

std::vector<std::filesystem::path> emit_slices(const std::vector<SlicePanel>& panels, SliceAxis axis, int index,
                                               const std::filesystem::path& out_dir) {
    if (panels.empty()) return {};
    const Dims& d = panels.front().volume->dims();
    for (const auto& p : panels)
        if (!p.volume || p.volume->dims() != d) throw std::invalid_argument("emit_slices: inconsistent volume dims");
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> out;
    for (const auto& p : panels) {
        const auto path = out_dir / (p.name + ".png");
        write_png(render_slice(*p.volume, p.labels, axis, index), path);
        out.push_back(path);
    }
    return out;
}

}  // namespace embreg
