// Volumetric image containers and preprocessing.
//
// All grids use z-major layout: index = (z * H + y) * W + x. Coordinates and
// vectors are ordered (z, y, x) throughout the library.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace embreg {

using Vec3 = std::array<double, 3>;

struct Dims {
    int d = 0;
    int h = 0;
    int w = 0;

    std::size_t count() const {
        return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
    std::size_t index(int z, int y, int x) const {
        return (static_cast<std::size_t>(z) * h + y) * w + x;
    }
    bool contains(int z, int y, int x) const {
        return z >= 0 && y >= 0 && x >= 0 && z < d && y < h && x < w;
    }
    int operator[](int axis) const { return axis == 0 ? d : (axis == 1 ? h : w); }
    bool operator==(const Dims&) const = default;
};

std::string to_string(const Dims& dims);

/// Dense scalar grid with physical geometry. Volume, LabelVolume and the
/// mask storage are all instances of this.
template <class T>
class Image {
public:
    Image() = default;
    explicit Image(Dims dims, Vec3 spacing = {1.0, 1.0, 1.0}, Vec3 origin = {0.0, 0.0, 0.0})
        : dims_(dims), spacing_(spacing), origin_(origin), data_(dims.count(), T{}) {
        validate();
    }
    Image(Dims dims, Vec3 spacing, Vec3 origin, std::vector<T> data)
        : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)) {
        validate();
    }

    const Dims& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& origin() const { return origin_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T operator()(int z, int y, int x) const { return data_[dims_.index(z, y, x)]; }
    T& operator()(int z, int y, int x) { return data_[dims_.index(z, y, x)]; }
    T operator[](std::size_t i) const { return data_[i]; }
    T& operator[](std::size_t i) { return data_[i]; }

    std::span<const T> data() const { return data_; }
    std::span<T> data() { return data_; }
    const std::vector<T>& values() const { return data_; }

    /// Same geometry, different payload type.
    template <class U>
    Image<U> like() const {
        return Image<U>(dims_, spacing_, origin_);
    }

    bool operator==(const Image&) const = default;

private:
    void validate() const {
        if (dims_.d < 1 || dims_.h < 1 || dims_.w < 1)
            throw std::invalid_argument("image dims must be positive, got " + to_string(dims_));
        if (data_.size() != dims_.count())
            throw std::invalid_argument("image data length " + std::to_string(data_.size()) +
                                        " does not match dims " + to_string(dims_));
        for (double s : spacing_)
            if (!(s > 0.0)) throw std::invalid_argument("image spacing must be strictly positive");
    }

    Dims dims_{};
    Vec3 spacing_{1.0, 1.0, 1.0};
    Vec3 origin_{0.0, 0.0, 0.0};
    std::vector<T> data_;
};

using Volume = Image<float>;
using LabelVolume = Image<std::uint16_t>;

/// Region of interest Ω. Stored as 0/1 bytes.
class BodyMask {
public:
    BodyMask() = default;
    explicit BodyMask(Image<std::uint8_t> mask);

    const Dims& dims() const { return mask_.dims(); }
    std::size_t voxel_count() const { return count_; }
    bool operator[](std::size_t i) const { return mask_[i] != 0; }
    bool operator()(int z, int y, int x) const { return mask_(z, y, x) != 0; }
    const Image<std::uint8_t>& image() const { return mask_; }

    /// Every voxel set; handy for losses evaluated over a whole grid.
    static BodyMask full(Dims dims);

private:
    Image<std::uint8_t> mask_;
    std::size_t count_ = 0;
};

/// Linear intensity window to [-1, 1] with clamping.
Volume window_normalize(const Volume& v, double lo, double hi);

/// Trilinear resampling to isotropic spacing; origin preserved, border clamp.
Volume resample_isotropic(const Volume& v, double target_mm);

/// Nearest-neighbour variant for label maps.
LabelVolume resample_labels_isotropic(const LabelVolume& v, double target_mm);

/// Threshold, keep the largest 26-connected component, fill enclosed holes
/// slice by slice along z. Throws if nothing exceeds the threshold.
BodyMask compute_body_mask(const Volume& v, double threshold);

struct CropBox {
    int z0 = 0, z1 = 0, y0 = 0, y1 = 0, x0 = 0, x1 = 0;  // half-open
};

template <class T>
Image<T> crop(const Image<T>& v, const CropBox& box);

/// Resample `moving` onto the voxel grid of `reference` using physical
/// coordinates (origin + index * spacing). Trilinear, border clamp.
Volume reframe(const Volume& moving, const Dims& dims, const Vec3& spacing, const Vec3& origin);
LabelVolume reframe_labels(const LabelVolume& moving, const Dims& dims, const Vec3& spacing,
                           const Vec3& origin);

}  // namespace embreg
