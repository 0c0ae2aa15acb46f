#include "embreg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "embreg/interp.hpp"

namespace embreg {

std::string to_string(const Dims& dims) {
    return "(" + std::to_string(dims.d) + ", " + std::to_string(dims.h) + ", " + std::to_string(dims.w) + ")";
}

BodyMask::BodyMask(Image<std::uint8_t> mask) : mask_(std::move(mask)) {
    for (auto& v : mask_.data()) {
        v = v ? 1 : 0;
        count_ += v;
    }
}

BodyMask BodyMask::full(Dims dims) {
    Image<std::uint8_t> m(dims);
    std::fill(m.data().begin(), m.data().end(), std::uint8_t{1});
    return BodyMask(std::move(m));
}

Volume window_normalize(const Volume& v, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("window_normalize: lower bound must be below upper bound");
    Volume out = v;
    const double scale = 2.0 / (hi - lo);
    for (auto& x : out.data()) {
        const double t = scale * (static_cast<double>(x) - lo) - 1.0;
        x = static_cast<float>(std::clamp(t, -1.0, 1.0));
    }
    return out;
}

namespace {

Dims isotropic_dims(const Dims& dims, const Vec3& spacing, double target_mm) {
    if (!(target_mm > 0.0)) throw std::invalid_argument("resample_isotropic: target spacing must be positive");
    auto n = [&](int axis) {
        const double len = dims[axis] * spacing[axis] / target_mm;
        return std::max(1, static_cast<int>(std::lround(len)));
    };
    return Dims{n(0), n(1), n(2)};
}

}  // namespace

Volume resample_isotropic(const Volume& v, double target_mm) {
    const Dims nd = isotropic_dims(v.dims(), v.spacing(), target_mm);
    return reframe(v, nd, Vec3{target_mm, target_mm, target_mm}, v.origin());
}

LabelVolume resample_labels_isotropic(const LabelVolume& v, double target_mm) {
    const Dims nd = isotropic_dims(v.dims(), v.spacing(), target_mm);
    return reframe_labels(v, nd, Vec3{target_mm, target_mm, target_mm}, v.origin());
}

namespace {

template <class Fn>
void for_each_source_position(const Dims& src_dims, const Vec3& src_spacing, const Vec3& src_origin,
                              const Dims& dims, const Vec3& spacing, const Vec3& origin, Fn&& fn) {
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z) {
        const double pz = (origin[0] + z * spacing[0] - src_origin[0]) / src_spacing[0];
        for (int y = 0; y < dims.h; ++y) {
            const double py = (origin[1] + y * spacing[1] - src_origin[1]) / src_spacing[1];
            for (int x = 0; x < dims.w; ++x, ++i) {
                const double px = (origin[2] + x * spacing[2] - src_origin[2]) / src_spacing[2];
                fn(i, pz, py, px);
            }
        }
    }
    (void)src_dims;
}

}  // namespace

Volume reframe(const Volume& moving, const Dims& dims, const Vec3& spacing, const Vec3& origin) {
    Volume out(dims, spacing, origin);
    const float* src = moving.data().data();
    for_each_source_position(moving.dims(), moving.spacing(), moving.origin(), dims, spacing, origin,
                             [&](std::size_t i, double z, double y, double x) {
                                 out[i] = static_cast<float>(sample_trilinear(src, moving.dims(), z, y, x));
                             });
    return out;
}

LabelVolume reframe_labels(const LabelVolume& moving, const Dims& dims, const Vec3& spacing,
                           const Vec3& origin) {
    LabelVolume out(dims, spacing, origin);
    for_each_source_position(moving.dims(), moving.spacing(), moving.origin(), dims, spacing, origin,
                             [&](std::size_t i, double z, double y, double x) {
                                 out[i] = moving[nearest_index(moving.dims(), z, y, x)];
                             });
    return out;
}

BodyMask compute_body_mask(const Volume& v, double threshold) {
    const Dims dims = v.dims();
    const std::size_t n = dims.count();
    std::vector<std::uint8_t> candidate(n, 0);
    std::size_t any = 0;
    for (std::size_t i = 0; i < n; ++i) {
        candidate[i] = v[i] > threshold ? 1 : 0;
        any += candidate[i];
    }
    if (any == 0) throw std::runtime_error("compute_body_mask: no body found above threshold " + std::to_string(threshold));

    // Largest 26-connected component; ties go to the component seeded first in z-major order.
    std::vector<int> component(n, -1);
    std::vector<std::size_t> stack;
    int best = -1;
    std::size_t best_size = 0;
    int next_label = 0;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (!candidate[seed] || component[seed] >= 0) continue;
        const int label = next_label++;
        std::size_t size = 0;
        stack.push_back(seed);
        component[seed] = label;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            ++size;
            const int z = static_cast<int>(cur / (static_cast<std::size_t>(dims.h) * dims.w));
            const int y = static_cast<int>((cur / dims.w) % dims.h);
            const int x = static_cast<int>(cur % dims.w);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dims.contains(z + dz, y + dy, x + dx)) continue;
                        const std::size_t j = dims.index(z + dz, y + dy, x + dx);
                        if (candidate[j] && component[j] < 0) {
                            component[j] = label;
                            stack.push_back(j);
                        }
                    }
        }
        if (size > best_size) {
            best_size = size;
            best = label;
        }
    }

    Image<std::uint8_t> mask(dims, v.spacing(), v.origin());
    for (std::size_t i = 0; i < n; ++i) mask[i] = component[i] == best ? 1 : 0;

    // Per-slice hole filling: flood the background from the slice border
    // (4-connected); anything unreached is enclosed and becomes body.
    const std::size_t plane = static_cast<std::size_t>(dims.h) * dims.w;
    std::vector<std::uint8_t> outside(plane);
    std::vector<std::size_t> queue;
    for (int z = 0; z < dims.d; ++z) {
        std::uint8_t* slice = mask.data().data() + z * plane;
        std::fill(outside.begin(), outside.end(), std::uint8_t{0});
        queue.clear();
        auto push = [&](int y, int x) {
            const std::size_t j = static_cast<std::size_t>(y) * dims.w + x;
            if (!slice[j] && !outside[j]) {
                outside[j] = 1;
                queue.push_back(j);
            }
        };
        for (int x = 0; x < dims.w; ++x) {
            push(0, x);
            push(dims.h - 1, x);
        }
        for (int y = 0; y < dims.h; ++y) {
            push(y, 0);
            push(y, dims.w - 1);
        }
        while (!queue.empty()) {
            const std::size_t j = queue.back();
            queue.pop_back();
            const int y = static_cast<int>(j / dims.w);
            const int x = static_cast<int>(j % dims.w);
            if (y > 0) push(y - 1, x);
            if (y + 1 < dims.h) push(y + 1, x);
            if (x > 0) push(y, x - 1);
            if (x + 1 < dims.w) push(y, x + 1);
        }
        for (std::size_t j = 0; j < plane; ++j)
            if (!slice[j] && !outside[j]) slice[j] = 1;
    }
    return BodyMask(std::move(mask));
}

template <class T>
Image<T> crop(const Image<T>& v, const CropBox& box) {
    const Dims d = v.dims();
    if (box.z0 < 0 || box.y0 < 0 || box.x0 < 0 || box.z1 > d.d || box.y1 > d.h || box.x1 > d.w ||
        box.z0 >= box.z1 || box.y0 >= box.y1 || box.x0 >= box.x1)
        throw std::invalid_argument("crop: bounds outside volume " + to_string(d));
    const Dims nd{box.z1 - box.z0, box.y1 - box.y0, box.x1 - box.x0};
    const Vec3 origin{v.origin()[0] + box.z0 * v.spacing()[0], v.origin()[1] + box.y0 * v.spacing()[1],
                      v.origin()[2] + box.x0 * v.spacing()[2]};
    Image<T> out(nd, v.spacing(), origin);
    for (int z = 0; z < nd.d; ++z)
        for (int y = 0; y < nd.h; ++y)
            for (int x = 0; x < nd.w; ++x) out(z, y, x) = v(z + box.z0, y + box.y0, x + box.x0);
    return out;
}

template Image<float> crop(const Image<float>&, const CropBox&);
template Image<std::uint16_t> crop(const Image<std::uint16_t>&, const CropBox&);

}  // namespace embreg
