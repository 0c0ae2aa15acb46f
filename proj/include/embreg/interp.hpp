// Trilinear sampling with border clamping, plus the analytic derivative of
// the interpolant with respect to the sample position.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "embreg/volume.hpp"

namespace embreg {

/// Eight corner offsets and weights for one sample position. The derivative
/// weights give d(value)/d(position) per axis; they are zero along an axis
/// where the position was clamped.
struct TrilinearStencil {
    std::array<std::size_t, 8> index{};
    std::array<double, 8> weight{};
    std::array<std::array<double, 8>, 3> dweight{};

    TrilinearStencil(const Dims& dims, double z, double y, double x) {
        const double pos[3] = {z, y, x};
        int lo[3], hi[3];
        double frac[3];
        bool inside[3];
        for (int a = 0; a < 3; ++a) {
            const int n = dims[a];
            const double maxp = static_cast<double>(n - 1);
            double p = pos[a];
            inside[a] = p > 0.0 && p < maxp;
            p = std::clamp(p, 0.0, maxp);
            int i0 = static_cast<int>(std::floor(p));
            if (i0 >= n - 1) i0 = std::max(n - 2, 0);
            lo[a] = i0;
            hi[a] = std::min(i0 + 1, n - 1);
            frac[a] = (n == 1) ? 0.0 : p - i0;
        }
        int k = 0;
        for (int cz = 0; cz < 2; ++cz)
            for (int cy = 0; cy < 2; ++cy)
                for (int cx = 0; cx < 2; ++cx, ++k) {
                    const int zi = cz ? hi[0] : lo[0];
                    const int yi = cy ? hi[1] : lo[1];
                    const int xi = cx ? hi[2] : lo[2];
                    index[k] = dims.index(zi, yi, xi);
                    const double wz = cz ? frac[0] : 1.0 - frac[0];
                    const double wy = cy ? frac[1] : 1.0 - frac[1];
                    const double wx = cx ? frac[2] : 1.0 - frac[2];
                    weight[k] = wz * wy * wx;
                    dweight[0][k] = inside[0] ? (cz ? 1.0 : -1.0) * wy * wx : 0.0;
                    dweight[1][k] = inside[1] ? (cy ? 1.0 : -1.0) * wz * wx : 0.0;
                    dweight[2][k] = inside[2] ? (cx ? 1.0 : -1.0) * wz * wy : 0.0;
                }
    }

    template <class T>
    double sample(const T* data) const {
        double v = 0.0;
        for (int k = 0; k < 8; ++k) v += weight[k] * static_cast<double>(data[index[k]]);
        return v;
    }

    template <class T>
    double derivative(const T* data, int axis) const {
        double v = 0.0;
        for (int k = 0; k < 8; ++k) v += dweight[axis][k] * static_cast<double>(data[index[k]]);
        return v;
    }
};

/// Trilinear value at a continuous voxel position, border clamped.
template <class T>
inline double sample_trilinear(const T* data, const Dims& dims, double z, double y, double x) {
    const double pos[3] = {z, y, x};
    int i0[3], i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        const int n = dims[a];
        const double p = std::clamp(pos[a], 0.0, static_cast<double>(n - 1));
        int i = static_cast<int>(std::floor(p));
        if (i >= n - 1) i = std::max(n - 2, 0);
        i0[a] = i;
        i1[a] = std::min(i + 1, n - 1);
        f[a] = (n == 1) ? 0.0 : p - i;
    }
    auto at = [&](int zi, int yi, int xi) { return static_cast<double>(data[dims.index(zi, yi, xi)]); };
    const double c00 = at(i0[0], i0[1], i0[2]) * (1 - f[2]) + at(i0[0], i0[1], i1[2]) * f[2];
    const double c01 = at(i0[0], i1[1], i0[2]) * (1 - f[2]) + at(i0[0], i1[1], i1[2]) * f[2];
    const double c10 = at(i1[0], i0[1], i0[2]) * (1 - f[2]) + at(i1[0], i0[1], i1[2]) * f[2];
    const double c11 = at(i1[0], i1[1], i0[2]) * (1 - f[2]) + at(i1[0], i1[1], i1[2]) * f[2];
    const double c0 = c00 * (1 - f[1]) + c01 * f[1];
    const double c1 = c10 * (1 - f[1]) + c11 * f[1];
    return c0 * (1 - f[0]) + c1 * f[0];
}

/// Nearest voxel (round half up), border clamped.
inline std::size_t nearest_index(const Dims& dims, double z, double y, double x) {
    auto r = [](double p, int n) {
        const int i = static_cast<int>(std::floor(p + 0.5));
        return std::clamp(i, 0, n - 1);
    };
    return dims.index(r(z, dims.d), r(y, dims.h), r(x, dims.w));
}

}  // namespace embreg
