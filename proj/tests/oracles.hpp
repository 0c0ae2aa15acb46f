// Direct-summation reference implementations. Deliberately naive: explicit
// window loops, centred sums, no shared code with the library.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "embreg/embedding.hpp"
#include "embreg/field.hpp"
#include "embreg/volume.hpp"

namespace oracle {

using namespace embreg;

inline double ncc_similarity(const Volume& f, const Volume& m, const BodyMask& mask, int r, double eps = 1e-5) {
    const Dims d = f.dims();
    double total = 0;
    std::size_t count = 0;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                if (!mask(z, y, x)) continue;
                ++count;
                std::vector<double> a, b;
                for (int k = z - r; k <= z + r; ++k)
                    for (int j = y - r; j <= y + r; ++j)
                        for (int i = x - r; i <= x + r; ++i)
                            if (d.contains(k, j, i)) {
                                a.push_back(f(k, j, i));
                                b.push_back(m(k, j, i));
                            }
                double ma = 0, mb = 0;
                for (std::size_t q = 0; q < a.size(); ++q) {
                    ma += a[q];
                    mb += b[q];
                }
                ma /= a.size();
                mb /= b.size();
                double sab = 0, saa = 0, sbb = 0;
                for (std::size_t q = 0; q < a.size(); ++q) {
                    sab += (a[q] - ma) * (b[q] - mb);
                    saa += (a[q] - ma) * (a[q] - ma);
                    sbb += (b[q] - mb) * (b[q] - mb);
                }
                total += sab * sab / (saa * sbb + eps);
            }
    return total / count;
}

inline double sam(const EmbeddingVolume& f, const EmbeddingVolume& m, const BodyMask& mask) {
    double total = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < f.voxels(); ++i) {
        if (!mask[i]) continue;
        ++count;
        for (int c = 0; c < f.channels(); ++c) total += static_cast<double>(f(c, i)) * m(c, i);
    }
    return 1.0 - total / count;
}

inline double smoothness(const DisplacementField& t, const BodyMask& mask) {
    const Dims d = t.dims();
    double total = 0;
    std::size_t count = 0;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                if (!mask(z, y, x)) continue;
                ++count;
                const int p[3] = {z, y, x};
                for (int axis = 0; axis < 3; ++axis) {
                    if (d[axis] < 2) continue;
                    int a[3] = {z, y, x}, b[3] = {z, y, x};
                    if (p[axis] + 1 < d[axis]) b[axis] += 1;
                    else a[axis] -= 1;
                    for (int c = 0; c < 3; ++c) {
                        const double diff =
                            double(t(c, d.index(b[0], b[1], b[2]))) - double(t(c, d.index(a[0], a[1], a[2])));
                        total += diff * diff;
                    }
                }
            }
    return total / count;
}

// det(I + d tau/du) at every voxel; central differences, one-sided at borders.
inline std::vector<double> jacobian_dets(const DisplacementField& t) {
    const Dims d = t.dims();
    std::vector<double> out;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                double J[3][3];
                const int p[3] = {z, y, x};
                for (int axis = 0; axis < 3; ++axis) {
                    int lo[3] = {z, y, x}, hi[3] = {z, y, x};
                    double h = 0;
                    if (d[axis] > 1) {
                        if (p[axis] == 0) {
                            hi[axis] = 1;
                            h = 1;
                        } else if (p[axis] == d[axis] - 1) {
                            lo[axis] = p[axis] - 1;
                            h = 1;
                        } else {
                            lo[axis] = p[axis] - 1;
                            hi[axis] = p[axis] + 1;
                            h = 2;
                        }
                    }
                    for (int c = 0; c < 3; ++c) {
                        const double g = h == 0 ? 0.0
                                                : (double(t(c, d.index(hi[0], hi[1], hi[2]))) -
                                                   double(t(c, d.index(lo[0], lo[1], lo[2])))) / h;
                        J[c][axis] = (c == axis ? 1.0 : 0.0) + g;
                    }
                }
                out.push_back(J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                              J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                              J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]));
            }
    return out;
}

inline std::vector<std::array<int, 3>> surface(const LabelVolume& l, std::uint16_t label) {
    const Dims d = l.dims();
    std::vector<std::array<int, 3>> out;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                if (l(z, y, x) != label) continue;
                bool edge = false;
                const int nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
                for (const auto& o : nb) {
                    const int k = z + o[0], j = y + o[1], i = x + o[2];
                    if (!d.contains(k, j, i) || l(k, j, i) != label) edge = true;
                }
                if (edge) out.push_back({z, y, x});
            }
    return out;
}

// O(n^2) symmetric surface distance for one label, mm.
inline double asd(const LabelVolume& a, const LabelVolume& b, std::uint16_t label, const Vec3& sp) {
    const auto sa = surface(a, label), sb = surface(b, label);
    auto nearest = [&](const std::array<int, 3>& p, const std::vector<std::array<int, 3>>& set) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : set) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += (p[k] - q[k]) * sp[k] * (p[k] - q[k]) * sp[k];
            best = std::min(best, s);
        }
        return std::sqrt(best);
    };
    double total = 0;
    for (const auto& p : sa) total += nearest(p, sb);
    for (const auto& p : sb) total += nearest(p, sa);
    return total / (sa.size() + sb.size());
}

}  // namespace oracle
