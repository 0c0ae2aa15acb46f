#include "embreg/field.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "embreg/interp.hpp"

namespace embreg {

DisplacementField::DisplacementField(Dims dims, Vec3 spacing, Vec3 origin)
    : DisplacementField(dims, spacing, origin, std::vector<float>(3 * dims.count(), 0.0f)) {}

DisplacementField::DisplacementField(Dims dims, Vec3 spacing, Vec3 origin, std::vector<float> data)
    : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)) {
    if (dims.d < 1 || dims.h < 1 || dims.w < 1)
        throw std::invalid_argument("field dims must be positive, got " + to_string(dims));
    if (data_.size() != 3 * dims.count()) throw std::invalid_argument("field data length must be 3*D*H*W");
    for (float v : data_)
        if (!std::isfinite(v)) throw std::invalid_argument("field contains non-finite values");
}

DisplacementField DisplacementField::constant(Dims dims, const Vec3& value) {
    DisplacementField f(dims);
    for (int a = 0; a < 3; ++a)
        for (auto& v : f.component(a)) v = static_cast<float>(value[a]);
    return f;
}

DisplacementField build_coarse_field(const MatchSet& matches, const Dims& dims, int grid_stride) {
    if (grid_stride < 1) throw std::invalid_argument("build_coarse_field: grid stride must be >= 1");
    if (matches.size() == 0) throw std::invalid_argument("build_coarse_field: no matches");
    const int s = grid_stride;
    const Dims nodes{(dims.d - 1) / s + 1, (dims.h - 1) / s + 1, (dims.w - 1) / s + 1};
    const std::size_t nn = nodes.count();
    std::vector<std::array<double, 3>> disp(nn, {0.0, 0.0, 0.0});
    std::vector<char> valid(nn, 0);
    for (std::size_t k = 0; k < matches.size(); ++k) {
        const auto& f = matches.fixed_points[k];
        const auto& m = matches.moving_points[k];
        if (f[0] % s || f[1] % s || f[2] % s || !dims.contains(f[0], f[1], f[2]))
            throw std::invalid_argument("build_coarse_field: fixed point is not a node of the stride-" +
                                        std::to_string(s) + " grid");
        const std::size_t j = nodes.index(f[0] / s, f[1] / s, f[2] / s);
        for (int a = 0; a < 3; ++a) disp[j][a] = static_cast<double>(m[a] - f[a]);
        valid[j] = 1;
    }

    // Nearest surviving node for the rest; ties go to the smaller node index.
    std::vector<std::size_t> survivors;
    for (std::size_t j = 0; j < nn; ++j)
        if (valid[j]) survivors.push_back(j);
    auto node_coord = [&](std::size_t j) {
        return std::array<int, 3>{static_cast<int>(j / (static_cast<std::size_t>(nodes.h) * nodes.w)),
                                  static_cast<int>((j / nodes.w) % nodes.h), static_cast<int>(j % nodes.w)};
    };
    for (std::size_t j = 0; j < nn; ++j) {
        if (valid[j]) continue;
        const auto p = node_coord(j);
        long best_d2 = std::numeric_limits<long>::max();
        std::size_t best = survivors.front();
        for (std::size_t sj : survivors) {
            const auto q = node_coord(sj);
            long d2 = 0;
            for (int a = 0; a < 3; ++a) d2 += static_cast<long>(p[a] - q[a]) * (p[a] - q[a]);
            if (d2 < best_d2) {
                best_d2 = d2;
                best = sj;
            }
        }
        disp[j] = disp[best];
    }

    DisplacementField out(dims);
    const std::size_t n = dims.count();
    auto data = out.data();
    auto axis_weights = [s](int u, int count, int& i0, int& i1, double& f) {
        i0 = u / s;
        if (i0 >= count - 1) {
            i0 = count - 1;
            i1 = i0;
            f = 0.0;
        } else {
            i1 = i0 + 1;
            f = static_cast<double>(u - i0 * s) / s;
        }
    };
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z) {
        int z0, z1;
        double fz;
        axis_weights(z, nodes.d, z0, z1, fz);
        for (int y = 0; y < dims.h; ++y) {
            int y0, y1;
            double fy;
            axis_weights(y, nodes.h, y0, y1, fy);
            for (int x = 0; x < dims.w; ++x, ++i) {
                int x0, x1;
                double fx;
                axis_weights(x, nodes.w, x0, x1, fx);
                for (int a = 0; a < 3; ++a) {
                    auto at = [&](int zz, int yy, int xx) { return disp[nodes.index(zz, yy, xx)][a]; };
                    const double c00 = at(z0, y0, x0) * (1 - fx) + at(z0, y0, x1) * fx;
                    const double c01 = at(z0, y1, x0) * (1 - fx) + at(z0, y1, x1) * fx;
                    const double c10 = at(z1, y0, x0) * (1 - fx) + at(z1, y0, x1) * fx;
                    const double c11 = at(z1, y1, x0) * (1 - fx) + at(z1, y1, x1) * fx;
                    const double v = (c00 * (1 - fy) + c01 * fy) * (1 - fz) + (c10 * (1 - fy) + c11 * fy) * fz;
                    data[a * n + i] = static_cast<float>(v);
                }
            }
        }
    }
    return out;
}

namespace {

void check_dims(const Dims& a, const Dims& b, const char* what) {
    if (a != b)
        throw std::invalid_argument(std::string(what) + ": dims mismatch " + to_string(a) + " vs " + to_string(b));
}

template <class Fn>
void for_each_warp_position(const DisplacementField& tau, Fn&& fn) {
    const Dims& dims = tau.dims();
    const std::size_t n = dims.count();
    const float* t = tau.data().data();
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i)
                fn(i, z + static_cast<double>(t[i]), y + static_cast<double>(t[n + i]),
                   x + static_cast<double>(t[2 * n + i]));
}

}  // namespace

Volume warp_by_field(const Volume& v, const DisplacementField& tau) {
    check_dims(v.dims(), tau.dims(), "warp_by_field");
    Volume out(v.dims(), v.spacing(), v.origin());
    const float* src = v.data().data();
    for_each_warp_position(tau, [&](std::size_t i, double z, double y, double x) {
        out[i] = static_cast<float>(sample_trilinear(src, v.dims(), z, y, x));
    });
    return out;
}

EmbeddingVolume warp_embedding_by_field(const EmbeddingVolume& e, const DisplacementField& tau) {
    check_dims(e.dims(), tau.dims(), "warp_embedding_by_field");
    EmbeddingVolume out(e.channels(), e.dims(), e.spacing(), e.origin());
    const std::size_t n = e.voxels();
    for_each_warp_position(tau, [&](std::size_t i, double z, double y, double x) {
        const TrilinearStencil st(e.dims(), z, y, x);
        for (int c = 0; c < e.channels(); ++c) out(c, i) = static_cast<float>(st.sample(e.data().data() + c * n));
    });
    return normalize_embedding(out);
}

LabelVolume warp_labels_by_field(const LabelVolume& labels, const DisplacementField& tau) {
    check_dims(labels.dims(), tau.dims(), "warp_labels_by_field");
    LabelVolume out(labels.dims(), labels.spacing(), labels.origin());
    for_each_warp_position(tau, [&](std::size_t i, double z, double y, double x) {
        out[i] = labels[nearest_index(labels.dims(), z, y, x)];
    });
    return out;
}

DisplacementField compose_fields(const DisplacementField& outer, const DisplacementField& inner) {
    check_dims(outer.dims(), inner.dims(), "compose_fields");
    DisplacementField out(inner.dims(), inner.spacing(), inner.origin());
    const std::size_t n = inner.voxels();
    auto o = out.data();
    const float* src = outer.data().data();
    for_each_warp_position(inner, [&](std::size_t i, double z, double y, double x) {
        const TrilinearStencil st(outer.dims(), z, y, x);
        for (int a = 0; a < 3; ++a)
            o[a * n + i] = static_cast<float>(static_cast<double>(inner(a, i)) + st.sample(src + a * n));
    });
    return out;
}

double mean_magnitude(const DisplacementField& tau, const BodyMask* mask) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < tau.voxels(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const auto v = tau.at(i);
        sum += std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        ++count;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

double max_magnitude(const DisplacementField& tau) {
    double m = 0.0;
    for (std::size_t i = 0; i < tau.voxels(); ++i) {
        const auto v = tau.at(i);
        m = std::max(m, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
    }
    return m;
}

}  // namespace embreg
