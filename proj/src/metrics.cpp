#include "embreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <stdexcept>

#include "embreg/io.hpp"

namespace embreg {

namespace {

void check_dims(const Dims& a, const Dims& b, const char* what) {
    if (a != b)
        throw std::invalid_argument(std::string(what) + ": dims mismatch " + to_string(a) + " vs " + to_string(b));
}

std::map<std::uint16_t, std::size_t> label_counts(const LabelVolume& v) {
    std::map<std::uint16_t, std::size_t> c;
    for (auto l : v.data())
        if (l) ++c[l];
    return c;
}

// Felzenszwalb-Huttenlocher squared distance transform of one line with
// sample spacing `s` (in place).
void edt_line(std::vector<double>& f, double s, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    const double s2 = s * s;
    auto intersect = [&](int q, int p) {
        return ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p));
    };
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double sect = intersect(q, v[k]);
        while (sect <= z[k]) {
            --k;
            sect = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = sect;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = (q - v[k]) * s;
        d[q] = dq * dq + f[v[k]];
    }
    for (int q = 0; q < n; ++q) f[q] = d[q];
}

// Squared Euclidean distance (mm^2) from every voxel to the nearest seed.
std::vector<double> squared_edt(const std::vector<std::size_t>& seeds, const Dims& dims, const Vec3& spacing) {
    // Larger than any in-volume squared distance, small enough to keep the
    // envelope intersections exact.
    double extent = 0.0;
    for (int a = 0; a < 3; ++a) extent += dims[a] * spacing[a];
    std::vector<double> g(dims.count(), extent * extent + 1.0);
    for (auto s : seeds) g[s] = 0.0;
    const int maxn = std::max({dims.d, dims.h, dims.w});
    std::vector<double> line(maxn), d(maxn), z(maxn + 1);
    std::vector<int> v(maxn);
    for (int axis = 2; axis >= 0; --axis) {
        const int n = dims[axis];
        line.resize(n);
        d.resize(n);
        const std::size_t stride = axis == 2 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims.w)
                                                              : static_cast<std::size_t>(dims.w) * dims.h);
        auto run = [&](std::size_t start) {
            for (int i = 0; i < n; ++i) line[i] = g[start + i * stride];
            edt_line(line, spacing[axis], d, v, z);
            for (int i = 0; i < n; ++i) g[start + i * stride] = line[i];
        };
        if (axis == 2) {
            for (int zz = 0; zz < dims.d; ++zz)
                for (int y = 0; y < dims.h; ++y) run(dims.index(zz, y, 0));
        } else if (axis == 1) {
            for (int zz = 0; zz < dims.d; ++zz)
                for (int x = 0; x < dims.w; ++x) run(dims.index(zz, 0, x));
        } else {
            for (int y = 0; y < dims.h; ++y)
                for (int x = 0; x < dims.w; ++x) run(dims.index(0, y, x));
        }
    }
    return g;
}

}  // namespace

DiceResult dice(const LabelVolume& a, const LabelVolume& b) {
    check_dims(a.dims(), b.dims(), "dice");
    const auto ca = label_counts(a), cb = label_counts(b);
    std::map<std::uint16_t, std::size_t> inter;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] && a[i] == b[i]) ++inter[a[i]];
    std::set<std::uint16_t> labels;
    for (auto& [l, _] : ca) labels.insert(l);
    for (auto& [l, _] : cb) labels.insert(l);
    DiceResult r;
    double sum = 0.0;
    for (auto l : labels) {
        const auto na = ca.count(l) ? ca.at(l) : 0;
        const auto nb = cb.count(l) ? cb.at(l) : 0;
        const auto ni = inter.count(l) ? inter.at(l) : 0;
        if (na == 0 || nb == 0) r.one_sided.push_back(l);
        const double d = 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
        r.per_label[l] = d;
        sum += d;
    }
    r.mean = labels.empty() ? 0.0 : sum / static_cast<double>(labels.size());
    return r;
}

std::vector<std::size_t> surface_voxels(const LabelVolume& labels, std::uint16_t label) {
    const Dims& d = labels.dims();
    std::vector<std::size_t> out;
    std::size_t i = 0;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x, ++i) {
                if (labels[i] != label) continue;
                const int nb[6][3] = {{z - 1, y, x}, {z + 1, y, x}, {z, y - 1, x},
                                      {z, y + 1, x}, {z, y, x - 1}, {z, y, x + 1}};
                for (const auto& p : nb) {
                    if (!d.contains(p[0], p[1], p[2]) || labels(p[0], p[1], p[2]) != label) {
                        out.push_back(i);
                        break;
                    }
                }
            }
    return out;
}

SurfaceDistanceResult average_surface_distance(const LabelVolume& a, const LabelVolume& b, const Vec3& spacing) {
    check_dims(a.dims(), b.dims(), "average_surface_distance");
    const auto ca = label_counts(a), cb = label_counts(b);
    std::set<std::uint16_t> labels;
    for (auto& [l, _] : ca) labels.insert(l);
    for (auto& [l, _] : cb) labels.insert(l);
    SurfaceDistanceResult r;
    double sum = 0.0;
    for (auto l : labels) {
        if (!ca.count(l) || !cb.count(l)) {
            r.skipped.push_back(l);
            continue;
        }
        const auto sa = surface_voxels(a, l);
        const auto sb = surface_voxels(b, l);
        const auto da = squared_edt(sa, a.dims(), spacing);
        const auto db = squared_edt(sb, a.dims(), spacing);
        double total = 0.0;
        for (auto i : sa) total += std::sqrt(db[i]);
        for (auto i : sb) total += std::sqrt(da[i]);
        const double asd = total / static_cast<double>(sa.size() + sb.size());
        r.per_label_mm[l] = asd;
        sum += asd;
    }
    r.mean_mm = r.per_label_mm.empty() ? 0.0 : sum / static_cast<double>(r.per_label_mm.size());
    return r;
}

std::vector<double> jacobian_determinants(const DisplacementField& tau) {
    const Dims& d = tau.dims();
    const std::size_t n = d.count();
    std::vector<double> det(n);
    const float* t = tau.data().data();
    std::size_t i = 0;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x, ++i) {
                const int c[3] = {z, y, x};
                double J[3][3];
                for (int a = 0; a < 3; ++a) {  // derivative axis
                    int lo[3] = {z, y, x}, hi[3] = {z, y, x};
                    lo[a] = std::max(0, c[a] - 1);
                    hi[a] = std::min(d[a] - 1, c[a] + 1);
                    const int span = hi[a] - lo[a];
                    const std::size_t pl = d.index(lo[0], lo[1], lo[2]);
                    const std::size_t ph = d.index(hi[0], hi[1], hi[2]);
                    for (int comp = 0; comp < 3; ++comp) {
                        const double deriv =
                            span ? (static_cast<double>(t[comp * n + ph]) - t[comp * n + pl]) / span : 0.0;
                        J[comp][a] = (comp == a ? 1.0 : 0.0) + deriv;
                    }
                }
                det[i] = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                         J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                         J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
            }
    return det;
}

JacobianStats jacobian_stats(const DisplacementField& tau, const BodyMask& mask) {
    check_dims(tau.dims(), mask.dims(), "jacobian_stats");
    if (mask.voxel_count() == 0) throw std::invalid_argument("jacobian_stats: empty mask");
    const auto det = jacobian_determinants(tau);
    double sum = 0.0;
    std::size_t neg = 0;
    for (std::size_t i = 0; i < det.size(); ++i)
        if (mask[i]) {
            sum += det[i];
            if (det[i] <= 0.0) ++neg;
        }
    const double cnt = static_cast<double>(mask.voxel_count());
    JacobianStats s;
    s.mean = sum / cnt;
    double var = 0.0;
    for (std::size_t i = 0; i < det.size(); ++i)
        if (mask[i]) var += (det[i] - s.mean) * (det[i] - s.mean);
    s.std = std::sqrt(var / cnt);
    s.negative_fraction = static_cast<double>(neg) / cnt;
    return s;
}

MetricsReport compute_metrics(const LabelVolume& fixed_labels, const LabelVolume& warped_labels,
                              const DisplacementField* field, const BodyMask* mask, bool with_asd) {
    MetricsReport r;
    r.dice = dice(fixed_labels, warped_labels);
    if (with_asd) r.asd = average_surface_distance(fixed_labels, warped_labels, fixed_labels.spacing());
    if (field && mask) r.jacobian = jacobian_stats(*field, *mask);
    return r;
}

nlohmann::json to_json(const MetricsReport& report) {
    nlohmann::json j;
    nlohmann::json dice = nlohmann::json::object();
    for (auto& [l, v] : report.dice.per_label) dice[std::to_string(l)] = v;
    j["per_label_dice"] = dice;
    j["mean_dice"] = report.dice.mean;
    j["dice_one_sided_labels"] = report.dice.one_sided;
    if (report.asd) {
        nlohmann::json asd = nlohmann::json::object();
        for (auto& [l, v] : report.asd->per_label_mm) asd[std::to_string(l)] = v;
        j["per_label_asd_mm"] = asd;
        j["mean_asd_mm"] = report.asd->mean_mm;
        j["asd_skipped_labels"] = report.asd->skipped;
    }
    if (report.jacobian) {
        j["jacobian_mean"] = report.jacobian->mean;
        j["jacobian_std"] = report.jacobian->std;
        j["jacobian_negative_fraction"] = report.jacobian->negative_fraction;
    }
    return j;
}

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << to_json(report).dump(2) << "\n";
    if (!os) throw IoError("write failed: " + path.string());
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "label,dice,asd_mm\n" << std::setprecision(10);
    for (auto& [l, v] : report.dice.per_label) {
        os << l << ',' << v << ',';
        if (report.asd && report.asd->per_label_mm.count(l)) os << report.asd->per_label_mm.at(l);
        os << '\n';
    }
    os << "mean," << report.dice.mean << ',';
    if (report.asd) os << report.asd->mean_mm;
    os << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace embreg
