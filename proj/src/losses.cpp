#include "embreg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "embreg/filters.hpp"
#include "embreg/interp.hpp"

namespace embreg {

namespace {

void check_dims(const Dims& a, const Dims& b, const char* what) {
    if (a != b)
        throw std::invalid_argument(std::string(what) + ": dims mismatch " + to_string(a) + " vs " + to_string(b));
}

double mask_size(const BodyMask& mask, const char* what) {
    if (mask.voxel_count() == 0) throw std::invalid_argument(std::string(what) + ": empty mask");
    return static_cast<double>(mask.voxel_count());
}

// Window statistics of the NCC for a pair of images given their fixed-side
// sums. Returns CC^2 per voxel together with what the gradient needs.
struct NccWindows {
    std::vector<double> cc2, cross, jvar, jmean, d;
};

NccWindows ncc_windows(std::span<const double> I, std::span<const double> J, const Dims& dims, int radius,
                       const std::vector<double>& count, const std::vector<double>& isum,
                       const std::vector<double>& ivar) {
    const std::size_t n = dims.count();
    std::vector<double> j2(n), ij(n);
    for (std::size_t i = 0; i < n; ++i) {
        j2[i] = J[i] * J[i];
        ij[i] = I[i] * J[i];
    }
    const auto jsum = box_sum(J, dims, radius);
    const auto j2sum = box_sum(j2, dims, radius);
    const auto ijsum = box_sum(ij, dims, radius);
    NccWindows w;
    w.cc2.resize(n);
    w.cross.resize(n);
    w.jvar.resize(n);
    w.jmean.resize(n);
    w.d.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double cnt = count[i];
        const double cross = ijsum[i] - isum[i] * jsum[i] / cnt;
        const double jv = std::max(0.0, j2sum[i] - jsum[i] * jsum[i] / cnt);
        const double den = ivar[i] * jv + kNccEpsilon;
        w.cross[i] = cross;
        w.jvar[i] = jv;
        w.jmean[i] = jsum[i] / cnt;
        w.d[i] = den;
        w.cc2[i] = cross * cross / den;
    }
    return w;
}

void fixed_windows(std::span<const double> I, const Dims& dims, int radius, std::vector<double>& count,
                   std::vector<double>& isum, std::vector<double>& ivar) {
    const std::size_t n = dims.count();
    count = box_count(dims, radius);
    isum = box_sum(I, dims, radius);
    std::vector<double> i2(n);
    for (std::size_t i = 0; i < n; ++i) i2[i] = I[i] * I[i];
    const auto i2sum = box_sum(i2, dims, radius);
    ivar.resize(n);
    for (std::size_t i = 0; i < n; ++i) ivar[i] = std::max(0.0, i2sum[i] - isum[i] * isum[i] / count[i]);
}

// Difference pairs (p, q) with diff = tau(q) - tau(p) entering the smoothness
// sum for voxel u along `axis`.
inline bool smooth_pair(const Dims& dims, int z, int y, int x, int axis, std::size_t& p, std::size_t& q) {
    const int c[3] = {z, y, x};
    const int n = dims[axis];
    if (n < 2) return false;
    int lo[3] = {z, y, x}, hi[3] = {z, y, x};
    if (c[axis] < n - 1) {
        hi[axis] = c[axis] + 1;
    } else {
        lo[axis] = c[axis] - 1;
    }
    p = dims.index(lo[0], lo[1], lo[2]);
    q = dims.index(hi[0], hi[1], hi[2]);
    return true;
}

}  // namespace

double local_ncc_similarity(const Volume& fixed, const Volume& moving, const BodyMask& mask, int radius) {
    check_dims(fixed.dims(), moving.dims(), "local_ncc_similarity");
    check_dims(fixed.dims(), mask.dims(), "local_ncc_similarity");
    if (radius < 1) throw std::invalid_argument("local_ncc_similarity: radius must be >= 1");
    const double omega = mask_size(mask, "local_ncc_similarity");
    const std::vector<double> I(fixed.data().begin(), fixed.data().end());
    const std::vector<double> J(moving.data().begin(), moving.data().end());
    std::vector<double> count, isum, ivar;
    fixed_windows(I, fixed.dims(), radius, count, isum, ivar);
    const auto w = ncc_windows(I, J, fixed.dims(), radius, count, isum, ivar);
    double s = 0.0;
    for (std::size_t i = 0; i < w.cc2.size(); ++i)
        if (mask[i]) s += w.cc2[i];
    return s / omega;
}

double sam_loss(const EmbeddingVolume& fixed, const EmbeddingVolume& moving, const BodyMask& mask) {
    check_dims(fixed.dims(), moving.dims(), "sam_loss");
    check_dims(fixed.dims(), mask.dims(), "sam_loss");
    if (fixed.channels() != moving.channels()) throw std::invalid_argument("sam_loss: channel count mismatch");
    if (!fixed.normalized() || !moving.normalized()) throw std::invalid_argument("sam_loss: embeddings must be normalized");
    const double omega = mask_size(mask, "sam_loss");
    const std::size_t n = fixed.voxels();
    std::vector<double> dot(n, 0.0);
    for (int c = 0; c < fixed.channels(); ++c) {
        const auto f = fixed.channel(c);
        const auto m = moving.channel(c);
        for (std::size_t i = 0; i < n; ++i) dot[i] += static_cast<double>(f[i]) * m[i];
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) s += dot[i];
    return std::clamp(1.0 - s / omega, 0.0, 2.0);
}

double smoothness_loss(const DisplacementField& tau, const BodyMask& mask) {
    check_dims(tau.dims(), mask.dims(), "smoothness_loss");
    const double omega = mask_size(mask, "smoothness_loss");
    const Dims& dims = tau.dims();
    const std::size_t n = dims.count();
    const float* t = tau.data().data();
    double s = 0.0;
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i) {
                if (!mask[i]) continue;
                for (int axis = 0; axis < 3; ++axis) {
                    std::size_t p, q;
                    if (!smooth_pair(dims, z, y, x, axis, p, q)) continue;
                    for (int c = 0; c < 3; ++c) {
                        const double diff = static_cast<double>(t[c * n + q]) - t[c * n + p];
                        s += diff * diff;
                    }
                }
            }
    return s / omega;
}

// ---------------------------------------------------------------- correlation

CorrelationFeature::CorrelationFeature(Dims dims, int radius)
    : dims_(dims), radius_(radius), data_(static_cast<std::size_t>(kChannels) * dims.count(), 0.0f) {}

std::array<int, 3> CorrelationFeature::displacement(int channel) const {
    return {(channel / 9 - 1) * radius_, (channel / 3 % 3 - 1) * radius_, (channel % 3 - 1) * radius_};
}

DisplacementField CorrelationFeature::argmax_field() const {
    DisplacementField f(dims_);
    const std::size_t n = dims_.count();
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        for (int c = 1; c < kChannels; ++c)
            if ((*this)(c, i) > (*this)(best, i)) best = c;
        const auto d = displacement(best);
        for (int a = 0; a < 3; ++a) f(a, i) = static_cast<float>(d[a]);
    }
    return f;
}

CorrelationFeature correlation_feature(const EmbeddingVolume& fixed, const EmbeddingVolume& moving, int radius) {
    check_dims(fixed.dims(), moving.dims(), "correlation_feature");
    if (fixed.channels() != moving.channels()) throw std::invalid_argument("correlation_feature: channel count mismatch");
    if (!fixed.normalized() || !moving.normalized())
        throw std::invalid_argument("correlation_feature: embeddings must be normalized");
    const Dims& dims = fixed.dims();
    const std::size_t n = dims.count();
    CorrelationFeature out(dims, radius);
    const int C = fixed.channels();
    std::vector<double> acc(n);
    for (int ch = 0; ch < CorrelationFeature::kChannels; ++ch) {
        const auto d = out.displacement(ch);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int c = 0; c < C; ++c) {
            const auto f = fixed.channel(c);
            const auto m = moving.channel(c);
            std::size_t i = 0;
            for (int z = 0; z < dims.d; ++z) {
                const int mz = std::clamp(z + d[0], 0, dims.d - 1);
                for (int y = 0; y < dims.h; ++y) {
                    const int my = std::clamp(y + d[1], 0, dims.h - 1);
                    for (int x = 0; x < dims.w; ++x, ++i) {
                        const int mx = std::clamp(x + d[2], 0, dims.w - 1);
                        acc[i] += static_cast<double>(f[i]) * m[dims.index(mz, my, mx)];
                    }
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) out(ch, i) = static_cast<float>(acc[i]);
    }
    return out;
}

// ---------------------------------------------------------------- composite

CompositeLoss::CompositeLoss(Volume fixed, Volume moving, EmbeddingVolume fixed_embedding,
                             EmbeddingVolume moving_embedding, BodyMask mask, LossConfig config)
    : dims_(fixed.dims()), config_(config), mask_(std::move(mask)) {
    check_dims(dims_, moving.dims(), "CompositeLoss");
    check_dims(dims_, mask_.dims(), "CompositeLoss");
    if (config_.ncc_radius < 1) throw std::invalid_argument("CompositeLoss: NCC radius must be >= 1");
    mask_size(mask_, "CompositeLoss");
    fixed_.assign(fixed.data().begin(), fixed.data().end());
    moving_.assign(moving.data().begin(), moving.data().end());
    if (moving_embedding.channels() > 0) {
        check_dims(dims_, fixed_embedding.dims(), "CompositeLoss");
        check_dims(dims_, moving_embedding.dims(), "CompositeLoss");
        if (fixed_embedding.channels() != moving_embedding.channels())
            throw std::invalid_argument("CompositeLoss: channel count mismatch");
        if (!fixed_embedding.normalized() || !moving_embedding.normalized())
            throw std::invalid_argument("CompositeLoss: embeddings must be normalized");
        channels_ = fixed_embedding.channels();
        fixed_embedding_.assign(fixed_embedding.data().begin(), fixed_embedding.data().end());
        moving_embedding_.assign(moving_embedding.data().begin(), moving_embedding.data().end());
    }
    fixed_windows(fixed_, dims_, config_.ncc_radius, count_, fixed_sum_, fixed_var_);
}

LossValues CompositeLoss::evaluate(std::span<const double> tau, std::span<double> grad, LossTerm term) const {
    const std::size_t n = dims_.count();
    if (tau.size() != 3 * n) throw std::invalid_argument("CompositeLoss: field size mismatch");
    const bool want_grad = !grad.empty();
    if (want_grad) {
        if (grad.size() != 3 * n) throw std::invalid_argument("CompositeLoss: gradient size mismatch");
        std::fill(grad.begin(), grad.end(), 0.0);
    }
    auto scale_for = [&](LossTerm t, double weight) {
        if (!want_grad) return 0.0;
        if (term == LossTerm::Total) return weight;
        return term == t ? 1.0 : 0.0;
    };
    LossValues v;
    v.ncc_similarity = ncc_term(tau, grad, scale_for(LossTerm::Ncc, 1.0));
    v.sam = channels_ > 0 ? sam_term(tau, grad, scale_for(LossTerm::Sam, config_.lambda)) : 0.0;
    v.smooth = smooth_term(tau, grad, scale_for(LossTerm::Smooth, config_.gamma));
    v.total = (1.0 - v.ncc_similarity) + config_.lambda * v.sam + config_.gamma * v.smooth;
    return v;
}

double CompositeLoss::ncc_term(std::span<const double> tau, std::span<double> grad, double scale) const {
    const std::size_t n = dims_.count();
    const double omega = static_cast<double>(mask_.voxel_count());
    const bool want_grad = scale != 0.0;
    std::vector<double> J(n);
    std::vector<double> dJ(want_grad ? 3 * n : 0);
    std::size_t i = 0;
    for (int z = 0; z < dims_.d; ++z)
        for (int y = 0; y < dims_.h; ++y)
            for (int x = 0; x < dims_.w; ++x, ++i) {
                const TrilinearStencil st(dims_, z + tau[i], y + tau[n + i], x + tau[2 * n + i]);
                J[i] = st.sample(moving_.data());
                if (want_grad)
                    for (int a = 0; a < 3; ++a) dJ[a * n + i] = st.derivative(moving_.data(), a);
            }
    const int r = config_.ncc_radius;
    const auto w = ncc_windows(fixed_, J, dims_, r, count_, fixed_sum_, fixed_var_);
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (mask_[k]) s += w.cc2[k];
    const double similarity = s / omega;
    if (!want_grad) return similarity;

    // d(mean CC^2)/dJ(v) = (1/|Omega|) sum_{u in W(v), u in Omega}
    //     a_u (I_v - Ibar_u) - b_u (J_v - Jbar_u)
    std::vector<double> a(n, 0.0), abar(n, 0.0), b(n, 0.0), bbar(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (!mask_[k]) continue;
        const double ibar = fixed_sum_[k] / count_[k];
        a[k] = 2.0 * w.cross[k] / w.d[k];
        b[k] = 2.0 * w.cross[k] * w.cross[k] * fixed_var_[k] / (w.d[k] * w.d[k]);
        abar[k] = a[k] * ibar;
        bbar[k] = b[k] * w.jmean[k];
    }
    const auto A = box_sum(a, dims_, r);
    const auto Ab = box_sum(abar, dims_, r);
    const auto B = box_sum(b, dims_, r);
    const auto Bb = box_sum(bbar, dims_, r);
    // The minimised quantity is 1 - similarity.
    const double k_scale = -scale / omega;
    for (std::size_t v = 0; v < n; ++v) {
        const double dsim = fixed_[v] * A[v] - Ab[v] - J[v] * B[v] + Bb[v];
        if (dsim == 0.0) continue;
        for (int ax = 0; ax < 3; ++ax) grad[ax * n + v] += k_scale * dsim * dJ[ax * n + v];
    }
    return similarity;
}

double CompositeLoss::sam_term(std::span<const double> tau, std::span<double> grad, double scale) const {
    const std::size_t n = dims_.count();
    const double omega = static_cast<double>(mask_.voxel_count());
    const bool want_grad = scale != 0.0;
    const int C = channels_;
    std::vector<double> e(C), de(want_grad ? 3 * C : 0);
    double cos_sum = 0.0;
    std::size_t i = 0;
    for (int z = 0; z < dims_.d; ++z)
        for (int y = 0; y < dims_.h; ++y)
            for (int x = 0; x < dims_.w; ++x, ++i) {
                if (!mask_[i]) continue;
                const TrilinearStencil st(dims_, z + tau[i], y + tau[n + i], x + tau[2 * n + i]);
                double norm2 = 0.0, dot = 0.0;
                for (int c = 0; c < C; ++c) {
                    const float* m = moving_embedding_.data() + c * n;
                    double val = 0.0, d0 = 0.0, d1 = 0.0, d2 = 0.0;
                    for (int k = 0; k < 8; ++k) {
                        const double s = m[st.index[k]];
                        val += st.weight[k] * s;
                        if (want_grad) {
                            d0 += st.dweight[0][k] * s;
                            d1 += st.dweight[1][k] * s;
                            d2 += st.dweight[2][k] * s;
                        }
                    }
                    e[c] = val;
                    if (want_grad) {
                        de[c] = d0;
                        de[C + c] = d1;
                        de[2 * C + c] = d2;
                    }
                    norm2 += val * val;
                    dot += static_cast<double>(fixed_embedding_[c * n + i]) * val;
                }
                if (norm2 <= 0.0) {
                    // Degenerate interpolant: treated like normalize_embedding's basis vector.
                    cos_sum += fixed_embedding_[i];
                    continue;
                }
                const double norm = std::sqrt(norm2);
                const double cosv = dot / norm;
                cos_sum += cosv;
                if (!want_grad) continue;
                // d cos / d e_c = (f_c - cos * e_c / |e|) / |e|
                double g[3] = {0.0, 0.0, 0.0};
                for (int c = 0; c < C; ++c) {
                    const double dc = (fixed_embedding_[c * n + i] - cosv * e[c] / norm) / norm;
                    g[0] += dc * de[c];
                    g[1] += dc * de[C + c];
                    g[2] += dc * de[2 * C + c];
                }
                for (int a = 0; a < 3; ++a) grad[a * n + i] -= scale * g[a] / omega;
            }
    // Stored unit vectors are only unit to float precision.
    return std::clamp(1.0 - cos_sum / omega, 0.0, 2.0);
}

double CompositeLoss::smooth_term(std::span<const double> tau, std::span<double> grad, double scale) const {
    const std::size_t n = dims_.count();
    const double omega = static_cast<double>(mask_.voxel_count());
    const bool want_grad = scale != 0.0;
    double s = 0.0;
    std::size_t i = 0;
    for (int z = 0; z < dims_.d; ++z)
        for (int y = 0; y < dims_.h; ++y)
            for (int x = 0; x < dims_.w; ++x, ++i) {
                if (!mask_[i]) continue;
                for (int axis = 0; axis < 3; ++axis) {
                    std::size_t p, q;
                    if (!smooth_pair(dims_, z, y, x, axis, p, q)) continue;
                    for (int c = 0; c < 3; ++c) {
                        const double diff = tau[c * n + q] - tau[c * n + p];
                        s += diff * diff;
                        if (want_grad) {
                            const double g = scale * 2.0 * diff / omega;
                            grad[c * n + q] += g;
                            grad[c * n + p] -= g;
                        }
                    }
                }
            }
    return s / omega;
}

}  // namespace embreg
