#include "embreg/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include "embreg/filters.hpp"
#include "embreg/interp.hpp"
#include "embreg/io.hpp"

namespace embreg {

namespace {

struct Level {
    Volume fixed, moving;
    EmbeddingVolume fixed_embedding, moving_embedding;
    BodyMask mask;
};

Volume half(const Volume& v) {
    Dims nd;
    const std::vector<double> src(v.data().begin(), v.data().end());
    const auto d = downsample2(src, v.dims(), &nd);
    const Vec3 sp{v.spacing()[0] * 2, v.spacing()[1] * 2, v.spacing()[2] * 2};
    return Volume(nd, sp, v.origin(), std::vector<float>(d.begin(), d.end()));
}

EmbeddingVolume half(const EmbeddingVolume& e) {
    if (e.channels() == 0) return {};
    const Dims nd = half_dims(e.dims());
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(e.channels()) * nd.count());
    for (int c = 0; c < e.channels(); ++c) {
        const auto ch = e.channel(c);
        const std::vector<double> src(ch.begin(), ch.end());
        const auto d = downsample2(src, e.dims(), nullptr);
        data.insert(data.end(), d.begin(), d.end());
    }
    const Vec3 sp{e.spacing()[0] * 2, e.spacing()[1] * 2, e.spacing()[2] * 2};
    return normalize_embedding(EmbeddingVolume(e.channels(), nd, sp, e.origin(), std::move(data)));
}

BodyMask half(const BodyMask& m) {
    const Dims& d = m.dims();
    Image<std::uint8_t> out(half_dims(d));
    std::size_t i = 0;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x, ++i)
                if (m[i]) out(z / 2, y / 2, x / 2) = 1;
    return BodyMask(std::move(out));
}

// Field at the next finer level: sample the coarse field at cell-centre
// aligned positions and double it.
std::vector<double> upsample_field(const std::vector<double>& coarse, const Dims& cd, const Dims& fd) {
    const std::size_t cn = cd.count(), fn = fd.count();
    std::vector<double> out(3 * fn);
    std::size_t i = 0;
    for (int z = 0; z < fd.d; ++z)
        for (int y = 0; y < fd.h; ++y)
            for (int x = 0; x < fd.w; ++x, ++i) {
                const TrilinearStencil st(cd, (z - 0.5) / 2.0, (y - 0.5) / 2.0, (x - 0.5) / 2.0);
                for (int a = 0; a < 3; ++a) out[a * fn + i] = 2.0 * st.sample(coarse.data() + a * cn);
            }
    return out;
}

double max_voxel_norm(const std::vector<double>& g, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = g[i] * g[i] + g[n + i] * g[n + i] + g[2 * n + i] * g[2 * n + i];
        m = std::max(m, v);
    }
    return std::sqrt(m);
}

DisplacementField to_field(const std::vector<double>& tau, const Volume& like) {
    return DisplacementField(like.dims(), like.spacing(), like.origin(), std::vector<float>(tau.begin(), tau.end()));
}

}  // namespace

int ncc_radius_for_level(const OptParams& params, int level) {
    if (params.levels <= 1) return params.ncc_radius_fine;
    const double t = static_cast<double>(level) / (params.levels - 1);  // 1 at the coarsest level
    return static_cast<int>(std::lround(params.ncc_radius_fine + t * (params.ncc_radius_coarse - params.ncc_radius_fine)));
}

OptResult optimize_field(const Volume& fixed, const Volume& moving, const EmbeddingVolume& fixed_embedding,
                         const EmbeddingVolume& moving_embedding, const BodyMask& mask, const OptParams& params) {
    if (params.levels < 1) throw std::invalid_argument("optimize_field: need at least one pyramid level");
    if (params.iterations.empty()) throw std::invalid_argument("optimize_field: iteration caps missing");
    if (fixed.dims() != moving.dims() || fixed.dims() != mask.dims())
        throw std::invalid_argument("optimize_field: fixed, moving and mask dims must match");

    std::vector<Level> pyramid;
    pyramid.push_back(Level{fixed, moving, params.lambda != 0.0 ? fixed_embedding : EmbeddingVolume{},
                            params.lambda != 0.0 ? moving_embedding : EmbeddingVolume{}, mask});
    for (int l = 1; l < params.levels; ++l) {
        const Level& p = pyramid.back();
        pyramid.push_back(Level{half(p.fixed), half(p.moving), half(p.fixed_embedding), half(p.moving_embedding),
                                half(p.mask)});
    }

    OptResult result;
    std::vector<double> tau;
    Dims prev_dims{};
    for (int level = params.levels - 1; level >= 0; --level) {
        const Level& lv = pyramid[level];
        const Dims dims = lv.fixed.dims();
        const std::size_t n = dims.count();
        if (lv.mask.voxel_count() == 0) throw std::invalid_argument("optimize_field: empty mask");

        LossConfig cfg{ncc_radius_for_level(params, level), params.lambda, params.gamma};
        const CompositeLoss loss(lv.fixed, lv.moving, lv.fixed_embedding, lv.moving_embedding, lv.mask, cfg);

        if (level == params.levels - 1) {
            tau.assign(3 * n, 0.0);
            if (params.seed_from_correlation && lv.fixed_embedding.channels() > 0) {
                const auto seed = correlation_feature(lv.fixed_embedding, lv.moving_embedding, 2).argmax_field();
                for (std::size_t i = 0; i < 3 * n; ++i) tau[i] = seed.data()[i];
            }
        } else {
            tau = upsample_field(tau, prev_dims, dims);
        }
        prev_dims = dims;

        const int depth = params.levels - 1 - level;
        const int cap = params.iterations[std::min<std::size_t>(depth, params.iterations.size() - 1)];
        std::vector<double> grad(3 * n), velocity(3 * n, 0.0), best_tau = tau;
        std::vector<double> best_history;
        double best = std::numeric_limits<double>::infinity();
        double prev_total = std::numeric_limits<double>::infinity();
        double step = 0.0;
        for (int it = 0; it <= cap; ++it) {
            const LossValues v = loss.evaluate(tau, grad);
            result.history.push_back(LossReport{1.0 - v.ncc_similarity, v.sam, v.smooth, v.total, it, level});
            if (!std::isfinite(v.total)) {
                result.diverged = true;
                break;
            }
            if (v.total < best) {
                best = v.total;
                best_tau = tau;
            }
            best_history.push_back(best);
            if (it == cap) break;
            const int hist = static_cast<int>(best_history.size());
            if (hist > params.patience) {
                const double before = best_history[hist - 1 - params.patience];
                if (before - best < params.tolerance * std::abs(best)) break;
            }
            if (it == 0) {
                const double gmax = max_voxel_norm(grad, n);
                if (gmax <= 0.0) break;
                step = params.max_first_step / gmax;
                if (params.gamma > 0.0) {
                    // Stability bound of momentum descent on the quadratic smoothness term.
                    const double curvature = 24.0 * params.gamma / static_cast<double>(lv.mask.voxel_count());
                    step = std::min(step, (1.0 + params.momentum) / curvature);
                }
            }
            if (v.total > prev_total) std::fill(velocity.begin(), velocity.end(), 0.0);
            prev_total = v.total;
            for (std::size_t k = 0; k < 3 * n; ++k) {
                velocity[k] = params.momentum * velocity[k] - step * grad[k];
                tau[k] += velocity[k];
            }
        }
        tau = best_tau;
        if (result.diverged) {
            // Abort with the last finite field, brought to full resolution.
            Dims d = dims;
            for (int l = level - 1; l >= 0; --l) {
                const Dims fd = pyramid[l].fixed.dims();
                tau = upsample_field(tau, d, fd);
                d = fd;
            }
            break;
        }
    }
    result.field = to_field(tau, fixed);
    return result;
}

void write_loss_history_csv(const std::vector<LossReport>& history, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "iteration,level,ncc,sam,smooth,total\n" << std::setprecision(10);
    for (const auto& r : history)
        os << r.iteration << ',' << r.level << ',' << r.ncc << ',' << r.sam << ',' << r.smooth << ',' << r.total
           << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

double gradient_check(const CompositeLoss& loss, LossTerm term, std::span<const double> tau, int samples,
                      std::uint64_t seed, double h) {
    if (samples < 1) throw std::invalid_argument("gradient_check: samples must be >= 1");
    const Dims& dims = loss.dims();
    const std::size_t n = dims.count();
    std::vector<double> analytic(3 * n);
    loss.evaluate(tau, analytic, term);

    auto value = [&](const std::vector<double>& t) {
        const LossValues v = loss.evaluate(t);
        switch (term) {
            case LossTerm::Ncc: return 1.0 - v.ncc_similarity;
            case LossTerm::Sam: return v.sam;
            case LossTerm::Smooth: return v.smooth;
            case LossTerm::Total: return v.total;
        }
        return v.total;
    };
    auto near_kink = [&](std::size_t i) {
        const int c[3] = {static_cast<int>(i / (static_cast<std::size_t>(dims.h) * dims.w)),
                          static_cast<int>((i / dims.w) % dims.h), static_cast<int>(i % dims.w)};
        for (int a = 0; a < 3; ++a) {
            const double p = c[a] + tau[a * n + i];
            const double frac = p - std::floor(p);
            if (frac < 2 * h || frac > 1 - 2 * h) return true;
            if (p < 2 * h || p > dims[a] - 1 - 2 * h) return true;
        }
        return false;
    };

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i)
        if (loss.mask()[i] && (term == LossTerm::Smooth || !near_kink(i))) candidates.push_back(i);
    if (candidates.empty()) throw std::invalid_argument("gradient_check: no admissible sample voxels");

    std::mt19937_64 rng(seed);
    std::vector<double> work(tau.begin(), tau.end());
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const std::size_t i = candidates[rng() % candidates.size()];
        const int axis = static_cast<int>(rng() % 3);
        const std::size_t k = axis * n + i;
        const double orig = work[k];
        work[k] = orig + h;
        const double up = value(work);
        work[k] = orig - h;
        const double down = value(work);
        work[k] = orig;
        const double fd = (up - down) / (2 * h);
        const double a = analytic[k];
        const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace embreg
