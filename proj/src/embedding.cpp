#include "embreg/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "embreg/filters.hpp"

namespace embreg {

EmbeddingVolume::EmbeddingVolume(int channels, Dims dims, Vec3 spacing, Vec3 origin)
    : EmbeddingVolume(channels, dims, spacing, origin,
                      std::vector<float>(static_cast<std::size_t>(std::max(channels, 0)) * dims.count(), 0.0f)) {}

EmbeddingVolume::EmbeddingVolume(int channels, Dims dims, Vec3 spacing, Vec3 origin, std::vector<float> data,
                                 bool normalized)
    : channels_(channels), dims_(dims), spacing_(spacing), origin_(origin), normalized_(normalized),
      data_(std::move(data)) {
    if (channels < 1) throw std::invalid_argument("embedding needs at least one channel");
    if (dims.d < 1 || dims.h < 1 || dims.w < 1)
        throw std::invalid_argument("embedding dims must be positive, got " + to_string(dims));
    if (data_.size() != static_cast<std::size_t>(channels) * dims.count())
        throw std::invalid_argument("embedding data length does not match C*D*H*W");
}

std::vector<float> EmbeddingVolume::vector_at(std::size_t i) const {
    std::vector<float> v(channels_);
    for (int c = 0; c < channels_; ++c) v[c] = (*this)(c, i);
    return v;
}

EmbeddingVolume normalize_embedding(const EmbeddingVolume& e) {
    EmbeddingVolume out = e;
    const std::size_t n = e.voxels();
    const int C = e.channels();
    std::vector<double> norm2(n, 0.0);
    for (int c = 0; c < C; ++c) {
        const auto ch = e.channel(c);
        for (std::size_t i = 0; i < n; ++i) norm2[i] += static_cast<double>(ch[i]) * ch[i];
    }
    for (int c = 0; c < C; ++c) {
        auto ch = out.channel(c);
        for (std::size_t i = 0; i < n; ++i) {
            if (norm2[i] > 0.0)
                ch[i] = static_cast<float>(ch[i] / std::sqrt(norm2[i]));
            else
                ch[i] = c == 0 ? 1.0f : 0.0f;
        }
    }
    out.set_normalized(true);
    return out;
}

// ---------------------------------------------------------------- descriptors

namespace {

// Relative gains inside the appearance block, chosen so that typical
// magnitudes on windowed CT-like data are comparable across groups.
constexpr double kMeanGain = 1.0;
constexpr double kSpreadGain = 3.0;
constexpr double kGradGain = 6.0;
constexpr double kContextGain = 1.0;
// Squared weight of the position block in the final cosine similarity.
constexpr double kPositionWeight2 = 0.1;
// Context: radius-4 box means sampled at these offsets along each axis.
constexpr int kContextRadius = 4;
constexpr int kContextOffsets[2] = {8, 16};

std::vector<double> box_mean(const std::vector<double>& img, const Dims& dims, int r) {
    const auto cnt = box_count(dims, r);
    auto s = box_sum(img, dims, r);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] /= cnt[i];
    return s;
}

// Central difference with the given step, clamped at the border.
std::vector<std::vector<double>> gradient(const std::vector<double>& src, const Dims& dims, int step) {
    std::vector<std::vector<double>> g(3, std::vector<double>(src.size()));
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i) {
                const int p[3] = {z, y, x};
                for (int a = 0; a < 3; ++a) {
                    int lo[3] = {z, y, x}, hi[3] = {z, y, x};
                    lo[a] = std::max(0, p[a] - step);
                    hi[a] = std::min(dims[a] - 1, p[a] + step);
                    g[a][i] = (src[dims.index(hi[0], hi[1], hi[2])] - src[dims.index(lo[0], lo[1], lo[2])]) /
                              (2.0 * step);
                }
            }
    return g;
}

// src sampled at u + offset * e_axis, clamped.
std::vector<double> shifted(const std::vector<double>& src, const Dims& dims, int axis, int offset) {
    std::vector<double> out(src.size());
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i) {
                int p[3] = {z, y, x};
                p[axis] = std::clamp(p[axis] + offset, 0, dims[axis] - 1);
                out[i] = src[dims.index(p[0], p[1], p[2])];
            }
    return out;
}

}  // namespace

EmbeddingVolume synth_descriptors(const Volume& v, int channels) {
    if (channels < kSynthMinChannels)
        throw std::invalid_argument("synth_descriptors: need at least " + std::to_string(kSynthMinChannels) +
                                    " channels, got " + std::to_string(channels));
    const Dims dims = v.dims();
    const std::size_t n = dims.count();
    std::vector<double> img(v.data().begin(), v.data().end());
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = img[i] * img[i];

    // Appearance channels with their gains; the position code is added per voxel.
    std::vector<std::vector<double>> feat;
    std::vector<double> gain;
    std::vector<std::vector<double>> spreads;
    std::vector<double> mean2;
    for (int r : {1, 2, 4}) {
        auto m = box_mean(img, dims, r);
        const auto s2 = box_mean(sq, dims, r);
        std::vector<double> sd(n);
        for (std::size_t i = 0; i < n; ++i) sd[i] = std::sqrt(std::max(0.0, s2[i] - m[i] * m[i]));
        if (r == 2) mean2 = m;
        feat.push_back(std::move(m));
        gain.push_back(kMeanGain);
        spreads.push_back(std::move(sd));
    }
    for (auto& s : spreads) {
        feat.push_back(std::move(s));
        gain.push_back(kSpreadGain);
    }
    for (auto& g : gradient(img, dims, 1)) {
        feat.push_back(std::move(g));
        gain.push_back(kGradGain);
    }
    for (auto& g : gradient(mean2, dims, 2)) {
        feat.push_back(std::move(g));
        gain.push_back(kGradGain);
    }
    constexpr int kBase = 12;
    const auto context_mean = box_mean(img, dims, kContextRadius);
    for (int off : kContextOffsets)
        for (int a = 0; a < 3; ++a)
            for (int sign : {-1, 1}) {
                feat.push_back(shifted(context_mean, dims, a, sign * off));
                gain.push_back(kContextGain);
            }
    const int appearance = static_cast<int>(feat.size());

    const double wa = std::sqrt(1.0 - kPositionWeight2);
    const double wc = std::sqrt(kPositionWeight2 / 3.0);

    EmbeddingVolume out(channels, dims, v.spacing(), v.origin());
    std::vector<double> vec(kSynthFeatureChannels);
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i) {
                double a2 = 0.0;
                for (int c = 0; c < appearance; ++c) {
                    const double val = gain[c] * feat[c][i];
                    a2 += val * val;
                }
                const double an = a2 > 0.0 ? wa / std::sqrt(a2) : 0.0;
                // Layout: base appearance (12), position code (6), context (12).
                for (int c = 0; c < kBase; ++c) vec[c] = an * gain[c] * feat[c][i];
                const int p[3] = {z, y, x};
                for (int a = 0; a < 3; ++a) {
                    const double t = dims[a] > 1 ? static_cast<double>(p[a]) / (dims[a] - 1) : 0.0;
                    vec[kBase + 2 * a] = wc * std::cos(std::numbers::pi * t);
                    vec[kBase + 2 * a + 1] = wc * std::sin(std::numbers::pi * t);
                }
                for (int c = kBase; c < appearance; ++c) vec[c + 6] = an * gain[c] * feat[c][i];
                for (int c = 0; c < channels; ++c)
                    out(c, i) = c < kSynthFeatureChannels ? static_cast<float>(vec[c]) : 0.0f;
            }
    return normalize_embedding(out);
}

// ---------------------------------------------------------------- matching

namespace {

void check_stride(const Dims& dims, int stride) {
    if (stride < 1) throw std::invalid_argument("match_point: stride must be >= 1");
    if (stride > dims.d && stride > dims.h && stride > dims.w)
        throw std::invalid_argument("match_point: stride " + std::to_string(stride) +
                                    " exceeds every target dimension " + to_string(dims));
}

// Stride-decimated copy of the target in voxel-major layout so that one
// similarity is a contiguous dot product.
struct DecimatedTarget {
    int stride = 1;
    std::vector<std::size_t> index;  // full-resolution linear index per sample
    std::vector<float> vectors;      // index.size() * C

    DecimatedTarget(const EmbeddingVolume& target, int s) : stride(s) {
        const Dims d = target.dims();
        const int C = target.channels();
        for (int z = 0; z < d.d; z += s)
            for (int y = 0; y < d.h; y += s)
                for (int x = 0; x < d.w; x += s) index.push_back(d.index(z, y, x));
        vectors.resize(index.size() * C);
        for (std::size_t k = 0; k < index.size(); ++k)
            for (int c = 0; c < C; ++c) vectors[k * C + c] = target(c, index[k]);
    }
};

Match match_with(std::span<const float> query, const EmbeddingVolume& target, const DecimatedTarget& dec) {
    const int C = target.channels();
    const Dims d = target.dims();
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < dec.index.size(); ++k) {
        const float* v = dec.vectors.data() + k * C;
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += static_cast<double>(query[c]) * v[c];
        if (s > best_score) {
            best_score = s;
            best = dec.index[k];
        }
    }
    const int bz = static_cast<int>(best / (static_cast<std::size_t>(d.h) * d.w));
    const int by = static_cast<int>((best / d.w) % d.h);
    const int bx = static_cast<int>(best % d.w);
    const int r = dec.stride;
    Match m;
    best_score = -std::numeric_limits<double>::infinity();
    const std::size_t N = target.voxels();
    const float* base = target.data().data();
    for (int z = std::max(0, bz - r); z <= std::min(d.d - 1, bz + r); ++z)
        for (int y = std::max(0, by - r); y <= std::min(d.h - 1, by + r); ++y)
            for (int x = std::max(0, bx - r); x <= std::min(d.w - 1, bx + r); ++x) {
                const std::size_t i = d.index(z, y, x);
                double s = 0.0;
                for (int c = 0; c < C; ++c) s += static_cast<double>(query[c]) * base[c * N + i];
                if (s > best_score) {
                    best_score = s;
                    m.coord = {z, y, x};
                }
            }
    m.similarity = std::clamp(best_score, -1.0, 1.0);
    return m;
}

}  // namespace

Match match_point(std::span<const float> query, const EmbeddingVolume& target, int stride) {
    if (query.size() != static_cast<std::size_t>(target.channels()))
        throw std::invalid_argument("match_point: query length does not match target channels");
    check_stride(target.dims(), stride);
    return match_with(query, target, DecimatedTarget(target, stride));
}

NoCorrespondenceError::NoCorrespondenceError(std::size_t candidates, double threshold)
    : std::runtime_error("no confident correspondences: 0 of " + std::to_string(candidates) +
                         " grid points reached similarity threshold " + std::to_string(threshold)),
      candidates_(candidates) {}

MatchSet grid_match(const EmbeddingVolume& fixed, const EmbeddingVolume& moving, const BodyMask& mask,
                    const GridMatchParams& params) {
    if (!fixed.normalized() || !moving.normalized())
        throw std::invalid_argument("grid_match: embeddings must be normalized");
    if (fixed.channels() != moving.channels())
        throw std::invalid_argument("grid_match: channel count mismatch");
    if (fixed.dims() != mask.dims())
        throw std::invalid_argument("grid_match: mask dims " + to_string(mask.dims()) + " differ from fixed " +
                                    to_string(fixed.dims()));
    if (params.grid_stride < 1) throw std::invalid_argument("grid_match: grid stride must be >= 1");
    check_stride(moving.dims(), params.search_stride);

    const DecimatedTarget dec(moving, params.search_stride);
    const Dims d = fixed.dims();
    MatchSet out;
    const int s = params.grid_stride;
    for (int z = 0; z < d.d; z += s)
        for (int y = 0; y < d.h; y += s)
            for (int x = 0; x < d.w; x += s) {
                if (!mask(z, y, x)) continue;
                ++out.candidates;
                const auto q = fixed.vector_at(d.index(z, y, x));
                const Match m = match_with(q, moving, dec);
                if (m.similarity < params.threshold) continue;
                out.fixed_points.push_back({z, y, x});
                out.moving_points.push_back(m.coord);
                out.similarities.push_back(m.similarity);
            }
    if (out.size() == 0) throw NoCorrespondenceError(out.candidates, params.threshold);
    return out;
}

}  // namespace embreg
