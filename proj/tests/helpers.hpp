// Small generators shared by the unit and acceptance tests.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "embreg/embedding.hpp"
#include "embreg/field.hpp"
#include "embreg/phantom.hpp"
#include "embreg/volume.hpp"

namespace testutil {

using namespace embreg;

inline Volume random_volume(Rng& rng, Dims d, double lo = -1.0, double hi = 1.0) {
    Volume v(d);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

// Unit-normalised random embedding.
inline EmbeddingVolume random_embedding(Rng& rng, int c, Dims d) {
    EmbeddingVolume e(c, d);
    for (auto& x : e.data()) x = static_cast<float>(rng.normal());
    return normalize_embedding(e);
}

inline DisplacementField random_field(Rng& rng, Dims d, double amp) {
    DisplacementField f(d);
    for (auto& x : f.data()) x = static_cast<float>(rng.uniform(-amp, amp));
    return f;
}

// Sum of a few broad Gaussians; smooth enough for interpolation round trips.
inline Volume smooth_volume(Dims d, std::uint64_t seed = 3, int blobs = 6, double sigma_lo = 3.0, double sigma_hi = 5.0) {
    Rng rng(seed);
    struct B { double z, y, x, s, a; };
    std::vector<B> bs;
    for (int i = 0; i < blobs; ++i)
        bs.push_back({rng.uniform(0, d.d), rng.uniform(0, d.h), rng.uniform(0, d.w),
                      rng.uniform(sigma_lo, sigma_hi), rng.uniform(-1.0, 1.0)});
    Volume v(d);
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                double s = 0;
                for (const auto& b : bs) {
                    const double r2 = (z - b.z) * (z - b.z) + (y - b.y) * (y - b.y) + (x - b.x) * (x - b.x);
                    s += b.a * std::exp(-r2 / (2 * b.s * b.s));
                }
                v(z, y, x) = static_cast<float>(s);
            }
    return v;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("embreg_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline bool interior(const Dims& d, int z, int y, int x, int margin) {
    return z >= margin && y >= margin && x >= margin && z < d.d - margin && y < d.h - margin && x < d.w - margin;
}

}  // namespace testutil
