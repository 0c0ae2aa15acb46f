#include "embreg/filters.hpp"

#include <algorithm>

namespace embreg {

namespace {

// Running-window sum along one axis. `stride` is the element step along the
// axis, `n` its length, and `lines` enumerates the start offsets.
void window_pass(std::vector<double>& data, const Dims& dims, int axis, int radius) {
    const int n = dims[axis];
    const std::size_t stride = axis == 2 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims.w)
                                                          : static_cast<std::size_t>(dims.w) * dims.h);
    std::vector<double> prefix(n + 1);
    auto run_line = [&](std::size_t start) {
        prefix[0] = 0.0;
        for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + data[start + i * stride];
        for (int i = 0; i < n; ++i) {
            const int lo = std::max(0, i - radius);
            const int hi = std::min(n - 1, i + radius);
            data[start + i * stride] = prefix[hi + 1] - prefix[lo];
        }
    };
    if (axis == 2) {
        for (int z = 0; z < dims.d; ++z)
            for (int y = 0; y < dims.h; ++y) run_line(dims.index(z, y, 0));
    } else if (axis == 1) {
        for (int z = 0; z < dims.d; ++z)
            for (int x = 0; x < dims.w; ++x) run_line(dims.index(z, 0, x));
    } else {
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x) run_line(dims.index(0, y, x));
    }
}

}  // namespace

std::vector<double> box_sum(std::span<const double> in, const Dims& dims, int radius) {
    std::vector<double> out(in.begin(), in.end());
    for (int axis = 2; axis >= 0; --axis) window_pass(out, dims, axis, radius);
    return out;
}

std::vector<double> box_count(const Dims& dims, int radius) {
    auto counts = [radius](int n) {
        std::vector<double> c(n);
        for (int i = 0; i < n; ++i) c[i] = std::min(n - 1, i + radius) - std::max(0, i - radius) + 1;
        return c;
    };
    const auto cz = counts(dims.d), cy = counts(dims.h), cx = counts(dims.w);
    std::vector<double> out(dims.count());
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x) out[i++] = cz[z] * cy[y] * cx[x];
    return out;
}

Dims half_dims(const Dims& dims) { return Dims{(dims.d + 1) / 2, (dims.h + 1) / 2, (dims.w + 1) / 2}; }

std::vector<double> downsample2(std::span<const double> in, const Dims& dims, Dims* out_dims) {
    const Dims nd = half_dims(dims);
    std::vector<double> sum(nd.count(), 0.0), cnt(nd.count(), 0.0);
    std::size_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i) {
                const std::size_t j = nd.index(z / 2, y / 2, x / 2);
                sum[j] += in[i];
                cnt[j] += 1.0;
            }
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] /= cnt[j];
    if (out_dims) *out_dims = nd;
    return sum;
}

}  // namespace embreg
