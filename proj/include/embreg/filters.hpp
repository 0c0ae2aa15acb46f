// Separable window sums over clipped cubic neighbourhoods.
#pragma once

#include <span>
#include <vector>

#include "embreg/volume.hpp"

namespace embreg {

/// out(u) = sum of in(v) over v in the volume with |v - u|_inf <= radius.
std::vector<double> box_sum(std::span<const double> in, const Dims& dims, int radius);

/// Number of in-volume voxels in each clipped window.
std::vector<double> box_count(const Dims& dims, int radius);

/// 2x2x2 block average (partial blocks at odd edges), output dims ceil(n/2).
std::vector<double> downsample2(std::span<const double> in, const Dims& dims, Dims* out_dims);

Dims half_dims(const Dims& dims);

}  // namespace embreg
