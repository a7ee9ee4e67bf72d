#pragma once

// Per-ISA entry points; use the dispatching functions in kernels.hpp instead.

#include "scroll/kernels/kernels.hpp"

namespace scroll::kernels::scalar {
void convolve_axis(std::span<const float> in, std::span<float> out, VolumeDims dims, int axis,
                   std::span<const float> taps);
void threshold(std::span<const float> in, float tau, std::span<std::uint8_t> out);
void flow_integrate_batch(const GridView &coarse, const GridView &fine, int steps, double sign,
                          std::span<double> xs, std::span<double> ys, std::span<double> zs);
void sample_volume_batch(const VolumeView &vol, std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> zs, std::span<float> out);
} // namespace scroll::kernels::scalar

namespace scroll::kernels::avx2 {
bool compiled() noexcept;
void convolve_axis(std::span<const float> in, std::span<float> out, VolumeDims dims, int axis,
                   std::span<const float> taps);
void threshold(std::span<const float> in, float tau, std::span<std::uint8_t> out);
void flow_integrate_batch(const GridView &coarse, const GridView &fine, int steps, double sign,
                          std::span<double> xs, std::span<double> ys, std::span<double> zs);
void sample_volume_batch(const VolumeView &vol, std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> zs, std::span<float> out);
} // namespace scroll::kernels::avx2
