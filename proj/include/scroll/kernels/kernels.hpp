#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference implementation and an
// AVX2 variant chosen at runtime. The variants perform the same IEEE operations in the
// same order (no FMA), so their results are bit-identical; the equivalence tests assert
// exact equality.

#include <cstddef>
#include <cstdint>
#include <span>

#include "scroll/vec3.hpp"

namespace scroll::kernels {

enum class Isa : std::uint8_t { scalar, avx2 };

/// Best instruction set supported by this CPU and build.
Isa detect_isa();

/// Instruction set used by the dispatching overloads: detect_isa(), unless the
/// SCROLLFIT_ISA environment variable is set to "scalar".
Isa active_isa();

const char *isa_name(Isa isa);

struct VolumeDims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t count() const noexcept { return nx * ny * nz; }
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return x + nx * (y + ny * z);
    }
};

// ---------------------------------------------------------------------------
// Volume filters
// ---------------------------------------------------------------------------

/// out[i] = sum_t taps[t] * in[i + (t - taps.size()/2) along axis], edge-clamped.
/// taps.size() must be odd.
void convolve_axis(std::span<const float> in, std::span<float> out, VolumeDims dims, int axis,
                   std::span<const float> taps, Isa isa);
void convolve_axis(std::span<const float> in, std::span<float> out, VolumeDims dims, int axis,
                   std::span<const float> taps);

/// out[i] = in[i] >= tau.
void threshold(std::span<const float> in, float tau, std::span<std::uint8_t> out, Isa isa);
void threshold(std::span<const float> in, float tau, std::span<std::uint8_t> out);

// ---------------------------------------------------------------------------
// Velocity grids
// ---------------------------------------------------------------------------

/// Read-only view of a lattice of 3D vectors stored interleaved (x fastest).
struct GridView {
    const double *data = nullptr;
    double origin[3] = {0, 0, 0};
    double inv_spacing[3] = {1, 1, 1};
    std::uint32_t dims[3] = {2, 2, 2};
};

/// Trilinear interpolation with edge clamping (constant beyond the lattice).
Vec3 trilinear(const GridView &grid, const Vec3 &p) noexcept;

/// Explicit Euler integration of u = coarse + fine for `steps` steps of size sign/steps,
/// applied in place to the points (xs[i], ys[i], zs[i]).
void flow_integrate_batch(const GridView &coarse, const GridView &fine, int steps, double sign,
                          std::span<double> xs, std::span<double> ys, std::span<double> zs, Isa isa);
void flow_integrate_batch(const GridView &coarse, const GridView &fine, int steps, double sign,
                          std::span<double> xs, std::span<double> ys, std::span<double> zs);

/// Single-point version of flow_integrate_batch, bit-identical to it.
Vec3 flow_integrate_point(const GridView &coarse, const GridView &fine, int steps, double sign, Vec3 p) noexcept;

// ---------------------------------------------------------------------------
// Volume sampling
// ---------------------------------------------------------------------------

/// Scalar volume; voxel (i, j, k) is centred at (i, j, k) * spacing.
struct VolumeView {
    const float *data = nullptr;
    VolumeDims dims;
    double inv_spacing[3] = {1, 1, 1};
};

/// Trilinear sample of the volume at each point; points outside the voxel-centre hull give 0.
float sample_volume(const VolumeView &vol, const Vec3 &p) noexcept;

void sample_volume_batch(const VolumeView &vol, std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> zs, std::span<float> out, Isa isa);
void sample_volume_batch(const VolumeView &vol, std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> zs, std::span<float> out);

} // namespace scroll::kernels
