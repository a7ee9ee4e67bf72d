#include "scroll/kernels/detail.hpp"

#include <algorithm>

namespace scroll::kernels {

namespace {

struct CellCoord {
    long index;
    double frac;
};

// Clamps a continuous lattice coordinate into [0, n-1] and splits it into a cell index
// in [0, n-2] and a fraction in [0, 1]. The comparison forms match MAXPD/MINPD exactly.
inline CellCoord clamp_cell(double q, std::uint32_t n) noexcept {
    const double hi = static_cast<double>(n - 1);
    double v = q > 0.0 ? q : 0.0;
    v = v < hi ? v : hi;
    long i = static_cast<long>(v);
    const long last = static_cast<long>(n) - 2;
    i = i < last ? i : last;
    return {i, v - static_cast<double>(i)};
}

inline double lerp(double a, double b, double f) noexcept { return a + (b - a) * f; }

} // namespace

Vec3 trilinear(const GridView &grid, const Vec3 &p) noexcept {
    const CellCoord cx = clamp_cell((p.x - grid.origin[0]) * grid.inv_spacing[0], grid.dims[0]);
    const CellCoord cy = clamp_cell((p.y - grid.origin[1]) * grid.inv_spacing[1], grid.dims[1]);
    const CellCoord cz = clamp_cell((p.z - grid.origin[2]) * grid.inv_spacing[2], grid.dims[2]);
    const long sx = 3;
    const long sy = 3 * static_cast<long>(grid.dims[0]);
    const long sz = sy * static_cast<long>(grid.dims[1]);
    const long base = 3 * (cx.index + static_cast<long>(grid.dims[0]) *
                                          (cy.index + static_cast<long>(grid.dims[1]) * cz.index));
    double out[3];
    for (int c = 0; c < 3; ++c) {
        const double *d = grid.data + base + c;
        const double c00 = lerp(d[0], d[sx], cx.frac);
        const double c10 = lerp(d[sy], d[sy + sx], cx.frac);
        const double c01 = lerp(d[sz], d[sz + sx], cx.frac);
        const double c11 = lerp(d[sz + sy], d[sz + sy + sx], cx.frac);
        const double c0 = lerp(c00, c10, cy.frac);
        const double c1 = lerp(c01, c11, cy.frac);
        out[c] = lerp(c0, c1, cz.frac);
    }
    return {out[0], out[1], out[2]};
}

Vec3 flow_integrate_point(const GridView &coarse, const GridView &fine, int steps, double sign, Vec3 p) noexcept {
    const double h = sign / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        const Vec3 uc = trilinear(coarse, p);
        const Vec3 uf = trilinear(fine, p);
        p.x = p.x + h * (uc.x + uf.x);
        p.y = p.y + h * (uc.y + uf.y);
        p.z = p.z + h * (uc.z + uf.z);
    }
    return p;
}

float sample_volume(const VolumeView &vol, const Vec3 &p) noexcept {
    const double q[3] = {p.x * vol.inv_spacing[0], p.y * vol.inv_spacing[1], p.z * vol.inv_spacing[2]};
    const std::size_t n[3] = {vol.dims.nx, vol.dims.ny, vol.dims.nz};
    long idx[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        const double hi = static_cast<double>(n[a] - 1);
        if (!(q[a] >= 0.0 && q[a] <= hi)) return 0.0f;
        long i = static_cast<long>(q[a]);
        const long last = static_cast<long>(n[a]) - 2;
        i = i < last ? i : last;
        idx[a] = i;
        f[a] = q[a] - static_cast<double>(i);
    }
    const long sx = 1;
    const long sy = static_cast<long>(n[0]);
    const long sz = sy * static_cast<long>(n[1]);
    const float *d = vol.data + idx[0] + sy * idx[1] + sz * idx[2];
    const double c00 = lerp(d[0], d[sx], f[0]);
    const double c10 = lerp(d[sy], d[sy + sx], f[0]);
    const double c01 = lerp(d[sz], d[sz + sx], f[0]);
    const double c11 = lerp(d[sz + sy], d[sz + sy + sx], f[0]);
    const double c0 = lerp(c00, c10, f[1]);
    const double c1 = lerp(c01, c11, f[1]);
    return static_cast<float>(lerp(c0, c1, f[2]));
}

namespace scalar {

void convolve_axis(std::span<const float> in, std::span<float> out, VolumeDims dims, int axis,
                   std::span<const float> taps) {
    const long radius = static_cast<long>(taps.size() / 2);
    const std::size_t n[3] = {dims.nx, dims.ny, dims.nz};
    const std::size_t stride[3] = {1, dims.nx, dims.nx * dims.ny};
    const long len = static_cast<long>(n[axis]);
    for (std::size_t z = 0; z < dims.nz; ++z) {
        for (std::size_t y = 0; y < dims.ny; ++y) {
            for (std::size_t x = 0; x < dims.nx; ++x) {
                const std::size_t c[3] = {x, y, z};
                const std::size_t centre = dims.index(x, y, z);
                const std::size_t line_start = centre - c[axis] * stride[axis];
                float acc = 0.0f;
                for (std::size_t t = 0; t < taps.size(); ++t) {
                    long pos = static_cast<long>(c[axis]) + static_cast<long>(t) - radius;
                    pos = std::clamp(pos, 0L, len - 1);
                    acc = acc + taps[t] * in[line_start + static_cast<std::size_t>(pos) * stride[axis]];
                }
                out[centre] = acc;
            }
        }
    }
}

void threshold(std::span<const float> in, float tau, std::span<std::uint8_t> out) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] >= tau ? 1 : 0;
}

void flow_integrate_batch(const GridView &coarse, const GridView &fine, int steps, double sign,
                          std::span<double> xs, std::span<double> ys, std::span<double> zs) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vec3 p = flow_integrate_point(coarse, fine, steps, sign, {xs[i], ys[i], zs[i]});
        xs[i] = p.x;
        ys[i] = p.y;
        zs[i] = p.z;
    }
}

void sample_volume_batch(const VolumeView &vol, std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> zs, std::span<float> out) {
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = sample_volume(vol, {xs[i], ys[i], zs[i]});
}

} // namespace scalar
} // namespace scroll::kernels
