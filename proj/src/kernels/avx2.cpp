#include "scroll/kernels/detail.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace scroll::kernels::avx2 {

bool compiled() noexcept { return true; }

namespace {

inline __m256d lerp(__m256d a, __m256d b, __m256d f) {
    return _mm256_add_pd(a, _mm256_mul_pd(_mm256_sub_pd(b, a), f));
}

struct Cell4 {
    __m128i index;
    __m256d frac;
};

// Mirrors clamp_cell() in scalar.cpp lane by lane.
inline Cell4 clamp_cell(__m256d q, std::uint32_t n) {
    const __m256d hi = _mm256_set1_pd(static_cast<double>(n - 1));
    __m256d v = _mm256_max_pd(q, _mm256_setzero_pd());
    v = _mm256_min_pd(v, hi);
    __m128i i = _mm256_cvttpd_epi32(v);
    i = _mm_min_epi32(i, _mm_set1_epi32(static_cast<int>(n) - 2));
    return {i, _mm256_sub_pd(v, _mm256_cvtepi32_pd(i))};
}

inline __m256d gather(const double *base, __m128i idx) { return _mm256_i32gather_pd(base, idx, 8); }

inline void trilinear4(const GridView &g, __m256d px, __m256d py, __m256d pz, __m256d out[3]) {
    const Cell4 cx = clamp_cell(
        _mm256_mul_pd(_mm256_sub_pd(px, _mm256_set1_pd(g.origin[0])), _mm256_set1_pd(g.inv_spacing[0])),
        g.dims[0]);
    const Cell4 cy = clamp_cell(
        _mm256_mul_pd(_mm256_sub_pd(py, _mm256_set1_pd(g.origin[1])), _mm256_set1_pd(g.inv_spacing[1])),
        g.dims[1]);
    const Cell4 cz = clamp_cell(
        _mm256_mul_pd(_mm256_sub_pd(pz, _mm256_set1_pd(g.origin[2])), _mm256_set1_pd(g.inv_spacing[2])),
        g.dims[2]);
    const int nx = static_cast<int>(g.dims[0]);
    const int ny = static_cast<int>(g.dims[1]);
    const int sx = 3;
    const int sy = 3 * nx;
    const int sz = sy * ny;
    __m128i base = _mm_add_epi32(cx.index, _mm_mullo_epi32(_mm_set1_epi32(nx),
                                                           _mm_add_epi32(cy.index, _mm_mullo_epi32(_mm_set1_epi32(ny), cz.index))));
    base = _mm_mullo_epi32(base, _mm_set1_epi32(3));
    const __m128i o_x = _mm_set1_epi32(sx);
    const __m128i o_y = _mm_set1_epi32(sy);
    const __m128i o_z = _mm_set1_epi32(sz);
    for (int c = 0; c < 3; ++c) {
        const double *d = g.data + c;
        const __m128i i000 = base;
        const __m128i i100 = _mm_add_epi32(base, o_x);
        const __m128i i010 = _mm_add_epi32(base, o_y);
        const __m128i i110 = _mm_add_epi32(i010, o_x);
        const __m128i i001 = _mm_add_epi32(base, o_z);
        const __m128i i101 = _mm_add_epi32(i001, o_x);
        const __m128i i011 = _mm_add_epi32(i001, o_y);
        const __m128i i111 = _mm_add_epi32(i011, o_x);
        const __m256d c00 = lerp(gather(d, i000), gather(d, i100), cx.frac);
        const __m256d c10 = lerp(gather(d, i010), gather(d, i110), cx.frac);
        const __m256d c01 = lerp(gather(d, i001), gather(d, i101), cx.frac);
        const __m256d c11 = lerp(gather(d, i011), gather(d, i111), cx.frac);
        const __m256d c0 = lerp(c00, c10, cy.frac);
        const __m256d c1 = lerp(c01, c11, cy.frac);
        out[c] = lerp(c0, c1, cz.frac);
    }
}

} // namespace

void convolve_axis(std::span<const float> in, std::span<float> out, VolumeDims dims, int axis,
                   std::span<const float> taps) {
    const long radius = static_cast<long>(taps.size() / 2);
    const std::size_t ntaps = taps.size();
    if (axis == 0) {
        const long nx = static_cast<long>(dims.nx);
        for (std::size_t z = 0; z < dims.nz; ++z) {
            for (std::size_t y = 0; y < dims.ny; ++y) {
                const float *row = in.data() + dims.index(0, y, z);
                float *dst = out.data() + dims.index(0, y, z);
                auto scalar_at = [&](long x) {
                    float acc = 0.0f;
                    for (std::size_t t = 0; t < ntaps; ++t) {
                        const long pos = std::clamp(x + static_cast<long>(t) - radius, 0L, nx - 1);
                        acc = acc + taps[t] * row[pos];
                    }
                    dst[x] = acc;
                };
                long x = 0;
                for (; x < std::min(radius, nx); ++x) scalar_at(x);
                for (; x + 8 + radius <= nx; x += 8) {
                    __m256 acc = _mm256_setzero_ps();
                    for (std::size_t t = 0; t < ntaps; ++t) {
                        const __m256 v = _mm256_loadu_ps(row + x + static_cast<long>(t) - radius);
                        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_set1_ps(taps[t]), v));
                    }
                    _mm256_storeu_ps(dst + x, acc);
                }
                for (; x < nx; ++x) scalar_at(x);
            }
        }
        return;
    }
    const std::size_t stride = axis == 1 ? dims.nx : dims.nx * dims.ny;
    const long len = static_cast<long>(axis == 1 ? dims.ny : dims.nz);
    const std::size_t nx = dims.nx;
    const float *src_rows[64];
    const float **rows = src_rows;
    std::vector<const float *> heap_rows;
    if (ntaps > 64) {
        heap_rows.resize(ntaps);
        rows = heap_rows.data();
    }
    for (std::size_t z = 0; z < dims.nz; ++z) {
        for (std::size_t y = 0; y < dims.ny; ++y) {
            const long c = static_cast<long>(axis == 1 ? y : z);
            const std::size_t centre = dims.index(0, y, z);
            const std::size_t line_start = centre - static_cast<std::size_t>(c) * stride;
            for (std::size_t t = 0; t < ntaps; ++t) {
                const long pos = std::clamp(c + static_cast<long>(t) - radius, 0L, len - 1);
                rows[t] = in.data() + line_start + static_cast<std::size_t>(pos) * stride;
            }
            float *dst = out.data() + centre;
            std::size_t x = 0;
            for (; x + 8 <= nx; x += 8) {
                __m256 acc = _mm256_setzero_ps();
                for (std::size_t t = 0; t < ntaps; ++t)
                    acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_set1_ps(taps[t]), _mm256_loadu_ps(rows[t] + x)));
                _mm256_storeu_ps(dst + x, acc);
            }
            for (; x < nx; ++x) {
                float acc = 0.0f;
                for (std::size_t t = 0; t < ntaps; ++t) acc = acc + taps[t] * rows[t][x];
                dst[x] = acc;
            }
        }
    }
}

void threshold(std::span<const float> in, float tau, std::span<std::uint8_t> out) {
    const __m256 t = _mm256_set1_ps(tau);
    std::size_t i = 0;
    for (; i + 8 <= in.size(); i += 8) {
        const int bits = _mm256_movemask_ps(_mm256_cmp_ps(_mm256_loadu_ps(in.data() + i), t, _CMP_GE_OQ));
        for (int b = 0; b < 8; ++b) out[i + b] = static_cast<std::uint8_t>((bits >> b) & 1);
    }
    for (; i < in.size(); ++i) out[i] = in[i] >= tau ? 1 : 0;
}

void flow_integrate_batch(const GridView &coarse, const GridView &fine, int steps, double sign,
                          std::span<double> xs, std::span<double> ys, std::span<double> zs) {
    const double h_scalar = sign / static_cast<double>(steps);
    const __m256d h = _mm256_set1_pd(h_scalar);
    std::size_t i = 0;
    for (; i + 4 <= xs.size(); i += 4) {
        __m256d px = _mm256_loadu_pd(xs.data() + i);
        __m256d py = _mm256_loadu_pd(ys.data() + i);
        __m256d pz = _mm256_loadu_pd(zs.data() + i);
        for (int k = 0; k < steps; ++k) {
            __m256d uc[3], uf[3];
            trilinear4(coarse, px, py, pz, uc);
            trilinear4(fine, px, py, pz, uf);
            px = _mm256_add_pd(px, _mm256_mul_pd(h, _mm256_add_pd(uc[0], uf[0])));
            py = _mm256_add_pd(py, _mm256_mul_pd(h, _mm256_add_pd(uc[1], uf[1])));
            pz = _mm256_add_pd(pz, _mm256_mul_pd(h, _mm256_add_pd(uc[2], uf[2])));
        }
        _mm256_storeu_pd(xs.data() + i, px);
        _mm256_storeu_pd(ys.data() + i, py);
        _mm256_storeu_pd(zs.data() + i, pz);
    }
    for (; i < xs.size(); ++i) {
        const Vec3 p = flow_integrate_point(coarse, fine, steps, sign, {xs[i], ys[i], zs[i]});
        xs[i] = p.x;
        ys[i] = p.y;
        zs[i] = p.z;
    }
}

void sample_volume_batch(const VolumeView &vol, std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> zs, std::span<float> out) {
    const std::size_t n[3] = {vol.dims.nx, vol.dims.ny, vol.dims.nz};
    const int sy = static_cast<int>(n[0]);
    const int sz = sy * static_cast<int>(n[1]);
    std::size_t i = 0;
    for (; i + 4 <= xs.size(); i += 4) {
        const __m256d p[3] = {_mm256_loadu_pd(xs.data() + i), _mm256_loadu_pd(ys.data() + i),
                              _mm256_loadu_pd(zs.data() + i)};
        __m256d inside = _mm256_castsi256_pd(_mm256_set1_epi64x(-1));
        __m128i idx[3];
        __m256d f[3];
        for (int a = 0; a < 3; ++a) {
            const __m256d q = _mm256_mul_pd(p[a], _mm256_set1_pd(vol.inv_spacing[a]));
            const __m256d hi = _mm256_set1_pd(static_cast<double>(n[a] - 1));
            inside = _mm256_and_pd(inside, _mm256_and_pd(_mm256_cmp_pd(q, _mm256_setzero_pd(), _CMP_GE_OQ),
                                                         _mm256_cmp_pd(q, hi, _CMP_LE_OQ)));
            // Outside lanes are clamped only to keep the gather in bounds; they are zeroed below.
            const __m256d v = _mm256_min_pd(_mm256_max_pd(q, _mm256_setzero_pd()), hi);
            __m128i ii = _mm256_cvttpd_epi32(v);
            ii = _mm_min_epi32(ii, _mm_set1_epi32(static_cast<int>(n[a]) - 2));
            idx[a] = ii;
            f[a] = _mm256_sub_pd(v, _mm256_cvtepi32_pd(ii));
        }
        const __m128i base = _mm_add_epi32(idx[0], _mm_add_epi32(_mm_mullo_epi32(idx[1], _mm_set1_epi32(sy)),
                                                                 _mm_mullo_epi32(idx[2], _mm_set1_epi32(sz))));
        auto g = [&](int off) {
            return _mm256_cvtps_pd(_mm_i32gather_ps(vol.data, _mm_add_epi32(base, _mm_set1_epi32(off)), 4));
        };
        const __m256d c00 = lerp(g(0), g(1), f[0]);
        const __m256d c10 = lerp(g(sy), g(sy + 1), f[0]);
        const __m256d c01 = lerp(g(sz), g(sz + 1), f[0]);
        const __m256d c11 = lerp(g(sz + sy), g(sz + sy + 1), f[0]);
        const __m256d c0 = lerp(c00, c10, f[1]);
        const __m256d c1 = lerp(c01, c11, f[1]);
        const __m256d r = _mm256_and_pd(lerp(c0, c1, f[2]), inside);
        _mm_storeu_ps(out.data() + i, _mm256_cvtpd_ps(r));
    }
    for (; i < xs.size(); ++i) out[i] = sample_volume(vol, {xs[i], ys[i], zs[i]});
}

} // namespace scroll::kernels::avx2

#else

#include <cstdlib>

namespace scroll::kernels::avx2 {
bool compiled() noexcept { return false; }
void convolve_axis(std::span<const float>, std::span<float>, VolumeDims, int, std::span<const float>) { std::abort(); }
void threshold(std::span<const float>, float, std::span<std::uint8_t>) { std::abort(); }
void flow_integrate_batch(const GridView &, const GridView &, int, double, std::span<double>, std::span<double>,
                          std::span<double>) {
    std::abort();
}
void sample_volume_batch(const VolumeView &, std::span<const double>, std::span<const double>,
                         std::span<const double>, std::span<float>) {
    std::abort();
}
} // namespace scroll::kernels::avx2

#endif
