#include "scroll/kernels/detail.hpp"

#include <cstdlib>
#include <cstring>

namespace scroll::kernels {

Isa detect_isa() {
#if defined(__x86_64__) || defined(__i386__)
    if (avx2::compiled() && __builtin_cpu_supports("avx2")) return Isa::avx2;
#endif
    return Isa::scalar;
}

Isa active_isa() {
    static const Isa isa = [] {
        const char *forced = std::getenv("SCROLLFIT_ISA");
        if (forced != nullptr && std::strcmp(forced, "scalar") == 0) return Isa::scalar;
        return detect_isa();
    }();
    return isa;
}

const char *isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void convolve_axis(std::span<const float> in, std::span<float> out, VolumeDims dims, int axis,
                   std::span<const float> taps, Isa isa) {
    if (isa == Isa::avx2) avx2::convolve_axis(in, out, dims, axis, taps);
    else scalar::convolve_axis(in, out, dims, axis, taps);
}

void convolve_axis(std::span<const float> in, std::span<float> out, VolumeDims dims, int axis,
                   std::span<const float> taps) {
    convolve_axis(in, out, dims, axis, taps, active_isa());
}

void threshold(std::span<const float> in, float tau, std::span<std::uint8_t> out, Isa isa) {
    if (isa == Isa::avx2) avx2::threshold(in, tau, out);
    else scalar::threshold(in, tau, out);
}

void threshold(std::span<const float> in, float tau, std::span<std::uint8_t> out) {
    threshold(in, tau, out, active_isa());
}

void flow_integrate_batch(const GridView &coarse, const GridView &fine, int steps, double sign,
                          std::span<double> xs, std::span<double> ys, std::span<double> zs, Isa isa) {
    if (isa == Isa::avx2) avx2::flow_integrate_batch(coarse, fine, steps, sign, xs, ys, zs);
    else scalar::flow_integrate_batch(coarse, fine, steps, sign, xs, ys, zs);
}

void flow_integrate_batch(const GridView &coarse, const GridView &fine, int steps, double sign,
                          std::span<double> xs, std::span<double> ys, std::span<double> zs) {
    flow_integrate_batch(coarse, fine, steps, sign, xs, ys, zs, active_isa());
}

void sample_volume_batch(const VolumeView &vol, std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> zs, std::span<float> out, Isa isa) {
    if (isa == Isa::avx2) avx2::sample_volume_batch(vol, xs, ys, zs, out);
    else scalar::sample_volume_batch(vol, xs, ys, zs, out);
}

void sample_volume_batch(const VolumeView &vol, std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> zs, std::span<float> out) {
    sample_volume_batch(vol, xs, ys, zs, out, active_isa());
}

} // namespace scroll::kernels
