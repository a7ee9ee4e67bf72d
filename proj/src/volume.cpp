#include "scroll/volume.hpp"

#include <cmath>
#include <string>

#include "scroll/error.hpp"

namespace scroll {

ProbabilityVolume ProbabilityVolume::zeros(kernels::VolumeDims dims, Vec3 spacing, std::size_t channel_count) {
    if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) throw ConfigError("volume dims must be positive");
    ProbabilityVolume v;
    v.dims = dims;
    v.spacing = spacing;
    v.channels.assign(channel_count, std::vector<float>(dims.count(), 0.0f));
    return v;
}

kernels::VolumeView ProbabilityVolume::view(std::size_t channel) const {
    kernels::VolumeView v;
    v.data = channels.at(channel).data();
    v.dims = dims;
    v.inv_spacing[0] = 1.0 / spacing.x;
    v.inv_spacing[1] = 1.0 / spacing.y;
    v.inv_spacing[2] = 1.0 / spacing.z;
    return v;
}

Vec3 ProbabilityVolume::extent() const noexcept {
    return voxel_position(dims.nx - 1, dims.ny - 1, dims.nz - 1);
}

void ProbabilityVolume::validate() const {
    if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) throw ConfigError("voxel spacing must be positive");
    for (std::size_t c = 0; c < channels.size(); ++c) {
        if (channels[c].size() != dims.count())
            throw ConfigError("channel " + std::to_string(c) + " size does not match the volume dims");
        for (float v : channels[c])
            if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("probability outside [0, 1] in channel " + std::to_string(c));
    }
}

void gaussian_blur(std::vector<float> &data, kernels::VolumeDims dims, double sigma) {
    if (!(sigma > 0.0)) return;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<float> taps(2 * static_cast<std::size_t>(radius) + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) sum += std::exp(-0.5 * i * i / (sigma * sigma));
    for (int i = -radius; i <= radius; ++i)
        taps[static_cast<std::size_t>(i + radius)] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)) / sum);
    std::vector<float> tmp(data.size());
    kernels::convolve_axis(data, tmp, dims, 0, taps);
    kernels::convolve_axis(tmp, data, dims, 1, taps);
    kernels::convolve_axis(data, tmp, dims, 2, taps);
    data.swap(tmp);
}

} // namespace scroll
