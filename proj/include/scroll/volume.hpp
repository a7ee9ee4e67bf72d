#pragma once

// Multi-channel probability volume on a regular voxel grid. Voxel (i, j, k) is centred at
// (i, j, k) * spacing.

#include <cstddef>
#include <vector>

#include "scroll/kernels/kernels.hpp"
#include "scroll/vec3.hpp"

namespace scroll {

enum Channel : std::size_t { surface_channel = 0, horizontal_fiber_channel = 1, vertical_fiber_channel = 2 };

struct ProbabilityVolume {
    kernels::VolumeDims dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    std::vector<std::vector<float>> channels; ///< each of dims.count() values in [0, 1]

    static ProbabilityVolume zeros(kernels::VolumeDims dims, Vec3 spacing, std::size_t channel_count);

    kernels::VolumeView view(std::size_t channel) const;
    Vec3 voxel_position(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return {static_cast<double>(x) * spacing.x, static_cast<double>(y) * spacing.y,
                static_cast<double>(z) * spacing.z};
    }
    Vec3 extent() const noexcept;
    /// Throws ConfigError if a channel's size does not match dims or a value lies outside [0, 1].
    void validate() const;
};

/// Separable Gaussian blur with standard deviation sigma (voxels), truncated at 3 sigma.
void gaussian_blur(std::vector<float> &data, kernels::VolumeDims dims, double sigma);

} // namespace scroll
