#pragma once

// Synthetic scrolls with known deformation: the ground truth for every quantitative test.

#include <array>
#include <cstdint>
#include <vector>

#include "scroll/mesh.hpp"
#include "scroll/observations.hpp"
#include "scroll/transform.hpp"
#include "scroll/volume.hpp"

namespace scroll {

struct PhantomConfig {
    // Canonical sheet
    double windings = 8.0;
    double spacing = 20.0;
    double z_extent = 200.0;
    WindingDirection direction = WindingDirection::anticlockwise;
    double theta_start = 3.141592653589793; ///< observations and gt cover [theta_start, theta_max]

    // Deformation
    double deformation = 1.5;     ///< max |u| of the velocity field, in fine cells
    double affine_log_scale = 0.05;
    double affine_shift = 3.0;    ///< per-keypoint translation jitter (length units)
    double gap_amplitude = 0.15;  ///< max |log gap scale|
    double bend = 0.0;            ///< out-of-family bend amplitude (length units); 0 disables
    TransformLayout layout;

    // Observations
    std::size_t z_slices = 16;             ///< horizontal surface arcs
    std::size_t arcs_per_winding = 4;
    std::size_t verticals_per_winding = 4; ///< vertical surface paths
    std::size_t fiber_slices = 8;          ///< horizontal fiber curves
    std::size_t fibers_per_winding = 2;    ///< vertical fiber curves
    double point_spacing = 2.0;
    std::size_t normal_count = 4000;
    std::size_t pairs_per_link = 8;

    // Noise
    double jitter = 0.0;           ///< isotropic Gaussian sigma on observed positions
    double dropout = 0.0;          ///< fraction of paths removed
    double false_link_rate = 0.0;  ///< fraction of links given a wrong offset

    // Raster
    std::array<std::size_t, 3> dims{256, 256, 256};
    double thickness = 3.0;     ///< voxels
    double blur = 1.0;          ///< voxels
    double fiber_spacing = 10.0;
    double margin = 4.0;        ///< voxels kept free around the deformed scroll

    std::uint64_t seed = 0;

    /// Throws ConfigError; deformation above 2 fine cells exceeds the invertibility bound.
    void validate() const;
};

/// Largest velocity magnitude, in fine cells, for which phantoms are generated.
inline constexpr double max_phantom_deformation = 2.0;

struct Phantom {
    PhantomConfig config;
    ComposedTransform truth;        ///< in-family part of the deformation
    FeatureSet features;
    std::vector<int> true_offsets;  ///< per link, the actual winding difference
    std::vector<Vec3> centerline;   ///< image of the canonical axis at evenly spaced z
    double voxel_spacing = 1.0;
    kernels::VolumeDims dims;

    /// Canonical point to scan space, including the out-of-family bend.
    Vec3 forward(const Vec3 &canonical) const;
    /// Outward unit normal of the deformed sheet at canonical (theta, z).
    Vec3 surface_normal(double theta, double z) const;
};

Phantom make_phantom(const PhantomConfig &config);

/// Surface, horizontal-fiber and vertical-fiber channels on the phantom's voxel grid.
/// thickness and blur are in voxels.
ProbabilityVolume rasterize(const Phantom &phantom, double thickness, double blur);

/// Deformed lattice over [theta_start, theta_max] with winding labels floor(theta / 2 pi).
TriMesh gt_mesh(const Phantom &phantom, double dtheta, double dz);

} // namespace scroll
