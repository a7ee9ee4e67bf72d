#pragma once

// The three-stage diffeomorphism mapping canonical space to scan space:
//   forward = affine(flow(gap(x))),   inverse = gap^-1(flow^-1(affine^-1(x))).

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "scroll/kernels/kernels.hpp"
#include "scroll/spiral.hpp"
#include "scroll/vec3.hpp"

namespace scroll {

enum class Direction : std::uint8_t { forward, inverse };

// ---------------------------------------------------------------------------
// Per-slice affine: x' = x * exp(s(z)) + t(z) in x and y, z unchanged.
// ---------------------------------------------------------------------------

struct AffineKeypoint {
    double log_sx = 0.0;
    double log_sy = 0.0;
    double tx = 0.0;
    double ty = 0.0;

    friend bool operator==(const AffineKeypoint &, const AffineKeypoint &) = default;
};

/// Keypoints sit at evenly spaced z stations from z_min to z_max; parameters are linearly
/// interpolated between stations and held constant beyond the end stations.
struct PerSliceAffine {
    std::vector<AffineKeypoint> keypoints{2};
    double z_min = 0.0;
    double z_max = 1.0;

    struct Station {
        std::size_t lower = 0; ///< keypoint index below z
        double alpha = 0.0;    ///< weight of keypoint lower + 1
        bool clamped = false;  ///< z outside [z_min, z_max]: parameters do not vary with z
    };

    Station locate(double z) const noexcept;
    AffineKeypoint interpolate(double z) const noexcept;
    double station_z(std::size_t k) const noexcept;
};

Vec3 affine_apply(const Vec3 &x, const PerSliceAffine &affine, Direction dir);

// ---------------------------------------------------------------------------
// Integrated flow field: stationary velocity u = coarse + fine, explicit Euler.
// ---------------------------------------------------------------------------

/// Regular lattice of 3D vectors; node (i, j, k) sits at origin + (i, j, k) * spacing.
/// Vectors are stored interleaved with x fastest.
struct VectorGrid {
    Vec3 origin;
    Vec3 spacing{1.0, 1.0, 1.0};
    std::array<std::uint32_t, 3> dims{2, 2, 2};
    std::vector<double> data = std::vector<double>(24, 0.0);

    static VectorGrid zeros(const Vec3 &origin, const Vec3 &spacing, std::array<std::uint32_t, 3> dims);

    std::size_t node_count() const noexcept { return std::size_t{dims[0]} * dims[1] * dims[2]; }
    std::size_t node_index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return i + dims[0] * (j + dims[1] * k);
    }
    Vec3 node_position(std::size_t i, std::size_t j, std::size_t k) const noexcept;
    Vec3 at(std::size_t node) const noexcept { return {data[3 * node], data[3 * node + 1], data[3 * node + 2]}; }
    void set(std::size_t node, const Vec3 &v) noexcept;
    Vec3 upper_corner() const noexcept;
    kernels::GridView view() const noexcept;
};

struct FlowField {
    VectorGrid coarse;
    VectorGrid fine;
    int step_count = 16;
};

Vec3 flow_velocity(const Vec3 &x, const FlowField &flow);

/// Throws NumericError naming the Euler step at which the position became non-finite.
Vec3 flow_integrate(const Vec3 &x, const FlowField &flow, Direction dir);

// ---------------------------------------------------------------------------
// Gap scaling: a log-scale field over (spiral angle, z) that stretches the radial
// spacing between windings.
// ---------------------------------------------------------------------------

/// Bilinear lattice over theta in [0, theta_max] and z in [z_min, z_max] (edge-clamped).
/// Values are stored with theta fastest.
struct GapField {
    std::uint32_t n_theta = 2;
    std::uint32_t n_z = 2;
    double theta_max = two_pi;
    double z_min = 0.0;
    double z_max = 1.0;
    std::vector<double> values = std::vector<double>(4, 0.0);

    static GapField zeros(std::uint32_t n_theta, std::uint32_t n_z, double theta_max, double z_min, double z_max);

    /// Interpolation stencil: value = sum w[c] * values[node[c]].
    struct Stencil {
        std::array<std::size_t, 4> node{};
        std::array<double, 4> weight{};
        std::array<double, 4> d_theta{}; ///< d weight / d theta
        std::array<double, 4> d_z{};     ///< d weight / d z
    };

    Stencil stencil(double theta, double z) const noexcept;
    double value(double theta, double z) const noexcept;
};

/// Radial remap at fixed angle phi and height z. Breakpoints are the sheet radii
/// rho*(phi + 2*pi*j); the span between sheet j and j+1 is scaled by exp(g(phi + 2*pi*j, z))
/// and the partial span inside the innermost sheet by exp(g(0, z)).
double gap_forward_radius(double radius, double phi, double z, const GapField &gap, const SpiralParams &spiral);
/// `segment`, if given, receives the gap index the result falls in (-1: inside the innermost sheet).
double gap_inverse_radius(double radius, double phi, double z, const GapField &gap, const SpiralParams &spiral,
                          int *segment = nullptr);

Vec3 gap_apply(const Vec3 &p, const GapField &gap, const SpiralParams &spiral, Direction dir);

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

struct ComposedTransform {
    SpiralParams spiral;
    PerSliceAffine affine;
    FlowField flow;
    GapField gap;
};

Vec3 compose_forward(const Vec3 &x, const ComposedTransform &t);
Vec3 compose_inverse(const Vec3 &x, const ComposedTransform &t);

/// compose_forward over many points, using the SIMD flow kernel.
void compose_forward_batch(std::span<Vec3> points, const ComposedTransform &t);
/// compose_inverse over many points, using the SIMD flow kernel.
void compose_inverse_batch(std::span<Vec3> points, const ComposedTransform &t);

/// Resolution choices for a freshly initialised (identity) transform.
struct TransformLayout {
    std::size_t affine_keypoints = 5;
    std::uint32_t fine_cells = 16;   ///< fine-grid cells per axis across the flow domain
    std::uint32_t coarse_factor = 6; ///< coarse spacing / fine spacing
    std::uint32_t gap_nodes_per_winding = 8;
    std::uint32_t gap_z_nodes = 8;
    int euler_steps = 16;
    double flow_margin = -1.0; ///< xy margin beyond the outer winding; < 0 means one spacing
};

/// Identity transform for `spiral`. The flow domain covers the canonical spiral plus margin.
ComposedTransform make_identity_transform(const SpiralParams &spiral, const TransformLayout &layout = {});

/// Length of one fine flow cell (largest axis), the unit of deformation magnitude.
double fine_cell_size(const FlowField &flow) noexcept;

} // namespace scroll
