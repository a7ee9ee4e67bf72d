#pragma once

// Canonical (pre-deformation) scroll geometry: an Archimedean spiral in the xy-plane,
// extruded along z. One parameter, rho, sets the radius gained per radian of winding,
// so consecutive windings are 2*pi*rho apart.

#include <cstdint>
#include <numbers>

#include "scroll/vec3.hpp"

namespace scroll {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Winding handedness as seen looking along +z. `anticlockwise` gives
/// s(theta) = (rho*theta*cos(theta), -rho*theta*sin(theta), z).
enum class WindingDirection : std::uint8_t { anticlockwise = 0, clockwise = 1 };

struct SpiralParams {
    double rho = 1.0;       ///< radius per radian
    double theta_max = 1.0; ///< outermost spiral angle
    double z_min = 0.0;
    double z_max = 1.0;
    WindingDirection direction = WindingDirection::anticlockwise;

    double spacing() const noexcept { return two_pi * rho; }
    double windings() const noexcept { return theta_max / two_pi; }
    double outer_radius() const noexcept { return rho * theta_max; }

    /// Throws ConfigError unless rho > 0, theta_max > 0 and z_min < z_max.
    void validate() const;

    friend bool operator==(const SpiralParams &, const SpiralParams &) = default;
};

/// Sign applied to y so that angle_coordinate() increases along the spiral.
constexpr double y_sign(WindingDirection d) noexcept { return d == WindingDirection::anticlockwise ? -1.0 : 1.0; }

/// Point on the canonical sheet. Requires 0 < theta <= theta_max and z in [z_min, z_max].
Vec3 spiral_point(double theta, double z, const SpiralParams &params);

/// In-plane angle in [0, 2*pi), measured in the winding direction; angles within 1e-12 of a full
/// turn are returned as 0. Throws DomainError on the z-axis.
double angle_coordinate(const Vec3 &p, WindingDirection direction);

/// Continuing radius: xy-radius minus rho * angle. Constant (a multiple of the spacing) along a winding.
double radius_coordinate(const Vec3 &p, const SpiralParams &params);

/// Nearest multiple of the winding spacing; ties (exactly half a spacing) round up.
double nearest_winding_radius(double r, const SpiralParams &params);
double nearest_winding_radius(double r, double spacing);

/// Shifts `angle` by a multiple of 2*pi so that it lies within pi of `reference`.
double unwrap_near(double angle, double reference) noexcept;

} // namespace scroll
