#include "scroll/spiral.hpp"

#include <cmath>
#include <string>

#include "scroll/error.hpp"

namespace scroll {

void SpiralParams::validate() const {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("spiral rho must be positive, got " + std::to_string(rho));
    if (!(theta_max > 0.0) || !std::isfinite(theta_max))
        throw ConfigError("spiral theta_max must be positive, got " + std::to_string(theta_max));
    if (!(z_min < z_max)) throw ConfigError("spiral z range is empty");
}

Vec3 spiral_point(double theta, double z, const SpiralParams &params) {
    if (!(theta > 0.0 && theta <= params.theta_max))
        throw DomainError("spiral angle " + std::to_string(theta) + " outside (0, theta_max]");
    if (!(z >= params.z_min && z <= params.z_max))
        throw DomainError("spiral z " + std::to_string(z) + " outside [z_min, z_max]");
    const double radius = params.rho * theta;
    return {radius * std::cos(theta), y_sign(params.direction) * radius * std::sin(theta), z};
}

double angle_coordinate(const Vec3 &p, WindingDirection direction) {
    if (p.x == 0.0 && p.y == 0.0) throw DomainError("angle undefined on the spiral axis");
    double phi = std::atan2(y_sign(direction) * p.y, p.x);
    if (phi < 0.0) phi += two_pi;
    // Rounding in sin/cos puts exact seam points a hair below a full turn.
    if (phi >= two_pi - 1e-12) phi = 0.0;
    return phi;
}

double radius_coordinate(const Vec3 &p, const SpiralParams &params) {
    const double phi = angle_coordinate(p, params.direction);
    return std::hypot(p.x, p.y) - params.rho * phi;
}

double nearest_winding_radius(double r, double spacing) {
    const double m = r - spacing * std::floor(r / spacing);
    return m < 0.5 * spacing ? r - m : r + spacing - m;
}

double nearest_winding_radius(double r, const SpiralParams &params) {
    return nearest_winding_radius(r, params.spacing());
}

double unwrap_near(double angle, double reference) noexcept {
    return angle - two_pi * std::round((angle - reference) / two_pi);
}

} // namespace scroll
