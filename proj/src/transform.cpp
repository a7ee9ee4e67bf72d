#include "scroll/transform.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scroll/error.hpp"

namespace scroll {

// ---------------------------------------------------------------------------
// Affine
// ---------------------------------------------------------------------------

PerSliceAffine::Station PerSliceAffine::locate(double z) const noexcept {
    const std::size_t n = keypoints.size();
    if (n < 2) return {0, 0.0, true};
    const double tau = static_cast<double>(n - 1) * (z - z_min) / (z_max - z_min);
    if (!(tau > 0.0)) return {0, 0.0, tau < 0.0 || !std::isfinite(tau)};
    const double last = static_cast<double>(n - 1);
    if (tau >= last) return {n - 2, 1.0, tau > last};
    std::size_t lower = std::min(static_cast<std::size_t>(tau), n - 2);
    return {lower, tau - static_cast<double>(lower), false};
}

AffineKeypoint PerSliceAffine::interpolate(double z) const noexcept {
    if (keypoints.size() == 1) return keypoints.front();
    const Station s = locate(z);
    const AffineKeypoint &a = keypoints[s.lower];
    const AffineKeypoint &b = keypoints[s.lower + 1];
    const double w = 1.0 - s.alpha;
    return {w * a.log_sx + s.alpha * b.log_sx, w * a.log_sy + s.alpha * b.log_sy, w * a.tx + s.alpha * b.tx,
            w * a.ty + s.alpha * b.ty};
}

double PerSliceAffine::station_z(std::size_t k) const noexcept {
    if (keypoints.size() < 2) return z_min;
    return z_min + (z_max - z_min) * static_cast<double>(k) / static_cast<double>(keypoints.size() - 1);
}

Vec3 affine_apply(const Vec3 &x, const PerSliceAffine &affine, Direction dir) {
    const AffineKeypoint k = affine.interpolate(x.z);
    if (dir == Direction::forward)
        return {x.x * std::exp(k.log_sx) + k.tx, x.y * std::exp(k.log_sy) + k.ty, x.z};
    return {(x.x - k.tx) * std::exp(-k.log_sx), (x.y - k.ty) * std::exp(-k.log_sy), x.z};
}

// ---------------------------------------------------------------------------
// Flow
// ---------------------------------------------------------------------------

VectorGrid VectorGrid::zeros(const Vec3 &origin, const Vec3 &spacing, std::array<std::uint32_t, 3> dims) {
    if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2) throw ConfigError("vector grid needs at least 2 nodes per axis");
    if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) throw ConfigError("vector grid spacing must be positive");
    VectorGrid g;
    g.origin = origin;
    g.spacing = spacing;
    g.dims = dims;
    g.data.assign(3 * g.node_count(), 0.0);
    return g;
}

Vec3 VectorGrid::node_position(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return {origin.x + static_cast<double>(i) * spacing.x, origin.y + static_cast<double>(j) * spacing.y,
            origin.z + static_cast<double>(k) * spacing.z};
}

void VectorGrid::set(std::size_t node, const Vec3 &v) noexcept {
    data[3 * node] = v.x;
    data[3 * node + 1] = v.y;
    data[3 * node + 2] = v.z;
}

Vec3 VectorGrid::upper_corner() const noexcept { return node_position(dims[0] - 1, dims[1] - 1, dims[2] - 1); }

kernels::GridView VectorGrid::view() const noexcept {
    kernels::GridView v;
    v.data = data.data();
    v.origin[0] = origin.x;
    v.origin[1] = origin.y;
    v.origin[2] = origin.z;
    v.inv_spacing[0] = 1.0 / spacing.x;
    v.inv_spacing[1] = 1.0 / spacing.y;
    v.inv_spacing[2] = 1.0 / spacing.z;
    v.dims[0] = dims[0];
    v.dims[1] = dims[1];
    v.dims[2] = dims[2];
    return v;
}

Vec3 flow_velocity(const Vec3 &x, const FlowField &flow) {
    return kernels::trilinear(flow.coarse.view(), x) + kernels::trilinear(flow.fine.view(), x);
}

Vec3 flow_integrate(const Vec3 &x, const FlowField &flow, Direction dir) {
    if (flow.step_count < 1) throw ConfigError("flow step_count must be >= 1");
    const kernels::GridView coarse = flow.coarse.view();
    const kernels::GridView fine = flow.fine.view();
    const double sign = dir == Direction::forward ? 1.0 : -1.0;
    const double h = sign / static_cast<double>(flow.step_count);
    Vec3 p = x;
    // Same arithmetic as kernels::flow_integrate_point, with a finiteness check per step.
    for (int k = 0; k < flow.step_count; ++k) {
        const Vec3 uc = kernels::trilinear(coarse, p);
        const Vec3 uf = kernels::trilinear(fine, p);
        p.x = p.x + h * (uc.x + uf.x);
        p.y = p.y + h * (uc.y + uf.y);
        p.z = p.z + h * (uc.z + uf.z);
        if (!is_finite(p)) throw NumericError("flow integration diverged at Euler step " + std::to_string(k));
    }
    return p;
}

double fine_cell_size(const FlowField &flow) noexcept {
    return std::max({flow.fine.spacing.x, flow.fine.spacing.y, flow.fine.spacing.z});
}

// ---------------------------------------------------------------------------
// Gap
// ---------------------------------------------------------------------------

GapField GapField::zeros(std::uint32_t n_theta, std::uint32_t n_z, double theta_max, double z_min, double z_max) {
    if (n_theta < 2 || n_z < 2) throw ConfigError("gap lattice needs at least 2 nodes per axis");
    GapField g;
    g.n_theta = n_theta;
    g.n_z = n_z;
    g.theta_max = theta_max;
    g.z_min = z_min;
    g.z_max = z_max;
    g.values.assign(std::size_t{n_theta} * n_z, 0.0);
    return g;
}

namespace {

struct Axis1 {
    std::size_t lower;
    double frac;
    double d_frac; ///< d frac / d coordinate (0 when clamped)
};

Axis1 locate_axis(double coord, double lo, double hi, std::uint32_t n) {
    const double scale = static_cast<double>(n - 1) / (hi - lo);
    const double q = (coord - lo) * scale;
    const double last = static_cast<double>(n - 1);
    if (!(q > 0.0)) return {0, 0.0, q < 0.0 ? 0.0 : scale};
    if (q >= last) return {n - 2, 1.0, q > last ? 0.0 : scale};
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(q), n - 2);
    return {i, q - static_cast<double>(i), scale};
}

} // namespace

GapField::Stencil GapField::stencil(double theta, double z) const noexcept {
    const Axis1 a = locate_axis(theta, 0.0, theta_max, n_theta);
    const Axis1 b = locate_axis(z, z_min, z_max, n_z);
    Stencil s;
    const std::size_t i0 = a.lower + n_theta * b.lower;
    s.node = {i0, i0 + 1, i0 + n_theta, i0 + n_theta + 1};
    const double wa[2] = {1.0 - a.frac, a.frac};
    const double wb[2] = {1.0 - b.frac, b.frac};
    const double da[2] = {-a.d_frac, a.d_frac};
    const double db[2] = {-b.d_frac, b.d_frac};
    for (int c = 0; c < 4; ++c) {
        const int ia = c & 1;
        const int ib = c >> 1;
        s.weight[c] = wa[ia] * wb[ib];
        s.d_theta[c] = da[ia] * wb[ib];
        s.d_z[c] = wa[ia] * db[ib];
    }
    return s;
}

double GapField::value(double theta, double z) const noexcept {
    const Stencil s = stencil(theta, z);
    double v = 0.0;
    for (int c = 0; c < 4; ++c) v += s.weight[c] * values[s.node[c]];
    return v;
}

namespace {
constexpr std::size_t max_gap_segments = 1u << 22;
}

double gap_forward_radius(double radius, double phi, double z, const GapField &gap, const SpiralParams &spiral) {
    const double spacing = spiral.spacing();
    const double inner = spiral.rho * phi;
    const double e_in = std::exp(gap.value(0.0, z));
    if (radius < inner) return radius * e_in;
    const double rel = radius - inner;
    const double kf = std::floor(rel / spacing);
    if (!std::isfinite(kf) || kf > static_cast<double>(max_gap_segments))
        throw NumericError("gap remap: radius out of range");
    const auto k = static_cast<std::size_t>(kf);
    double out = inner * e_in;
    for (std::size_t j = 0; j < k; ++j) out += spacing * std::exp(gap.value(phi + two_pi * static_cast<double>(j), z));
    const double m = rel - kf * spacing;
    return out + m * std::exp(gap.value(phi + two_pi * kf, z));
}

double gap_inverse_radius(double radius, double phi, double z, const GapField &gap, const SpiralParams &spiral,
                          int *segment) {
    if (!std::isfinite(radius)) throw NumericError("gap remap: non-finite radius");
    const double spacing = spiral.spacing();
    const double e_in = std::exp(gap.value(0.0, z));
    double out = spiral.rho * phi * e_in;
    if (radius < out) {
        if (segment) *segment = -1;
        return radius / e_in;
    }
    for (std::size_t k = 0; k < max_gap_segments; ++k) {
        const double e = std::exp(gap.value(phi + two_pi * static_cast<double>(k), z));
        const double seg = spacing * e;
        if (radius < out + seg) {
            if (segment) *segment = static_cast<int>(k);
            return spiral.rho * phi + static_cast<double>(k) * spacing + (radius - out) / e;
        }
        out += seg;
    }
    throw NumericError("gap remap: radius out of range");
}

Vec3 gap_apply(const Vec3 &p, const GapField &gap, const SpiralParams &spiral, Direction dir) {
    const double radius = std::hypot(p.x, p.y);
    if (radius == 0.0) return p;
    const double phi = angle_coordinate(p, spiral.direction);
    const double mapped = dir == Direction::forward ? gap_forward_radius(radius, phi, p.z, gap, spiral)
                                                    : gap_inverse_radius(radius, phi, p.z, gap, spiral);
    const double s = mapped / radius;
    return {p.x * s, p.y * s, p.z};
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

Vec3 compose_forward(const Vec3 &x, const ComposedTransform &t) {
    const Vec3 g = gap_apply(x, t.gap, t.spiral, Direction::forward);
    const Vec3 f = flow_integrate(g, t.flow, Direction::forward);
    return affine_apply(f, t.affine, Direction::forward);
}

Vec3 compose_inverse(const Vec3 &x, const ComposedTransform &t) {
    const Vec3 a = affine_apply(x, t.affine, Direction::inverse);
    const Vec3 f = flow_integrate(a, t.flow, Direction::inverse);
    return gap_apply(f, t.gap, t.spiral, Direction::inverse);
}

namespace {

void flow_batch(std::span<Vec3> points, const FlowField &flow, double sign) {
    std::vector<double> xs(points.size()), ys(points.size()), zs(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        xs[i] = points[i].x;
        ys[i] = points[i].y;
        zs[i] = points[i].z;
    }
    kernels::flow_integrate_batch(flow.coarse.view(), flow.fine.view(), flow.step_count, sign, xs, ys, zs);
    for (std::size_t i = 0; i < points.size(); ++i) {
        points[i] = {xs[i], ys[i], zs[i]};
        if (!is_finite(points[i])) throw NumericError("flow integration diverged for batch point " + std::to_string(i));
    }
}

} // namespace

void compose_forward_batch(std::span<Vec3> points, const ComposedTransform &t) {
    for (Vec3 &p : points) p = gap_apply(p, t.gap, t.spiral, Direction::forward);
    flow_batch(points, t.flow, 1.0);
    for (Vec3 &p : points) p = affine_apply(p, t.affine, Direction::forward);
}

void compose_inverse_batch(std::span<Vec3> points, const ComposedTransform &t) {
    for (Vec3 &p : points) p = affine_apply(p, t.affine, Direction::inverse);
    flow_batch(points, t.flow, -1.0);
    for (Vec3 &p : points) p = gap_apply(p, t.gap, t.spiral, Direction::inverse);
}

ComposedTransform make_identity_transform(const SpiralParams &spiral, const TransformLayout &layout) {
    spiral.validate();
    if (layout.affine_keypoints < 2) throw ConfigError("need at least 2 affine keypoints");
    if (layout.fine_cells < 1 || layout.coarse_factor < 1) throw ConfigError("invalid flow grid resolution");
    ComposedTransform t;
    t.spiral = spiral;
    t.affine.keypoints.assign(layout.affine_keypoints, AffineKeypoint{});
    t.affine.z_min = spiral.z_min;
    t.affine.z_max = spiral.z_max;

    const double margin = layout.flow_margin >= 0.0 ? layout.flow_margin : spiral.spacing();
    const double half = spiral.outer_radius() + margin;
    const double n = static_cast<double>(layout.fine_cells);
    const Vec3 fine_spacing{2.0 * half / n, 2.0 * half / n, (spiral.z_max - spiral.z_min) / n};
    const Vec3 lower{-half, -half, spiral.z_min};
    const std::uint32_t fd = layout.fine_cells + 1;
    t.flow.fine = VectorGrid::zeros(lower, fine_spacing, {fd, fd, fd});

    const std::uint32_t coarse_cells = (layout.fine_cells + layout.coarse_factor - 1) / layout.coarse_factor;
    const Vec3 coarse_spacing = fine_spacing * static_cast<double>(layout.coarse_factor);
    const Vec3 centre{0.0, 0.0, 0.5 * (spiral.z_min + spiral.z_max)};
    const Vec3 coarse_origin = centre - coarse_spacing * (0.5 * coarse_cells);
    const std::uint32_t cd = coarse_cells + 1;
    t.flow.coarse = VectorGrid::zeros(coarse_origin, coarse_spacing, {cd, cd, cd});
    t.flow.step_count = layout.euler_steps;

    const auto windings = static_cast<std::uint32_t>(std::ceil(spiral.windings()));
    t.gap = GapField::zeros(layout.gap_nodes_per_winding * std::max<std::uint32_t>(windings, 1) + 1,
                            layout.gap_z_nodes, spiral.theta_max, spiral.z_min, spiral.z_max);
    return t;
}

} // namespace scroll
