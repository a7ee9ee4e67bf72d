#pragma once

// Randomised small configurations shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "scroll/gradients.hpp"
#include "scroll/losses.hpp"
#include "scroll/random.hpp"
#include "scroll/transform.hpp"

namespace scroll::testing {

inline SpiralParams small_spiral() {
    SpiralParams s;
    s.rho = 1.0;
    s.theta_max = 3.0 * two_pi;
    s.z_min = 0.0;
    s.z_max = 20.0;
    return s;
}

/// Random smooth transform: 6^3 fine grid, 2^3 coarse grid, 4 keypoints, 8x4 gap lattice.
/// Velocities are bounded by `cells` fine cells.
inline ComposedTransform random_small_transform(std::uint64_t seed, double cells = 1.0) {
    const SpiralParams spiral = small_spiral();
    TransformLayout layout;
    layout.affine_keypoints = 4;
    layout.fine_cells = 5;
    ComposedTransform t = make_identity_transform(spiral, layout);
    t.gap = GapField::zeros(8, 4, spiral.theta_max, spiral.z_min, spiral.z_max);
    CounterRng rng(seed, 1);
    const double cell = fine_cell_size(t.flow);
    const double bound = cells * cell / std::sqrt(3.0);
    for (double &v : t.flow.fine.data) v = rng.uniform(-0.6, 0.6) * bound;
    for (double &v : t.flow.coarse.data) v = rng.uniform(-0.4, 0.4) * bound;
    for (double &v : t.gap.values) v = rng.uniform(-0.2, 0.2);
    for (AffineKeypoint &k : t.affine.keypoints)
        k = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    t.spiral.rho = rng.uniform(0.9, 1.1);
    return t;
}

/// Smooth random transform on the default layout: a few sinusoidal flow modes with wavelengths
/// of twice the domain extent, scaled so that max |u| over the fine nodes is `cells` fine cells,
/// plus mild affine and gap fields.
inline ComposedTransform random_smooth_transform(std::uint64_t seed, double cells) {
    ComposedTransform t = make_identity_transform(small_spiral());
    CounterRng rng(seed, 11);
    const Vec3 lo = t.flow.fine.origin;
    const Vec3 ext = t.flow.fine.upper_corner() - lo;
    struct Mode {
        Vec3 freq;
        double phase;
        Vec3 amp;
    };
    std::vector<Mode> modes;
    for (int m = 0; m < 4; ++m) {
        const Vec3 f{rng.uniform(-1.0, 1.0) * std::numbers::pi / ext.x, rng.uniform(-1.0, 1.0) * std::numbers::pi / ext.y,
                     rng.uniform(-1.0, 1.0) * std::numbers::pi / ext.z};
        modes.push_back({f, rng.uniform(0.0, two_pi), {rng.normal(), rng.normal(), rng.normal()}});
    }
    VectorGrid &g = t.flow.fine;
    double peak = 0.0;
    for (std::uint32_t k = 0; k < g.dims[2]; ++k)
        for (std::uint32_t j = 0; j < g.dims[1]; ++j)
            for (std::uint32_t i = 0; i < g.dims[0]; ++i) {
                const Vec3 p = g.node_position(i, j, k) - lo;
                Vec3 u;
                for (const Mode &m : modes) u = u + std::sin(dot(m.freq, p) + m.phase) * m.amp;
                g.set(g.node_index(i, j, k), u);
                peak = std::max(peak, norm(u));
            }
    const double scale = cells * fine_cell_size(t.flow) / peak;
    for (double &v : g.data) v *= scale;
    for (double &v : t.gap.values) v = rng.uniform(-0.1, 0.1);
    for (AffineKeypoint &k : t.affine.keypoints)
        k = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    return t;
}

/// Point near the deformed sheet at spiral angle theta and height z.
inline Vec3 sheet_point(const ComposedTransform &t, double theta, double z, CounterRng &rng, double jitter) {
    const Vec3 c = spiral_point(theta, z, t.spiral);
    return compose_forward(c, t) + Vec3{rng.normal(), rng.normal(), rng.normal()} * jitter;
}

/// Mixed batch touching every loss term.
inline LossBatch random_batch(const ComposedTransform &t, std::uint64_t seed) {
    CounterRng rng(seed, 2);
    LossBatch b;
    const SpiralParams &s = t.spiral;
    const double zlo = s.z_min + 2.0;
    const double zhi = s.z_max - 2.0;
    auto path = [&](PathKind kind) {
        PathSample p;
        p.kind = kind;
        double theta = rng.uniform(2.0, s.theta_max - 2.0);
        double z = rng.uniform(zlo, zhi);
        for (int i = 0; i < 8; ++i) {
            p.points.push_back(sheet_point(t, theta, z, rng, 0.3));
            if (kind == PathKind::fiber_vertical) z = std::min(zhi, z + 1.0);
            else theta += 0.15;
        }
        return p;
    };
    for (int i = 0; i < 4; ++i) b.paths.push_back(path(PathKind::surface));
    for (int i = 0; i < 2; ++i) b.paths.push_back(path(PathKind::fiber_horizontal));
    for (int i = 0; i < 2; ++i) b.paths.push_back(path(PathKind::fiber_vertical));
    for (int i = 0; i < 12; ++i) {
        const Vec3 p = sheet_point(t, rng.uniform(2.0, s.theta_max), rng.uniform(zlo, zhi), rng, 0.3);
        const Vec3 n = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
        b.normals.push_back({p, n});
    }
    for (int i = 0; i < 12; ++i) {
        const double theta = rng.uniform(2.0, s.theta_max - two_pi);
        const double z = rng.uniform(zlo, zhi);
        b.pairs.push_back({sheet_point(t, theta, z, rng, 0.3), sheet_point(t, theta + two_pi, z, rng, 0.3), 1});
    }
    for (int i = 0; i < 12; ++i) {
        const Vec3 p = sheet_point(t, rng.uniform(2.0, s.theta_max), rng.uniform(zlo, zhi), rng, 0.3);
        b.stretch.push_back({p, normalized(Vec3{rng.normal(), rng.normal(), rng.normal()})});
    }
    for (int i = 0; i < 6; ++i) {
        const double z = s.z_min + (s.z_max - s.z_min) * (i + 0.5) / 6.0;
        b.center_z.push_back(z);
        b.center_reference.push_back(Vec3{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), z});
    }
    return b;
}

/// Finite-difference step scale for each parameter: lengths in fine cells, log-scales 1, rho itself.
inline std::vector<double> parameter_scales(const ComposedTransform &t) {
    const ParamLayout l = ParamLayout::of(t);
    std::vector<double> s(l.size, 1.0);
    const double cell = fine_cell_size(t.flow);
    for (std::size_t k = 0; k < t.affine.keypoints.size(); ++k) s[4 * k + 2] = s[4 * k + 3] = cell;
    for (std::size_t i = 0; i < l.coarse_count; ++i) s[l.coarse_offset + i] = cell;
    for (std::size_t i = 0; i < l.fine_count; ++i) s[l.fine_offset + i] = cell;
    s[l.rho_index] = t.spiral.rho;
    return s;
}

struct GradientCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t straddling = 0; ///< finite differences that crossed a non-differentiable point
    std::size_t worst_index = 0;
};

/// Central differences of the weighted total against evaluate_with_gradients.
inline GradientCheck check_gradients(const ComposedTransform &t, const LossBatch &b, const LossWeights &w,
                                     double rel_h = 1e-4, double abs_floor = 1e-8) {
    GradientCheck out;
    const Evaluation ev = evaluate_with_gradients(b, t, w);
    const std::vector<double> base = pack_parameters(t);
    const std::vector<double> scales = parameter_scales(t);
    ComposedTransform probe = t;
    for (std::size_t i = 0; i < base.size(); ++i) {
        const double h = rel_h * scales[i];
        std::vector<double> p = base;
        p[i] = base[i] + h;
        unpack_parameters(p, probe);
        const Evaluation plus = evaluate_with_gradients(b, probe, w);
        p[i] = base[i] - h;
        unpack_parameters(p, probe);
        const Evaluation minus = evaluate_with_gradients(b, probe, w);
        if (plus.values.branch_signature != ev.values.branch_signature ||
            minus.values.branch_signature != ev.values.branch_signature) {
            ++out.straddling;
            continue;
        }
        const double fd = (plus.values.total - minus.values.total) / (2.0 * h);
        const double an = ev.gradients.flat()[i];
        const double diff = std::fabs(fd - an);
        ++out.checked;
        if (diff <= abs_floor) continue;
        const double rel = diff / std::max(std::fabs(fd), std::fabs(an));
        if (rel > out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst_index = i;
        }
    }
    return out;
}

} // namespace scroll::testing
