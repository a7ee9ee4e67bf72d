#include "scroll/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "scroll/error.hpp"
#include "scroll/random.hpp"

namespace scroll {

void PhantomConfig::validate() const {
    if (!(windings > 0.0) || !(spacing > 0.0) || !(z_extent > 0.0))
        throw ConfigError("phantom windings, spacing and z_extent must be positive");
    if (!(theta_start >= 0.0) || !(theta_start < windings * two_pi))
        throw ConfigError("phantom theta_start must lie in [0, theta_max)");
    if (!(deformation >= 0.0) || deformation > max_phantom_deformation)
        throw ConfigError("phantom deformation " + std::to_string(deformation) +
                          " fine cells exceeds the invertibility bound of 2");
    if (!(affine_log_scale >= 0.0) || !(affine_shift >= 0.0) || !(gap_amplitude >= 0.0) || !std::isfinite(bend))
        throw ConfigError("phantom affine, gap and bend amplitudes must be finite and non-negative");
    for (double f : {dropout, false_link_rate})
        if (!(f >= 0.0 && f < 1.0)) throw ConfigError("phantom noise fractions must lie in [0, 1)");
    if (!(jitter >= 0.0)) throw ConfigError("phantom jitter must be non-negative");
    if (z_slices == 0 || arcs_per_winding == 0 || verticals_per_winding == 0 || pairs_per_link == 0)
        throw ConfigError("phantom observation counts must be positive");
    if (!(point_spacing > 0.0) || !(fiber_spacing > 0.0)) throw ConfigError("phantom spacings must be positive");
    if (!(thickness > 0.0) || !(blur >= 0.0) || !(margin >= 0.0))
        throw ConfigError("phantom raster thickness must be positive, blur and margin non-negative");
    for (std::size_t d : dims)
        if (static_cast<double>(d) < 2.0 * margin + 8.0) throw ConfigError("phantom volume dims too small");
}

namespace {

enum Stream : std::uint64_t {
    affine_stream = 1,
    flow_stream,
    gap_stream,
    path_jitter_stream,
    link_jitter_stream,
    normal_stream,
    dropout_stream,
    false_link_stream,
};

Vec3 canonical(double theta, double z, const SpiralParams &s) {
    const double r = s.rho * theta;
    return {r * std::cos(theta), y_sign(s.direction) * r * std::sin(theta), z};
}

double max_norm(const std::vector<Vec3> &v) {
    double m = 0.0;
    for (const Vec3 &u : v) m = std::max(m, norm(u));
    return m;
}

void accumulate(VectorGrid &g, const std::vector<Vec3> &field, double weight) {
    const double m = max_norm(field);
    if (m == 0.0) return;
    for (std::size_t n = 0; n < field.size(); ++n) g.set(n, g.at(n) + (weight / m) * field[n]);
}

// Velocity = twist about the axis + bend of the axis + random coarse nodes + smooth fine
// modes, each normalised to unit maximum and mixed so the total never exceeds `amplitude`.
void draw_velocity(FlowField &flow, const SpiralParams &s, double amplitude, std::uint64_t seed) {
    CounterRng rng(seed, flow_stream);
    const double zc = 0.5 * (s.z_min + s.z_max);
    const double hz = 0.5 * (s.z_max - s.z_min);
    const double kappa = rng.uniform(-0.5, 0.5);
    const double twist_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double bend_angle = rng.uniform(0.0, two_pi);

    VectorGrid &c = flow.coarse;
    std::vector<Vec3> twist, bend, noise;
    for (std::uint32_t k = 0; k < c.dims[2]; ++k)
        for (std::uint32_t j = 0; j < c.dims[1]; ++j)
            for (std::uint32_t i = 0; i < c.dims[0]; ++i) {
                const Vec3 p = c.node_position(i, j, k);
                const double zeta = (p.z - zc) / hz;
                twist.push_back(twist_sign * (1.0 + kappa * zeta) * Vec3{-p.y, p.x, 0.0});
                bend.push_back(zeta * zeta * Vec3{std::cos(bend_angle), std::sin(bend_angle), 0.0});
                noise.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
            }
    accumulate(c, twist, 0.15 * amplitude);
    accumulate(c, bend, 0.15 * amplitude);
    accumulate(c, noise, 0.45 * amplitude);

    VectorGrid &f = flow.fine;
    const Vec3 extent = f.upper_corner() - f.origin;
    struct Mode {
        Vec3 k;
        Vec3 a;
        double phase;
    };
    std::vector<Mode> modes;
    for (int m = 0; m < 3; ++m) {
        const Vec3 k{two_pi * rng.uniform(0.5, 2.0) / extent.x, two_pi * rng.uniform(0.5, 2.0) / extent.y,
                     two_pi * rng.uniform(0.5, 2.0) / extent.z};
        const Vec3 a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        modes.push_back({k, a, rng.uniform(0.0, two_pi)});
    }
    std::vector<Vec3> smooth;
    for (std::uint32_t k = 0; k < f.dims[2]; ++k)
        for (std::uint32_t j = 0; j < f.dims[1]; ++j)
            for (std::uint32_t i = 0; i < f.dims[0]; ++i) {
                const Vec3 p = f.node_position(i, j, k) - f.origin;
                Vec3 u;
                for (const Mode &m : modes) u += std::sin(dot(m.k, p) + m.phase) * m.a;
                smooth.push_back(u);
            }
    accumulate(f, smooth, 0.25 * amplitude);

    // Rescale so the bound max|coarse| + max|fine| is attained.
    double mc = 0.0, mf = 0.0;
    for (std::size_t n = 0; n < c.node_count(); ++n) mc = std::max(mc, norm(c.at(n)));
    for (std::size_t n = 0; n < f.node_count(); ++n) mf = std::max(mf, norm(f.at(n)));
    if (mc + mf == 0.0) return;
    const double k = amplitude / (mc + mf);
    for (double &v : c.data) v *= k;
    for (double &v : f.data) v *= k;
}

ComposedTransform draw_truth(const PhantomConfig &c, double z_min, double tx, double ty) {
    SpiralParams s;
    s.rho = c.spacing / two_pi;
    s.theta_max = c.windings * two_pi;
    s.z_min = z_min;
    s.z_max = z_min + c.z_extent;
    s.direction = c.direction;
    ComposedTransform t = make_identity_transform(s, c.layout);

    CounterRng ra(c.seed, affine_stream);
    for (AffineKeypoint &k : t.affine.keypoints) {
        k.log_sx = ra.uniform(-c.affine_log_scale, c.affine_log_scale);
        k.log_sy = ra.uniform(-c.affine_log_scale, c.affine_log_scale);
        k.tx = tx + ra.uniform(-c.affine_shift, c.affine_shift);
        k.ty = ty + ra.uniform(-c.affine_shift, c.affine_shift);
    }
    draw_velocity(t.flow, s, c.deformation * fine_cell_size(t.flow), c.seed);
    CounterRng rg(c.seed, gap_stream);
    for (double &g : t.gap.values) g = rg.uniform(-c.gap_amplitude, c.gap_amplitude);
    return t;
}

// Canonical angles from theta0 to theta1 spaced `step` apart in arc length.
std::vector<double> arc_angles(double theta0, double theta1, double step, double rho) {
    std::vector<double> out;
    for (double th = theta0; th <= theta1; th += step / (rho * std::sqrt(1.0 + th * th))) out.push_back(th);
    return out;
}

std::vector<double> linear_steps(double lo, double hi, double step) {
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step * (1.0 + 1e-12)));
    for (std::size_t k = 0; k <= n; ++k) out.push_back(lo + static_cast<double>(k) * step);
    return out;
}

struct Bounds {
    Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};
    void add(const Vec3 &p) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
};

Bounds sheet_bounds(const Phantom &ph) {
    const SpiralParams &s = ph.truth.spiral;
    Bounds b;
    for (double z : linear_steps(s.z_min, s.z_max, (s.z_max - s.z_min) / 32.0))
        for (double th : arc_angles(ph.config.theta_start, s.theta_max, 0.25 * s.spacing(), s.rho))
            b.add(ph.forward(canonical(th, z, s)));
    return b;
}

void jitter_point(Vec3 &p, double sigma, CounterRng &rng) {
    if (sigma == 0.0) return;
    p += sigma * Vec3{rng.normal(), rng.normal(), rng.normal()};
}

} // namespace

Vec3 Phantom::forward(const Vec3 &c) const {
    Vec3 p = compose_forward(c, truth);
    if (config.bend != 0.0) {
        const SpiralParams &s = truth.spiral;
        const double zeta = (c.z - 0.5 * (s.z_min + s.z_max)) / (0.5 * (s.z_max - s.z_min));
        p += config.bend * zeta * zeta * Vec3{0.8, 0.6, 0.0};
    }
    return p;
}

Vec3 Phantom::surface_normal(double theta, double z) const {
    const SpiralParams &s = truth.spiral;
    const double h = 1e-3 * s.spacing();
    const double ht = h / (s.rho * std::max(theta, 1.0));
    const Vec3 t_theta = forward(canonical(theta + ht, z, s)) - forward(canonical(theta - ht, z, s));
    const Vec3 t_z = forward(canonical(theta, z + h, s)) - forward(canonical(theta, z - h, s));
    Vec3 n = normalized(cross(t_theta, t_z));
    const Vec3 c = canonical(theta, z, s);
    const Vec3 out = forward({c.x * (1.0 + 1e-3), c.y * (1.0 + 1e-3), z}) - forward(c);
    if (dot(n, out) < 0.0) n = -n;
    return n;
}

Phantom make_phantom(const PhantomConfig &config) {
    config.validate();
    Phantom ph;
    ph.config = config;
    ph.truth = draw_truth(config, 0.0, 0.0, 0.0);

    // Fit the deformed sheet inside the requested grid with isotropic voxels, then re-draw
    // the same deformation shifted to the volume centre.
    const Bounds b = sheet_bounds(ph);
    const Vec3 ext = b.hi - b.lo;
    const double extents[3] = {ext.x, ext.y, ext.z};
    double sv = 0.0;
    for (int a = 0; a < 3; ++a)
        sv = std::max(sv, extents[a] / (static_cast<double>(config.dims[a]) - 1.0 - 2.0 * config.margin));
    ph.voxel_spacing = sv;
    ph.dims = {config.dims[0], config.dims[1], config.dims[2]};
    const Vec3 centre{0.5 * sv * static_cast<double>(config.dims[0] - 1),
                      0.5 * sv * static_cast<double>(config.dims[1] - 1),
                      0.5 * sv * static_cast<double>(config.dims[2] - 1)};
    const Vec3 shift = centre - 0.5 * (b.lo + b.hi);
    ph.truth = draw_truth(config, shift.z, shift.x, shift.y);

    const SpiralParams &s = ph.truth.spiral;
    const double theta_max = s.theta_max;
    const auto map_curve = [&](const std::vector<Vec3> &canon) {
        std::vector<Vec3> out(canon.size());
        for (std::size_t k = 0; k < canon.size(); ++k) out[k] = ph.forward(canon[k]);
        return out;
    };

    FeatureSet &fs = ph.features;
    std::int64_t next_id = 0;
    const auto add_path = [&](PathKind kind, const std::vector<Vec3> &canon) -> std::int64_t {
        if (canon.size() < 2) return -1;
        fs.paths.push_back({next_id, kind, map_curve(canon)});
        return next_id++;
    };

    // Horizontal surface arcs, keyed by (slice, window, winding) for linking.
    const auto w_count = static_cast<int>(std::ceil(config.windings));
    const double window = two_pi / static_cast<double>(config.arcs_per_winding);
    std::map<std::tuple<std::size_t, std::size_t, int>, std::int64_t> arcs;
    std::vector<double> slice_z;
    for (std::size_t k = 0; k < config.z_slices; ++k)
        slice_z.push_back(s.z_min + (s.z_max - s.z_min) * (static_cast<double>(k) + 0.5) /
                                        static_cast<double>(config.z_slices));
    for (std::size_t k = 0; k < config.z_slices; ++k)
        for (int w = 0; w < w_count; ++w)
            for (std::size_t a = 0; a < config.arcs_per_winding; ++a) {
                const double t0 = std::max(two_pi * w + window * static_cast<double>(a), config.theta_start);
                const double t1 = std::min(two_pi * w + window * static_cast<double>(a + 1), theta_max);
                if (!(t0 < t1)) continue;
                std::vector<Vec3> canon;
                for (double th : arc_angles(t0, t1, config.point_spacing, s.rho))
                    canon.push_back(canonical(th, slice_z[k], s));
                const std::int64_t id = add_path(PathKind::surface, canon);
                if (id >= 0) arcs[{k, a, w}] = id;
            }

    // Vertical surface paths at fixed angle.
    const double vwindow = two_pi / static_cast<double>(config.verticals_per_winding);
    std::map<std::pair<std::size_t, int>, std::int64_t> verticals;
    const std::vector<double> column_z = linear_steps(s.z_min, s.z_max, config.point_spacing);
    for (int w = 0; w < w_count; ++w)
        for (std::size_t a = 0; a < config.verticals_per_winding; ++a) {
            const double th = two_pi * w + vwindow * (static_cast<double>(a) + 0.5);
            if (th < config.theta_start || th > theta_max) continue;
            std::vector<Vec3> canon;
            for (double z : column_z) canon.push_back(canonical(th, z, s));
            verticals[{a, w}] = add_path(PathKind::surface, canon);
        }

    // Fibers: full-turn horizontal curves and vertical lines between the surface paths.
    for (std::size_t k = 0; k < config.fiber_slices; ++k) {
        const double z = s.z_min + (s.z_max - s.z_min) * (static_cast<double>(k) + 0.25) /
                                       static_cast<double>(config.fiber_slices);
        for (int w = 0; w < w_count; ++w) {
            const double t0 = std::max(two_pi * w, config.theta_start);
            const double t1 = std::min(two_pi * (w + 1), theta_max);
            if (!(t0 < t1)) continue;
            std::vector<Vec3> canon;
            for (double th : arc_angles(t0, t1, config.point_spacing, s.rho)) canon.push_back(canonical(th, z, s));
            add_path(PathKind::fiber_horizontal, canon);
        }
    }
    if (config.fibers_per_winding > 0) {
        const double fwindow = two_pi / static_cast<double>(config.fibers_per_winding);
        for (int w = 0; w < w_count; ++w)
            for (std::size_t a = 0; a < config.fibers_per_winding; ++a) {
                const double th = two_pi * w + fwindow * (static_cast<double>(a) + 0.25);
                if (th < config.theta_start || th > theta_max) continue;
                std::vector<Vec3> canon;
                for (double z : column_z) canon.push_back(canonical(th, z, s));
                add_path(PathKind::fiber_vertical, canon);
            }
    }

    // Links between neighbouring windings, paired at equal spiral phase.
    const auto pairs_at = [&](auto &&canon_a, auto &&canon_b) {
        std::vector<std::pair<Vec3, Vec3>> pairs;
        for (std::size_t q = 0; q < config.pairs_per_link; ++q) {
            const double u = (static_cast<double>(q) + 0.5) / static_cast<double>(config.pairs_per_link);
            pairs.emplace_back(ph.forward(canon_a(u)), ph.forward(canon_b(u)));
        }
        return pairs;
    };
    for (const auto &[key, from] : arcs) {
        const auto [k, a, w] = key;
        const auto it = arcs.find({k, a, w + 1});
        if (it == arcs.end()) continue;
        const double p0 = std::max(window * static_cast<double>(a), config.theta_start - two_pi * w);
        const double p1 = std::min(window * static_cast<double>(a + 1), theta_max - two_pi * (w + 1));
        if (!(p0 < p1)) continue;
        const double z = slice_z[k];
        WindingLink link;
        link.from = from;
        link.to = it->second;
        link.offset = 1;
        link.pairs = pairs_at([&](double u) { return canonical(two_pi * w + p0 + u * (p1 - p0), z, s); },
                              [&](double u) { return canonical(two_pi * (w + 1) + p0 + u * (p1 - p0), z, s); });
        link.votes = static_cast<int>(link.pairs.size());
        fs.links.push_back(std::move(link));
    }
    for (const auto &[key, from] : verticals) {
        const auto [a, w] = key;
        const auto it = verticals.find({a, w + 1});
        if (it == verticals.end()) continue;
        const double th = two_pi * w + vwindow * (static_cast<double>(a) + 0.5);
        WindingLink link;
        link.from = from;
        link.to = it->second;
        link.offset = 1;
        link.pairs = pairs_at([&](double u) { return canonical(th, s.z_min + u * (s.z_max - s.z_min), s); },
                              [&](double u) { return canonical(th + two_pi, s.z_min + u * (s.z_max - s.z_min), s); });
        link.votes = static_cast<int>(link.pairs.size());
        fs.links.push_back(std::move(link));
    }

    // Normals, area-uniform over the observed part of the sheet.
    CounterRng rn(config.seed, normal_stream);
    const double t0sq = config.theta_start * config.theta_start;
    for (std::size_t n = 0; n < config.normal_count; ++n) {
        const double th = std::sqrt(t0sq + rn.uniform() * (theta_max * theta_max - t0sq));
        const double z = rn.uniform(s.z_min, s.z_max);
        NormalSample sample{ph.forward(canonical(th, z, s)), ph.surface_normal(th, z)};
        jitter_point(sample.position, config.jitter, rn);
        fs.normals.push_back(sample);
    }

    // Noise.
    CounterRng rj(config.seed, path_jitter_stream);
    for (Path &p : fs.paths)
        for (Vec3 &q : p.points) jitter_point(q, config.jitter, rj);
    CounterRng rl(config.seed, link_jitter_stream);
    for (WindingLink &l : fs.links)
        for (auto &[a, b] : l.pairs) {
            jitter_point(a, config.jitter, rl);
            jitter_point(b, config.jitter, rl);
        }
    if (config.dropout > 0.0) {
        CounterRng rd(config.seed, dropout_stream);
        std::vector<char> keep(static_cast<std::size_t>(next_id), 1);
        for (const Path &p : fs.paths) keep[static_cast<std::size_t>(p.id)] = rd.uniform() >= config.dropout;
        std::erase_if(fs.paths, [&](const Path &p) { return !keep[static_cast<std::size_t>(p.id)]; });
        std::erase_if(fs.links, [&](const WindingLink &l) {
            return !keep[static_cast<std::size_t>(l.from)] || !keep[static_cast<std::size_t>(l.to)];
        });
    }
    ph.true_offsets.assign(fs.links.size(), 1);
    if (config.false_link_rate > 0.0) {
        CounterRng rf(config.seed, false_link_stream);
        for (WindingLink &l : fs.links)
            if (rf.uniform() < config.false_link_rate) l.offset = 2;
    }

    for (int k = 0; k <= 32; ++k) {
        const double z = s.z_min + (s.z_max - s.z_min) * k / 32.0;
        ph.centerline.push_back(ph.forward({0.0, 0.0, z}));
    }

    const Bounds fitted = sheet_bounds(ph);
    const Vec3 top = sv * Vec3{static_cast<double>(config.dims[0] - 1), static_cast<double>(config.dims[1] - 1),
                               static_cast<double>(config.dims[2] - 1)};
    if (fitted.lo.x < 0.0 || fitted.lo.y < 0.0 || fitted.lo.z < 0.0 || fitted.hi.x > top.x || fitted.hi.y > top.y ||
        fitted.hi.z > top.z)
        throw ConfigError("deformed phantom does not fit inside the volume");
    return ph;
}

// ---------------------------------------------------------------------------
// Raster
// ---------------------------------------------------------------------------

namespace {

class DistanceSplat {
  public:
    DistanceSplat(kernels::VolumeDims dims, double spacing, double radius)
        : dims_(dims), inv_(1.0 / spacing), radius_(radius),
          dist_(dims.count(), std::numeric_limits<float>::infinity()) {}

    void add(const Vec3 &p) {
        const double q[3] = {p.x * inv_, p.y * inv_, p.z * inv_};
        const std::size_t n[3] = {dims_.nx, dims_.ny, dims_.nz};
        long lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max(0L, static_cast<long>(std::ceil(q[a] - radius_)));
            hi[a] = std::min(static_cast<long>(n[a]) - 1, static_cast<long>(std::floor(q[a] + radius_)));
            if (lo[a] > hi[a]) return;
        }
        for (long z = lo[2]; z <= hi[2]; ++z)
            for (long y = lo[1]; y <= hi[1]; ++y)
                for (long x = lo[0]; x <= hi[0]; ++x) {
                    const double dx = static_cast<double>(x) - q[0];
                    const double dy = static_cast<double>(y) - q[1];
                    const double dz = static_cast<double>(z) - q[2];
                    const auto d = static_cast<float>(std::sqrt(dx * dx + dy * dy + dz * dz));
                    float &slot = dist_[dims_.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                                    static_cast<std::size_t>(z))];
                    slot = std::min(slot, d);
                }
    }

    std::vector<float> occupancy(double thickness) const {
        std::vector<float> out(dist_.size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<float>(std::clamp(1.0 - static_cast<double>(dist_[i]) / thickness, 0.0, 1.0));
        return out;
    }

  private:
    kernels::VolumeDims dims_;
    double inv_;
    double radius_;
    std::vector<float> dist_;
};

} // namespace

ProbabilityVolume rasterize(const Phantom &ph, double thickness, double blur) {
    if (!(thickness > 0.0) || !(blur >= 0.0)) throw ConfigError("raster thickness must be positive");
    const double sv = ph.voxel_spacing;
    const SpiralParams &s = ph.truth.spiral;
    const double step = 0.3 * sv;
    DistanceSplat surface(ph.dims, sv, thickness);
    DistanceSplat fiber_h(ph.dims, sv, thickness);
    DistanceSplat fiber_v(ph.dims, sv, thickness);

    const auto bend_at = [&](double z) {
        const double zeta = (z - 0.5 * (s.z_min + s.z_max)) / (0.5 * (s.z_max - s.z_min));
        return ph.config.bend * zeta * zeta * Vec3{0.8, 0.6, 0.0};
    };
    const auto splat = [&](const std::vector<Vec3> &canon, DistanceSplat &target) {
        std::vector<Vec3> row = canon;
        compose_forward_batch(row, ph.truth);
        for (std::size_t k = 0; k < row.size(); ++k) target.add(row[k] + bend_at(canon[k].z));
    };

    const std::vector<double> sheet_angles = arc_angles(ph.config.theta_start, s.theta_max, step, s.rho);
    const std::vector<double> rows = linear_steps(s.z_min, s.z_max, step);
    for (double z : rows) {
        std::vector<Vec3> canon;
        canon.reserve(sheet_angles.size());
        for (double th : sheet_angles) canon.push_back(canonical(th, z, s));
        splat(canon, surface);
    }
    for (double z = s.z_min + 0.5 * ph.config.fiber_spacing; z < s.z_max; z += ph.config.fiber_spacing) {
        std::vector<Vec3> canon;
        for (double th : sheet_angles) canon.push_back(canonical(th, z, s));
        splat(canon, fiber_h);
    }
    for (double th : arc_angles(ph.config.theta_start, s.theta_max, ph.config.fiber_spacing, s.rho)) {
        std::vector<Vec3> canon;
        for (double z : rows) canon.push_back(canonical(th, z, s));
        splat(canon, fiber_v);
    }

    ProbabilityVolume v = ProbabilityVolume::zeros(ph.dims, {sv, sv, sv}, 3);
    v.channels[surface_channel] = surface.occupancy(thickness);
    v.channels[horizontal_fiber_channel] = fiber_h.occupancy(thickness);
    v.channels[vertical_fiber_channel] = fiber_v.occupancy(thickness);
    if (blur > 0.0)
        for (auto &c : v.channels) {
            gaussian_blur(c, ph.dims, blur);
            for (float &x : c) x = std::clamp(x, 0.0f, 1.0f);
        }
    return v;
}

TriMesh gt_mesh(const Phantom &ph, double dtheta, double dz) {
    QuadMesh q = extract_mesh(ph.truth, dtheta, dz);
    if (ph.config.bend != 0.0)
        for (std::size_t j = 0; j < q.nj; ++j)
            for (std::size_t i = 0; i < q.ni; ++i) {
                const SpiralParams &s = ph.truth.spiral;
                const double z = std::min(s.z_min + static_cast<double>(j) * dz, s.z_max);
                const double zeta = (z - 0.5 * (s.z_min + s.z_max)) / (0.5 * (s.z_max - s.z_min));
                q.vertices[q.index(i, j)] += ph.config.bend * zeta * zeta * Vec3{0.8, 0.6, 0.0};
            }
    const TriMesh full = triangulate(q);
    // Keep faces whose vertices all lie at or beyond theta_start.
    std::vector<std::int64_t> remap(full.vertices.size(), -1);
    TriMesh out;
    for (const auto &f : full.faces) {
        bool inside = true;
        for (std::uint32_t v : f) inside &= q.theta(v % q.ni) >= ph.config.theta_start - 1e-12;
        if (!inside) continue;
        std::array<std::uint32_t, 3> nf{};
        for (int c = 0; c < 3; ++c) {
            const std::uint32_t v = f[c];
            if (remap[v] < 0) {
                remap[v] = static_cast<std::int64_t>(out.vertices.size());
                out.vertices.push_back(full.vertices[v]);
                if (!full.labels.empty()) out.labels.push_back(full.labels[v]);
                if (!full.uv.empty()) out.uv.push_back(full.uv[v]);
            }
            nf[c] = static_cast<std::uint32_t>(remap[v]);
        }
        out.faces.push_back(nf);
    }
    return out;
}

} // namespace scroll
