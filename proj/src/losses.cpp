#include "scroll/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scroll/error.hpp"

namespace scroll {

const char *loss_term_name(LossTerm term) noexcept {
    switch (term) {
    case LossTerm::normal: return "normal";
    case LossTerm::radius: return "radius";
    case LossTerm::windings: return "windings";
    case LossTerm::distance: return "distance";
    case LossTerm::fiber: return "fiber";
    case LossTerm::stretch: return "stretch";
    case LossTerm::center: return "center";
    }
    return "?";
}

double LossWeights::of(LossTerm term) const noexcept {
    switch (term) {
    case LossTerm::normal: return normal;
    case LossTerm::radius: return radius;
    case LossTerm::windings: return windings;
    case LossTerm::distance: return distance;
    case LossTerm::fiber: return fiber_direction;
    case LossTerm::stretch: return stretch;
    case LossTerm::center: return center;
    }
    return 0.0;
}

void LossWeights::validate() const {
    for (std::size_t i = 0; i < loss_term_count; ++i) {
        const double w = of(static_cast<LossTerm>(i));
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ConfigError(std::string("loss weight for ") + loss_term_name(static_cast<LossTerm>(i)) +
                              " must be finite and >= 0");
    }
}

std::vector<Vec3> batch_queries(const LossBatch &batch) {
    std::vector<Vec3> q;
    for (const PathSample &p : batch.paths) q.insert(q.end(), p.points.begin(), p.points.end());
    for (const NormalSample &n : batch.normals) {
        q.push_back(n.position);
        q.push_back(n.position + batch.normal_epsilon * n.normal);
    }
    for (const PointPair &p : batch.pairs) {
        q.push_back(p.a);
        q.push_back(p.b);
    }
    for (const StretchSample &s : batch.stretch) {
        q.push_back(s.position);
        q.push_back(s.position + s.delta);
    }
    return q;
}

namespace {

struct Signature {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    void add(std::int64_t v) noexcept {
        h ^= static_cast<std::uint64_t>(v);
        h *= 0x100000001b3ULL;
    }
};

double sign_of(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct Polar {
    double radius = 0.0;
    double phi = 0.0;
    Vec3 d_radius; ///< gradient of radius wrt the point
    Vec3 d_phi;    ///< gradient of phi wrt the point
};

Polar polar_of(const Vec3 &c, WindingDirection dir) {
    Polar p;
    p.radius = std::hypot(c.x, c.y);
    if (p.radius == 0.0) return p;
    p.phi = angle_coordinate(c, dir);
    const double ys = y_sign(dir);
    const double r2 = p.radius * p.radius;
    p.d_radius = {c.x / p.radius, c.y / p.radius, 0.0};
    p.d_phi = {-ys * c.y / r2, ys * c.x / r2, 0.0};
    return p;
}

// Mean absolute deviation from the mean; dv receives d(result)/dv.
double mean_abs_deviation(std::span<const double> v, std::span<double> dv, Signature &sig) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double total = 0.0;
    double sign_mean = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double s = sign_of(v[i] - mean);
        sig.add(static_cast<std::int64_t>(s));
        total += std::fabs(v[i] - mean);
        dv[i] = s;
        sign_mean += s;
    }
    sign_mean /= n;
    for (double &d : dv) d = (d - sign_mean) / n;
    return total / n;
}

void check_finite(double v, LossTerm term, std::size_t sample) {
    if (!std::isfinite(v))
        throw NumericError(std::string("non-finite ") + loss_term_name(term) + " loss at sample " +
                           std::to_string(sample));
}

} // namespace

LossValues score_terms(const LossBatch &batch, std::span<const Vec3> canonical, std::span<const Vec3> center_images,
                       const SpiralParams &spiral, const LossWeights &weights, TermAdjoints *adj) {
    LossValues out;
    Signature sig;
    const double rho = spiral.rho;
    const double spacing = spiral.spacing();
    const WindingDirection dir = spiral.direction;
    auto add_grad = [&](std::size_t q, const Vec3 &g) {
        if (adj) adj->canonical[q] += g;
    };
    auto set_term = [&](LossTerm t, double value) { out.terms[static_cast<std::size_t>(t)] = value; };

    // Paths: radius, distance, fiber direction.
    std::size_t cursor = 0;
    {
        const bool use_radius = batch.is_enabled(LossTerm::radius);
        const bool use_distance = batch.is_enabled(LossTerm::distance);
        const bool use_fiber = batch.is_enabled(LossTerm::fiber);
        std::size_t n_paths = 0;
        std::size_t n_fibers = 0;
        for (const PathSample &p : batch.paths) {
            if (p.points.empty()) continue;
            ++n_paths;
            if (p.kind != PathKind::surface) ++n_fibers;
        }
        const double w_radius = n_paths ? weights.radius / static_cast<double>(n_paths) : 0.0;
        const double w_distance = n_paths ? weights.distance / static_cast<double>(n_paths) : 0.0;
        const double w_fiber = n_fibers ? weights.fiber_direction / static_cast<double>(n_fibers) : 0.0;
        double radius_sum = 0.0;
        double distance_sum = 0.0;
        double fiber_sum = 0.0;
        std::vector<Polar> polar;
        std::vector<double> values;
        std::vector<double> dv;
        for (std::size_t pi = 0; pi < batch.paths.size(); ++pi) {
            const PathSample &path = batch.paths[pi];
            const std::size_t n = path.points.size();
            const std::size_t base = cursor;
            cursor += n;
            if (n == 0) continue;
            polar.resize(n);
            values.resize(n);
            dv.resize(n);
            for (std::size_t i = 0; i < n; ++i) polar[i] = polar_of(canonical[base + i], dir);
            // Unwrapped angles along the path.
            std::vector<double> phi(n);
            phi[0] = polar[0].phi;
            for (std::size_t i = 1; i < n; ++i) {
                phi[i] = unwrap_near(polar[i].phi, phi[i - 1]);
                sig.add(std::llround((phi[i] - polar[i].phi) / two_pi));
            }
            if (use_radius) {
                for (std::size_t i = 0; i < n; ++i) values[i] = polar[i].radius - rho * phi[i];
                const double l = mean_abs_deviation(values, dv, sig);
                check_finite(l, LossTerm::radius, pi);
                radius_sum += l;
                if (adj) {
                    for (std::size_t i = 0; i < n; ++i) {
                        const double g = w_radius * dv[i];
                        add_grad(base + i, g * (polar[i].d_radius - rho * polar[i].d_phi));
                        adj->rho += g * -phi[i];
                    }
                }
            }
            if (use_distance) {
                double sum = 0.0;
                const double scale = w_distance / static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double r = polar[i].radius - rho * polar[i].phi;
                    const double target = nearest_winding_radius(r, spacing);
                    const double k = std::round(target / spacing);
                    const double s = sign_of(r - target);
                    sig.add(static_cast<std::int64_t>(k));
                    sig.add(static_cast<std::int64_t>(s));
                    sum += std::fabs(r - target);
                    if (adj) {
                        add_grad(base + i, (scale * s) * (polar[i].d_radius - rho * polar[i].d_phi));
                        adj->rho += scale * s * (-polar[i].phi - two_pi * k);
                    }
                }
                const double l = sum / static_cast<double>(n);
                check_finite(l, LossTerm::distance, pi);
                distance_sum += l;
            }
            if (use_fiber && path.kind != PathKind::surface) {
                const bool horizontal = path.kind == PathKind::fiber_horizontal;
                for (std::size_t i = 0; i < n; ++i) values[i] = horizontal ? canonical[base + i].z : phi[i];
                const double l = mean_abs_deviation(values, dv, sig);
                check_finite(l, LossTerm::fiber, pi);
                fiber_sum += l;
                if (adj) {
                    for (std::size_t i = 0; i < n; ++i) {
                        const double g = w_fiber * dv[i];
                        add_grad(base + i, horizontal ? Vec3{0.0, 0.0, g} : g * polar[i].d_phi);
                    }
                }
            }
        }
        if (n_paths) {
            set_term(LossTerm::radius, use_radius ? radius_sum / static_cast<double>(n_paths) : 0.0);
            set_term(LossTerm::distance, use_distance ? distance_sum / static_cast<double>(n_paths) : 0.0);
        }
        if (n_fibers) set_term(LossTerm::fiber, use_fiber ? fiber_sum / static_cast<double>(n_fibers) : 0.0);
    }

    // Normals.
    {
        const std::size_t base = cursor;
        cursor += 2 * batch.normals.size();
        if (batch.is_enabled(LossTerm::normal) && !batch.normals.empty()) {
            struct Item {
                std::size_t index;
                double cos;
                Vec3 radial, unit_d;
                double radius, len;
            };
            std::vector<Item> used;
            used.reserve(batch.normals.size());
            for (std::size_t i = 0; i < batch.normals.size(); ++i) {
                const Vec3 &c1 = canonical[base + 2 * i];
                const Vec3 &c2 = canonical[base + 2 * i + 1];
                const double radius = std::hypot(c1.x, c1.y);
                const Vec3 d = c2 - c1;
                const double len = norm(d);
                if (radius == 0.0 || len == 0.0) {
                    ++out.skipped_normals;
                    continue;
                }
                const Vec3 radial{c1.x / radius, c1.y / radius, 0.0};
                const Vec3 unit_d = d / len;
                const double cos = dot(radial, unit_d);
                check_finite(cos, LossTerm::normal, i);
                used.push_back({i, cos, radial, unit_d, radius, len});
            }
            double sum = 0.0;
            for (const Item &it : used) sum += 1.0 - it.cos;
            if (!used.empty()) {
                const double m = static_cast<double>(used.size());
                set_term(LossTerm::normal, sum / m);
                if (adj) {
                    const double w = weights.normal / m;
                    for (const Item &it : used) {
                        // d cos / d d and d cos / d radial.
                        const Vec3 dcos_dd = (it.radial - it.cos * it.unit_d) / it.len;
                        const Vec3 dcos_dr{(it.unit_d.x - it.cos * it.radial.x) / it.radius,
                                           (it.unit_d.y - it.cos * it.radial.y) / it.radius, 0.0};
                        add_grad(base + 2 * it.index, w * (dcos_dd - dcos_dr));
                        add_grad(base + 2 * it.index + 1, -w * dcos_dd);
                    }
                }
            }
        }
    }

    // Winding pairs.
    {
        const std::size_t base = cursor;
        cursor += 2 * batch.pairs.size();
        if (batch.is_enabled(LossTerm::windings) && !batch.pairs.empty()) {
            const double scale = weights.windings / static_cast<double>(batch.pairs.size());
            double sum = 0.0;
            for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
                const Polar a = polar_of(canonical[base + 2 * i], dir);
                const Polar b = polar_of(canonical[base + 2 * i + 1], dir);
                const double phi_b = unwrap_near(b.phi, a.phi);
                sig.add(std::llround((phi_b - b.phi) / two_pi));
                const double k = static_cast<double>(batch.pairs[i].offset);
                const double resid = (b.radius - rho * phi_b) - (a.radius - rho * a.phi) - k * spacing;
                check_finite(resid, LossTerm::windings, i);
                const double s = sign_of(resid);
                sig.add(static_cast<std::int64_t>(s));
                sum += std::fabs(resid);
                if (adj) {
                    add_grad(base + 2 * i, -(scale * s) * (a.d_radius - rho * a.d_phi));
                    add_grad(base + 2 * i + 1, (scale * s) * (b.d_radius - rho * b.d_phi));
                    adj->rho += scale * s * (-phi_b + a.phi - two_pi * k);
                }
            }
            set_term(LossTerm::windings, sum / static_cast<double>(batch.pairs.size()));
        }
    }

    // Stretch.
    {
        const std::size_t base = cursor;
        cursor += 2 * batch.stretch.size();
        if (batch.is_enabled(LossTerm::stretch) && !batch.stretch.empty()) {
            const double scale = weights.stretch / static_cast<double>(batch.stretch.size());
            double sum = 0.0;
            for (std::size_t i = 0; i < batch.stretch.size(); ++i) {
                const Vec3 d = canonical[base + 2 * i + 1] - canonical[base + 2 * i];
                const double len = norm(d);
                check_finite(len, LossTerm::stretch, i);
                const double s = sign_of(len - 1.0);
                sig.add(static_cast<std::int64_t>(s));
                sum += std::fabs(len - 1.0);
                if (adj && len > 0.0) {
                    const Vec3 g = (scale * s / len) * d;
                    add_grad(base + 2 * i + 1, g);
                    add_grad(base + 2 * i, -g);
                }
            }
            set_term(LossTerm::stretch, sum / static_cast<double>(batch.stretch.size()));
        }
    }

    // Centerline.
    if (batch.is_enabled(LossTerm::center) && !batch.center_z.empty()) {
        const double n = static_cast<double>(batch.center_z.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < batch.center_z.size(); ++i) {
            const double dx = center_images[i].x - batch.center_reference[i].x;
            const double dy = center_images[i].y - batch.center_reference[i].y;
            const double v = dx * dx + dy * dy;
            check_finite(v, LossTerm::center, i);
            sum += v;
            if (adj) adj->center[i] += (2.0 * weights.center / n) * Vec3{dx, dy, 0.0};
        }
        set_term(LossTerm::center, sum / n);
    }

    for (std::size_t i = 0; i < loss_term_count; ++i) {
        if (batch.enabled[i]) out.total += weights.of(static_cast<LossTerm>(i)) * out.terms[i];
    }
    out.branch_signature = sig.h;
    return out;
}

LossValues evaluate_terms(const LossBatch &batch, const ComposedTransform &t, const LossWeights &weights) {
    std::vector<Vec3> canonical = batch_queries(batch);
    compose_inverse_batch(canonical, t);
    std::vector<Vec3> centers;
    centers.reserve(batch.center_z.size());
    for (double z : batch.center_z) centers.push_back(compose_forward({0.0, 0.0, z}, t));
    return score_terms(batch, canonical, centers, t.spiral, weights);
}

namespace {

LossBatch single_term(LossTerm term) {
    LossBatch b;
    b.enabled.fill(false);
    b.enabled[static_cast<std::size_t>(term)] = true;
    return b;
}

double only(const LossBatch &b, const ComposedTransform &t, LossTerm term) {
    return evaluate_terms(b, t, LossWeights{}).term(term);
}

} // namespace

double loss_normal(std::span<const NormalSample> samples, const ComposedTransform &t, double epsilon) {
    LossBatch b = single_term(LossTerm::normal);
    b.normals.assign(samples.begin(), samples.end());
    b.normal_epsilon = epsilon;
    return only(b, t, LossTerm::normal);
}

double loss_radius(std::span<const Vec3> path, const ComposedTransform &t) {
    LossBatch b = single_term(LossTerm::radius);
    b.paths.push_back({PathKind::surface, {path.begin(), path.end()}});
    return only(b, t, LossTerm::radius);
}

double loss_windings(std::span<const PointPair> pairs, const ComposedTransform &t) {
    LossBatch b = single_term(LossTerm::windings);
    b.pairs.assign(pairs.begin(), pairs.end());
    return only(b, t, LossTerm::windings);
}

double loss_distance(std::span<const Vec3> path, const ComposedTransform &t) {
    LossBatch b = single_term(LossTerm::distance);
    b.paths.push_back({PathKind::surface, {path.begin(), path.end()}});
    return only(b, t, LossTerm::distance);
}

double loss_fiber_direction(const PathSample &path, const ComposedTransform &t) {
    if (path.kind == PathKind::surface) throw ConfigError("fiber direction loss needs a fiber path");
    LossBatch b = single_term(LossTerm::fiber);
    b.paths.push_back(path);
    return only(b, t, LossTerm::fiber);
}

double loss_stretch(std::span<const StretchSample> samples, const ComposedTransform &t) {
    LossBatch b = single_term(LossTerm::stretch);
    b.stretch.assign(samples.begin(), samples.end());
    return only(b, t, LossTerm::stretch);
}

double loss_center(const ComposedTransform &t, std::span<const double> z, std::span<const Vec3> reference) {
    if (z.size() != reference.size()) throw ConfigError("center reference must match the z samples");
    LossBatch b = single_term(LossTerm::center);
    b.center_z.assign(z.begin(), z.end());
    b.center_reference.assign(reference.begin(), reference.end());
    return only(b, t, LossTerm::center);
}

LossValues total_loss(const LossBatch &batch, const ComposedTransform &t, const LossWeights &weights,
                      std::int64_t step, std::int64_t distance_start_step) {
    if (step >= distance_start_step) return evaluate_terms(batch, t, weights);
    LossBatch b = batch;
    b.enabled[static_cast<std::size_t>(LossTerm::distance)] = false;
    return evaluate_terms(b, t, weights);
}

std::int64_t scaled_distance_start(std::int64_t total_steps, std::int64_t reference_start,
                                   std::int64_t reference_total) {
    return total_steps * reference_start / reference_total;
}

} // namespace scroll
