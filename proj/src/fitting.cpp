#include "scroll/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "scroll/error.hpp"
#include "scroll/random.hpp"

namespace scroll {

void FitConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (points_per_path < 1 || winding_points < 1 || normal_points < 1 || regularization_points < 1 ||
        paths_per_batch < 1 || center_samples < 1)
        throw ConfigError("sample counts must be >= 1");
    if (effective_distance_start() > total_steps) throw ConfigError("distance_start_step exceeds total_steps");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
        throw ConfigError("invalid Adam hyperparameters");
    if (checkpoint_every < 0 || history_every < 1) throw ConfigError("invalid checkpoint/history interval");
    if (rho && !(*rho > 0.0)) throw ConfigError("rho override must be > 0");
    if (!(normal_epsilon > 0.0)) throw ConfigError("normal_epsilon must be > 0");
    if (!(max_velocity > 0.0) || !(12.0 * max_velocity < static_cast<double>(layout.euler_steps)))
        throw ConfigError("max_velocity must lie in (0, euler_steps / 12)");
    weights.validate();
}

std::int64_t FitConfig::effective_distance_start() const {
    return distance_start_step >= 0 ? distance_start_step : scaled_distance_start(total_steps);
}

namespace {

template <class F> void for_each_point(const FeatureSet &f, F &&fn) {
    for (const Path &p : f.paths)
        for (const Vec3 &x : p.points) fn(x);
    for (const NormalSample &n : f.normals) fn(n.position);
    for (const WindingLink &l : f.links)
        for (const auto &pr : l.pairs) {
            fn(pr.first);
            fn(pr.second);
        }
}

// Returns k distinct indices of [0, n) (all of them if k >= n), in draw order.
std::vector<std::size_t> draw_distinct(std::size_t n, std::size_t k, CounterRng &rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (k >= n) return idx;
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
}

enum Stream : std::uint64_t { paths_stream, points_stream, pairs_stream, normals_stream, stretch_stream };

std::uint64_t stream_of(std::int64_t step, Stream s) { return static_cast<std::uint64_t>(step) * 8 + s; }

} // namespace

Vec3 initial_center(const FeatureSet &features, const FitConfig &config, double z) {
    const std::vector<Vec3> &c = config.centerline;
    if (!c.empty()) {
        if (c.size() == 1 || z <= c.front().z) return {c.front().x, c.front().y, z};
        if (z >= c.back().z) return {c.back().x, c.back().y, z};
        const auto hi = std::upper_bound(c.begin(), c.end(), z, [](double v, const Vec3 &p) { return v < p.z; });
        const Vec3 &b = *hi;
        const Vec3 &a = *(hi - 1);
        const double w = (z - a.z) / (b.z - a.z);
        return {a.x + w * (b.x - a.x), a.y + w * (b.y - a.y), z};
    }
    double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    double hi[2] = {-lo[0], -lo[1]};
    for_each_point(features, [&](const Vec3 &p) {
        lo[0] = std::min(lo[0], p.x);
        lo[1] = std::min(lo[1], p.y);
        hi[0] = std::max(hi[0], p.x);
        hi[1] = std::max(hi[1], p.y);
    });
    if (!(lo[0] <= hi[0])) return {0.0, 0.0, z};
    return {0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), z};
}

ComposedTransform init_parameters(const FeatureSet &features, const FitConfig &config) {
    const bool has_surface = std::any_of(features.paths.begin(), features.paths.end(), [](const Path &p) {
        return p.kind == PathKind::surface && !p.points.empty();
    });
    if (!has_surface) throw ConfigError("fitting needs at least one surface path");

    SpiralParams spiral;
    spiral.direction = config.direction;
    double zlo = std::numeric_limits<double>::infinity();
    double zhi = -zlo;
    for (const Path &p : features.paths)
        for (const Vec3 &x : p.points) {
            zlo = std::min(zlo, x.z);
            zhi = std::max(zhi, x.z);
        }
    if (!(zlo < zhi)) {
        zlo -= 0.5;
        zhi += 0.5;
    }
    spiral.z_min = zlo;
    spiral.z_max = zhi;

    if (config.rho) {
        spiral.rho = *config.rho;
    } else {
        std::vector<double> per_winding;
        for (const WindingLink &l : features.links) {
            if (l.offset == 0) continue;
            for (const auto &pr : l.pairs)
                per_winding.push_back(norm(pr.second - pr.first) / std::abs(static_cast<double>(l.offset)));
        }
        if (per_winding.empty()) throw ConfigError("no winding links to estimate rho from; pass rho explicitly");
        const auto mid = per_winding.begin() + static_cast<std::ptrdiff_t>(per_winding.size() / 2);
        std::nth_element(per_winding.begin(), mid, per_winding.end());
        double median = *mid;
        if (per_winding.size() % 2 == 0) median = 0.5 * (median + *std::max_element(per_winding.begin(), mid));
        spiral.rho = median / two_pi;
    }
    if (!(spiral.rho > 0.0)) throw ConfigError("estimated rho is not positive");

    double max_radius = 0.0;
    for_each_point(features, [&](const Vec3 &p) {
        const Vec3 c = initial_center(features, config, p.z);
        max_radius = std::max(max_radius, std::hypot(p.x - c.x, p.y - c.y));
    });
    spiral.theta_max = (max_radius + spiral.spacing()) / spiral.rho;

    ComposedTransform t = make_identity_transform(spiral, config.layout);
    for (std::size_t k = 0; k < t.affine.keypoints.size(); ++k) {
        const Vec3 c = initial_center(features, config, t.affine.station_z(k));
        t.affine.keypoints[k].tx = c.x;
        t.affine.keypoints[k].ty = c.y;
    }
    return t;
}

LossBatch sample_batch(const FeatureSet &features, const FitConfig &config, const FitMetadata &meta,
                       std::int64_t step) {
    LossBatch b;
    b.normal_epsilon = config.normal_epsilon;
    b.enabled = config.enabled;
    if (step < config.effective_distance_start()) b.enabled[static_cast<std::size_t>(LossTerm::distance)] = false;

    CounterRng path_rng(config.seed, stream_of(step, paths_stream));
    CounterRng point_rng(config.seed, stream_of(step, points_stream));
    for (std::size_t pi : draw_distinct(features.paths.size(), config.paths_per_batch, path_rng)) {
        const Path &p = features.paths[pi];
        if (p.points.empty()) continue;
        PathSample s;
        s.kind = p.kind;
        std::vector<std::size_t> idx = draw_distinct(p.points.size(), config.points_per_path, point_rng);
        std::sort(idx.begin(), idx.end());
        s.points.reserve(idx.size());
        for (std::size_t i : idx) s.points.push_back(p.points[i]);
        b.paths.push_back(std::move(s));
    }

    std::vector<std::size_t> link_start;
    std::size_t pair_total = 0;
    for (const WindingLink &l : features.links) {
        link_start.push_back(pair_total);
        pair_total += l.pairs.size();
    }
    CounterRng pair_rng(config.seed, stream_of(step, pairs_stream));
    for (std::size_t gi : draw_distinct(pair_total, config.winding_points, pair_rng)) {
        const std::size_t li = static_cast<std::size_t>(std::upper_bound(link_start.begin(), link_start.end(), gi) -
                                                        link_start.begin()) - 1;
        const WindingLink &l = features.links[li];
        const auto &pr = l.pairs[gi - link_start[li]];
        b.pairs.push_back({pr.first, pr.second, l.offset});
    }

    CounterRng normal_rng(config.seed, stream_of(step, normals_stream));
    for (std::size_t i : draw_distinct(features.normals.size(), config.normal_points, normal_rng))
        b.normals.push_back(features.normals[i]);

    CounterRng stretch_rng(config.seed, stream_of(step, stretch_stream));
    for (std::size_t i : draw_distinct(features.normals.size(), config.regularization_points, stretch_rng)) {
        const NormalSample &n = features.normals[i];
        Vec3 d;
        for (int attempt = 0; attempt < 16 && norm(d) < 1e-6; ++attempt) {
            const Vec3 v{stretch_rng.normal(), stretch_rng.normal(), stretch_rng.normal()};
            d = v - dot(v, n.normal) * n.normal;
        }
        if (norm(d) < 1e-6) continue;
        b.stretch.push_back({n.position, normalized(d)});
    }

    b.center_z = meta.center_z;
    b.center_reference = meta.center_reference;
    return b;
}

namespace {

std::vector<double> normalisation_scales(const ComposedTransform &t) {
    const ParamLayout l = ParamLayout::of(t);
    std::vector<double> s(l.size, 1.0);
    const Vec3 lo = t.flow.fine.origin;
    const Vec3 hi = t.flow.fine.upper_corner();
    const double length = 0.5 * std::max(hi.x - lo.x, hi.y - lo.y);
    for (std::size_t k = 0; k < t.affine.keypoints.size(); ++k) s[4 * k + 2] = s[4 * k + 3] = length;
    std::fill(s.begin() + static_cast<std::ptrdiff_t>(l.coarse_offset),
              s.begin() + static_cast<std::ptrdiff_t>(l.fine_offset + l.fine_count), length);
    s[l.rho_index] = t.spiral.rho;
    return s;
}

} // namespace

FitState init_fit(const FeatureSet &features, const FitConfig &config) {
    config.validate();
    FitState st;
    st.transform = init_parameters(features, config);
    st.params = pack_parameters(st.transform);
    st.scales = normalisation_scales(st.transform);
    st.adam_m.assign(st.params.size(), 0.0);
    st.adam_v.assign(st.params.size(), 0.0);
    st.meta.seed = config.seed;
    const SpiralParams &s = st.transform.spiral;
    for (std::size_t i = 0; i < config.center_samples; ++i) {
        const double z = s.z_min + (s.z_max - s.z_min) * (static_cast<double>(i) + 0.5) /
                                       static_cast<double>(config.center_samples);
        st.meta.center_z.push_back(z);
        st.meta.center_reference.push_back(compose_forward({0.0, 0.0, z}, st.transform));
    }
    return st;
}

void project_parameters(std::span<double> params, const ComposedTransform &t, const FitConfig &config) {
    const ParamLayout layout = ParamLayout::of(t);
    auto clamp_grid = [&](std::size_t offset, std::size_t count, const VectorGrid &g) {
        const double b = config.max_velocity * std::min({g.spacing.x, g.spacing.y, g.spacing.z});
        for (std::size_t i = offset; i < offset + count; ++i) params[i] = std::clamp(params[i], -b, b);
    };
    clamp_grid(layout.coarse_offset, layout.coarse_count, t.flow.coarse);
    clamp_grid(layout.fine_offset, layout.fine_count, t.flow.fine);
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<const double> scales,
                 std::span<double> m, std::span<double> v, std::int64_t t, const FitConfig &config) {
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] * scales[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mh = m[i] / c1;
        const double vh = v[i] / c2;
        params[i] -= scales[i] * (config.learning_rate * mh / (std::sqrt(vh) + config.adam_eps));
    }
}

void run_fit(FitState &state, const FeatureSet &features, const FitConfig &config, std::int64_t until_step,
             const StepCallback &callback) {
    for (std::int64_t step = state.step; step < until_step; ++step) {
        const LossBatch batch = sample_batch(features, config, state.meta, step);
        Evaluation ev;
        try {
            ev = evaluate_with_gradients(batch, state.transform, config.weights);
        } catch (const NumericError &e) {
            throw NumericError("step " + std::to_string(step) + ": " + e.what());
        }
        if (!std::isfinite(ev.values.total))
            throw NumericError("step " + std::to_string(step) + ": non-finite total loss");
        if (step % config.history_every == 0) state.meta.history.push_back({step, ev.values.terms, ev.values.total});

        std::vector<double> next = state.params;
        std::vector<double> m = state.adam_m;
        std::vector<double> v = state.adam_v;
        adam_update(next, ev.gradients.flat(), state.scales, m, v, step + 1, config);
        project_parameters(next, state.transform, config);
        if (!std::all_of(next.begin(), next.end(), [](double x) { return std::isfinite(x); }) ||
            !(next[ParamLayout::of(state.transform).rho_index] > 0.0))
            throw NumericError("step " + std::to_string(step) + ": parameter update left the valid range");
        state.params = std::move(next);
        state.adam_m = std::move(m);
        state.adam_v = std::move(v);
        unpack_parameters(state.params, state.transform);
        state.step = step + 1;
        state.meta.steps = state.step;
        if (callback) callback(state);
    }
}

void round_to_storage(ComposedTransform &t) {
    for (double &v : t.flow.coarse.data) v = static_cast<float>(v);
    for (double &v : t.flow.fine.data) v = static_cast<float>(v);
    for (double &v : t.gap.values) v = static_cast<float>(v);
}

LossValues reevaluate(const FittedModel &model, const FeatureSet &features, const FitConfig &config) {
    FitConfig c = config;
    c.seed = model.meta.seed;
    const LossBatch batch = sample_batch(features, c, model.meta, model.meta.steps);
    return evaluate_terms(batch, model.transform, config.weights);
}

FittedModel finish_fit(const FitState &state, const FeatureSet &features, const FitConfig &config) {
    FittedModel model;
    model.transform = state.transform;
    round_to_storage(model.transform);
    model.meta = state.meta;
    const LossValues v = reevaluate(model, features, config);
    model.meta.final_loss = v.total;
    model.meta.final_terms = v.terms;
    return model;
}

FittedModel fit(const FeatureSet &features, const FitConfig &config, const StepCallback &callback) {
    FitState state = init_fit(features, config);
    run_fit(state, features, config, config.total_steps, callback);
    return finish_fit(state, features, config);
}

} // namespace scroll
