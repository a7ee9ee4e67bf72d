#include "scroll/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scroll/error.hpp"
#include "scroll/parallel.hpp"

namespace scroll {

ParamLayout ParamLayout::of(const ComposedTransform &t) {
    ParamLayout l;
    l.affine_offset = 0;
    l.affine_count = 4 * t.affine.keypoints.size();
    l.coarse_offset = l.affine_offset + l.affine_count;
    l.coarse_count = t.flow.coarse.data.size();
    l.fine_offset = l.coarse_offset + l.coarse_count;
    l.fine_count = t.flow.fine.data.size();
    l.gap_offset = l.fine_offset + l.fine_count;
    l.gap_count = t.gap.values.size();
    l.rho_index = l.gap_offset + l.gap_count;
    l.size = l.rho_index + 1;
    return l;
}

std::vector<double> pack_parameters(const ComposedTransform &t) {
    const ParamLayout l = ParamLayout::of(t);
    std::vector<double> p(l.size);
    for (std::size_t k = 0; k < t.affine.keypoints.size(); ++k) {
        const AffineKeypoint &kp = t.affine.keypoints[k];
        p[4 * k] = kp.log_sx;
        p[4 * k + 1] = kp.log_sy;
        p[4 * k + 2] = kp.tx;
        p[4 * k + 3] = kp.ty;
    }
    std::copy(t.flow.coarse.data.begin(), t.flow.coarse.data.end(), p.begin() + l.coarse_offset);
    std::copy(t.flow.fine.data.begin(), t.flow.fine.data.end(), p.begin() + l.fine_offset);
    std::copy(t.gap.values.begin(), t.gap.values.end(), p.begin() + l.gap_offset);
    p[l.rho_index] = t.spiral.rho;
    return p;
}

void unpack_parameters(std::span<const double> p, ComposedTransform &t) {
    const ParamLayout l = ParamLayout::of(t);
    if (p.size() != l.size)
        throw ConfigError("parameter vector has " + std::to_string(p.size()) + " entries, transform needs " +
                          std::to_string(l.size));
    for (std::size_t k = 0; k < t.affine.keypoints.size(); ++k)
        t.affine.keypoints[k] = {p[4 * k], p[4 * k + 1], p[4 * k + 2], p[4 * k + 3]};
    auto section = [&](std::size_t off, std::size_t n) { return p.subspan(off, n); };
    std::ranges::copy(section(l.coarse_offset, l.coarse_count), t.flow.coarse.data.begin());
    std::ranges::copy(section(l.fine_offset, l.fine_count), t.flow.fine.data.begin());
    std::ranges::copy(section(l.gap_offset, l.gap_count), t.gap.values.begin());
    t.spiral.rho = p[l.rho_index];
}

void ParameterGradients::add(const ParameterGradients &other) {
    if (!(other.layout_ == layout_)) throw ConfigError("gradient layouts differ");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

void ParameterGradients::scale(double s) noexcept {
    for (double &v : values_) v *= s;
}

bool ParameterGradients::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

struct Signature {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    void add(std::int64_t v) noexcept {
        h ^= static_cast<std::uint64_t>(v);
        h *= 0x100000001b3ULL;
    }
};

// Cell location along one axis, with the same clamping as the interpolation kernel.
struct AxisCell {
    long index;
    double frac;
    double d_frac; ///< d frac / d position; zero where clamped
};

AxisCell axis_cell(double pos, double origin, double inv_spacing, std::uint32_t n) {
    const double q = (pos - origin) * inv_spacing;
    const double hi = static_cast<double>(n - 1);
    double v = q > 0.0 ? q : 0.0;
    v = v < hi ? v : hi;
    long i = static_cast<long>(v);
    const long last = static_cast<long>(n) - 2;
    i = i < last ? i : last;
    return {i, v - static_cast<double>(i), (q > 0.0 && q < hi) ? inv_spacing : 0.0};
}

void sign_cells(const kernels::GridView &g, const Vec3 &p, Signature &sig) {
    sig.add(axis_cell(p.x, g.origin[0], g.inv_spacing[0], g.dims[0]).index);
    sig.add(axis_cell(p.y, g.origin[1], g.inv_spacing[1], g.dims[1]).index);
    sig.add(axis_cell(p.z, g.origin[2], g.inv_spacing[2], g.dims[2]).index);
}

// Adds h * dL/du to the grid nodes around p and returns h * (du/dp)^T g.
Vec3 trilinear_backward(const VectorGrid &grid, const Vec3 &p, const Vec3 &g, double h, std::span<double> node_grads) {
    const kernels::GridView v = grid.view();
    const AxisCell c[3] = {axis_cell(p.x, v.origin[0], v.inv_spacing[0], v.dims[0]),
                           axis_cell(p.y, v.origin[1], v.inv_spacing[1], v.dims[1]),
                           axis_cell(p.z, v.origin[2], v.inv_spacing[2], v.dims[2])};
    double jt[3] = {0.0, 0.0, 0.0};
    for (int corner = 0; corner < 8; ++corner) {
        const int b[3] = {corner & 1, (corner >> 1) & 1, (corner >> 2) & 1};
        double w1[3];
        double dw1[3];
        for (int a = 0; a < 3; ++a) {
            w1[a] = b[a] ? c[a].frac : 1.0 - c[a].frac;
            dw1[a] = b[a] ? c[a].d_frac : -c[a].d_frac;
        }
        const double w = w1[0] * w1[1] * w1[2];
        const std::size_t node = grid.node_index(static_cast<std::size_t>(c[0].index + b[0]),
                                                 static_cast<std::size_t>(c[1].index + b[1]),
                                                 static_cast<std::size_t>(c[2].index + b[2]));
        node_grads[3 * node] += h * w * g.x;
        node_grads[3 * node + 1] += h * w * g.y;
        node_grads[3 * node + 2] += h * w * g.z;
        const double vg = dot(grid.at(node), g);
        jt[0] += dw1[0] * w1[1] * w1[2] * vg;
        jt[1] += w1[0] * dw1[1] * w1[2] * vg;
        jt[2] += w1[0] * w1[1] * dw1[2] * vg;
    }
    return {h * jt[0], h * jt[1], h * jt[2]};
}

// Backward through the Euler recursion; returns dL/d(path.front()).
Vec3 flow_backward(std::span<const Vec3> path, Vec3 g, const FlowField &flow, double sign, ParameterGradients &grads) {
    const double h = sign / static_cast<double>(flow.step_count);
    std::span<double> coarse = grads.coarse();
    std::span<double> fine = grads.fine();
    for (std::size_t k = path.size() - 1; k-- > 0;) {
        const Vec3 &p = path[k];
        const Vec3 jc = trilinear_backward(flow.coarse, p, g, h, coarse);
        const Vec3 jf = trilinear_backward(flow.fine, p, g, h, fine);
        g = g + jc + jf;
    }
    return g;
}

void add_affine(ParameterGradients &grads, const PerSliceAffine::Station &st, std::size_t n_keypoints,
                const AffineKeypoint &d) {
    std::span<double> a = grads.affine();
    const double wl = 1.0 - st.alpha;
    const std::size_t lo = 4 * st.lower;
    a[lo] += wl * d.log_sx;
    a[lo + 1] += wl * d.log_sy;
    a[lo + 2] += wl * d.tx;
    a[lo + 3] += wl * d.ty;
    if (st.lower + 1 < n_keypoints) {
        const std::size_t hi = lo + 4;
        a[hi] += st.alpha * d.log_sx;
        a[hi + 1] += st.alpha * d.log_sy;
        a[hi + 2] += st.alpha * d.tx;
        a[hi + 3] += st.alpha * d.ty;
    }
}

double stencil_sum(const GapField::Stencil &s, const std::array<double, 4> &coef, const std::vector<double> &values) {
    double v = 0.0;
    for (int c = 0; c < 4; ++c) v += coef[c] * values[s.node[c]];
    return v;
}

// Backward through gap_apply(., inverse); returns dL/dp.
Vec3 gap_inverse_backward(const Vec3 &p, int segment, const Vec3 &gc, const ComposedTransform &t,
                          ParameterGradients &grads) {
    const double rp = std::hypot(p.x, p.y);
    if (rp == 0.0) return gc;
    const GapField &gap = t.gap;
    const SpiralParams &sp = t.spiral;
    const double phi = angle_coordinate(p, sp.direction);
    const double z = p.z;
    const double radius = gap_inverse_radius(rp, phi, z, gap, sp);
    const Vec3 u{p.x / rp, p.y / rp, 0.0};
    const double g_r = gc.x * u.x + gc.y * u.y;
    const double gux = radius * gc.x;
    const double guy = radius * gc.y;
    const double gu_u = gux * u.x + guy * u.y;
    Vec3 gp{(gux - gu_u * u.x) / rp, (guy - gu_u * u.y) / rp, gc.z};
    if (g_r == 0.0) return gp;

    const double ys = y_sign(sp.direction);
    const Vec3 d_phi{-ys * p.y / (rp * rp), ys * p.x / (rp * rp), 0.0};
    std::span<double> gg = grads.gap();
    const GapField::Stencil s0 = gap.stencil(0.0, z);
    const double e_in = std::exp(stencil_sum(s0, s0.weight, gap.values));
    const double gz0 = stencil_sum(s0, s0.d_z, gap.values);

    double f_rp, f_phi, f_rho, f_z;
    if (segment < 0) {
        f_rp = 1.0 / e_in;
        f_phi = 0.0;
        f_rho = 0.0;
        f_z = -radius * gz0;
        for (int c = 0; c < 4; ++c) gg[s0.node[c]] += g_r * (-radius * s0.weight[c]);
    } else {
        const double rho = sp.rho;
        const double spacing = sp.spacing();
        const double kf = static_cast<double>(segment);
        const GapField::Stencil sk = gap.stencil(phi + two_pi * kf, z);
        const double e_k = std::exp(stencil_sum(sk, sk.weight, gap.values));
        const double q = radius - rho * phi - kf * spacing;
        // Derivatives of the segment start O_k = rho*phi*e_in + sum_{j<k} spacing*e_j.
        double s_phi = rho * e_in;
        double s_rho = phi * e_in;
        double s_z = rho * phi * e_in * gz0;
        const double inv_ek = 1.0 / e_k;
        for (int c = 0; c < 4; ++c) gg[s0.node[c]] -= g_r * inv_ek * rho * phi * e_in * s0.weight[c];
        for (int j = 0; j < segment; ++j) {
            const GapField::Stencil sj = gap.stencil(phi + two_pi * static_cast<double>(j), z);
            const double e_j = std::exp(stencil_sum(sj, sj.weight, gap.values));
            s_phi += spacing * e_j * stencil_sum(sj, sj.d_theta, gap.values);
            s_rho += two_pi * e_j;
            s_z += spacing * e_j * stencil_sum(sj, sj.d_z, gap.values);
            for (int c = 0; c < 4; ++c) gg[sj.node[c]] -= g_r * inv_ek * spacing * e_j * sj.weight[c];
        }
        for (int c = 0; c < 4; ++c) gg[sk.node[c]] -= g_r * q * sk.weight[c];
        f_rp = inv_ek;
        f_phi = rho - s_phi * inv_ek - q * stencil_sum(sk, sk.d_theta, gap.values);
        f_rho = phi + two_pi * kf - s_rho * inv_ek;
        f_z = -s_z * inv_ek - q * stencil_sum(sk, sk.d_z, gap.values);
    }
    gp = gp + g_r * (f_rp * u + f_phi * d_phi);
    gp.z += g_r * f_z;
    grads.rho() += g_r * f_rho;
    return gp;
}

std::vector<Vec3> integrate_traced(Vec3 p, const FlowField &flow, double sign, Signature *sig) {
    if (flow.step_count < 1) throw ConfigError("flow step_count must be >= 1");
    const kernels::GridView coarse = flow.coarse.view();
    const kernels::GridView fine = flow.fine.view();
    const double h = sign / static_cast<double>(flow.step_count);
    std::vector<Vec3> path;
    path.reserve(static_cast<std::size_t>(flow.step_count) + 1);
    path.push_back(p);
    for (int k = 0; k < flow.step_count; ++k) {
        if (sig) {
            sign_cells(coarse, p, *sig);
            sign_cells(fine, p, *sig);
        }
        const Vec3 uc = kernels::trilinear(coarse, p);
        const Vec3 uf = kernels::trilinear(fine, p);
        p.x = p.x + h * (uc.x + uf.x);
        p.y = p.y + h * (uc.y + uf.y);
        p.z = p.z + h * (uc.z + uf.z);
        if (!is_finite(p)) throw NumericError("flow integration diverged at Euler step " + std::to_string(k));
        path.push_back(p);
    }
    return path;
}

struct TracedInverse {
    InverseTrace trace;
    std::uint64_t signature;
};

TracedInverse trace_inverse_signed(const Vec3 &x, const ComposedTransform &t) {
    TracedInverse r;
    InverseTrace &tr = r.trace;
    Signature sig;
    tr.input = x;
    tr.station = t.affine.locate(x.z);
    tr.keypoint = t.affine.interpolate(x.z);
    sig.add(static_cast<std::int64_t>(tr.station.lower));
    sig.add(tr.station.clamped);
    const Vec3 a = affine_apply(x, t.affine, Direction::inverse);
    tr.flow_path = integrate_traced(a, t.flow, -1.0, &sig);
    const Vec3 &p = tr.flow_path.back();
    const double rp = std::hypot(p.x, p.y);
    if (rp == 0.0) {
        tr.output = p;
    } else {
        const double phi = angle_coordinate(p, t.spiral.direction);
        const double radius = gap_inverse_radius(rp, phi, p.z, t.gap, t.spiral, &tr.gap_segment);
        const double s = radius / rp;
        tr.output = {p.x * s, p.y * s, p.z};
    }
    sig.add(tr.gap_segment);
    r.signature = sig.h;
    return r;
}

} // namespace

InverseTrace trace_inverse(const Vec3 &x, const ComposedTransform &t) { return trace_inverse_signed(x, t).trace; }

ForwardTrace trace_forward(const Vec3 &x, const ComposedTransform &t) {
    ForwardTrace tr;
    tr.input = x;
    const Vec3 g = gap_apply(x, t.gap, t.spiral, Direction::forward);
    tr.flow_path = integrate_traced(g, t.flow, 1.0, nullptr);
    tr.output = affine_apply(tr.flow_path.back(), t.affine, Direction::forward);
    return tr;
}

void backprop_inverse(const InverseTrace &tr, const Vec3 &g, const ComposedTransform &t, ParameterGradients &grads) {
    const Vec3 gp = gap_inverse_backward(tr.flow_path.back(), tr.gap_segment, g, t, grads);
    const Vec3 ga = flow_backward(tr.flow_path, gp, t.flow, -1.0, grads);
    // a = ((x - t) * exp(-s), ...)
    const Vec3 &a = tr.flow_path.front();
    const AffineKeypoint d{-a.x * ga.x, -a.y * ga.y, -std::exp(-tr.keypoint.log_sx) * ga.x,
                           -std::exp(-tr.keypoint.log_sy) * ga.y};
    add_affine(grads, tr.station, t.affine.keypoints.size(), d);
}

void backprop_forward(const ForwardTrace &tr, const Vec3 &g, const ComposedTransform &t, ParameterGradients &grads) {
    if (tr.input.x != 0.0 || tr.input.y != 0.0)
        throw DomainError("forward gradients are only available for points on the spiral axis");
    const Vec3 &f = tr.flow_path.back();
    const PerSliceAffine &aff = t.affine;
    const PerSliceAffine::Station st = aff.locate(f.z);
    const AffineKeypoint kp = aff.interpolate(f.z);
    const double ex = std::exp(kp.log_sx);
    const double ey = std::exp(kp.log_sy);
    Vec3 gf{g.x * ex, g.y * ey, g.z};
    if (!st.clamped && aff.keypoints.size() >= 2) {
        const AffineKeypoint &lo = aff.keypoints[st.lower];
        const AffineKeypoint &hi = aff.keypoints[st.lower + 1];
        const double dtau = static_cast<double>(aff.keypoints.size() - 1) / (aff.z_max - aff.z_min);
        gf.z += g.x * (f.x * ex * (hi.log_sx - lo.log_sx) + (hi.tx - lo.tx)) * dtau;
        gf.z += g.y * (f.y * ey * (hi.log_sy - lo.log_sy) + (hi.ty - lo.ty)) * dtau;
    }
    add_affine(grads, st, aff.keypoints.size(), {g.x * f.x * ex, g.y * f.y * ey, g.x, g.y});
    flow_backward(tr.flow_path, gf, t.flow, 1.0, grads);
}

Evaluation evaluate_with_gradients(const LossBatch &batch, const ComposedTransform &t, const LossWeights &weights) {
    const std::vector<Vec3> queries = batch_queries(batch);
    const std::size_t n = queries.size();
    constexpr std::size_t chunk_count = 16;
    const std::size_t chunk = (n + chunk_count - 1) / chunk_count;

    std::vector<InverseTrace> traces(n);
    std::vector<std::uint64_t> signatures(n);
    parallel_for(chunk_count, [&](std::size_t c) {
        for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
            TracedInverse r = trace_inverse_signed(queries[i], t);
            traces[i] = std::move(r.trace);
            signatures[i] = r.signature;
        }
    });
    std::vector<Vec3> canonical(n);
    for (std::size_t i = 0; i < n; ++i) canonical[i] = traces[i].output;

    std::vector<ForwardTrace> centre_traces;
    std::vector<Vec3> centre_images;
    if (batch.is_enabled(LossTerm::center)) {
        for (double z : batch.center_z) {
            centre_traces.push_back(trace_forward({0.0, 0.0, z}, t));
            centre_images.push_back(centre_traces.back().output);
        }
    } else {
        for (double z : batch.center_z) centre_images.push_back({0.0, 0.0, z});
    }

    std::vector<Vec3> g_canonical(n);
    std::vector<Vec3> g_centre(batch.center_z.size());
    TermAdjoints adj{g_canonical, g_centre, 0.0};
    Evaluation ev;
    ev.values = score_terms(batch, canonical, centre_images, t.spiral, weights, &adj);

    const ParamLayout layout = ParamLayout::of(t);
    std::vector<ParameterGradients> partial(chunk_count, ParameterGradients(layout));
    parallel_for(chunk_count, [&](std::size_t c) {
        for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
            if (g_canonical[i] == Vec3{}) continue;
            backprop_inverse(traces[i], g_canonical[i], t, partial[c]);
        }
    });
    ev.gradients = ParameterGradients(layout);
    for (const ParameterGradients &p : partial) ev.gradients.add(p);
    for (std::size_t i = 0; i < centre_traces.size(); ++i) {
        if (g_centre[i] == Vec3{}) continue;
        backprop_forward(centre_traces[i], g_centre[i], t, ev.gradients);
    }
    ev.gradients.rho() += adj.rho;

    Signature sig;
    sig.add(static_cast<std::int64_t>(ev.values.branch_signature));
    for (std::uint64_t s : signatures) sig.add(static_cast<std::int64_t>(s));
    ev.values.branch_signature = sig.h;

    if (!ev.gradients.all_finite()) throw NumericError("non-finite gradient");
    return ev;
}

} // namespace scroll
