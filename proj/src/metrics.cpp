#include "scroll/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "scroll/error.hpp"
#include "scroll/random.hpp"

namespace scroll {

// ---------------------------------------------------------------------------
// Point-to-triangle distance
// ---------------------------------------------------------------------------

Vec3 closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = dot(ab, ap);
    const double d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp);
    const double d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp);
    const double d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    const double denom = 1.0 / (va + vb + vc);
    return a + (vb * denom) * ab + (vc * denom) * ac;
}

TriangleIndex::TriangleIndex(const TriMesh &mesh) : mesh_(mesh) {
    if (mesh.faces.empty()) throw ConfigError("cannot index an empty mesh");
    const double inf = std::numeric_limits<double>::infinity();
    Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
    double extent_sum = 0.0;
    for (const auto &f : mesh.faces) {
        Vec3 flo{inf, inf, inf}, fhi{-inf, -inf, -inf};
        for (std::uint32_t v : f) {
            const Vec3 &p = mesh.vertices[v];
            flo = {std::min(flo.x, p.x), std::min(flo.y, p.y), std::min(flo.z, p.z)};
            fhi = {std::max(fhi.x, p.x), std::max(fhi.y, p.y), std::max(fhi.z, p.z)};
        }
        extent_sum += std::max({fhi.x - flo.x, fhi.y - flo.y, fhi.z - flo.z});
        lo = {std::min(lo.x, flo.x), std::min(lo.y, flo.y), std::min(lo.z, flo.z)};
        hi = {std::max(hi.x, fhi.x), std::max(hi.y, fhi.y), std::max(hi.z, fhi.z)};
    }
    lo_ = lo;
    cell_ = std::max(2.0 * extent_sum / static_cast<double>(mesh.faces.size()), 1e-9);
    const Vec3 ext = hi - lo;
    for (;;) {
        n_[0] = static_cast<std::int64_t>(ext.x / cell_) + 1;
        n_[1] = static_cast<std::int64_t>(ext.y / cell_) + 1;
        n_[2] = static_cast<std::int64_t>(ext.z / cell_) + 1;
        if (n_[0] * n_[1] * n_[2] <= (std::int64_t{1} << 24)) break;
        cell_ *= 1.5;
    }
    const auto cells = static_cast<std::size_t>(n_[0] * n_[1] * n_[2]);
    std::vector<std::uint32_t> count(cells + 1, 0);
    auto for_cells = [&](std::size_t f, auto &&fn) {
        Vec3 flo{inf, inf, inf}, fhi{-inf, -inf, -inf};
        for (std::uint32_t v : mesh.faces[f]) {
            const Vec3 &p = mesh.vertices[v];
            flo = {std::min(flo.x, p.x), std::min(flo.y, p.y), std::min(flo.z, p.z)};
            fhi = {std::max(fhi.x, p.x), std::max(fhi.y, p.y), std::max(fhi.z, p.z)};
        }
        auto c = [&](double v, double o, int a) {
            return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((v - o) / cell_)), 0, n_[a] - 1);
        };
        for (std::int64_t z = c(flo.z, lo_.z, 2); z <= c(fhi.z, lo_.z, 2); ++z)
            for (std::int64_t y = c(flo.y, lo_.y, 1); y <= c(fhi.y, lo_.y, 1); ++y)
                for (std::int64_t x = c(flo.x, lo_.x, 0); x <= c(fhi.x, lo_.x, 0); ++x)
                    fn(static_cast<std::size_t>(x + n_[0] * (y + n_[1] * z)));
    };
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) for_cells(f, [&](std::size_t c) { ++count[c + 1]; });
    for (std::size_t c = 0; c < cells; ++c) count[c + 1] += count[c];
    start_ = count;
    items_.resize(count[cells]);
    std::vector<std::uint32_t> fill(count.begin(), count.end() - 1);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f)
        for_cells(f, [&](std::size_t c) { items_[fill[c]++] = static_cast<std::uint32_t>(f); });
}

std::size_t TriangleIndex::closest(const Vec3 &p, Vec3 *point) const {
    const std::int64_t c[3] = {static_cast<std::int64_t>(std::floor((p.x - lo_.x) / cell_)),
                               static_cast<std::int64_t>(std::floor((p.y - lo_.y) / cell_)),
                               static_cast<std::int64_t>(std::floor((p.z - lo_.z) / cell_))};
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_face = 0;
    Vec3 best_point;
    std::int64_t max_r = 0;
    for (int a = 0; a < 3; ++a) max_r = std::max({max_r, std::abs(c[a]), std::abs(n_[a] - 1 - c[a])});
    for (std::int64_t r = 0; r <= max_r; ++r) {
        std::int64_t lo[3], hi[3];
        bool empty = false;
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max<std::int64_t>(c[a] - r, 0);
            hi[a] = std::min<std::int64_t>(c[a] + r, n_[a] - 1);
            empty |= lo[a] > hi[a];
        }
        if (!empty) {
            for (std::int64_t z = lo[2]; z <= hi[2]; ++z)
                for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
                    for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
                        const std::int64_t cheb =
                            std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])});
                        if (cheb != r) continue;
                        const auto cell = static_cast<std::size_t>(x + n_[0] * (y + n_[1] * z));
                        for (std::uint32_t k = start_[cell]; k < start_[cell + 1]; ++k) {
                            const auto &f = mesh_.faces[items_[k]];
                            const Vec3 q = closest_point_on_triangle(p, mesh_.vertices[f[0]], mesh_.vertices[f[1]],
                                                                     mesh_.vertices[f[2]]);
                            const double d = norm(q - p);
                            if (d < best || (d == best && items_[k] < best_face)) {
                                best = d;
                                best_face = items_[k];
                                best_point = q;
                            }
                        }
                    }
        }
        if (best <= static_cast<double>(r) * cell_) break;
    }
    if (point) *point = best_point;
    return best_face;
}

double TriangleIndex::distance(const Vec3 &p) const {
    Vec3 q;
    closest(p, &q);
    return norm(q - p);
}

// ---------------------------------------------------------------------------
// Slicing
// ---------------------------------------------------------------------------

std::vector<SliceSegment> slice_mesh(const TriMesh &mesh, double z0) {
    std::vector<SliceSegment> out;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto &face = mesh.faces[f];
        Vec3 hits[2];
        int n = 0;
        for (int e = 0; e < 3; ++e) {
            const Vec3 &p = mesh.vertices[face[e]];
            const Vec3 &q = mesh.vertices[face[(e + 1) % 3]];
            // Vertices on the plane count as above it.
            if ((p.z < z0) == (q.z < z0)) continue;
            const double t = (z0 - p.z) / (q.z - p.z);
            if (n < 2) hits[n] = p + t * (q - p);
            ++n;
        }
        if (n == 2) out.push_back({hits[0], hits[1], static_cast<std::uint32_t>(f)});
    }
    return out;
}

namespace {

std::pair<double, double> z_range(const TriMesh &m) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Vec3 &v : m.vertices) {
        lo = std::min(lo, v.z);
        hi = std::max(hi, v.z);
    }
    return {lo, hi};
}

std::vector<double> slice_heights(double lo, double hi, std::size_t slices) {
    std::vector<double> z;
    for (std::size_t s = 0; s < slices; ++s)
        z.push_back(lo + (hi - lo) * (static_cast<double>(s) + 0.5) / static_cast<double>(slices));
    return z;
}

} // namespace

// ---------------------------------------------------------------------------
// WJF
// ---------------------------------------------------------------------------

std::optional<double> metric_wjf(const TriMesh &gt, const ComposedTransform &model, std::size_t slices) {
    auto [lo, hi] = z_range(gt);
    lo = std::max(lo, model.spiral.z_min);
    hi = std::min(hi, model.spiral.z_max);
    if (!(lo < hi) || slices == 0) return std::nullopt;
    const SpiralParams &s = model.spiral;
    const double spacing = s.spacing();
    std::size_t total = 0;
    std::size_t jumps = 0;
    for (double z : slice_heights(lo, hi, slices)) {
        for (const SliceSegment &seg : slice_mesh(gt, z)) {
            const Vec3 a = compose_inverse(seg.a, model);
            const Vec3 b = compose_inverse(seg.b, model);
            if ((a.x == 0.0 && a.y == 0.0) || (b.x == 0.0 && b.y == 0.0)) continue;
            const double phi_a = angle_coordinate(a, s.direction);
            const double phi_b = unwrap_near(angle_coordinate(b, s.direction), phi_a);
            const double ra = std::hypot(a.x, a.y) - s.rho * phi_a;
            const double rb = std::hypot(b.x, b.y) - s.rho * phi_b;
            const double ka = std::round(nearest_winding_radius(ra, spacing) / spacing);
            const double kb = std::round(nearest_winding_radius(rb, spacing) / spacing);
            ++total;
            if (ka != kb) ++jumps;
        }
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(jumps) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// MRWD
// ---------------------------------------------------------------------------

namespace {

// First hit distance per winding label along a ray in the slice plane.
std::map<int, double> ray_hits(const TriMesh &mesh, const std::vector<SliceSegment> &segs, const Vec3 &o, double dx,
                               double dy) {
    std::map<int, double> hits;
    for (const SliceSegment &s : segs) {
        // o + t d = a + u (b - a)
        const double ex = s.b.x - s.a.x;
        const double ey = s.b.y - s.a.y;
        const double den = dx * ey - dy * ex;
        if (den == 0.0) continue;
        const double wx = s.a.x - o.x;
        const double wy = s.a.y - o.y;
        const double t = (wx * ey - wy * ex) / den;
        const double u = (wx * dy - wy * dx) / den;
        if (t <= 0.0 || u < 0.0 || u > 1.0) continue;
        const Vec3 hit = s.a + u * (s.b - s.a);
        const auto &face = mesh.faces[s.face];
        std::uint32_t nearest = face[0];
        for (std::uint32_t v : face)
            if (norm(mesh.vertices[v] - hit) < norm(mesh.vertices[nearest] - hit)) nearest = v;
        const int label = mesh.labels[nearest];
        auto it = hits.find(label);
        if (it == hits.end() || t < it->second) hits[label] = t;
    }
    return hits;
}

} // namespace

std::vector<int> winding_labels(const TriMesh &mesh, const ComposedTransform &model) {
    const double spacing = model.spiral.spacing();
    std::vector<int> out(mesh.vertices.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Vec3 c = compose_inverse(mesh.vertices[i], model);
        if (c.x == 0.0 && c.y == 0.0) continue;
        out[i] = static_cast<int>(
            std::lround(nearest_winding_radius(radius_coordinate(c, model.spiral), spacing) / spacing));
    }
    return out;
}

std::optional<double> metric_mrwd(const TriMesh &gt, const TriMesh &model_mesh, const ComposedTransform &model,
                                  std::size_t angles_per_slice, std::size_t slices) {
    if (model_mesh.labels.size() != model_mesh.vertices.size())
        throw ConfigError("MRWD needs per-vertex winding labels on the model mesh");
    if (gt.labels.size() != gt.vertices.size()) {
        TriMesh labelled = gt;
        labelled.labels = winding_labels(gt, model);
        return metric_mrwd(labelled, model_mesh, model, angles_per_slice, slices);
    }
    auto [lo, hi] = z_range(gt);
    const auto [mlo, mhi] = z_range(model_mesh);
    lo = std::max(lo, mlo);
    hi = std::min(hi, mhi);
    if (!(lo < hi) || slices == 0 || angles_per_slice == 0) return std::nullopt;
    double sum = 0.0;
    std::size_t count = 0;
    for (double z : slice_heights(lo, hi, slices)) {
        const std::vector<SliceSegment> gs = slice_mesh(gt, z);
        const std::vector<SliceSegment> ms = slice_mesh(model_mesh, z);
        if (gs.empty() || ms.empty()) continue;
        const Vec3 o = compose_forward({0.0, 0.0, std::clamp(z, model.spiral.z_min, model.spiral.z_max)}, model);
        for (std::size_t k = 0; k < angles_per_slice; ++k) {
            const double a = two_pi * static_cast<double>(k) / static_cast<double>(angles_per_slice);
            const double dx = std::cos(a);
            const double dy = std::sin(a);
            const std::map<int, double> g = ray_hits(gt, gs, o, dx, dy);
            const std::map<int, double> m = ray_hits(model_mesh, ms, o, dx, dy);
            for (const auto &[label, dist] : g) {
                auto it = m.find(label);
                if (it == m.end()) continue;
                sum += std::fabs(it->second - dist);
                ++count;
            }
        }
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Chamfer
// ---------------------------------------------------------------------------

double metric_chamfer(const TriMesh &gt, const TriMesh &pred, std::size_t sample_count, std::uint64_t seed) {
    if (gt.faces.empty() || pred.faces.empty()) throw ConfigError("chamfer distance needs non-empty meshes");
    std::vector<double> cdf(gt.faces.size());
    double acc = 0.0;
    for (std::size_t f = 0; f < gt.faces.size(); ++f) {
        const auto &t = gt.faces[f];
        acc += 0.5 * norm(cross(gt.vertices[t[1]] - gt.vertices[t[0]], gt.vertices[t[2]] - gt.vertices[t[0]]));
        cdf[f] = acc;
    }
    const TriangleIndex index(pred);
    CounterRng rng(seed, 0x63686d);
    double sum = 0.0;
    for (std::size_t s = 0; s < sample_count; ++s) {
        const double pick = rng.uniform() * acc;
        const std::size_t f = std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin()), cdf.size() - 1);
        double u = rng.uniform();
        double v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const auto &t = gt.faces[f];
        const Vec3 p = gt.vertices[t[0]] + u * (gt.vertices[t[1]] - gt.vertices[t[0]]) +
                       v * (gt.vertices[t[2]] - gt.vertices[t[0]]);
        sum += index.distance(p);
    }
    return sample_count ? sum / static_cast<double>(sample_count) : 0.0;
}

// ---------------------------------------------------------------------------
// Angular defect
// ---------------------------------------------------------------------------

VertexDefects angular_defects(const TriMesh &mesh) {
    VertexDefects d;
    const std::size_t n = mesh.vertices.size();
    d.defect.assign(n, two_pi);
    d.interior.assign(n, 1);
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_use;
    for (const auto &f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            const std::uint32_t a = f[k];
            const std::uint32_t b = f[(k + 1) % 3];
            const std::uint32_t c = f[(k + 2) % 3];
            const Vec3 u = mesh.vertices[b] - mesh.vertices[a];
            const Vec3 v = mesh.vertices[c] - mesh.vertices[a];
            d.defect[a] -= std::atan2(norm(cross(u, v)), dot(u, v));
            ++edge_use[{std::min(a, b), std::max(a, b)}];
        }
    }
    std::vector<char> used(n, 0);
    for (const auto &f : mesh.faces)
        for (std::uint32_t v : f) used[v] = 1;
    for (std::size_t v = 0; v < n; ++v)
        if (!used[v]) d.interior[v] = 0;
    for (const auto &[e, c] : edge_use)
        if (c != 2) d.interior[e.first] = d.interior[e.second] = 0;
    return d;
}

std::optional<double> metric_angular_defect(const TriMesh &mesh) {
    const VertexDefects d = angular_defects(mesh);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t v = 0; v < d.defect.size(); ++v) {
        if (!d.interior[v]) continue;
        sum += std::fabs(d.defect[v]);
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Stretch
// ---------------------------------------------------------------------------

namespace {

struct StretchAcc {
    double sum = 0.0;
    std::size_t n = 0;
    std::size_t excluded = 0;

    void add(double l3, double luv) {
        if (!(luv > 0.0) || !(l3 > 0.0)) {
            ++excluded;
            return;
        }
        sum += std::max(l3 / luv, luv / l3);
        ++n;
    }
    StretchResult result() const {
        StretchResult r;
        r.excluded_edges = excluded;
        if (n) r.value = sum / static_cast<double>(n);
        return r;
    }
};

} // namespace

StretchResult metric_stretch(const QuadMesh &m) {
    StretchAcc acc;
    for (std::size_t j = 0; j < m.nj; ++j)
        for (std::size_t i = 0; i < m.ni; ++i) {
            const std::size_t k = m.index(i, j);
            if (i + 1 < m.ni) {
                const std::size_t q = m.index(i + 1, j);
                acc.add(norm(m.vertices[q] - m.vertices[k]), std::hypot(m.u[q] - m.u[k], m.v[q] - m.v[k]));
            }
            if (j + 1 < m.nj) {
                const std::size_t q = m.index(i, j + 1);
                acc.add(norm(m.vertices[q] - m.vertices[k]), std::hypot(m.u[q] - m.u[k], m.v[q] - m.v[k]));
            }
        }
    return acc.result();
}

StretchResult metric_stretch(const TriMesh &m) {
    if (m.uv.size() != m.vertices.size()) throw ConfigError("stretch needs per-vertex UV");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (const auto &f : m.faces)
        for (int k = 0; k < 3; ++k) edges.emplace_back(std::min(f[k], f[(k + 1) % 3]), std::max(f[k], f[(k + 1) % 3]));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    StretchAcc acc;
    for (const auto &[a, b] : edges)
        acc.add(norm(m.vertices[b] - m.vertices[a]), std::hypot(m.uv[b][0] - m.uv[a][0], m.uv[b][1] - m.uv[a][1]));
    return acc.result();
}

} // namespace scroll
