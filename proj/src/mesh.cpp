#include "scroll/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "scroll/error.hpp"
#include "scroll/parallel.hpp"

namespace scroll {

double TriMesh::area() const {
    double a = 0.0;
    for (const auto &f : faces) {
        const Vec3 &p = vertices[f[0]];
        a += 0.5 * norm(cross(vertices[f[1]] - p, vertices[f[2]] - p));
    }
    return a;
}

MeshResolution default_resolution(const SpiralParams &spiral) {
    const double dz = spiral.spacing() / 4.0;
    return {dz / spiral.outer_radius(), dz};
}

namespace {

std::size_t lattice_count(double extent, double step) {
    // Tolerates extent/step landing a rounding error below an integer.
    return static_cast<std::size_t>(std::floor(extent / step * (1.0 + 1e-12)));
}

} // namespace

QuadMesh extract_mesh(const ComposedTransform &t, double dtheta, double dz) {
    if (!(dtheta > 0.0) || !(dz > 0.0)) throw ConfigError("mesh resolution must be positive");
    const SpiralParams &s = t.spiral;
    QuadMesh m;
    m.dtheta = dtheta;
    m.dz = dz;
    m.ni = lattice_count(s.theta_max, dtheta);
    m.nj = lattice_count(s.z_max - s.z_min, dz) + 1;
    if (m.ni < 1) throw ConfigError("dtheta exceeds theta_max");
    m.vertices.resize(m.ni * m.nj);
    for (std::size_t j = 0; j < m.nj; ++j) {
        const double z = std::min(s.z_min + static_cast<double>(j) * dz, s.z_max);
        for (std::size_t i = 0; i < m.ni; ++i)
            m.vertices[m.index(i, j)] = spiral_point(std::min(m.theta(i), s.theta_max), z, s);
    }
    constexpr std::size_t block = 4096;
    const std::size_t blocks = (m.vertices.size() + block - 1) / block;
    parallel_for(blocks, [&](std::size_t b) {
        const std::size_t lo = b * block;
        const std::size_t n = std::min(block, m.vertices.size() - lo);
        compose_forward_batch(std::span<Vec3>(m.vertices).subspan(lo, n), t);
    });
    assign_uv(m, s);
    return m;
}

void assign_uv(QuadMesh &mesh, const SpiralParams &spiral) {
    std::vector<double> u(mesh.ni);
    // spiral_point(0+) is the origin, so the first chord is rho * dtheta.
    double acc = spiral.rho * mesh.dtheta;
    u[0] = acc;
    Vec3 prev = spiral_point(mesh.theta(0), spiral.z_min, spiral);
    for (std::size_t i = 1; i < mesh.ni; ++i) {
        const Vec3 cur = spiral_point(std::min(mesh.theta(i), spiral.theta_max), spiral.z_min, spiral);
        acc += norm(cur - prev);
        u[i] = acc;
        prev = cur;
    }
    mesh.u.resize(mesh.ni * mesh.nj);
    mesh.v.resize(mesh.ni * mesh.nj);
    for (std::size_t j = 0; j < mesh.nj; ++j)
        for (std::size_t i = 0; i < mesh.ni; ++i) {
            mesh.u[mesh.index(i, j)] = u[i];
            mesh.v[mesh.index(i, j)] = static_cast<double>(j) * mesh.dz;
        }
}

TriMesh triangulate(const QuadMesh &m) {
    TriMesh t;
    t.vertices = m.vertices;
    t.labels.resize(m.vertices.size());
    t.uv.resize(m.vertices.size());
    for (std::size_t j = 0; j < m.nj; ++j)
        for (std::size_t i = 0; i < m.ni; ++i) {
            const std::size_t k = m.index(i, j);
            t.labels[k] = static_cast<int>(std::floor(m.theta(i) / two_pi));
            if (!m.u.empty()) t.uv[k] = {m.u[k], m.v[k]};
        }
    if (m.ni < 2 || m.nj < 2) return t;
    t.faces.reserve(2 * m.face_count());
    for (std::size_t j = 0; j + 1 < m.nj; ++j)
        for (std::size_t i = 0; i + 1 < m.ni; ++i) {
            const auto a = static_cast<std::uint32_t>(m.index(i, j));
            const auto b = static_cast<std::uint32_t>(m.index(i + 1, j));
            const auto c = static_cast<std::uint32_t>(m.index(i + 1, j + 1));
            const auto d = static_cast<std::uint32_t>(m.index(i, j + 1));
            if ((i + j) % 2 == 0) {
                t.faces.push_back({a, b, c});
                t.faces.push_back({a, c, d});
            } else {
                t.faces.push_back({a, b, d});
                t.faces.push_back({b, c, d});
            }
        }
    return t;
}

namespace {

double orient3d(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d) {
    return dot(cross(b - a, c - a), d - a);
}

int sgn(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

bool segment_crosses_triangle(const Vec3 &p, const Vec3 &q, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    const int sp = sgn(orient3d(a, b, c, p));
    const int sq = sgn(orient3d(a, b, c, q));
    if (sp == 0 || sq == 0 || sp == sq) return false;
    const int s1 = sgn(orient3d(p, q, a, b));
    const int s2 = sgn(orient3d(p, q, b, c));
    const int s3 = sgn(orient3d(p, q, c, a));
    return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
}

} // namespace

bool triangles_intersect(const Vec3 &a0, const Vec3 &a1, const Vec3 &a2, const Vec3 &b0, const Vec3 &b1,
                         const Vec3 &b2) {
    const Vec3 a[3] = {a0, a1, a2};
    const Vec3 b[3] = {b0, b1, b2};
    for (int e = 0; e < 3; ++e) {
        if (segment_crosses_triangle(a[e], a[(e + 1) % 3], b0, b1, b2)) return true;
        if (segment_crosses_triangle(b[e], b[(e + 1) % 3], a0, a1, a2)) return true;
    }
    return false;
}

std::size_t count_self_intersections(const TriMesh &mesh) {
    const std::size_t nf = mesh.faces.size();
    if (nf < 2) return 0;
    std::vector<Vec3> lo(nf), hi(nf);
    double cell = 0.0;
    for (std::size_t f = 0; f < nf; ++f) {
        const Vec3 &p = mesh.vertices[mesh.faces[f][0]];
        lo[f] = hi[f] = p;
        for (int k = 1; k < 3; ++k) {
            const Vec3 &q = mesh.vertices[mesh.faces[f][k]];
            lo[f] = {std::min(lo[f].x, q.x), std::min(lo[f].y, q.y), std::min(lo[f].z, q.z)};
            hi[f] = {std::max(hi[f].x, q.x), std::max(hi[f].y, q.y), std::max(hi[f].z, q.z)};
        }
        cell = std::max({cell, hi[f].x - lo[f].x, hi[f].y - lo[f].y, hi[f].z - lo[f].z});
    }
    if (!(cell > 0.0)) cell = 1.0;
    const double inv = 1.0 / cell;
    auto cell_of = [&](double v) { return static_cast<std::int64_t>(std::floor(v * inv)); };
    auto key = [](std::int64_t x, std::int64_t y, std::int64_t z) {
        return (static_cast<std::uint64_t>(x & 0x1fffff) << 42) | (static_cast<std::uint64_t>(y & 0x1fffff) << 21) |
               static_cast<std::uint64_t>(z & 0x1fffff);
    };
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> grid;
    for (std::size_t f = 0; f < nf; ++f)
        for (std::int64_t x = cell_of(lo[f].x); x <= cell_of(hi[f].x); ++x)
            for (std::int64_t y = cell_of(lo[f].y); y <= cell_of(hi[f].y); ++y)
                for (std::int64_t z = cell_of(lo[f].z); z <= cell_of(hi[f].z); ++z)
                    grid[key(x, y, z)].push_back(static_cast<std::uint32_t>(f));

    std::size_t count = 0;
    for (const auto &[k, list] : grid) {
        for (std::size_t ai = 0; ai < list.size(); ++ai) {
            const std::uint32_t fa = list[ai];
            for (std::size_t bi = ai + 1; bi < list.size(); ++bi) {
                const std::uint32_t fb = list[bi];
                if (lo[fa].x > hi[fb].x || lo[fb].x > hi[fa].x || lo[fa].y > hi[fb].y || lo[fb].y > hi[fa].y ||
                    lo[fa].z > hi[fb].z || lo[fb].z > hi[fa].z)
                    continue;
                // Count each pair once: in the cell holding the low corner of the AABB overlap.
                const std::uint64_t home = key(cell_of(std::max(lo[fa].x, lo[fb].x)),
                                               cell_of(std::max(lo[fa].y, lo[fb].y)),
                                               cell_of(std::max(lo[fa].z, lo[fb].z)));
                if (home != k) continue;
                const auto &A = mesh.faces[fa];
                const auto &B = mesh.faces[fb];
                bool shared = false;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) shared |= A[i] == B[j];
                if (shared) continue;
                const auto &V = mesh.vertices;
                if (triangles_intersect(V[A[0]], V[A[1]], V[A[2]], V[B[0]], V[B[1]], V[B[2]])) ++count;
            }
        }
    }
    return count;
}

bool uv_monotone(const QuadMesh &m) {
    for (std::size_t j = 0; j < m.nj; ++j)
        for (std::size_t i = 0; i < m.ni; ++i) {
            const std::size_t k = m.index(i, j);
            if (i + 1 < m.ni && !(m.u[m.index(i + 1, j)] > m.u[k])) return false;
            if (j + 1 < m.nj && !(m.v[m.index(i, j + 1)] > m.v[k])) return false;
        }
    return true;
}

UnrolledStack sample_unrolled_volume(const QuadMesh &m, const ProbabilityVolume &volume, std::size_t channel,
                                     double thickness, std::size_t layers, WindingDirection direction) {
    if (layers < 1) throw ConfigError("layers must be >= 1");
    UnrolledStack out;
    out.ni = m.ni;
    out.nj = m.nj;
    out.layers = layers;
    out.data.assign(m.ni * m.nj * layers, 0.0f);
    const std::size_t n = m.ni * m.nj;
    std::vector<Vec3> normals(n);
    std::vector<char> valid(n, 0);
    const double orient = -y_sign(direction);
    for (std::size_t j = 0; j < m.nj; ++j)
        for (std::size_t i = 0; i < m.ni; ++i) {
            const std::size_t i0 = i > 0 ? i - 1 : i;
            const std::size_t i1 = i + 1 < m.ni ? i + 1 : i;
            const std::size_t j0 = j > 0 ? j - 1 : j;
            const std::size_t j1 = j + 1 < m.nj ? j + 1 : j;
            const Vec3 ti = m.vertices[m.index(i1, j)] - m.vertices[m.index(i0, j)];
            const Vec3 tj = m.vertices[m.index(i, j1)] - m.vertices[m.index(i, j0)];
            const Vec3 c = orient * cross(tj, ti);
            const double len = norm(c);
            const std::size_t k = m.index(i, j);
            if (len > 0.0 && std::isfinite(len)) {
                normals[k] = c / len;
                valid[k] = 1;
            } else {
                ++out.degenerate_normals;
            }
        }
    const kernels::VolumeView view = volume.view(channel);
    std::vector<double> xs(n), ys(n), zs(n);
    std::vector<float> vals(n);
    for (std::size_t l = 0; l < layers; ++l) {
        const double offset =
            layers == 1 ? 0.0 : -0.5 * thickness + thickness * static_cast<double>(l) / static_cast<double>(layers - 1);
        for (std::size_t k = 0; k < n; ++k) {
            const Vec3 p = m.vertices[k] + offset * normals[k];
            xs[k] = p.x;
            ys[k] = p.y;
            zs[k] = p.z;
        }
        kernels::sample_volume_batch(view, xs, ys, zs, vals);
        for (std::size_t k = 0; k < n; ++k) out.data[k + n * l] = valid[k] ? vals[k] : 0.0f;
    }
    return out;
}

} // namespace scroll
