#include "scroll/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "scroll/error.hpp"
#include "scroll/parallel.hpp"
#include "scroll/random.hpp"

namespace scroll {

namespace {

struct Coord {
    long x, y, z;
};

Coord coord_of(std::size_t i, const kernels::VolumeDims &d) {
    return {static_cast<long>(i % d.nx), static_cast<long>((i / d.nx) % d.ny), static_cast<long>(i / (d.nx * d.ny))};
}

bool inside(const Coord &c, const kernels::VolumeDims &d) {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < static_cast<long>(d.nx) && c.y < static_cast<long>(d.ny) &&
           c.z < static_cast<long>(d.nz);
}

std::size_t index_of(const Coord &c, const kernels::VolumeDims &d) {
    return d.index(static_cast<std::size_t>(c.x), static_cast<std::size_t>(c.y), static_cast<std::size_t>(c.z));
}

const std::array<Coord, 26> &offsets26() {
    static const std::array<Coord, 26> table = [] {
        std::array<Coord, 26> t{};
        std::size_t n = 0;
        for (long dz = -1; dz <= 1; ++dz)
            for (long dy = -1; dy <= 1; ++dy)
                for (long dx = -1; dx <= 1; ++dx)
                    if (dx || dy || dz) t[n++] = {dx, dy, dz};
        return t;
    }();
    return table;
}

} // namespace

VoxelMask threshold_volume(const ProbabilityVolume &volume, std::size_t channel, float tau) {
    if (!(tau > 0.0f && tau < 1.0f)) throw ConfigError("threshold must lie in (0, 1)");
    if (channel >= volume.channels.size()) throw ConfigError("volume has no channel " + std::to_string(channel));
    VoxelMask out(volume.channels[channel].size());
    kernels::threshold(volume.channels[channel], tau, out);
    return out;
}

std::vector<VoxelComponent> fiber_components(const VoxelMask &mask, kernels::VolumeDims dims) {
    if (mask.size() != dims.count()) throw ConfigError("mask size does not match dims");
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<VoxelComponent> out;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || seen[start]) continue;
        VoxelComponent comp;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            comp.push_back(v);
            const Coord c = coord_of(v, dims);
            for (const Coord &o : offsets26()) {
                const Coord n{c.x + o.x, c.y + o.y, c.z + o.z};
                if (!inside(n, dims)) continue;
                const std::size_t ni = index_of(n, dims);
                if (mask[ni] && !seen[ni]) {
                    seen[ni] = 1;
                    stack.push_back(ni);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
    }
    return out;
}

std::vector<SliceComponent> surface_components_2d(const VoxelMask &mask, kernels::VolumeDims dims) {
    if (mask.size() != dims.count()) throw ConfigError("mask size does not match dims");
    const std::size_t n[3] = {dims.nx, dims.ny, dims.nz};
    std::vector<SliceComponent> out;
    for (int axis = 0; axis < 3; ++axis) {
        const int ua = axis == 0 ? 1 : 0;
        const int va = axis == 2 ? 1 : 2;
        std::vector<std::vector<SliceComponent>> per_slice(n[axis]);
        parallel_for(n[axis], [&](std::size_t s) {
            const std::size_t nu = n[ua], nv = n[va];
            const auto voxel = [&](std::size_t u, std::size_t v) {
                std::size_t c[3];
                c[axis] = s;
                c[ua] = u;
                c[va] = v;
                return dims.index(c[0], c[1], c[2]);
            };
            std::vector<std::uint8_t> seen(nu * nv, 0);
            std::vector<std::size_t> stack;
            for (std::size_t v0 = 0; v0 < nv; ++v0)
                for (std::size_t u0 = 0; u0 < nu; ++u0) {
                    if (seen[u0 + nu * v0] || !mask[voxel(u0, v0)]) continue;
                    SliceComponent comp{axis, s, {}};
                    seen[u0 + nu * v0] = 1;
                    stack.push_back(u0 + nu * v0);
                    while (!stack.empty()) {
                        const std::size_t k = stack.back();
                        stack.pop_back();
                        const std::size_t u = k % nu, v = k / nu;
                        comp.voxels.push_back(voxel(u, v));
                        for (long dv = -1; dv <= 1; ++dv)
                            for (long du = -1; du <= 1; ++du) {
                                const long uu = static_cast<long>(u) + du, vv = static_cast<long>(v) + dv;
                                if (uu < 0 || vv < 0 || uu >= static_cast<long>(nu) || vv >= static_cast<long>(nv))
                                    continue;
                                const std::size_t kk = static_cast<std::size_t>(uu) + nu * static_cast<std::size_t>(vv);
                                if (seen[kk] || !mask[voxel(static_cast<std::size_t>(uu), static_cast<std::size_t>(vv))])
                                    continue;
                                seen[kk] = 1;
                                stack.push_back(kk);
                            }
                    }
                    std::sort(comp.voxels.begin(), comp.voxels.end());
                    per_slice[s].push_back(std::move(comp));
                }
        });
        for (auto &slice : per_slice)
            for (auto &c : slice) out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Thinning
// ---------------------------------------------------------------------------

namespace {

// Neighbourhood cube indexed (dx+1) + 3(dy+1) + 9(dz+1); centre is 13.
bool is_simple(const std::array<std::uint8_t, 27> &cube) {
    // Foreground: exactly one 26-component among the 26 neighbours.
    std::array<std::uint8_t, 27> seen{};
    int fg_components = 0;
    std::array<int, 27> stack{};
    for (int s = 0; s < 27; ++s) {
        if (s == 13 || !cube[s] || seen[s]) continue;
        if (++fg_components > 1) return false;
        int top = 0;
        stack[top++] = s;
        seen[s] = 1;
        while (top) {
            const int v = stack[--top];
            const int vx = v % 3, vy = (v / 3) % 3, vz = v / 9;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int x = vx + dx, y = vy + dy, z = vz + dz;
                        if (x < 0 || y < 0 || z < 0 || x > 2 || y > 2 || z > 2) continue;
                        const int w = x + 3 * y + 9 * z;
                        if (w == 13 || !cube[w] || seen[w]) continue;
                        seen[w] = 1;
                        stack[top++] = w;
                    }
        }
    }
    if (fg_components != 1) return false;

    // Background: exactly one 6-component within the 18-neighbourhood touching a face.
    const auto in18 = [](int v) {
        const int d = std::abs(v % 3 - 1) + std::abs((v / 3) % 3 - 1) + std::abs(v / 9 - 1);
        return d >= 1 && d <= 2;
    };
    seen.fill(0);
    int bg_components = 0;
    for (int s : {4, 10, 12, 14, 16, 22}) {
        if (cube[s] || seen[s]) continue;
        if (++bg_components > 1) return false;
        int top = 0;
        stack[top++] = s;
        seen[s] = 1;
        while (top) {
            const int v = stack[--top];
            const int vx = v % 3, vy = (v / 3) % 3, vz = v / 9;
            const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            for (const auto &d : nb) {
                const int x = vx + d[0], y = vy + d[1], z = vz + d[2];
                if (x < 0 || y < 0 || z < 0 || x > 2 || y > 2 || z > 2) continue;
                const int w = x + 3 * y + 9 * z;
                if (!in18(w) || cube[w] || seen[w]) continue;
                seen[w] = 1;
                stack[top++] = w;
            }
        }
    }
    return bg_components == 1;
}

} // namespace

VoxelComponent skeletonize(const VoxelComponent &component, kernels::VolumeDims dims) {
    if (component.empty()) throw ConfigError("cannot skeletonize an empty component");
    // Local padded box.
    Coord lo{std::numeric_limits<long>::max(), std::numeric_limits<long>::max(), std::numeric_limits<long>::max()};
    Coord hi{-1, -1, -1};
    for (std::size_t v : component) {
        const Coord c = coord_of(v, dims);
        lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
        hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
    }
    const long bx = hi.x - lo.x + 3, by = hi.y - lo.y + 3, bz = hi.z - lo.z + 3;
    std::vector<std::uint8_t> box(static_cast<std::size_t>(bx * by * bz), 0);
    const auto local = [&](const Coord &c) { return (c.x - lo.x + 1) + bx * ((c.y - lo.y + 1) + by * (c.z - lo.z + 1)); };
    std::vector<long> set;
    for (std::size_t v : component) {
        const long l = local(coord_of(v, dims));
        box[static_cast<std::size_t>(l)] = 1;
        set.push_back(l);
    }
    std::sort(set.begin(), set.end());
    const long step[3] = {1, bx, bx * by};
    std::array<long, 27> cube_offset{};
    for (int k = 0; k < 27; ++k) cube_offset[k] = (k % 3 - 1) + bx * ((k / 3) % 3 - 1) + bx * by * (k / 9 - 1);

    const auto gather = [&](long l) {
        std::array<std::uint8_t, 27> cube{};
        for (int k = 0; k < 27; ++k) cube[k] = box[static_cast<std::size_t>(l + cube_offset[k])];
        return cube;
    };
    bool changed = true;
    std::vector<long> candidates;
    while (changed) {
        changed = false;
        for (int dir = 0; dir < 6; ++dir) {
            const long off = (dir % 2 ? -1 : 1) * step[dir / 2];
            candidates.clear();
            for (long l : set)
                if (box[static_cast<std::size_t>(l)] && !box[static_cast<std::size_t>(l + off)]) candidates.push_back(l);
            for (long l : candidates) {
                const auto cube = gather(l);
                int neighbours = 0;
                for (int k = 0; k < 27; ++k) neighbours += k != 13 && cube[k];
                if (neighbours <= 1) continue;
                if (!is_simple(cube)) continue;
                box[static_cast<std::size_t>(l)] = 0;
                changed = true;
            }
        }
        std::erase_if(set, [&](long l) { return !box[static_cast<std::size_t>(l)]; });
    }
    VoxelComponent out;
    for (long l : set) {
        const long x = l % bx, y = (l / bx) % by, z = l / (bx * by);
        out.push_back(index_of({x - 1 + lo.x, y - 1 + lo.y, z - 1 + lo.z}, dims));
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Graphs and chains
// ---------------------------------------------------------------------------

std::size_t SkeletonGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto &a : adjacency) n += a.size();
    return n / 2;
}

SkeletonGraph skeleton_graph(const VoxelComponent &voxels, kernels::VolumeDims dims) {
    SkeletonGraph g;
    g.voxels = voxels;
    std::sort(g.voxels.begin(), g.voxels.end());
    const std::size_t n = g.voxels.size();
    g.adjacency.assign(n, {});
    const auto find = [&](std::size_t v) -> long {
        const auto it = std::lower_bound(g.voxels.begin(), g.voxels.end(), v);
        return it != g.voxels.end() && *it == v ? static_cast<long>(it - g.voxels.begin()) : -1;
    };
    std::vector<Coord> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = coord_of(g.voxels[i], dims);
    for (std::size_t i = 0; i < n; ++i)
        for (const Coord &o : offsets26()) {
            const Coord c{coords[i].x + o.x, coords[i].y + o.y, coords[i].z + o.z};
            if (!inside(c, dims)) continue;
            const long j = find(index_of(c, dims));
            if (j >= 0) g.adjacency[i].push_back(static_cast<std::uint32_t>(j));
        }
    const auto d2 = [&](std::size_t a, std::size_t b) {
        const long dx = coords[a].x - coords[b].x, dy = coords[a].y - coords[b].y, dz = coords[a].z - coords[b].z;
        return dx * dx + dy * dy + dz * dz;
    };
    std::vector<std::vector<std::uint32_t>> pruned(n);
    for (std::size_t u = 0; u < n; ++u) {
        std::sort(g.adjacency[u].begin(), g.adjacency[u].end());
        for (std::uint32_t v : g.adjacency[u]) {
            const long l = d2(u, v);
            bool shortcut = false;
            for (std::uint32_t w : g.adjacency[u]) {
                if (w == v || d2(u, w) >= l) continue;
                const auto &aw = g.adjacency[v];
                if (std::find(aw.begin(), aw.end(), w) != aw.end() && d2(w, v) < l) {
                    shortcut = true;
                    break;
                }
            }
            if (!shortcut) pruned[u].push_back(v);
        }
    }
    for (auto &a : pruned) std::sort(a.begin(), a.end());
    g.adjacency = std::move(pruned);
    return g;
}

namespace {

void remove_edge(SkeletonGraph &g, std::uint32_t a, std::uint32_t b) {
    std::erase(g.adjacency[a], b);
    std::erase(g.adjacency[b], a);
}

// Marks edges that are not bridges, as (min, max) node pairs.
std::vector<std::pair<std::uint32_t, std::uint32_t>> cycle_edges(const SkeletonGraph &g) {
    const std::size_t n = g.adjacency.size();
    std::vector<int> disc(n, -1), low(n, 0);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> bridges;
    int timer = 0;
    struct Frame {
        std::uint32_t v;
        std::int64_t parent;
        std::size_t next;
    };
    std::vector<Frame> stack;
    for (std::uint32_t root = 0; root < n; ++root) {
        if (disc[root] >= 0) continue;
        stack.push_back({root, -1, 0});
        disc[root] = low[root] = timer++;
        while (!stack.empty()) {
            Frame &f = stack.back();
            if (f.next < g.adjacency[f.v].size()) {
                const std::uint32_t w = g.adjacency[f.v][f.next++];
                if (static_cast<std::int64_t>(w) == f.parent) continue;
                if (disc[w] >= 0) {
                    low[f.v] = std::min(low[f.v], disc[w]);
                } else {
                    disc[w] = low[w] = timer++;
                    stack.push_back({w, f.v, 0});
                }
            } else {
                const Frame done = f;
                stack.pop_back();
                if (done.parent >= 0) {
                    const auto p = static_cast<std::uint32_t>(done.parent);
                    low[p] = std::min(low[p], low[done.v]);
                    if (low[done.v] > disc[p]) bridges.emplace_back(std::min(p, done.v), std::max(p, done.v));
                }
            }
        }
    }
    std::sort(bridges.begin(), bridges.end());
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (std::uint32_t a = 0; a < n; ++a)
        for (std::uint32_t b : g.adjacency[a])
            if (a < b && !std::binary_search(bridges.begin(), bridges.end(), std::make_pair(a, b)))
                out.emplace_back(a, b);
    return out;
}

} // namespace

void cut_cycles(SkeletonGraph &graph) {
    for (;;) {
        const auto edges = cycle_edges(graph);
        if (edges.empty()) return;
        // Sorted (a, b) pairs with a < b: the first starts at the smallest cycle voxel and ends
        // at its smallest cycle neighbour.
        remove_edge(graph, edges.front().first, edges.front().second);
    }
}

std::vector<std::vector<std::uint32_t>> longest_chain_decomposition(SkeletonGraph graph, std::size_t min_nodes) {
    cut_cycles(graph);
    const std::size_t n = graph.adjacency.size();
    std::vector<std::uint8_t> alive(n, 1);
    std::vector<std::vector<std::uint32_t>> chains;
    std::vector<std::int64_t> parent(n);
    std::vector<std::uint32_t> depth(n), order;
    const auto path_to = [&](std::uint32_t t) {
        std::vector<std::uint32_t> p;
        for (std::int64_t v = t; v >= 0; v = parent[static_cast<std::size_t>(v)]) p.push_back(static_cast<std::uint32_t>(v));
        std::reverse(p.begin(), p.end());
        return p;
    };
    for (;;) {
        std::vector<std::uint32_t> best;
        for (std::uint32_t s = 0; s < n; ++s) {
            if (!alive[s] || graph.adjacency[s].size() > 1) continue;
            // Tree search from leaf s.
            order.clear();
            order.push_back(s);
            parent[s] = -1;
            depth[s] = 1;
            for (std::size_t k = 0; k < order.size(); ++k) {
                const std::uint32_t v = order[k];
                for (std::uint32_t w : graph.adjacency[v]) {
                    if (static_cast<std::int64_t>(w) == parent[v]) continue;
                    parent[w] = v;
                    depth[w] = depth[v] + 1;
                    order.push_back(w);
                }
            }
            for (std::uint32_t t : order) {
                if (graph.adjacency[t].size() > 1 || (t < s) || (t == s && order.size() > 1)) continue;
                if (depth[t] < best.size()) continue;
                std::vector<std::uint32_t> cand = path_to(t);
                if (cand.size() > best.size() || cand < best) best = std::move(cand);
            }
        }
        if (best.empty() || best.size() < std::max<std::size_t>(min_nodes, 1)) break;
        for (std::uint32_t v : best) {
            alive[v] = 0;
            for (std::uint32_t w : std::vector<std::uint32_t>(graph.adjacency[v])) remove_edge(graph, v, w);
        }
        chains.push_back(std::move(best));
    }
    return chains;
}

std::vector<std::vector<std::uint32_t>> split_chain(const std::vector<std::uint32_t> &chain, std::size_t max_nodes) {
    if (max_nodes == 0 || chain.size() <= max_nodes) return {chain};
    const std::size_t pieces = (chain.size() + max_nodes - 1) / max_nodes;
    std::vector<std::vector<std::uint32_t>> out;
    for (std::size_t p = 0; p < pieces; ++p) {
        const std::size_t a = p * chain.size() / pieces;
        const std::size_t b = (p + 1) * chain.size() / pieces;
        out.emplace_back(chain.begin() + static_cast<long>(a), chain.begin() + static_cast<long>(b));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normals
// ---------------------------------------------------------------------------

namespace {

Vec3 sobel(const ProbabilityVolume &vol, std::size_t channel, long x, long y, long z) {
    const kernels::VolumeDims &d = vol.dims;
    const std::vector<float> &v = vol.channels[channel];
    const auto at = [&](long i, long j, long k) {
        i = std::clamp(i, 0L, static_cast<long>(d.nx) - 1);
        j = std::clamp(j, 0L, static_cast<long>(d.ny) - 1);
        k = std::clamp(k, 0L, static_cast<long>(d.nz) - 1);
        return static_cast<double>(
            v[d.index(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k))]);
    };
    static constexpr double w[3] = {1.0, 2.0, 1.0};
    double g[3] = {0.0, 0.0, 0.0};
    for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b) {
            const double wt = w[a + 1] * w[b + 1];
            g[0] += wt * (at(x + 1, y + a, z + b) - at(x - 1, y + a, z + b));
            g[1] += wt * (at(x + a, y + 1, z + b) - at(x + a, y - 1, z + b));
            g[2] += wt * (at(x + a, y + b, z + 1) - at(x + a, y + b, z - 1));
        }
    return {g[0] / (32.0 * vol.spacing.x), g[1] / (32.0 * vol.spacing.y), g[2] / (32.0 * vol.spacing.z)};
}

bool window_normal_impl(const ProbabilityVolume &vol, std::size_t channel, const Vec3 &p, std::size_t window,
                        double threshold, const Vec3 &centre, Vec3 &normal) {
    const long cx = std::lround(p.x / vol.spacing.x);
    const long cy = std::lround(p.y / vol.spacing.y);
    const long cz = std::lround(p.z / vol.spacing.z);
    const long h = static_cast<long>(window / 2);
    Vec3 out{p.x - centre.x, p.y - centre.y, 0.0};
    const bool have_ref = norm(out) > 0.0;
    Vec3 ref = normalized(out);
    Vec3 sum;
    bool any = false;
    for (long z = cz - h; z <= cz + h; ++z)
        for (long y = cy - h; y <= cy + h; ++y)
            for (long x = cx - h; x <= cx + h; ++x) {
                if (!inside({x, y, z}, vol.dims)) continue;
                const Vec3 g = sobel(vol, channel, x, y, z);
                if (!(norm(g) > threshold)) continue;
                if (!have_ref && !any) ref = g;
                sum += dot(g, ref) < 0.0 ? -g : g;
                any = true;
            }
    if (!any || norm(sum) == 0.0) return false;
    normal = normalized(sum);
    if (have_ref && dot(normal, ref) < 0.0) normal = -normal;
    return true;
}

} // namespace

bool window_normal(const ProbabilityVolume &volume, std::size_t channel, const Vec3 &position,
                   const NormalParams &params, Vec3 &normal) {
    return window_normal_impl(volume, channel, position, params.window, params.magnitude_threshold, params.centre,
                              normal);
}

std::vector<NormalSample> estimate_normals(const ProbabilityVolume &volume, std::size_t channel,
                                           const std::vector<Path> &paths, const NormalParams &params) {
    if (params.window < 3) throw ConfigError("normal window must be at least 3 voxels");
    if (params.cell == 0) throw ConfigError("normal cell size must be positive");
    if (channel >= volume.channels.size()) throw ConfigError("volume has no channel " + std::to_string(channel));
    const double cell = static_cast<double>(params.cell);
    std::map<std::tuple<long, long, long>, std::vector<Vec3>> cells;
    for (const Path &p : paths)
        for (const Vec3 &q : p.points)
            cells[{static_cast<long>(std::floor(q.z / (volume.spacing.z * cell))),
                   static_cast<long>(std::floor(q.y / (volume.spacing.y * cell))),
                   static_cast<long>(std::floor(q.x / (volume.spacing.x * cell)))}]
                .push_back(q);
    std::vector<const std::vector<Vec3> *> members;
    std::vector<std::uint64_t> keys;
    for (const auto &[key, pts] : cells) {
        const auto [z, y, x] = key;
        keys.push_back(static_cast<std::uint64_t>(x) + (static_cast<std::uint64_t>(y) << 21) +
                       (static_cast<std::uint64_t>(z) << 42));
        members.push_back(&pts);
    }
    std::vector<std::uint8_t> ok(members.size(), 0);
    std::vector<NormalSample> samples(members.size());
    parallel_for(members.size(), [&](std::size_t k) {
        CounterRng rng(params.seed, keys[k]);
        const Vec3 p = (*members[k])[rng.below(members[k]->size())];
        Vec3 n;
        if (window_normal(volume, channel, p, params, n)) {
            samples[k] = {p, n};
            ok[k] = 1;
        }
    });
    std::vector<NormalSample> out;
    for (std::size_t k = 0; k < samples.size(); ++k)
        if (ok[k]) out.push_back(samples[k]);
    return out;
}

// ---------------------------------------------------------------------------
// Winding adjacency
// ---------------------------------------------------------------------------

namespace {

struct PointGrid {
    Vec3 inv;
    double cell;
    long n[3];
    std::vector<std::uint32_t> start;
    std::vector<std::uint32_t> items; ///< flat point index
    std::vector<Vec3> points;         ///< voxel units
    std::vector<std::uint32_t> owner; ///< path index per point

    long key(double v, int a) const { return std::clamp(static_cast<long>(std::floor(v / cell)), 0L, n[a] - 1); }
};

PointGrid build_grid(const std::vector<Path> &paths, const ProbabilityVolume &vol, double cell) {
    PointGrid g;
    g.cell = cell;
    g.inv = {1.0 / vol.spacing.x, 1.0 / vol.spacing.y, 1.0 / vol.spacing.z};
    const std::size_t d[3] = {vol.dims.nx, vol.dims.ny, vol.dims.nz};
    for (int a = 0; a < 3; ++a) g.n[a] = static_cast<long>(std::ceil(static_cast<double>(d[a]) / cell)) + 1;
    for (std::uint32_t p = 0; p < paths.size(); ++p)
        for (const Vec3 &q : paths[p].points) {
            g.points.push_back({q.x * g.inv.x, q.y * g.inv.y, q.z * g.inv.z});
            g.owner.push_back(p);
        }
    const auto cells = static_cast<std::size_t>(g.n[0] * g.n[1] * g.n[2]);
    std::vector<std::uint32_t> cell_of(g.points.size());
    g.start.assign(cells + 1, 0);
    for (std::size_t i = 0; i < g.points.size(); ++i) {
        const Vec3 &q = g.points[i];
        cell_of[i] = static_cast<std::uint32_t>(g.key(q.x, 0) + g.n[0] * (g.key(q.y, 1) + g.n[1] * g.key(q.z, 2)));
        ++g.start[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) g.start[c + 1] += g.start[c];
    g.items.resize(g.points.size());
    std::vector<std::uint32_t> fill(g.start.begin(), g.start.end() - 1);
    for (std::size_t i = 0; i < g.points.size(); ++i) g.items[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
    return g;
}

struct Hit {
    std::uint32_t from;
    std::uint32_t to;
    Vec3 origin; ///< scan units
    Vec3 target;
};

// Strongly connected components (iterative Tarjan); returns component id per node.
std::vector<std::uint32_t> strong_components(const std::vector<std::vector<std::uint32_t>> &adj,
                                             std::vector<std::uint32_t> &sizes) {
    const std::size_t n = adj.size();
    std::vector<int> index(n, -1), low(n, 0);
    std::vector<std::uint8_t> on_stack(n, 0);
    std::vector<std::uint32_t> comp(n, 0), stack;
    struct Frame {
        std::uint32_t v;
        std::size_t next;
    };
    std::vector<Frame> call;
    int counter = 0;
    for (std::uint32_t root = 0; root < n; ++root) {
        if (index[root] >= 0) continue;
        call.push_back({root, 0});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            Frame &f = call.back();
            if (f.next < adj[f.v].size()) {
                const std::uint32_t w = adj[f.v][f.next++];
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.v] = std::min(low[f.v], index[w]);
                }
            } else {
                const std::uint32_t v = f.v;
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
                if (low[v] == index[v]) {
                    const auto id = static_cast<std::uint32_t>(sizes.size());
                    std::uint32_t size = 0;
                    for (;;) {
                        const std::uint32_t w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        comp[w] = id;
                        ++size;
                        if (w == v) break;
                    }
                    sizes.push_back(size);
                }
            }
        }
    }
    return comp;
}

} // namespace

AdjacencyResult winding_adjacency(const ProbabilityVolume &volume, std::size_t channel,
                                  const std::vector<Path> &surface_paths, const AdjacencyParams &params) {
    if (!(params.hit_tol > 0.0) || !(params.max_ray > params.min_ray) || params.min_ray < 0.0)
        throw ConfigError("ray parameters need hit_tol > 0 and 0 <= min_ray < max_ray");
    if (channel >= volume.channels.size()) throw ConfigError("volume has no channel " + std::to_string(channel));
    AdjacencyResult result;
    if (surface_paths.empty()) return result;
    const PointGrid grid = build_grid(surface_paths, volume, params.hit_tol);
    const double tol2 = params.hit_tol * params.hit_tol;
    const double step = 0.5 * params.hit_tol;
    const kernels::VolumeView view = volume.view(channel);

    std::vector<std::vector<Hit>> per_path(surface_paths.size());
    std::vector<std::size_t> rays(surface_paths.size(), 0);
    parallel_for(surface_paths.size(), [&](std::size_t pi) {
        const Path &path = surface_paths[pi];
        for (const Vec3 &origin : path.points) {
            Vec3 n;
            if (!window_normal_impl(volume, channel, origin, params.window, params.magnitude_threshold, params.centre,
                                    n))
                continue;
            ++rays[pi];
            const Vec3 nv = normalized(Vec3{n.x * volume.spacing.x, n.y * volume.spacing.y, n.z * volume.spacing.z});
            const Vec3 o{origin.x * grid.inv.x, origin.y * grid.inv.y, origin.z * grid.inv.z};
            // 0: inside the origin's sheet, 1: between sheets, 2: inside the next sheet.
            int phase = 0;
            for (double t = 0.0; t <= params.max_ray; t += step) {
                const Vec3 q = o + t * nv;
                const Vec3 world{q.x * volume.spacing.x, q.y * volume.spacing.y, q.z * volume.spacing.z};
                const bool inside = kernels::sample_volume(view, world) >= params.tau;
                if (phase == 0 && !inside) phase = 1;
                else if (phase == 1 && inside && t >= params.min_ray) phase = 2;
                else if (phase == 2 && !inside) break;
                if (phase != 2) continue;
                double best = tol2;
                std::int64_t hit = -1;
                const long kx = static_cast<long>(std::floor(q.x / grid.cell));
                const long ky = static_cast<long>(std::floor(q.y / grid.cell));
                const long kz = static_cast<long>(std::floor(q.z / grid.cell));
                for (long z = kz - 1; z <= kz + 1; ++z)
                    for (long y = ky - 1; y <= ky + 1; ++y)
                        for (long x = kx - 1; x <= kx + 1; ++x) {
                            if (x < 0 || y < 0 || z < 0 || x >= grid.n[0] || y >= grid.n[1] || z >= grid.n[2])
                                continue;
                            const auto c = static_cast<std::size_t>(x + grid.n[0] * (y + grid.n[1] * z));
                            for (std::uint32_t k = grid.start[c]; k < grid.start[c + 1]; ++k) {
                                const std::uint32_t item = grid.items[k];
                                if (grid.owner[item] == pi) continue;
                                const Vec3 d = grid.points[item] - q;
                                const double d2 = dot(d, d);
                                if (d2 <= best && (d2 < best || hit < 0 || item < hit)) {
                                    best = d2;
                                    hit = item;
                                }
                            }
                        }
                if (hit < 0) continue;
                const std::uint32_t item = static_cast<std::uint32_t>(hit);
                const Vec3 &hp = grid.points[item];
                per_path[pi].push_back({static_cast<std::uint32_t>(pi), grid.owner[item], origin,
                                        {hp.x * volume.spacing.x, hp.y * volume.spacing.y, hp.z * volume.spacing.z}});
                break;
            }
        }
    });

    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<const Hit *>> by_pair;
    for (std::size_t p = 0; p < per_path.size(); ++p) {
        result.rays += rays[p];
        for (const Hit &h : per_path[p]) {
            by_pair[{h.from, h.to}].push_back(&h);
            ++result.hits;
        }
    }
    std::vector<std::vector<std::uint32_t>> adj(surface_paths.size());
    for (const auto &[pair, hits] : by_pair) adj[pair.first].push_back(pair.second);
    std::vector<std::uint32_t> sizes;
    const std::vector<std::uint32_t> comp = strong_components(adj, sizes);
    std::vector<std::uint8_t> dropped(surface_paths.size(), 0);
    for (std::size_t v = 0; v < surface_paths.size(); ++v)
        if (sizes[comp[v]] > 1) {
            dropped[v] = 1;
            ++result.dropped_paths;
        }

    std::vector<double> distances;
    for (const auto &[pair, hits] : by_pair) {
        const auto [a, b] = pair;
        if (dropped[a] || dropped[b]) continue;
        const auto rev = by_pair.find({b, a});
        const std::size_t against = rev == by_pair.end() ? 0 : rev->second.size();
        if (2 * hits.size() <= hits.size() + against) continue;
        WindingLink link;
        link.from = surface_paths[a].id;
        link.to = surface_paths[b].id;
        link.offset = 1;
        link.votes = static_cast<int>(hits.size());
        for (const Hit *h : hits) {
            link.pairs.emplace_back(h->origin, h->target);
            distances.push_back(norm(h->target - h->origin));
        }
        result.links.push_back(std::move(link));
    }
    if (!distances.empty()) {
        const auto mid = distances.begin() + static_cast<long>(distances.size() / 2);
        std::nth_element(distances.begin(), mid, distances.end());
        result.spacing = *mid;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<Vec3>> component_paths(const VoxelComponent &comp, const ProbabilityVolume &vol,
                                               std::size_t min_len, std::size_t max_len) {
    std::vector<std::vector<Vec3>> out;
    if (comp.size() < std::max<std::size_t>(min_len, 2)) return out;
    const SkeletonGraph g = skeleton_graph(skeletonize(comp, vol.dims), vol.dims);
    for (const auto &chain : longest_chain_decomposition(g, std::max<std::size_t>(min_len, 2)))
        for (const auto &piece : split_chain(chain, max_len)) {
            if (piece.size() < 2) continue;
            std::vector<Vec3> pts;
            for (std::uint32_t node : piece) {
                const Coord c = coord_of(g.voxels[node], vol.dims);
                pts.push_back(vol.voxel_position(static_cast<std::size_t>(c.x), static_cast<std::size_t>(c.y),
                                                 static_cast<std::size_t>(c.z)));
            }
            out.push_back(std::move(pts));
        }
    return out;
}

} // namespace

FeatureReport extract_features(const ProbabilityVolume &volume, const FeatureParams &params) {
    volume.validate();
    if (volume.channels.empty()) throw ConfigError("volume has no channels");
    FeatureReport report;
    FeatureSet &fs = report.features;
    std::int64_t next_id = 0;

    const VoxelMask surface_mask = threshold_volume(volume, surface_channel, params.tau);
    const std::vector<SliceComponent> slices = surface_components_2d(surface_mask, volume.dims);
    std::vector<std::vector<std::vector<Vec3>>> surface(slices.size());
    parallel_for(slices.size(), [&](std::size_t k) {
        surface[k] = component_paths(slices[k].voxels, volume, params.min_path_len, params.max_path_len);
    });
    for (auto &list : surface)
        for (auto &pts : list) fs.paths.push_back({next_id++, PathKind::surface, std::move(pts)});
    const std::size_t surface_count = fs.paths.size();

    const std::pair<std::size_t, PathKind> fiber_channels[2] = {{horizontal_fiber_channel, PathKind::fiber_horizontal},
                                                                {vertical_fiber_channel, PathKind::fiber_vertical}};
    for (const auto &[channel, kind] : fiber_channels) {
        if (channel >= volume.channels.size()) continue;
        const std::vector<VoxelComponent> comps =
            fiber_components(threshold_volume(volume, channel, params.tau), volume.dims);
        std::vector<std::vector<std::vector<Vec3>>> fibers(comps.size());
        parallel_for(comps.size(),
                     [&](std::size_t k) { fibers[k] = component_paths(comps[k], volume, params.min_path_len, 0); });
        for (auto &list : fibers)
            for (auto &pts : list) fs.paths.push_back({next_id++, kind, std::move(pts)});
    }

    Vec3 centre = params.normals.centre;
    if (!params.centre_given) {
        const Vec3 e = volume.extent();
        centre = {0.5 * e.x, 0.5 * e.y, 0.0};
    }
    NormalParams np = params.normals;
    np.centre = centre;
    AdjacencyParams ap = params.adjacency;
    ap.centre = centre;
    ap.tau = params.tau;
    const std::vector<Path> surface_paths(fs.paths.begin(), fs.paths.begin() + static_cast<long>(surface_count));
    fs.normals = estimate_normals(volume, surface_channel, surface_paths, np);
    AdjacencyResult adj = winding_adjacency(volume, surface_channel, surface_paths, ap);
    fs.links = std::move(adj.links);
    report.spacing = adj.spacing;
    if (surface_paths.empty()) report.warnings.push_back("no surface paths extracted");
    if (fs.links.empty()) report.warnings.push_back("no winding links found");
    return report;
}

} // namespace scroll
