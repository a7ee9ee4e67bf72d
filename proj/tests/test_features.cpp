#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "scroll/features.hpp"
#include "scroll/io.hpp"
#include "scroll/metrics.hpp"
#include "scroll/phantom.hpp"
#include "scroll/random.hpp"
#include "support/chains.hpp"

using namespace scroll;
using namespace scroll::testing;
using doctest::Approx;
using kernels::VolumeDims;

namespace {

VoxelComponent voxels_where(VolumeDims d, const std::function<bool(std::size_t, std::size_t, std::size_t)> &f) {
    VoxelComponent out;
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x)
                if (f(x, y, z)) out.push_back(d.index(x, y, z));
    return out;
}

VoxelMask mask_of(VolumeDims d, const VoxelComponent &v) {
    VoxelMask m(d.count(), 0);
    for (std::size_t i : v) m[i] = 1;
    return m;
}

std::array<std::size_t, 3> coords(VolumeDims d, std::size_t i) { return {i % d.nx, (i / d.nx) % d.ny, i / (d.nx * d.ny)}; }

std::vector<float> blurred(VolumeDims d, const VoxelComponent &v, double sigma) {
    std::vector<float> data(d.count(), 0.0f);
    for (std::size_t i : v) data[i] = 1.0f;
    gaussian_blur(data, d, sigma);
    return data;
}

ProbabilityVolume volume_of(VolumeDims d, std::vector<float> surface) {
    ProbabilityVolume v = ProbabilityVolume::zeros(d, {1, 1, 1}, 1);
    v.channels[0] = std::move(surface);
    return v;
}

Path line_path(std::int64_t id, const Vec3 &from, const Vec3 &step, int n) {
    Path p{id, PathKind::surface, {}};
    for (int i = 0; i < n; ++i) p.points.push_back(from + step * static_cast<double>(i));
    return p;
}

double angle_deg(const Vec3 &a, const Vec3 &b) {
    return std::acos(std::clamp(std::fabs(dot(a, b)) / (norm(a) * norm(b)), 0.0, 1.0)) * 180.0 / std::numbers::pi;
}

} // namespace

TEST_CASE("thresholding") {
    const VolumeDims d{4, 3, 2};
    ProbabilityVolume v = ProbabilityVolume::zeros(d, {1, 1, 1}, 1);
    const VoxelMask none = threshold_volume(v, 0);
    CHECK(std::count(none.begin(), none.end(), 1) == 0);
    v.channels[0][5] = 0.6f;
    const VoxelMask m = threshold_volume(v, 0);
    CHECK(std::count(m.begin(), m.end(), 1) == 1);
    CHECK(m[5] == 1);
    std::fill(v.channels[0].begin(), v.channels[0].end(), 1.0f);
    const VoxelMask full = threshold_volume(v, 0);
    CHECK(std::count(full.begin(), full.end(), 1) == static_cast<long>(d.count()));
}

TEST_CASE("3d components use 26-connectivity") {
    const VolumeDims d{5, 5, 5};
    CHECK(fiber_components(VoxelMask(d.count(), 0), d).empty());
    VoxelMask corner(d.count(), 0);
    corner[d.index(1, 1, 1)] = corner[d.index(2, 2, 2)] = 1;
    CHECK(fiber_components(corner, d).size() == 1);
    VoxelMask gap(d.count(), 0);
    gap[d.index(1, 1, 1)] = gap[d.index(3, 1, 1)] = 1;
    const auto comps = fiber_components(gap, d);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].front() < comps[1].front());
}

TEST_CASE("2d slice components") {
    const VolumeDims d{8, 7, 6};
    CHECK(surface_components_2d(VoxelMask(d.count(), 0), d).empty());
    // One-voxel-thick sheet in the plane z = 2.
    const VoxelMask sheet = mask_of(d, voxels_where(d, [](auto, auto, auto z) { return z == 2; }));
    std::size_t per_axis[3] = {};
    for (const SliceComponent &c : surface_components_2d(sheet, d)) {
        ++per_axis[c.axis];
        for (std::size_t i : c.voxels) CHECK(coords(d, i)[c.axis] == c.slice);
        if (c.axis == 2) CHECK(c.voxels.size() == d.nx * d.ny);
        else CHECK(c.voxels.size() == (c.axis == 0 ? d.ny : d.nx));
    }
    CHECK(per_axis[0] == d.nx);
    CHECK(per_axis[1] == d.ny);
    CHECK(per_axis[2] == 1);

    // Sheets x = 1 and x = 3 joined by a single voxel at (2, 3, 4).
    VoxelComponent two = voxels_where(d, [](auto x, auto, auto) { return x == 1 || x == 3; });
    two.push_back(d.index(2, 3, 4));
    std::sort(two.begin(), two.end());
    for (const SliceComponent &c : surface_components_2d(mask_of(d, two), d))
        if (c.axis == 2) CHECK(c.voxels.size() == (c.slice == 4 ? 2 * d.ny + 1 : d.ny));
}

TEST_CASE("skeletons") {
    const VolumeDims d{30, 9, 9};
    const VoxelComponent line = voxels_where(d, [](auto x, auto y, auto z) { return y == 4 && z == 4 && x >= 5 && x < 25; });
    CHECK(skeletonize(line, d) == line);

    const VoxelComponent bar = voxels_where(d, [](auto x, auto y, auto z) {
        return x >= 5 && x < 25 && y >= 3 && y <= 5 && z >= 3 && z <= 5;
    });
    const VoxelComponent sk = skeletonize(bar, d);
    for (std::size_t v : sk) CHECK(std::binary_search(bar.begin(), bar.end(), v));
    const auto chains = longest_chain_decomposition(skeleton_graph(sk, d), 2);
    REQUIRE(chains.size() == 1);
    CHECK(chains[0].size() >= 17);
    CHECK(chains[0].size() <= 21);
    const SkeletonGraph g = skeleton_graph(sk, d);
    const auto a = coords(d, g.voxels[chains[0].front()]), b = coords(d, g.voxels[chains[0].back()]);
    CHECK(std::min(a[0], b[0]) <= 6);
    CHECK(std::max(a[0], b[0]) >= 23);
    CHECK(fiber_components(mask_of(d, sk), d).size() == 1);

    const VolumeDims e{24, 24, 5};
    const VoxelComponent ell = voxels_where(e, [](auto x, auto y, auto z) {
        const bool thick_z = z >= 1 && z <= 3;
        return thick_z && ((x >= 3 && x < 20 && y >= 3 && y <= 5) || (x >= 3 && x <= 5 && y >= 3 && y < 20));
    });
    const SkeletonGraph lg = skeleton_graph(skeletonize(ell, e), e);
    std::size_t ends = 0;
    for (const auto &nbrs : lg.adjacency) ends += nbrs.size() == 1;
    CHECK(ends == 2);
    CHECK(fiber_components(mask_of(e, lg.voxels), e).size() == 1);
}

TEST_CASE("chain decomposition examples") {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> chain;
    for (std::uint32_t i = 0; i + 1 < 30; ++i) chain.push_back({i, i + 1});
    const auto one = longest_chain_decomposition(graph_from_edges(30, chain), 2);
    REQUIRE(one.size() == 1);
    CHECK(one[0].size() == 30);

    // Y graph: branch node 0, arms of 5, 4 and 3 nodes.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> y;
    std::uint32_t next = 1;
    for (int len : {5, 4, 3}) {
        std::uint32_t prev = 0;
        for (int k = 0; k < len; ++k) {
            y.push_back({prev, next});
            prev = next++;
        }
    }
    const auto yc = longest_chain_decomposition(graph_from_edges(13, y), 2);
    REQUIRE(yc.size() == 2);
    CHECK(yc[0].size() == 10);
    CHECK(yc[1].size() == 3);
    CHECK(std::find(yc[0].begin(), yc[0].end(), 0u) != yc[0].end());

    // A cycle of 8 is cut between node 0 and its smaller neighbour, leaving one chain.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ring;
    for (std::uint32_t i = 0; i < 8; ++i) ring.push_back({i, (i + 1) % 8});
    SkeletonGraph rg = graph_from_edges(8, ring);
    cut_cycles(rg);
    CHECK(rg.edge_count() == 7);
    CHECK(std::find(rg.adjacency[0].begin(), rg.adjacency[0].end(), 1u) == rg.adjacency[0].end());
    const auto rc = longest_chain_decomposition(graph_from_edges(8, ring), 2);
    REQUIRE(rc.size() == 1);
    CHECK(rc[0].front() == 0);
    CHECK(rc[0].back() == 1);

    CHECK(longest_chain_decomposition(graph_from_edges(3, {{0, 1}}), 3).empty());
}

TEST_CASE("chain decomposition matches brute force on random graphs") {
    CounterRng rng(77, 0);
    for (int trial = 0; trial < 200; ++trial) {
        const SkeletonGraph g = random_graph(rng, 12);
        const std::size_t min_nodes = 1 + rng.below(3);
        INFO("trial ", trial, " n ", g.adjacency.size(), " edges ", g.edge_count());
        CHECK(longest_chain_decomposition(g, min_nodes) == chain_oracle(g, min_nodes));
    }
}

TEST_CASE("splitting chains") {
    std::vector<std::uint32_t> c(100);
    for (std::uint32_t i = 0; i < 100; ++i) c[i] = i;
    const auto pieces = split_chain(c, 48);
    REQUIRE(pieces.size() == 3);
    std::size_t total = 0;
    for (const auto &p : pieces) {
        CHECK(p.size() <= 48);
        total += p.size();
    }
    CHECK(total == 100);
    CHECK(split_chain(c, 0).size() == 1);
    CHECK(split_chain(c, 100).size() == 1);
}

TEST_CASE("normals of a blurred slab") {
    const VolumeDims d{40, 40, 40};
    const ProbabilityVolume v =
        volume_of(d, blurred(d, voxels_where(d, [](auto, auto, auto z) { return z >= 19 && z <= 21; }), 1.5));
    std::vector<Path> paths{line_path(0, {4, 20, 20}, {1, 0, 0}, 32), line_path(1, {20, 4, 20}, {0, 1, 0}, 32)};
    NormalParams np;
    np.centre = {20, 20, 0};
    const std::vector<NormalSample> ns = estimate_normals(v, 0, paths, np);
    REQUIRE(ns.size() >= 8);
    for (const NormalSample &s : ns) {
        CHECK(norm(s.normal) == Approx(1.0).epsilon(1e-6));
        CHECK(angle_deg(s.normal, {0, 0, 1}) <= 5.0);
    }
    ProbabilityVolume flat = volume_of(d, std::vector<float>(d.count(), 0.4f));
    CHECK(estimate_normals(flat, 0, paths, np).empty());
}

TEST_CASE("normals of a blurred spherical shell") {
    const VolumeDims d{48, 48, 48};
    const Vec3 c{24, 24, 24};
    const ProbabilityVolume v = volume_of(d, blurred(d, voxels_where(d, [&](auto x, auto y, auto z) {
                                                           const double r = norm(Vec3(x, y, z) - c);
                                                           return r >= 14.0 && r <= 16.0;
                                                       }), 1.0));
    std::vector<Path> paths;
    for (int k = 0; k < 8; ++k) {
        Path p{k, PathKind::surface, {}};
        const double phi = two_pi * k / 8;
        for (int i = -6; i <= 6; ++i) {
            const double t = 0.08 * i;
            p.points.push_back(c + Vec3{std::cos(phi) * std::cos(t), std::sin(phi) * std::cos(t), std::sin(t)} * 15.0);
        }
        paths.push_back(p);
    }
    NormalParams np;
    np.centre = c;
    const std::vector<NormalSample> ns = estimate_normals(v, 0, paths, np);
    REQUIRE(!ns.empty());
    for (const NormalSample &s : ns) {
        CHECK(angle_deg(s.normal, s.position - c) <= 10.0);
        CHECK(dot(Vec3{s.normal.x, s.normal.y, 0}, Vec3{s.position.x - c.x, s.position.y - c.y, 0}) > 0.0);
    }
}

TEST_CASE("two parallel sheets are linked once") {
    const VolumeDims d{72, 32, 24};
    const ProbabilityVolume v = volume_of(
        d, blurred(d, voxels_where(d, [](auto x, auto, auto) { return x == 20 || x == 21 || x == 40 || x == 41; }), 0.8));
    AdjacencyParams ap;
    ap.centre = {0, 16, 0};
    const std::vector<Path> one{line_path(0, {20.5, 4, 12}, {0, 1, 0}, 24)};
    CHECK(winding_adjacency(v, 0, one, ap).empty());

    const std::vector<Path> two{one[0], line_path(1, {40.5, 4, 12}, {0, 1, 0}, 24)};
    const AdjacencyResult r = winding_adjacency(v, 0, two, ap);
    REQUIRE(r.links.size() == 1);
    CHECK(r.links[0].from == 0);
    CHECK(r.links[0].to == 1);
    CHECK(r.links[0].offset == 1);
    CHECK(r.links[0].votes > 0);
    CHECK_FALSE(r.links[0].pairs.empty());
    CHECK(r.spacing == Approx(20.0).epsilon(ap.hit_tol / 20.0));
}

TEST_CASE("paths on a directed cycle are dropped") {
    // Sheet A (x = 30) and a slanted sheet B (y = x - 20) see each other along their outward
    // normals for a centre far to -y; sheet C (x = 16) only sees A.
    const VolumeDims d{80, 64, 12};
    const ProbabilityVolume v = volume_of(d, blurred(d, voxels_where(d, [](auto x, auto y, auto) {
                                                      const double dy = static_cast<double>(y) - (static_cast<double>(x) - 20.0);
                                                      const auto near = [&](std::size_t c) { return x + 1 >= c && x <= c + 1; };
                                                      return near(30) || near(16) || (x >= 36 && std::fabs(dy) < 1.6);
                                                  }), 0.8));
    AdjacencyParams ap;
    ap.centre = {10, -170, 0};
    const std::vector<Path> paths{line_path(0, {30, 18, 6}, {0, 1, 0}, 40), line_path(1, {42, 22, 6}, {1, 1, 0}, 18),
                                  line_path(2, {16, 18, 6}, {0, 1, 0}, 40)};
    const AdjacencyResult r = winding_adjacency(v, 0, paths, ap);
    CHECK(r.dropped_paths == 2);
    for (const WindingLink &l : r.links) {
        CHECK(l.from != 0);
        CHECK(l.from != 1);
        CHECK(l.to != 0);
        CHECK(l.to != 1);
    }
    CHECK(r.hits > 0);

    // Without B the link from C to A survives.
    const AdjacencyResult control = winding_adjacency(v, 0, {paths[0], paths[2]}, ap);
    CHECK(control.dropped_paths == 0);
    REQUIRE(control.links.size() == 1);
    CHECK(control.links[0].from == 2);
    CHECK(control.links[0].to == 0);
}

TEST_CASE("clean phantom features") {
    PhantomConfig c;
    c.windings = 2.0;
    c.spacing = 20.0;
    c.z_extent = 40.0;
    c.dims = {112, 112, 52};
    c.seed = 3;
    const Phantom ph = make_phantom(c);
    const ProbabilityVolume vol = rasterize(ph, c.thickness, c.blur);
    FeatureParams fp;
    fp.adjacency.centre = ph.centerline[ph.centerline.size() / 2];
    fp.normals.centre = fp.adjacency.centre;
    fp.centre_given = true;
    const FeatureReport rep = extract_features(vol, fp);
    const VoxelMask mask = threshold_volume(vol, surface_channel);

    std::size_t surface_points = 0, near = 0;
    bool inside = true;
    const TriMesh gt = gt_mesh(ph, 0.005, 0.5);
    const TriangleIndex index(gt);
    for (const Path &p : rep.features.paths) {
        CHECK(p.points.size() >= 2);
        for (std::size_t i = 0; i + 1 < p.points.size(); ++i)
            CHECK(norm(p.points[i + 1] - p.points[i]) <= 2.0 * vol.spacing.x + 1e-9);
        for (const Vec3 &x : p.points) {
            const auto xi = static_cast<std::size_t>(std::lround(x.x / vol.spacing.x));
            const auto yi = static_cast<std::size_t>(std::lround(x.y / vol.spacing.y));
            const auto zi = static_cast<std::size_t>(std::lround(x.z / vol.spacing.z));
            inside &= xi < vol.dims.nx && yi < vol.dims.ny && zi < vol.dims.nz;
            if (p.kind != PathKind::surface) continue;
            inside &= mask[vol.dims.index(xi, yi, zi)] == 1;
            ++surface_points;
            near += index.distance(x) <= 1.5 * vol.spacing.x;
        }
    }
    CHECK(inside);
    REQUIRE(surface_points > 0);
    const double frac = static_cast<double>(near) / surface_points;
    MESSAGE("surface points within 1.5 voxels: ", frac, ", links ", rep.features.links.size());
    CHECK(frac >= 0.9);

    // Offsets against unwrapped true angles of the pair endpoints.
    REQUIRE(!rep.features.links.empty());
    const SpiralParams &s = ph.truth.spiral;
    const auto true_angle = [&](const Vec3 &p) {
        const Vec3 q = compose_inverse(p, ph.truth);
        const double phi = angle_coordinate(q, s.direction);
        return phi + two_pi * std::round((radius_coordinate(q, s)) / s.spacing());
    };
    std::size_t correct = 0;
    for (const WindingLink &l : rep.features.links) {
        const auto &[a, b] = l.pairs.front();
        correct += std::lround((true_angle(b) - true_angle(a)) / two_pi) == l.offset;
    }
    CHECK(correct == rep.features.links.size());

    const FeatureReport again = extract_features(vol, fp);
    CHECK(io::encode_paths(again.features.paths) == io::encode_paths(rep.features.paths));
    CHECK(io::encode_normals(again.features.normals) == io::encode_normals(rep.features.normals));
    CHECK(io::encode_links(again.features.links) == io::encode_links(rep.features.links));
}
