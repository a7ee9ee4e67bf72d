#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scroll/error.hpp"
#include "scroll/mesh.hpp"
#include "scroll/metrics.hpp"
#include "scroll/phantom.hpp"
#include "support/fixtures.hpp"

using namespace scroll;
using namespace scroll::testing;
using doctest::Approx;

TEST_CASE("identity mesh lies on the canonical spiral") {
    const ComposedTransform t = make_identity_transform(small_spiral());
    const double dtheta = 0.1, dz = 0.5;
    const QuadMesh m = extract_mesh(t, dtheta, dz);
    CHECK(m.ni == static_cast<std::size_t>(std::floor(t.spiral.theta_max / dtheta)));
    CHECK(m.nj == 41);
    CHECK(m.vertices.size() == m.ni * m.nj);
    CHECK(m.face_count() == (m.ni - 1) * (m.nj - 1));
    for (std::size_t j = 0; j < m.nj; j += 7)
        for (std::size_t i = 0; i < m.ni; i += 11) {
            const Vec3 expect = spiral_point(m.theta(i), t.spiral.z_min + j * dz, t.spiral);
            CHECK(norm(m.vertices[m.index(i, j)] - expect) < 1e-12);
        }
    const TriMesh tri = triangulate(m);
    CHECK(tri.faces.size() == 2 * m.face_count());
    CHECK(tri.labels[m.index(0, 0)] == 0);
    CHECK(tri.labels[m.index(m.ni - 1, 0)] == static_cast<int>(std::floor(m.theta(m.ni - 1) / two_pi)));
    CHECK_THROWS_AS(extract_mesh(t, 0.0, dz), ConfigError);
}

TEST_CASE("uv is arc length and height") {
    const ComposedTransform t = make_identity_transform(small_spiral());
    const QuadMesh m = extract_mesh(t, 0.05, 1.0);
    const SpiralParams &s = t.spiral;
    CHECK(m.u[0] == Approx(s.rho * 0.05));
    CHECK(m.u[1] - m.u[0] ==
          Approx(norm(spiral_point(0.1, s.z_min, s) - spiral_point(0.05, s.z_min, s))));
    CHECK(m.v[m.index(3, m.nj - 1)] == Approx(s.z_max - s.z_min));
    CHECK(m.v[m.index(3, 0)] == 0.0);
    CHECK(uv_monotone(m));
    const StretchResult str = metric_stretch(m);
    REQUIRE(str.value);
    CHECK(*str.value <= 1.01);
    CHECK(*str.value >= 1.0);
}

TEST_CASE("default resolution") {
    const SpiralParams s = small_spiral();
    const MeshResolution r = default_resolution(s);
    CHECK(r.dz == Approx(s.spacing() / 4));
    CHECK(r.dtheta * s.outer_radius() == Approx(r.dz));
}

TEST_CASE("triangle intersection") {
    const Vec3 a0{0, 0, 0}, a1{2, 0, 0}, a2{0, 2, 0};
    CHECK(triangles_intersect(a0, a1, a2, {0.5, 0.5, -1}, {0.5, 0.5, 1}, {1.5, 0.2, 0.3}));
    CHECK_FALSE(triangles_intersect(a0, a1, a2, {0.5, 0.5, 0.1}, {0.5, 0.5, 1}, {1.5, 0.2, 0.3}));
    CHECK_FALSE(triangles_intersect(a0, a1, a2, {3, 3, -1}, {3, 3, 1}, {4, 3, 0}));

    TriMesh two;
    two.vertices = {a0, a1, a2, {0.5, 0.5, -1}, {0.5, 0.5, 1}, {1.5, 0.2, 0.3}};
    two.faces = {{0, 1, 2}, {3, 4, 5}};
    CHECK(count_self_intersections(two) == 1);
    // Neighbours sharing a vertex are not counted.
    two.faces = {{0, 1, 2}, {0, 4, 5}};
    CHECK(count_self_intersections(two) == 0);
}

TEST_CASE("meshes of bounded deformations do not self-intersect") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const ComposedTransform t = random_smooth_transform(seed, 2.0);
        const QuadMesh m = extract_mesh(t, 0.08, 0.5);
        CHECK(uv_monotone(m));
        CHECK(count_self_intersections(triangulate(m)) == 0);
    }
}

TEST_CASE("refining the lattice barely changes the area") {
    const ComposedTransform t = random_smooth_transform(4, 1.5);
    // Steps dividing the extents, so both lattices cover the same sheet.
    const MeshResolution r{t.spiral.theta_max / 240.0, (t.spiral.z_max - t.spiral.z_min) / 16.0};
    const double coarse = triangulate(extract_mesh(t, r.dtheta, r.dz)).area();
    const double fine = triangulate(extract_mesh(t, r.dtheta / 2, r.dz / 2)).area();
    MESSAGE("areas ", coarse, " ", fine);
    CHECK(std::fabs(fine - coarse) < 0.01 * fine);
}

TEST_CASE("unrolled sampling of a constant volume") {
    const ComposedTransform t = make_identity_transform(small_spiral());
    ComposedTransform shifted = t;
    for (AffineKeypoint &k : shifted.affine.keypoints) k.tx = k.ty = 30.0;
    ProbabilityVolume vol = ProbabilityVolume::zeros({64, 64, 32}, {1, 1, 1}, 1);
    for (float &v : vol.channels[0]) v = 0.25f;
    const QuadMesh m = extract_mesh(shifted, 0.2, 1.0);
    const UnrolledStack s = sample_unrolled_volume(m, vol, 0, 2.0, 5, t.spiral.direction);
    CHECK(s.ni == m.ni);
    CHECK(s.nj == m.nj);
    CHECK(s.layers == 5);
    CHECK(s.data.size() == m.ni * m.nj * 5);
    for (std::size_t j = 1; j + 1 < m.nj; ++j)
        for (std::size_t i = 1; i + 1 < m.ni; ++i)
            for (std::size_t l = 0; l < 5; ++l) CHECK(s.data[i + m.ni * (j + m.nj * l)] == Approx(0.25f));
    const UnrolledStack one = sample_unrolled_volume(m, vol, 0, 2.0, 1, t.spiral.direction);
    CHECK(one.layers == 1);
}

TEST_CASE("unrolled sampling is centred on the rasterised sheet") {
    PhantomConfig c;
    c.windings = 2.0;
    c.spacing = 12.0;
    c.z_extent = 40.0;
    c.dims = {80, 80, 48};
    c.deformation = 1.0;
    c.seed = 5;
    const Phantom ph = make_phantom(c);
    const ProbabilityVolume vol = rasterize(ph, c.thickness, c.blur);
    ComposedTransform t = ph.truth;
    const MeshResolution r = default_resolution(t.spiral);
    const QuadMesh m = extract_mesh(t, r.dtheta, r.dz);
    const UnrolledStack s = sample_unrolled_volume(m, vol, surface_channel, 12.0, 5, t.spiral.direction);
    double mean[5] = {};
    std::size_t n = 0;
    for (std::size_t j = 0; j < m.nj; ++j)
        for (std::size_t i = 0; i < m.ni; ++i) {
            if (m.theta(i) < c.theta_start + 0.5) continue;
            ++n;
            for (std::size_t l = 0; l < 5; ++l) mean[l] += s.data[i + m.ni * (j + m.nj * l)];
        }
    REQUIRE(n > 0);
    for (double &x : mean) x /= static_cast<double>(n);
    MESSAGE("layer means ", mean[0], " ", mean[2], " ", mean[4]);
    CHECK(mean[2] >= 3.0 * mean[0]);
    CHECK(mean[2] >= 3.0 * mean[4]);
}
