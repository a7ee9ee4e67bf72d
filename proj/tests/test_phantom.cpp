#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scroll/error.hpp"
#include "scroll/features.hpp"
#include "scroll/io.hpp"
#include "scroll/metrics.hpp"
#include "scroll/phantom.hpp"

using namespace scroll;
using doctest::Approx;

namespace {

PhantomConfig undeformed() {
    PhantomConfig c;
    c.windings = 3.0;
    c.z_extent = 60.0;
    c.deformation = 0.0;
    c.affine_log_scale = 0.0;
    c.affine_shift = 0.0;
    c.gap_amplitude = 0.0;
    c.dims = {160, 160, 72};
    c.seed = 4;
    return c;
}

PhantomConfig deformed(std::uint64_t seed) {
    PhantomConfig c;
    c.windings = 4.0;
    c.z_extent = 80.0;
    c.dims = {200, 200, 96};
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("configuration bounds") {
    PhantomConfig c;
    CHECK_NOTHROW(c.validate());
    c.deformation = 2.01;
    CHECK_THROWS_AS(make_phantom(c), ConfigError);
    c = PhantomConfig{};
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PhantomConfig{};
    c.false_link_rate = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PhantomConfig{};
    c.jitter = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("noise-free undeformed observations lie on windings") {
    const Phantom ph = make_phantom(undeformed());
    const SpiralParams &s = ph.truth.spiral;
    CHECK(s.spacing() == Approx(20.0));
    std::size_t n = 0;
    for (const Path &p : ph.features.paths)
        for (const Vec3 &x : p.points) {
            const double r = radius_coordinate(compose_inverse(x, ph.truth), s);
            CHECK(std::fabs(r - nearest_winding_radius(r, s)) <= 1e-6);
            ++n;
        }
    CHECK(n > 1000);
    for (std::size_t i = 0; i < ph.features.links.size(); ++i) {
        CHECK(ph.true_offsets[i] == ph.features.links[i].offset);
        for (const auto &[a, b] : ph.features.links[i].pairs) {
            const double ra = radius_coordinate(compose_inverse(a, ph.truth), s);
            const double rb = radius_coordinate(compose_inverse(b, ph.truth), s);
            CHECK(rb - ra == Approx(ph.features.links[i].offset * s.spacing()).scale(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("deformed observations lie on the deformed sheet") {
    const Phantom ph = make_phantom(deformed(7));
    const TriMesh gt = gt_mesh(ph, 0.005, 0.5);
    const TriangleIndex index(gt);
    double worst = 0.0;
    for (const Path &p : ph.features.paths)
        if (p.kind == PathKind::surface)
            for (const Vec3 &x : p.points) worst = std::max(worst, index.distance(x));
    // Only the lattice discretisation separates the two (0.16 at twice the step, 0.016 at half).
    CHECK(worst < 0.05);
    for (const NormalSample &n : ph.features.normals) CHECK(norm(n.normal) == Approx(1.0));
}

TEST_CASE("jitter has the configured spread normal to the sheet") {
    PhantomConfig c = deformed(8);
    c.jitter = 0.5;
    const Phantom ph = make_phantom(c);
    const TriMesh gt = gt_mesh(ph, 0.01, 1.0);
    const TriangleIndex index(gt);
    double sq = 0.0;
    std::size_t n = 0;
    for (const Path &p : ph.features.paths)
        if (p.kind == PathKind::surface)
            for (const Vec3 &x : p.points) {
                const double d = index.distance(x);
                sq += d * d;
                ++n;
            }
    const double rms = std::sqrt(sq / n);
    MESSAGE("rms distance ", rms, " over ", n, " points");
    CHECK(rms == Approx(0.5).epsilon(0.15));
}

TEST_CASE("false links occur at the configured rate") {
    PhantomConfig c = deformed(9);
    c.false_link_rate = 0.1;
    c.arcs_per_winding = 8;
    c.z_slices = 24;
    const Phantom ph = make_phantom(c);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < ph.features.links.size(); ++i) wrong += ph.features.links[i].offset != ph.true_offsets[i];
    const double rate = static_cast<double>(wrong) / ph.features.links.size();
    MESSAGE(wrong, " of ", ph.features.links.size(), " links wrong");
    CHECK(ph.features.links.size() >= 300);
    CHECK(rate >= 0.07);
    CHECK(rate <= 0.13);
}

TEST_CASE("dropout removes paths") {
    PhantomConfig c = deformed(10);
    const std::size_t all = make_phantom(c).features.paths.size();
    c.dropout = 0.3;
    const std::size_t kept = make_phantom(c).features.paths.size();
    CHECK(static_cast<double>(kept) == Approx(0.7 * all).epsilon(0.15));
}

TEST_CASE("phantoms are deterministic per seed") {
    PhantomConfig c = deformed(11);
    c.jitter = 0.3;
    c.false_link_rate = 0.05;
    c.dropout = 0.1;
    const Phantom a = make_phantom(c), b = make_phantom(c);
    CHECK(io::encode_paths(a.features.paths) == io::encode_paths(b.features.paths));
    CHECK(io::encode_normals(a.features.normals) == io::encode_normals(b.features.normals));
    CHECK(io::encode_links(a.features.links) == io::encode_links(b.features.links));
    CHECK(a.true_offsets == b.true_offsets);
    CHECK(pack_parameters(a.truth) == pack_parameters(b.truth));
    c.seed = 12;
    CHECK(io::encode_paths(make_phantom(c).features.paths) != io::encode_paths(a.features.paths));
}

TEST_CASE("ground-truth mesh") {
    PhantomConfig c = deformed(13);
    const Phantom ph = make_phantom(c);
    const MeshResolution r = default_resolution(ph.truth.spiral);
    const TriMesh gt = gt_mesh(ph, r.dtheta, r.dz);
    REQUIRE(gt.labels.size() == gt.vertices.size());
    for (int l : gt.labels) CHECK(l >= 0);

    // Label of the first lattice column past 2 pi + 0.1.
    const QuadMesh q = extract_mesh(ph.truth, r.dtheta, r.dz);
    const TriMesh full = triangulate(q);
    const std::size_t i = static_cast<std::size_t>(std::ceil((two_pi + 0.1) / r.dtheta)) - 1;
    CHECK(full.labels[q.index(i, 0)] == 1);

    const TriMesh model = triangulate(q);
    CHECK(metric_chamfer(gt, model, 5000, 1) < 0.5 * r.dz);
    CHECK(*metric_wjf(gt, ph.truth) == 0.0);
    CHECK(*metric_mrwd(gt, gt, ph.truth, 50, 20) == Approx(0.0).scale(1.0));
    const StretchResult str = metric_stretch(q);
    CHECK(*str.value >= 1.0);
    MESSAGE("gt stretch ", *str.value);
}

TEST_CASE("raster occupancy") {
    PhantomConfig c = undeformed();
    const Phantom ph = make_phantom(c);
    const ProbabilityVolume sharp = rasterize(ph, c.thickness, 0.0);
    REQUIRE(sharp.channels.size() == 3);
    const kernels::VolumeView view = sharp.view(surface_channel);
    const SpiralParams &s = ph.truth.spiral;
    for (double theta = c.theta_start + 0.05; theta < s.theta_max; theta += 0.37)
        for (double z : {10.0, 30.0, 50.0}) {
            const Vec3 p = ph.forward(spiral_point(theta, s.z_min + z, s));
            CHECK(kernels::sample_volume(view, p) >= 0.5f);
        }
    bool in_range = true;
    for (const auto &ch : sharp.channels)
        for (float v : ch) in_range &= v >= 0.0f && v <= 1.0f;
    CHECK(in_range);
}

TEST_CASE("thresholded slices show one sheet crossed once per winding along each ray") {
    PhantomConfig c = undeformed();
    c.windings = 2.0;
    const Phantom ph = make_phantom(c);
    const ProbabilityVolume vol = rasterize(ph, c.thickness, c.blur);
    const VoxelMask mask = threshold_volume(vol, surface_channel);
    const SpiralParams &s = ph.truth.spiral;
    const kernels::VolumeView view = vol.view(surface_channel);

    for (const std::size_t slice : {20u, 36u, 50u}) {
        std::size_t count = 0;
        for (const SliceComponent &sc : surface_components_2d(mask, vol.dims))
            if (sc.axis == 2 && sc.slice == slice) ++count;
        CHECK(count == 1);

        const double z = slice * vol.spacing.z;
        const double cz = z - ph.forward({0, 0, 0}).z;
        for (int k = 0; k < 16; ++k) {
            const double phi = two_pi * k / 16 + 0.05;
            int expect = 0;
            for (double t = phi; t <= s.theta_max; t += two_pi) expect += t >= c.theta_start;
            int runs = 0;
            bool inside = false;
            for (double R = 0.0; R < s.outer_radius() + 8.0; R += 0.1) {
                const Vec3 p = ph.forward({R * std::cos(phi), y_sign(s.direction) * R * std::sin(phi), cz});
                const bool on = kernels::sample_volume(view, p) >= 0.5f;
                runs += on && !inside;
                inside = on;
            }
            CHECK(runs == expect);
        }
    }
}
