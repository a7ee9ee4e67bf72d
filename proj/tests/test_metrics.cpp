#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scroll/error.hpp"
#include "scroll/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/meshes.hpp"

using namespace scroll;
using namespace scroll::testing;
using doctest::Approx;

namespace {

Vec3 rotate(const Vec3 &p) {
    // Fixed rotation about a skew axis, then a shift.
    const Vec3 k = normalized(Vec3{1.0, 2.0, -0.5});
    const double a = 0.7;
    const Vec3 r = p * std::cos(a) + cross(k, p) * std::sin(a) + k * (dot(k, p) * (1.0 - std::cos(a)));
    return r + Vec3{3.0, -7.0, 11.0};
}

TriMesh moved(TriMesh m) {
    for (Vec3 &v : m.vertices) v = rotate(v);
    return m;
}

/// Oracle for WJF: nearest canonical winding of both ends of every gt slice segment.
double wjf_oracle(const TriMesh &gt, const ComposedTransform &model, std::size_t slices) {
    std::size_t total = 0, jumps = 0;
    const SpiralParams &s = model.spiral;
    double lo = INFINITY, hi = -INFINITY;
    for (const Vec3 &v : gt.vertices) lo = std::min(lo, v.z), hi = std::max(hi, v.z);
    lo = std::max(lo, s.z_min);
    hi = std::min(hi, s.z_max);
    for (std::size_t k = 0; k < slices; ++k) {
        const double z = lo + (hi - lo) * (k + 0.5) / slices;
        for (const SliceSegment &seg : slice_mesh(gt, z)) {
            const Vec3 a = compose_inverse(seg.a, model), b = compose_inverse(seg.b, model);
            // True angles of neighbouring points differ by far less than pi.
            const double pa = angle_coordinate(a, s.direction);
            const double pb = unwrap_near(angle_coordinate(b, s.direction), pa);
            const double ta = (std::hypot(a.x, a.y) - s.rho * pa) / s.spacing();
            const double tb = (std::hypot(b.x, b.y) - s.rho * pb) / s.spacing();
            ++total;
            if (std::floor(ta + 0.5) != std::floor(tb + 0.5)) ++jumps;
        }
    }
    return static_cast<double>(jumps) / total;
}

} // namespace

TEST_CASE("angular defect of developable meshes vanishes") {
    const auto flat = metric_angular_defect(plane(12, 5.0, 0.0));
    REQUIRE(flat);
    CHECK(*flat <= 1e-6);
    const auto cyl = metric_angular_defect(cylinder(40, 10, 3.0));
    REQUIRE(cyl);
    CHECK(*cyl <= 1e-6);
    const auto spiral = metric_angular_defect(triangulate(extract_mesh(make_identity_transform(small_spiral()), 0.1, 1.0)));
    REQUIRE(spiral);
    CHECK(*spiral <= 1e-6);

    TriMesh single;
    single.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    single.faces = {{0, 1, 2}};
    CHECK_FALSE(metric_angular_defect(single).has_value());
}

TEST_CASE("angular defect of a sphere sums to 4 pi") {
    const TriMesh s = icosphere(3);
    const VertexDefects d = angular_defects(s);
    double total = 0.0;
    for (std::size_t i = 0; i < d.defect.size(); ++i) {
        CHECK(d.interior[i]);
        total += d.defect[i];
    }
    CHECK(total == Approx(4.0 * std::numbers::pi).epsilon(0.01));
    CHECK(*metric_angular_defect(s) > 0.0);
}

TEST_CASE("chamfer distance") {
    const TriMesh a = plane(11, 10.0, 0.0);
    CHECK(metric_chamfer(a, a, 5000, 1) == Approx(0.0).scale(1.0));
    // Interior gt patch against a much larger parallel plane.
    const TriMesh small = plane(5, 4.0, 0.0);
    const TriMesh big = plane(21, 40.0, 1.75);
    CHECK(metric_chamfer(small, big, 5000, 2) == Approx(1.75));

    // Asymmetric: the patch lies inside the larger sheet.
    const TriMesh patch = plane(5, 4.0, 1.75);
    CHECK(metric_chamfer(patch, big, 5000, 3) == Approx(0.0).scale(1.0));
    CHECK(metric_chamfer(big, patch, 5000, 3) > 5.0);

    const TriMesh empty;
    CHECK_THROWS_AS(metric_chamfer(empty, a, 10), ConfigError);
}

TEST_CASE("point to triangle distances match brute force") {
    CounterRng rng(9, 0);
    const TriMesh m = icosphere(2);
    const TriangleIndex index(m);
    for (int i = 0; i < 300; ++i) {
        const Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        double best = INFINITY;
        for (const auto &f : m.faces)
            best = std::min(best, norm(p - closest_point_on_triangle(p, m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]])));
        CHECK(index.distance(p) == Approx(best).epsilon(1e-12).scale(1.0));
    }
    // Vertex, edge and face regions.
    const Vec3 a{0, 0, 0}, b{1, 0, 0}, c{0, 1, 0};
    CHECK(closest_point_on_triangle({-1, -1, 0}, a, b, c) == a);
    CHECK(norm(closest_point_on_triangle({0.5, -1, 2}, a, b, c) - Vec3{0.5, 0, 0}) < 1e-15);
    CHECK(norm(closest_point_on_triangle({0.2, 0.2, 3}, a, b, c) - Vec3{0.2, 0.2, 0}) < 1e-15);
}

TEST_CASE("stretch") {
    TriMesh m = plane(6, 5.0, 0.0);
    const StretchResult iso = metric_stretch(m);
    REQUIRE(iso.value);
    CHECK(*iso.value == Approx(1.0));
    for (auto &uv : m.uv) uv = {uv[0] / 2, uv[1] / 2};
    CHECK(*metric_stretch(m).value == Approx(2.0));
    for (auto &uv : m.uv) uv = {uv[0] * 4, uv[1] * 4};
    CHECK(*metric_stretch(m).value == Approx(2.0));

    m.uv.assign(m.vertices.size(), {0.0, 0.0});
    const StretchResult none = metric_stretch(m);
    CHECK_FALSE(none.value.has_value());
    CHECK(none.excluded_edges > 0);
}

TEST_CASE("winding jump fraction") {
    const ComposedTransform t = random_smooth_transform(3, 1.0);
    const TriMesh gt = triangulate(extract_mesh(t, 0.05, 0.7));
    const auto clean = metric_wjf(gt, t, 40);
    REQUIRE(clean);
    CHECK(*clean == 0.0);

    TriMesh bad = gt;
    const std::size_t victim = bad.vertices.size() / 2 + 17;
    const Vec3 v = bad.vertices[victim];
    const Vec3 c = compose_inverse(v, t);
    const Vec3 out = normalized(Vec3{c.x, c.y, 0.0}) * (0.6 * t.spiral.spacing());
    bad.vertices[victim] = compose_forward(c + out, t);
    const auto jumped = metric_wjf(bad, t, 40);
    REQUIRE(jumped);
    CHECK(*jumped > 0.0);
    CHECK(*jumped == Approx(wjf_oracle(bad, t, 40)));

    TriMesh far = gt;
    for (Vec3 &p : far.vertices) p.z += 1000.0;
    CHECK_FALSE(metric_wjf(far, t, 40).has_value());
}

TEST_CASE("mean radial winding distance") {
    const ComposedTransform t = make_identity_transform(small_spiral());
    const TriMesh model = triangulate(extract_mesh(t, 0.02, 1.0));
    const auto same = metric_mrwd(model, model, t, 60, 10);
    REQUIRE(same);
    CHECK(*same == Approx(0.0).scale(1.0));

    TriMesh pushed = model;
    for (Vec3 &p : pushed.vertices) {
        const double r = std::hypot(p.x, p.y);
        p.x *= (r + 0.8) / r;
        p.y *= (r + 0.8) / r;
    }
    const auto d = metric_mrwd(pushed, model, t, 60, 10);
    REQUIRE(d);
    CHECK(*d == Approx(0.8).epsilon(0.01));

    // Labels derived from the model when gt carries none.
    TriMesh unlabelled = model;
    unlabelled.labels.clear();
    CHECK(*metric_mrwd(unlabelled, model, t, 60, 10) == Approx(0.0).scale(1.0));
    CHECK(winding_labels(model, t) == model.labels);

    TriMesh no_labels = model;
    no_labels.labels.clear();
    CHECK_THROWS_AS(metric_mrwd(model, no_labels, t, 60, 10), ConfigError);
}

TEST_CASE("metrics are invariant to a common rigid motion") {
    const TriMesh a = icosphere(2);
    TriMesh b = a;
    for (Vec3 &v : b.vertices) v = v * 1.3;
    CHECK(metric_chamfer(moved(a), moved(b), 4000, 5) == Approx(metric_chamfer(a, b, 4000, 5)).epsilon(1e-9));
    CHECK(*metric_angular_defect(moved(a)) == Approx(*metric_angular_defect(a)).epsilon(1e-9));
    TriMesh p = plane(6, 5.0, 0.0);
    for (auto &uv : p.uv) uv = {uv[0] * 0.7, uv[1] * 1.1};
    CHECK(*metric_stretch(moved(p)).value == Approx(*metric_stretch(p).value).epsilon(1e-9));

    // Translation of both model and gt leaves WJF and MRWD unchanged.
    const ComposedTransform t = random_smooth_transform(6, 1.0);
    const TriMesh gt = triangulate(extract_mesh(t, 0.05, 0.7));
    TriMesh noisy = gt;
    CounterRng rng(6, 0);
    for (Vec3 &v : noisy.vertices) v = v + Vec3{rng.normal(), rng.normal(), 0.0} * 0.8;
    const Vec3 shift{4.0, -2.5, 0.0};
    ComposedTransform ts = t;
    for (AffineKeypoint &k : ts.affine.keypoints) k.tx += shift.x, k.ty += shift.y;
    TriMesh gs = gt, ns = noisy;
    for (Vec3 &v : gs.vertices) v = v + shift;
    for (Vec3 &v : ns.vertices) v = v + shift;
    CHECK(*metric_wjf(ns, ts, 30) == Approx(*metric_wjf(noisy, t, 30)));
    CHECK(*metric_mrwd(ns, gs, ts, 50, 10) == Approx(*metric_mrwd(noisy, gt, t, 50, 10)).epsilon(1e-9));
}

TEST_CASE("doubling the sample counts barely moves the metrics") {
    const ComposedTransform t = random_smooth_transform(7, 1.0);
    const TriMesh model = triangulate(extract_mesh(t, 0.05, 0.7));
    TriMesh gt = model;
    CounterRng rng(7, 0);
    for (Vec3 &v : gt.vertices) v = v + Vec3{rng.normal(), rng.normal(), 0.0} * 0.3;
    const double c1 = metric_chamfer(gt, model, 20000, 1), c2 = metric_chamfer(gt, model, 40000, 1);
    CHECK(std::fabs(c1 - c2) < 0.02 * c2);
    const double m1 = *metric_mrwd(gt, model, t, 100, 50), m2 = *metric_mrwd(gt, model, t, 200, 50);
    CHECK(std::fabs(m1 - m2) < 0.02 * m2);
}
