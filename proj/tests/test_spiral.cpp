#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "scroll/error.hpp"
#include "scroll/random.hpp"
#include "scroll/spiral.hpp"

using namespace scroll;
using doctest::Approx;

namespace {

SpiralParams params(double rho, double windings = 10.0) {
    SpiralParams s;
    s.rho = rho;
    s.theta_max = windings * two_pi;
    s.z_min = -10.0;
    s.z_max = 10.0;
    return s;
}

/// Brute force over k * spacing, preferring the larger multiple on a tie.
double nearest_multiple_oracle(double r, double spacing) {
    double best = 0.0;
    double best_d = INFINITY;
    for (int k = 0; k <= 1000; ++k) {
        const double d = std::fabs(r - k * spacing);
        if (d <= best_d) {
            best_d = d;
            best = k * spacing;
        }
    }
    return best;
}

} // namespace

TEST_CASE("spiral points") {
    const SpiralParams s1 = params(1.0);
    const Vec3 a = spiral_point(two_pi, 0.0, s1);
    CHECK(a.x == Approx(two_pi));
    CHECK(a.y == Approx(0.0).scale(1.0));
    CHECK(a.z == 0.0);

    const Vec3 b = spiral_point(std::numbers::pi / 2, 3.0, params(2.0));
    CHECK(b.x == Approx(0.0).scale(1.0));
    CHECK(b.y == Approx(-std::numbers::pi));
    CHECK(b.z == 3.0);

    const Vec3 c = spiral_point(1e-12, 5.0, s1);
    CHECK(std::hypot(c.x, c.y) < 1e-11);

    SpiralParams cw = params(2.0);
    cw.direction = WindingDirection::clockwise;
    CHECK(spiral_point(1.0, 0.0, cw).y == Approx(-spiral_point(1.0, 0.0, params(2.0)).y));
}

TEST_CASE("spiral point domain") {
    const SpiralParams s = params(1.0, 2.0);
    CHECK_THROWS_AS(spiral_point(0.0, 0.0, s), DomainError);
    CHECK_THROWS_AS(spiral_point(s.theta_max + 1e-9, 0.0, s), DomainError);
    CHECK_THROWS_AS(spiral_point(1.0, 11.0, s), DomainError);
    CHECK_NOTHROW(spiral_point(s.theta_max, 10.0, s));
}

TEST_CASE("spiral parameter validation") {
    SpiralParams s = params(1.0);
    CHECK_NOTHROW(s.validate());
    s.rho = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = params(1.0);
    s.z_max = s.z_min;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = params(1.0);
    s.theta_max = -1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK(params(1.5).spacing() == Approx(3.0 * std::numbers::pi));
    CHECK(params(1.0, 7.0).windings() == Approx(7.0));
}

TEST_CASE("radius coordinate examples") {
    CHECK(radius_coordinate(spiral_point(4 * std::numbers::pi, 1.0, params(1.0)), params(1.0)) ==
          Approx(4 * std::numbers::pi));
    CHECK(radius_coordinate({1.0, 0.0, 0.0}, params(1.0)) == 1.0);
    CHECK(radius_coordinate({1.0, 0.0, 0.0}, params(3.7)) == 1.0);
    CHECK(radius_coordinate({0.0, -1.0, 0.0}, params(2.0 / std::numbers::pi)) == Approx(0.0).scale(1.0));
    CHECK_THROWS_AS(radius_coordinate({0.0, 0.0, 4.0}, params(1.0)), DomainError);
}

TEST_CASE("radius coordinate is constant along a winding") {
    CounterRng rng(1, 0);
    for (int i = 0; i < 2000; ++i) {
        SpiralParams s = params(rng.uniform(0.2, 5.0));
        if (i % 2) s.direction = WindingDirection::clockwise;
        const double theta = rng.uniform(1e-3, s.theta_max);
        const double z = rng.uniform(s.z_min, s.z_max);
        const double k = std::floor(theta / two_pi);
        const double phi = theta - two_pi * k;
        // Points within rounding distance of the seam can land on either side of it.
        if (phi < 1e-9 || two_pi - phi < 1e-9) continue;
        const double r = radius_coordinate(spiral_point(theta, z, s), s);
        CHECK(r == Approx(s.spacing() * k).epsilon(1e-9).scale(s.spacing()));
        CHECK(angle_coordinate(spiral_point(theta, z, s), s.direction) == Approx(phi).scale(1.0).epsilon(1e-9));
    }
}

TEST_CASE("nearest winding radius examples") {
    CHECK(nearest_winding_radius(6.5, params(1.0)) == Approx(two_pi));
    CHECK(nearest_winding_radius(3.0, params(1.0)) == 0.0);
    CHECK(nearest_winding_radius(3.2, params(1.0)) == Approx(two_pi));
    CHECK(nearest_winding_radius(5.0, 10.0) == 10.0);
    CHECK(nearest_winding_radius(4.999, 10.0) == 0.0);
}

TEST_CASE("nearest winding radius properties") {
    CounterRng rng(2, 0);
    for (int i = 0; i < 5000; ++i) {
        const double spacing = rng.uniform(0.5, 20.0);
        const double r = rng.uniform(0.0, 50.0 * spacing);
        const double rs = nearest_winding_radius(r, spacing);
        CHECK(std::fabs(r - rs) <= 0.5 * spacing * (1.0 + 1e-12));
        CHECK(nearest_winding_radius(rs, spacing) == Approx(rs).scale(spacing));
        CHECK(rs / spacing == Approx(std::round(rs / spacing)).scale(1.0));
        CHECK(rs == Approx(nearest_multiple_oracle(r, spacing)).scale(spacing));
    }
}

TEST_CASE("spiral point is injective") {
    CounterRng rng(3, 0);
    const SpiralParams s = params(1.3);
    for (int i = 0; i < 2000; ++i) {
        const double t1 = rng.uniform(0.01, s.theta_max), t2 = rng.uniform(0.01, s.theta_max);
        const double z1 = rng.uniform(-10, 10), z2 = rng.uniform(-10, 10);
        if (t1 == t2 && z1 == z2) continue;
        CHECK(norm(spiral_point(t1, z1, s) - spiral_point(t2, z2, s)) > 0.0);
    }
}

TEST_CASE("unwrap near a reference") {
    CHECK(unwrap_near(0.1, two_pi) == Approx(0.1 + two_pi));
    CHECK(unwrap_near(6.0, 0.0) == Approx(6.0 - two_pi));
    CHECK(unwrap_near(1.0, 1.2) == 1.0);
}
