#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scroll/error.hpp"
#include "scroll/gradients.hpp"
#include "support/fixtures.hpp"

using namespace scroll;
using namespace scroll::testing;

TEST_CASE("pack and unpack are inverse") {
    const ComposedTransform t = random_small_transform(3);
    const std::vector<double> p = pack_parameters(t);
    ComposedTransform u = make_identity_transform(t.spiral, {4, 5});
    u.gap = GapField::zeros(8, 4, t.spiral.theta_max, t.spiral.z_min, t.spiral.z_max);
    unpack_parameters(p, u);
    CHECK(pack_parameters(u) == p);
    CHECK(u.spiral.rho == t.spiral.rho);
    CHECK_THROWS_AS(unpack_parameters(std::vector<double>(3), u), ConfigError);
}

TEST_CASE("traces reproduce the plain transform bit for bit") {
    const ComposedTransform t = random_small_transform(5);
    CounterRng rng(9, 0);
    for (int i = 0; i < 50; ++i) {
        const Vec3 x{rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(0, 20)};
        CHECK(trace_inverse(x, t).output == compose_inverse(x, t));
        CHECK(trace_inverse(x, t).flow_path.size() == 17);
        const Vec3 axis{0, 0, x.z};
        CHECK(trace_forward(axis, t).output == compose_forward(axis, t));
    }
}

TEST_CASE("zero weights give zero loss and zero gradient") {
    const ComposedTransform t = random_small_transform(7);
    const LossBatch b = random_batch(t, 7);
    LossWeights w{0, 0, 0, 0, 0, 0, 0};
    const Evaluation ev = evaluate_with_gradients(b, t, w);
    CHECK(ev.values.total == 0.0);
    for (double g : ev.gradients.flat()) CHECK(g == 0.0);
}

TEST_CASE("center gradient of a global translation is twice the offset") {
    SpiralParams s = small_spiral();
    TransformLayout layout;
    layout.affine_keypoints = 2;
    ComposedTransform t = make_identity_transform(s, layout);
    const double d = 0.75;
    for (AffineKeypoint &k : t.affine.keypoints) k.tx = d;
    LossBatch b;
    b.enabled.fill(false);
    b.enabled[static_cast<std::size_t>(LossTerm::center)] = true;
    for (int i = 0; i < 5; ++i) {
        b.center_z.push_back(2.0 + 4.0 * i);
        b.center_reference.push_back({0.0, 0.0, b.center_z.back()});
    }
    const Evaluation ev = evaluate_with_gradients(b, t, LossWeights{});
    CHECK(ev.values.term(LossTerm::center) == doctest::Approx(d * d));
    // The keypoint weights sum to one at every z, so the summed tx gradient is the derivative of d^2.
    const double gsum = ev.gradients.affine()[2] + ev.gradients.affine()[6];
    CHECK(gsum == doctest::Approx(2.0 * d).epsilon(1e-12));
}

TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const ComposedTransform t = random_small_transform(seed);
        const LossBatch b = random_batch(t, seed);
        const GradientCheck c = check_gradients(t, b, LossWeights{});
        INFO("seed " << seed << " worst index " << c.worst_index << " straddling " << c.straddling);
        CHECK(c.max_rel_error <= 1e-3);
        CHECK(c.straddling * 50 <= c.checked);
    }
}

TEST_CASE("gradients are linear in the weights") {
    const ComposedTransform t = random_small_transform(11);
    const LossBatch b = random_batch(t, 11);
    LossWeights a{0, 0, 0, 0, 0, 0, 0};
    LossWeights c = a;
    a.normal = 1.0;
    c.windings = 1.0;
    LossWeights mix = a;
    mix.normal = 3.5;
    mix.windings = 0.25;
    const Evaluation ea = evaluate_with_gradients(b, t, a);
    const Evaluation ec = evaluate_with_gradients(b, t, c);
    const Evaluation em = evaluate_with_gradients(b, t, mix);
    for (std::size_t i = 0; i < em.gradients.flat().size(); ++i) {
        const double expect = 3.5 * ea.gradients.flat()[i] + 0.25 * ec.gradients.flat()[i];
        CHECK(em.gradients.flat()[i] == doctest::Approx(expect).epsilon(1e-10).scale(1e-12));
    }
}

TEST_CASE("evaluation is deterministic") {
    const ComposedTransform t = random_small_transform(13);
    const LossBatch b = random_batch(t, 13);
    const Evaluation e1 = evaluate_with_gradients(b, t, LossWeights{});
    const Evaluation e2 = evaluate_with_gradients(b, t, LossWeights{});
    CHECK(e1.values.total == e2.values.total);
    CHECK(std::equal(e1.gradients.flat().begin(), e1.gradients.flat().end(), e2.gradients.flat().begin()));
    CHECK(evaluate_terms(b, t, LossWeights{}).total == e1.values.total);
}

TEST_CASE("parameters untouched by the batch get exactly zero gradient") {
    const ComposedTransform t = random_small_transform(17);
    LossBatch b;
    b.enabled.fill(false);
    b.enabled[static_cast<std::size_t>(LossTerm::radius)] = true;
    CounterRng rng(1, 1);
    PathSample p;
    for (int i = 0; i < 5; ++i) p.points.push_back(sheet_point(t, 8.0 + 0.1 * i, 10.0, rng, 0.2));
    b.paths.push_back(p);
    const Evaluation ev = evaluate_with_gradients(b, t, LossWeights{});
    // No point is near the first or last z station, so only inner keypoints can be touched.
    std::size_t zero = 0;
    for (double g : ev.gradients.fine()) zero += g == 0.0;
    CHECK(zero > ev.gradients.fine().size() / 2);
}
