#pragma once

// Fitting losses. Every term is a function of the canonical-space images of scan-space
// observations; score_terms() evaluates all of them from those images and, on request,
// their adjoints, so the value-only and gradient code paths share one implementation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scroll/observations.hpp"
#include "scroll/transform.hpp"

namespace scroll {

enum class LossTerm : std::uint8_t { normal, radius, windings, distance, fiber, stretch, center };
inline constexpr std::size_t loss_term_count = 7;

const char *loss_term_name(LossTerm term) noexcept;

struct LossWeights {
    double normal = 200.0;
    double radius = 5.0;
    double windings = 10.0;
    double distance = 4.0;
    double fiber_direction = 5.0;
    double stretch = 200.0;
    double center = 1.0;

    double of(LossTerm term) const noexcept;
    /// Throws ConfigError if any weight is negative or non-finite.
    void validate() const;
};

struct PathSample {
    PathKind kind = PathKind::surface;
    std::vector<Vec3> points; ///< in path order
};

struct PointPair {
    Vec3 a;
    Vec3 b;
    int offset = 1; ///< b is `offset` windings outside a
};

struct StretchSample {
    Vec3 position;
    Vec3 delta; ///< unit vector perpendicular to the local surface normal
};

struct LossBatch {
    std::vector<PathSample> paths;
    std::vector<NormalSample> normals;
    std::vector<PointPair> pairs;
    std::vector<StretchSample> stretch;
    std::vector<double> center_z;
    std::vector<Vec3> center_reference; ///< scan-space reference centerline at each center_z
    double normal_epsilon = 1.0;        ///< finite offset along the normal (one voxel)
    std::array<bool, loss_term_count> enabled{true, true, true, true, true, true, true};

    bool is_enabled(LossTerm term) const noexcept { return enabled[static_cast<std::size_t>(term)]; }
};

struct LossValues {
    std::array<double, loss_term_count> terms{};
    double total = 0.0;
    std::size_t skipped_normals = 0;
    /// Hash of every discrete choice made while scoring (signs of absolute values, nearest
    /// winding branches, interpolation cells). Finite differences are only meaningful
    /// between parameter sets that share a signature.
    std::uint64_t branch_signature = 0;

    double term(LossTerm t) const noexcept { return terms[static_cast<std::size_t>(t)]; }
};

/// Scan-space points whose canonical images score_terms() needs, in a fixed order.
std::vector<Vec3> batch_queries(const LossBatch &batch);

/// Optional adjoint outputs of score_terms. Spans must match the input sizes.
struct TermAdjoints {
    std::span<Vec3> canonical; ///< dL/d(canonical image) per query
    std::span<Vec3> center;    ///< dL/d(forward image of the axis) per center_z
    double rho = 0.0;          ///< explicit dL/d rho (excluding the transform's own dependence)
};

/// Scores every enabled term from the canonical images of batch_queries() and the scan-space
/// images of the axis points (0, 0, center_z). Throws NumericError naming the term and sample
/// if a term evaluates to a non-finite value.
LossValues score_terms(const LossBatch &batch, std::span<const Vec3> canonical, std::span<const Vec3> center_images,
                       const SpiralParams &spiral, const LossWeights &weights, TermAdjoints *adjoints = nullptr);

/// Evaluates the batch under `t` (no gradients).
LossValues evaluate_terms(const LossBatch &batch, const ComposedTransform &t, const LossWeights &weights);

// Single-term conveniences (unweighted).
double loss_normal(std::span<const NormalSample> samples, const ComposedTransform &t, double epsilon = 1.0);
double loss_radius(std::span<const Vec3> path, const ComposedTransform &t);
double loss_windings(std::span<const PointPair> pairs, const ComposedTransform &t);
double loss_distance(std::span<const Vec3> path, const ComposedTransform &t);
double loss_fiber_direction(const PathSample &path, const ComposedTransform &t);
double loss_stretch(std::span<const StretchSample> samples, const ComposedTransform &t);
double loss_center(const ComposedTransform &t, std::span<const double> z, std::span<const Vec3> reference);

/// Distance loss switches on at distance_start_step.
LossValues total_loss(const LossBatch &batch, const ComposedTransform &t, const LossWeights &weights,
                      std::int64_t step, std::int64_t distance_start_step);

/// distance_start_step for a run of total_steps: half the run, i.e. 10000 of 20000.
std::int64_t scaled_distance_start(std::int64_t total_steps, std::int64_t reference_start = 10000,
                                   std::int64_t reference_total = 20000);

} // namespace scroll
