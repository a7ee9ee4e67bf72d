#pragma once

// Optimisation loop: identity initialisation, counter-seeded minibatches, Adam.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scroll/gradients.hpp"
#include "scroll/losses.hpp"
#include "scroll/observations.hpp"
#include "scroll/transform.hpp"

namespace scroll {

struct FitConfig {
    double learning_rate = 5e-4;
    std::int64_t total_steps = 20000;
    std::size_t points_per_path = 100;
    std::size_t winding_points = 2000;
    std::size_t normal_points = 2000;
    std::size_t regularization_points = 1500;
    std::int64_t distance_start_step = -1; ///< < 0: half of total_steps
    std::size_t paths_per_batch = 64;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::int64_t checkpoint_every = 0; ///< 0: never
    std::int64_t history_every = 100;

    LossWeights weights;
    std::array<bool, loss_term_count> enabled{true, true, true, true, true, true, true};
    WindingDirection direction = WindingDirection::anticlockwise;
    std::optional<double> rho;             ///< overrides the estimate from winding links
    std::vector<Vec3> centerline;          ///< (x, y) per z; empty: centre of the observations
    TransformLayout layout;
    std::size_t center_samples = 32;
    double normal_epsilon = 1.0;
    /// Per-component bound on flow node values, in units of each grid's smallest spacing.
    /// Below euler_steps / 12 every Euler step, and hence the flow, stays a diffeomorphism.
    double max_velocity = 1.0;

    /// Throws ConfigError on invalid values.
    void validate() const;
    std::int64_t effective_distance_start() const;
};

struct HistoryRow {
    std::int64_t step = 0;
    std::array<double, loss_term_count> terms{};
    double total = 0.0;
};

struct FitMetadata {
    std::vector<double> center_z;
    std::vector<Vec3> center_reference;
    std::vector<HistoryRow> history;
    std::int64_t steps = 0;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    std::array<double, loss_term_count> final_terms{};
};

struct FittedModel {
    ComposedTransform transform;
    FitMetadata meta;
};

/// Complete optimiser state; fitting N steps, saving this, restoring and fitting N more equals
/// fitting 2N steps.
struct FitState {
    ComposedTransform transform;
    std::vector<double> params; ///< flat parameters (pack_parameters layout)
    std::vector<double> scales; ///< per-parameter normalisation used by Adam
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::int64_t step = 0;
    FitMetadata meta;
};

/// Identity transform around the observations. rho from the median link hit distance per
/// winding unless overridden; theta_max covers the farthest observation plus one spacing.
ComposedTransform init_parameters(const FeatureSet &features, const FitConfig &config);

/// Per-slice centre used for initialisation: interpolated config.centerline, or the centre of
/// the observations' xy bounding box.
Vec3 initial_center(const FeatureSet &features, const FitConfig &config, double z);

/// Draws the minibatch for `step`; a pure function of (features, config, reference, step).
LossBatch sample_batch(const FeatureSet &features, const FitConfig &config, const FitMetadata &meta,
                       std::int64_t step);

FitState init_fit(const FeatureSet &features, const FitConfig &config);

/// Called after each completed step (checkpointing, progress).
using StepCallback = std::function<void(const FitState &)>;

/// Advances `state` to `until_step`. On a non-finite loss throws NumericError; `state` then
/// holds the last good parameters.
void run_fit(FitState &state, const FeatureSet &features, const FitConfig &config, std::int64_t until_step,
             const StepCallback &callback = {});

/// Final model: grids rounded to float (the stored precision) and the final loss evaluated
/// on the rounded parameters with the batch for step total_steps.
FittedModel finish_fit(const FitState &state, const FeatureSet &features, const FitConfig &config);

FittedModel fit(const FeatureSet &features, const FitConfig &config, const StepCallback &callback = {});

/// Rounds flow grids and gap values to float, as stored in the model file.
void round_to_storage(ComposedTransform &t);

/// Loss of `model` on the batch used for its recorded final loss.
LossValues reevaluate(const FittedModel &model, const FeatureSet &features, const FitConfig &config);

/// Clamps coarse and fine flow parameters to config.max_velocity grid spacings.
void project_parameters(std::span<double> params, const ComposedTransform &t, const FitConfig &config);
/// One Adam update on normalised parameters q = p / scale (exposed for testing).
void adam_update(std::span<double> params, std::span<const double> grads, std::span<const double> scales,
                 std::span<double> m, std::span<double> v, std::int64_t t, const FitConfig &config);

} // namespace scroll
