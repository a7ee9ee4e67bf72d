#pragma once

// Reverse-mode derivatives of the losses with respect to every transform parameter and rho.
// Each stage is differentiated by hand; the Euler recursion is unrolled and its intermediate
// positions stored.

#include <cstddef>
#include <span>
#include <vector>

#include "scroll/losses.hpp"
#include "scroll/transform.hpp"

namespace scroll {

/// Offsets of each parameter group inside the flat parameter vector.
/// Affine keypoints contribute (log_sx, log_sy, tx, ty) each; grids are stored like
/// VectorGrid::data; the gap lattice like GapField::values; rho comes last.
struct ParamLayout {
    std::size_t affine_offset = 0;
    std::size_t affine_count = 0;
    std::size_t coarse_offset = 0;
    std::size_t coarse_count = 0;
    std::size_t fine_offset = 0;
    std::size_t fine_count = 0;
    std::size_t gap_offset = 0;
    std::size_t gap_count = 0;
    std::size_t rho_index = 0;
    std::size_t size = 0;

    static ParamLayout of(const ComposedTransform &t);
    friend bool operator==(const ParamLayout &, const ParamLayout &) = default;
};

std::vector<double> pack_parameters(const ComposedTransform &t);
/// Writes `params` back into `t` (including t.spiral.rho). Throws ConfigError on a size mismatch.
void unpack_parameters(std::span<const double> params, ComposedTransform &t);

/// Gradient container congruent with the parameters of one ComposedTransform.
class ParameterGradients {
  public:
    ParameterGradients() = default;
    explicit ParameterGradients(const ParamLayout &layout) : layout_(layout), values_(layout.size, 0.0) {}

    const ParamLayout &layout() const noexcept { return layout_; }
    std::span<double> flat() noexcept { return values_; }
    std::span<const double> flat() const noexcept { return values_; }

    std::span<double> affine() noexcept { return flat().subspan(layout_.affine_offset, layout_.affine_count); }
    std::span<double> coarse() noexcept { return flat().subspan(layout_.coarse_offset, layout_.coarse_count); }
    std::span<double> fine() noexcept { return flat().subspan(layout_.fine_offset, layout_.fine_count); }
    std::span<double> gap() noexcept { return flat().subspan(layout_.gap_offset, layout_.gap_count); }
    std::span<const double> affine() const noexcept { return flat().subspan(layout_.affine_offset, layout_.affine_count); }
    std::span<const double> coarse() const noexcept { return flat().subspan(layout_.coarse_offset, layout_.coarse_count); }
    std::span<const double> fine() const noexcept { return flat().subspan(layout_.fine_offset, layout_.fine_count); }
    std::span<const double> gap() const noexcept { return flat().subspan(layout_.gap_offset, layout_.gap_count); }
    double &rho() noexcept { return values_[layout_.rho_index]; }
    double rho() const noexcept { return values_[layout_.rho_index]; }

    void add(const ParameterGradients &other);
    void scale(double s) noexcept;
    bool all_finite() const noexcept;

  private:
    ParamLayout layout_;
    std::vector<double> values_;
};

/// Stored intermediates of compose_inverse for one scan-space point.
struct InverseTrace {
    Vec3 input;
    AffineKeypoint keypoint;       ///< interpolated affine parameters at input.z
    PerSliceAffine::Station station;
    std::vector<Vec3> flow_path;   ///< step_count + 1 positions; front() is the affine output
    int gap_segment = -1;          ///< -1: inside the innermost sheet; otherwise gap index
    Vec3 output;
};

/// Stored intermediates of compose_forward for one canonical point.
struct ForwardTrace {
    Vec3 input;
    std::vector<Vec3> flow_path;   ///< front() is the gap output
    Vec3 output;
};

/// Same value as compose_inverse (bit-identical), keeping intermediates.
InverseTrace trace_inverse(const Vec3 &x, const ComposedTransform &t);
/// Same value as compose_forward (bit-identical), keeping intermediates. Gap stage is
/// differentiated only for points on the axis, where it is the identity.
ForwardTrace trace_forward(const Vec3 &x, const ComposedTransform &t);

/// Accumulates d(loss)/d(parameters) into `grads` given g = d(loss)/d(trace.output).
void backprop_inverse(const InverseTrace &trace, const Vec3 &g, const ComposedTransform &t, ParameterGradients &grads);
/// Same for a forward trace of an axis point (x = y = 0).
void backprop_forward(const ForwardTrace &trace, const Vec3 &g, const ComposedTransform &t, ParameterGradients &grads);

struct Evaluation {
    LossValues values;
    ParameterGradients gradients;
};

/// Weighted total loss of `batch` under `t` and its exact gradient. Results are bit-identical
/// across calls and across worker counts.
Evaluation evaluate_with_gradients(const LossBatch &batch, const ComposedTransform &t, const LossWeights &weights);

} // namespace scroll
