#pragma once

// Evaluation metrics between a fitted model / mesh and a ground-truth surface.
// Undefined metrics are reported as std::nullopt.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "scroll/mesh.hpp"
#include "scroll/transform.hpp"

namespace scroll {

/// Spatial-hash index over a triangle mesh answering exact point-to-surface distance queries.
class TriangleIndex {
  public:
    explicit TriangleIndex(const TriMesh &mesh);
    /// Distance from p to the closest point of any triangle.
    double distance(const Vec3 &p) const;
    /// Index of the closest triangle and the closest point on it.
    std::size_t closest(const Vec3 &p, Vec3 *point = nullptr) const;

  private:
    const TriMesh &mesh_;
    Vec3 lo_;
    double cell_ = 1.0;
    std::int64_t n_[3] = {1, 1, 1};
    std::vector<std::uint32_t> start_;
    std::vector<std::uint32_t> items_;
};

/// Closest point to p on triangle (a, b, c).
Vec3 closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c);

/// Intersection of the mesh with the plane z = z0: one segment per crossed triangle.
struct SliceSegment {
    Vec3 a;
    Vec3 b;
    std::uint32_t face;
};
std::vector<SliceSegment> slice_mesh(const TriMesh &mesh, double z0);

/// Winding jump fraction: share of gt slice segments whose endpoints map to different
/// nearest windings of the model.
std::optional<double> metric_wjf(const TriMesh &gt, const ComposedTransform &model, std::size_t slices = 100);

/// Winding index of each vertex: its nearest model winding in canonical space.
std::vector<int> winding_labels(const TriMesh &mesh, const ComposedTransform &model);

/// Mean radial winding distance between same-index windings of gt and model along rays cast
/// from the model centerline. The model mesh needs per-vertex winding labels; gt labels
/// default to winding_labels(gt, model).
std::optional<double> metric_mrwd(const TriMesh &gt, const TriMesh &model_mesh, const ComposedTransform &model,
                                  std::size_t angles_per_slice = 100, std::size_t slices = 100);

/// One-directional chamfer distance: mean distance from area-uniform samples on gt to pred.
double metric_chamfer(const TriMesh &gt, const TriMesh &pred, std::size_t sample_count, std::uint64_t seed = 0);

struct VertexDefects {
    std::vector<double> defect; ///< 2 pi minus the incident angle sum (signed)
    std::vector<char> interior;
};
VertexDefects angular_defects(const TriMesh &mesh);

/// Mean |angular defect| over interior vertices.
std::optional<double> metric_angular_defect(const TriMesh &mesh);

struct StretchResult {
    std::optional<double> value;
    std::size_t excluded_edges = 0;
};
/// Mean over lattice edges of max(L3D / Luv, Luv / L3D).
StretchResult metric_stretch(const QuadMesh &mesh);
/// Same over the unique edges of a triangle mesh carrying UV.
StretchResult metric_stretch(const TriMesh &mesh);

struct MetricsReport {
    std::optional<double> wjf;
    std::optional<double> mrwd;
    std::optional<double> chamfer;
    std::optional<double> angular_defect;
    std::optional<double> stretch;
    std::size_t self_intersections = 0;
};

} // namespace scroll
