#pragma once

// Lattice mesh of the deformed spiral, its UV flattening, and sampling of the unrolled volume.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "scroll/transform.hpp"
#include "scroll/volume.hpp"

namespace scroll {

/// Vertex (i, j) sits at spiral angle (i + 1) * dtheta and height z_min + j * dz.
struct QuadMesh {
    std::size_t ni = 0;
    std::size_t nj = 0;
    double dtheta = 0.0;
    double dz = 0.0;
    std::vector<Vec3> vertices; ///< index i + ni * j
    std::vector<double> u;      ///< per vertex
    std::vector<double> v;      ///< per vertex

    std::size_t index(std::size_t i, std::size_t j) const noexcept { return i + ni * j; }
    std::size_t face_count() const noexcept { return ni > 0 && nj > 0 ? (ni - 1) * (nj - 1) : 0; }
    double theta(std::size_t i) const noexcept { return static_cast<double>(i + 1) * dtheta; }
};

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;
    std::vector<int> labels;                 ///< optional per-vertex winding index
    std::vector<std::array<double, 2>> uv;   ///< optional per-vertex UV

    double area() const;
};

/// dz = spacing / 4; dtheta makes the outermost chord about dz long.
struct MeshResolution {
    double dtheta;
    double dz;
};
MeshResolution default_resolution(const SpiralParams &spiral);

/// Vertices at compose_forward(spiral_point((i+1)*dtheta, z_min + j*dz)), with UV assigned.
QuadMesh extract_mesh(const ComposedTransform &t, double dtheta, double dz);

/// U: cumulative chord length along the canonical spiral; V: z - z_min.
void assign_uv(QuadMesh &mesh, const SpiralParams &spiral);

/// Splits each quad along the diagonal selected by the parity of i + j. Labels are the
/// winding index floor(theta / 2 pi); UV is copied.
TriMesh triangulate(const QuadMesh &mesh);

/// Number of intersecting triangle pairs, excluding pairs that share a vertex.
std::size_t count_self_intersections(const TriMesh &mesh);

/// True when U strictly increases with i and V strictly increases with j.
bool uv_monotone(const QuadMesh &mesh);

struct UnrolledStack {
    std::size_t ni = 0;
    std::size_t nj = 0;
    std::size_t layers = 0;
    std::vector<float> data; ///< index i + ni * (j + nj * layer)
    std::size_t degenerate_normals = 0;
};

/// Samples `channel` of `volume` at each vertex, offset along the outward lattice normal by
/// `layers` evenly spaced distances in [-thickness/2, thickness/2] (just 0 when layers == 1).
UnrolledStack sample_unrolled_volume(const QuadMesh &mesh, const ProbabilityVolume &volume, std::size_t channel,
                                     double thickness, std::size_t layers, WindingDirection direction);

/// Triangle-triangle test used by count_self_intersections (non-coplanar configurations).
bool triangles_intersect(const Vec3 &a0, const Vec3 &a1, const Vec3 &a2, const Vec3 &b0, const Vec3 &b1,
                         const Vec3 &b2);

} // namespace scroll
