#pragma once

// Probability volumes to sparse observations: thresholding, connected components,
// skeletons, chains, normals and relative winding numbers.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "scroll/observations.hpp"
#include "scroll/volume.hpp"

namespace scroll {

using VoxelMask = std::vector<std::uint8_t>;
/// Linear voxel indices (x fastest), ascending.
using VoxelComponent = std::vector<std::size_t>;

/// Voxel is set iff probability >= tau.
VoxelMask threshold_volume(const ProbabilityVolume &volume, std::size_t channel, float tau = 0.5f);

/// Maximal 26-connected components, ordered by their smallest voxel index.
std::vector<VoxelComponent> fiber_components(const VoxelMask &mask, kernels::VolumeDims dims);

struct SliceComponent {
    int axis = 2;          ///< slice normal: 0 = x, 1 = y, 2 = z
    std::size_t slice = 0; ///< slice index along axis
    VoxelComponent voxels;
};

/// 8-connected components of every slice along x, then y, then z.
std::vector<SliceComponent> surface_components_2d(const VoxelMask &mask, kernels::VolumeDims dims);

/// Undirected graph over skeleton voxels. Neighbour lists are sorted.
struct SkeletonGraph {
    std::vector<std::size_t> voxels; ///< ascending linear indices
    std::vector<std::vector<std::uint32_t>> adjacency;

    std::size_t edge_count() const;
};

/// Topology-preserving thinning to curves: removes 26-simple voxels that are not curve ends,
/// in six directional sub-passes, until nothing changes.
VoxelComponent skeletonize(const VoxelComponent &component, kernels::VolumeDims dims);

/// 26-adjacency graph of `voxels` without the long side of any adjacency triangle.
SkeletonGraph skeleton_graph(const VoxelComponent &voxels, kernels::VolumeDims dims);

/// Removes, while any cycle remains, the edge from the smallest voxel on a cycle to its
/// smallest neighbour on that cycle.
void cut_cycles(SkeletonGraph &graph);

/// Chains as node indices into graph.voxels. Repeatedly takes the longest simple path in the
/// residual forest (ties: lexicographically smallest node sequence, read from its smaller end),
/// deletes its nodes, and stops when the longest remaining path has fewer than min_nodes nodes.
std::vector<std::vector<std::uint32_t>> longest_chain_decomposition(SkeletonGraph graph, std::size_t min_nodes);

/// Splits a chain into ceil(n / max_nodes) consecutive pieces of near-equal length.
std::vector<std::vector<std::uint32_t>> split_chain(const std::vector<std::uint32_t> &chain, std::size_t max_nodes);

struct NormalParams {
    std::size_t window = 5;       ///< voxels, odd
    double magnitude_threshold = 0.05;
    std::size_t cell = 4;         ///< stratification cell, voxels
    std::uint64_t seed = 0;
    Vec3 centre;                  ///< normals are oriented away from this axis (xy only)
};

/// Sign-aligned mean Sobel gradient over a cubic window around `position` (scan units).
/// Returns false if no gradient in the window exceeds the threshold.
bool window_normal(const ProbabilityVolume &volume, std::size_t channel, const Vec3 &position,
                   const NormalParams &params, Vec3 &normal);

std::vector<NormalSample> estimate_normals(const ProbabilityVolume &volume, std::size_t channel,
                                           const std::vector<Path> &paths, const NormalParams &params);

struct AdjacencyParams {
    double hit_tol = 1.5;  ///< voxels
    double min_ray = 3.0;  ///< voxels; hits closer than this are ignored
    double max_ray = 64.0; ///< voxels
    std::size_t window = 3;
    double magnitude_threshold = 0.05;
    Vec3 centre;
    float tau = 0.5f; ///< rays leave their own sheet and register hits only inside the next one
};

struct AdjacencyResult {
    std::vector<WindingLink> links;
    double spacing = 0.0;        ///< median hit distance over kept links (scan units); 0 if none
    std::size_t rays = 0;
    std::size_t hits = 0;
    std::size_t dropped_paths = 0; ///< nodes removed for lying on directed cycles
    bool empty() const noexcept { return links.empty(); }
};

AdjacencyResult winding_adjacency(const ProbabilityVolume &volume, std::size_t channel,
                                  const std::vector<Path> &surface_paths, const AdjacencyParams &params);

struct FeatureParams {
    float tau = 0.5f;
    std::size_t min_path_len = 10;
    std::size_t max_path_len = 48; ///< surface paths only; 0 keeps chains whole
    NormalParams normals;
    AdjacencyParams adjacency;
    bool centre_given = false;     ///< otherwise the xy centre of the volume
};

struct FeatureReport {
    FeatureSet features;
    double spacing = 0.0;
    std::vector<std::string> warnings;
};

/// Full pipeline: surface paths from 2D slice components, fiber paths from 3D components of
/// the two fiber channels, normals on the surface paths, and winding links.
FeatureReport extract_features(const ProbabilityVolume &volume, const FeatureParams &params);

} // namespace scroll
