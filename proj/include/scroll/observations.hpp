#pragma once

// Sparse observations extracted from probability volumes (or synthesized by the phantom).
// They are the only input the fitter sees.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scroll/vec3.hpp"

namespace scroll {

enum class PathKind : std::uint8_t { surface, fiber_horizontal, fiber_vertical };

/// "surface", "fiber_h" or "fiber_v".
const char *path_kind_name(PathKind kind) noexcept;
/// Inverse of path_kind_name; throws ConfigError for anything else.
PathKind parse_path_kind(const std::string &name);

/// Ordered, non-branching sequence of scan-space points on one sheet or fiber.
struct Path {
    std::int64_t id = 0;
    PathKind kind = PathKind::surface;
    std::vector<Vec3> points;

    friend bool operator==(const Path &, const Path &) = default;
};

struct NormalSample {
    Vec3 position;
    Vec3 normal; ///< unit length

    friend bool operator==(const NormalSample &, const NormalSample &) = default;
};

/// Relative winding number between two surface paths. offset = +1 means `to` is one
/// winding further out than `from`.
struct WindingLink {
    std::int64_t from = 0;
    std::int64_t to = 0;
    int offset = 1;
    std::vector<std::pair<Vec3, Vec3>> pairs; ///< (point on from, ray hit on to)
    int votes = 0;

    friend bool operator==(const WindingLink &, const WindingLink &) = default;
};

struct FeatureSet {
    std::vector<Path> paths;
    std::vector<NormalSample> normals;
    std::vector<WindingLink> links;
};

} // namespace scroll
