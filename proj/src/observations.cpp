#include "scroll/observations.hpp"

#include "scroll/error.hpp"

namespace scroll {

const char *path_kind_name(PathKind kind) noexcept {
    switch (kind) {
    case PathKind::surface: return "surface";
    case PathKind::fiber_horizontal: return "fiber_h";
    case PathKind::fiber_vertical: return "fiber_v";
    }
    return "?";
}

PathKind parse_path_kind(const std::string &name) {
    if (name == "surface") return PathKind::surface;
    if (name == "fiber_h") return PathKind::fiber_horizontal;
    if (name == "fiber_v") return PathKind::fiber_vertical;
    throw ConfigError("unknown path kind '" + name + "'");
}

} // namespace scroll
