#pragma once

// Small analytic meshes with known curvature.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "scroll/mesh.hpp"

namespace scroll::testing {

/// n x n grid of unit squares in the plane z = h, centred on the origin.
inline TriMesh plane(std::size_t n, double size, double h) {
    QuadMesh q;
    q.ni = q.nj = n;
    q.dtheta = q.dz = size / (n - 1);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            q.vertices.push_back({-0.5 * size + i * q.dtheta, -0.5 * size + j * q.dz, h});
            q.u.push_back(i * q.dtheta);
            q.v.push_back(j * q.dz);
        }
    return triangulate(q);
}

inline TriMesh cylinder(std::size_t around, std::size_t up, double radius) {
    TriMesh m;
    for (std::size_t j = 0; j < up; ++j)
        for (std::size_t i = 0; i < around; ++i) {
            const double a = two_pi * i / around;
            m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), static_cast<double>(j)});
        }
    for (std::size_t j = 0; j + 1 < up; ++j)
        for (std::size_t i = 0; i < around; ++i) {
            const auto v = [&](std::size_t ii, std::size_t jj) {
                return static_cast<std::uint32_t>((ii % around) + around * jj);
            };
            m.faces.push_back({v(i, j), v(i + 1, j), v(i + 1, j + 1)});
            m.faces.push_back({v(i, j), v(i + 1, j + 1), v(i, j + 1)});
        }
    return m;
}

inline TriMesh icosphere(int subdivisions) {
    const double g = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {{-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0}, {0, -1, g}, {0, 1, g},
                  {0, -1, -g}, {0, 1, -g}, {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1}};
    m.faces = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
               {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (Vec3 &v : m.vertices) v = normalized(v);
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            m.vertices.push_back(normalized(m.vertices[a] + m.vertices[b]));
            const auto idx = static_cast<std::uint32_t>(m.vertices.size() - 1);
            mid.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<std::uint32_t, 3>> next;
        for (const auto &f : m.faces) {
            const std::uint32_t a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        m.faces = std::move(next);
    }
    return m;
}

} // namespace scroll::testing
