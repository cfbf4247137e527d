#pragma once

// Shared geometry builders for the test suite.

#include <array>
#include <map>
#include <vector>

#include "softact/surface_mesh.hh"
#include "softact/types.hh"

namespace fixtures {

using softact::SurfaceMesh;
using softact::Vec3;

// Axis-aligned box tessellated with nx*ny*nz quads per axis pair, welded
// along the edges, outward orientation.
inline SurfaceMesh box_surface_subdivided(const Vec3& lo, const Vec3& hi,
                                          int nx, int ny, int nz) {
  SurfaceMesh m;
  std::map<std::array<int, 3>, int> ids;
  std::array<int, 3> n{nx, ny, nz};
  auto vertex = [&](std::array<int, 3> p) {
    auto it = ids.find(p);
    if (it != ids.end()) return it->second;
    int id = static_cast<int>(m.vertices.size());
    Vec3 t(static_cast<double>(p[0]) / n[0], static_cast<double>(p[1]) / n[1],
           static_cast<double>(p[2]) / n[2]);
    m.vertices.push_back(lo + t.cwiseProduct(hi - lo));
    ids[p] = id;
    return id;
  };
  // axis = face normal direction; side 0 at lo, 1 at hi
  for (int axis = 0; axis < 3; ++axis) {
    int ua = (axis + 1) % 3, va = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      for (int i = 0; i < n[ua]; ++i) {
        for (int j = 0; j < n[va]; ++j) {
          std::array<int, 3> p00{}, p10{}, p01{}, p11{};
          p00[axis] = p10[axis] = p01[axis] = p11[axis] = side * n[axis];
          p00[ua] = i, p00[va] = j;
          p10[ua] = i + 1, p10[va] = j;
          p01[ua] = i, p01[va] = j + 1;
          p11[ua] = i + 1, p11[va] = j + 1;
          int a = vertex(p00), b = vertex(p10), c = vertex(p11),
              d = vertex(p01);
          if (side == 1) {
            m.faces.push_back({a, b, c});
            m.faces.push_back({a, c, d});
          } else {
            m.faces.push_back({a, c, b});
            m.faces.push_back({a, d, c});
          }
        }
      }
    }
  }
  return m;
}

inline SurfaceMesh box_surface(const Vec3& lo, const Vec3& hi) {
  return box_surface_subdivided(lo, hi, 1, 1, 1);
}

// Octahedron subdivided `levels` times, vertices projected to the sphere.
inline SurfaceMesh sphere_surface(const Vec3& center, double radius,
                                  int levels) {
  std::vector<Vec3> v = {{1, 0, 0}, {0, 1, 0}, {-1, 0, 0},
                         {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::array<int, 3>> f = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4},
                                       {3, 0, 4}, {1, 0, 5}, {2, 1, 5},
                                       {3, 2, 5}, {0, 3, 5}};
  for (int l = 0; l < levels; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      int id = static_cast<int>(v.size());
      v.push_back((v[a] + v[b]).normalized());
      mid[key] = id;
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(4 * f.size());
    for (const auto& t : f) {
      int ab = midpoint(t[0], t[1]);
      int bc = midpoint(t[1], t[2]);
      int ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  SurfaceMesh m;
  m.vertices.reserve(v.size());
  for (const auto& p : v) m.vertices.push_back(center + radius * p);
  m.faces = std::move(f);
  return m;
}

}  // namespace fixtures
