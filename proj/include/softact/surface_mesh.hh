#pragma once

#include <array>
#include <string>
#include <vector>

#include "softact/types.hh"

namespace softact {

// Triangle surface mesh. Normals are always recomputed, never stored.
struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  // Throws ConfigError on out-of-range indices or zero-area faces.
  void validate() const;

  // Area-weighted unit vertex normals.
  std::vector<Vec3> vertex_normals() const;

  Vec3 bbox_min() const;
  Vec3 bbox_max() const;
};

// Unit vertex normals of an arbitrary vertex configuration over the mesh's
// face topology (used for deformed embedded surfaces).
std::vector<Vec3> vertex_normals(const std::vector<Vec3>& positions,
                                 const std::vector<std::array<int, 3>>& faces);

// Undirected edges not shared by exactly two opposedly-oriented faces.
// Empty result means the surface is closed.
std::vector<std::pair<int, int>> non_manifold_edges(const SurfaceMesh& mesh);

// Parity ray cast. Requires a closed surface for a meaningful answer.
bool point_inside(const SurfaceMesh& mesh, const Vec3& p);

// Separating-axis triangle / axis-aligned-box overlap test.
bool triangle_box_overlap(const Vec3& box_center, const Vec3& box_half,
                          const Vec3& a, const Vec3& b, const Vec3& c);

// OBJ I/O: v and f records only (normals recomputed on load).
SurfaceMesh read_obj(const std::string& path);
void write_obj(const std::string& path, const SurfaceMesh& mesh);
// Writes "v x y z r g b" records (vertex-color OBJ extension).
void write_obj_colored(const std::string& path, const SurfaceMesh& mesh,
                       const std::vector<Vec3>& colors);

}  // namespace softact
