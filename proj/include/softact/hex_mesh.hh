#pragma once

#include <array>
#include <string>
#include <vector>

#include "softact/surface_mesh.hh"
#include "softact/types.hh"

namespace softact {

enum class NodeTag : int { Free = 0, Bone = 1 };

// A pair of face-adjacent elements whose shared quad face is cut open.
struct CutFace {
  int elem_a = -1;
  int elem_b = -1;
};

// Regular hexahedral mesh on a voxel grid. Element corner order is z-fastest
// lexicographic: corner (i,j,k), i,j,k in {0,1}, sits at slot i*4 + j*2 + k.
// The same order is used by shape functions, G matrices, and the file format.
struct HexMesh {
  std::vector<Vec3> nodes;                      // rest positions
  std::vector<std::array<int, 8>> elements;     // node indices per hex
  std::vector<std::array<int, 3>> element_voxels;
  std::vector<NodeTag> tags;                    // per node
  std::vector<CutFace> cut_faces;
  double h = 0.0;
  Vec3 grid_origin = Vec3::Zero();
  std::array<int, 3> grid_dims{0, 0, 0};
  std::vector<int> voxel_to_element;  // dense grid index, -1 where empty

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  double element_volume() const { return h * h * h; }

  // -1 where the voxel holds no element.
  int element_at(int i, int j, int k) const;
  Vec3 element_center(int e) const;
  Vec3 element_corner(int e) const;  // min-corner rest position

  Vec24 gather(int e, const std::vector<Vec3>& positions) const;
  void rebuild_voxel_index();
  void validate() const;
};

HexMesh voxelize(const SurfaceMesh& surface, double h);

// Opens the mesh along the given element-pair faces by duplicating the seam
// nodes, one copy per locally connected component of each node's element
// star. Errors when a listed face does not locally separate its two sides.
HexMesh duplicate_cut_vertices(const HexMesh& mesh,
                               const std::vector<CutFace>& cuts);

// Cut spec file: {"face_pairs": [{"a": [x,y,z], "b": [x,y,z]}, ...]} where
// a/b are world-space centers of the two adjacent voxels.
std::vector<CutFace> read_cut_spec(const std::string& path,
                                   const HexMesh& mesh);

void tag_nodes_in_box(HexMesh& mesh, const Vec3& lo, const Vec3& hi,
                      NodeTag tag);

struct EmbeddingMap {
  std::vector<int> element;                  // host element per surface vertex
  std::vector<std::array<int, 8>> nodes;     // cached host element corners
  std::vector<Vec8> weights;                 // trilinear, sum to 1

  int size() const { return static_cast<int>(element.size()); }
  std::vector<Vec3> apply(const std::vector<Vec3>& node_positions) const;
};

EmbeddingMap embed_surface(const HexMesh& mesh, const SurfaceMesh& surface);

struct Sample {
  int element = -1;
  double weight = 0.0;   // V_e / N
  Vec3 point;            // material-space location
  Mat9x24 G;             // vec(F) = G * (element nodal positions)
};

struct SampleSet {
  int n_per_element = 0;
  std::vector<Sample> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

SampleSet build_samples(const HexMesh& mesh, int n_per_element);

// JSON container round-trips all fields bit-exactly.
void write_hex_mesh(const std::string& path, const HexMesh& mesh);
HexMesh read_hex_mesh(const std::string& path);

}  // namespace softact
