#include "softact/surface_mesh.hh"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace softact {

void SurfaceMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int idx = faces[f][k];
      if (idx < 0 || idx >= n)
        throw ConfigError("surface face " + std::to_string(f) +
                          " references vertex " + std::to_string(idx) +
                          " out of range");
    }
    const Vec3& a = vertices[faces[f][0]];
    const Vec3& b = vertices[faces[f][1]];
    const Vec3& c = vertices[faces[f][2]];
    if ((b - a).cross(c - a).norm() <= 0.0)
      throw ConfigError("surface face " + std::to_string(f) + " is degenerate");
  }
}

std::vector<Vec3> vertex_normals(const std::vector<Vec3>& positions,
                                 const std::vector<std::array<int, 3>>& faces) {
  std::vector<Vec3> n(positions.size(), Vec3::Zero());
  for (const auto& f : faces) {
    const Vec3 c = (positions[f[1]] - positions[f[0]])
                       .cross(positions[f[2]] - positions[f[0]]);
    n[f[0]] += c;
    n[f[1]] += c;
    n[f[2]] += c;
  }
  for (auto& v : n) {
    const double len = v.norm();
    if (len > 0) v /= len;
  }
  return n;
}

std::vector<Vec3> SurfaceMesh::vertex_normals() const {
  return softact::vertex_normals(vertices, faces);
}

Vec3 SurfaceMesh::bbox_min() const {
  Vec3 m = Vec3::Constant(std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) m = m.cwiseMin(v);
  return m;
}

Vec3 SurfaceMesh::bbox_max() const {
  Vec3 m = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) m = m.cwiseMax(v);
  return m;
}

std::vector<std::pair<int, int>> non_manifold_edges(const SurfaceMesh& mesh) {
  // For a closed orientable surface every directed edge (a,b) appears once
  // and its opposite (b,a) appears once.
  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      directed[{f[k], f[(k + 1) % 3]}] += 1;
    }
  }
  std::vector<std::pair<int, int>> bad;
  for (const auto& [e, count] : directed) {
    if (e.first > e.second) continue;  // report each undirected edge once
    auto it = directed.find({e.second, e.first});
    const int back = it == directed.end() ? 0 : it->second;
    if (count != 1 || back != 1) bad.push_back(e);
  }
  // Directed edges whose reverse never appears at all.
  for (const auto& [e, count] : directed) {
    (void)count;
    if (directed.find({e.second, e.first}) == directed.end()) {
      auto norm = std::minmax(e.first, e.second);
      std::pair<int, int> ue{norm.first, norm.second};
      if (std::find(bad.begin(), bad.end(), ue) == bad.end()) bad.push_back(ue);
    }
  }
  std::sort(bad.begin(), bad.end());
  bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
  return bad;
}

namespace {

// Moller-Trumbore, returns t for ray o + t*d, strict interior hits only.
bool ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                  const Vec3& c, double* t_out, bool* near_edge) {
  constexpr double eps = 1e-13;
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = d.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < eps) return false;
  const double inv = 1.0 / det;
  const Vec3 s = o - a;
  const double u = s.dot(p) * inv;
  if (u < -1e-12 || u > 1.0 + 1e-12) return false;
  const Vec3 q = s.cross(e1);
  const double v = d.dot(q) * inv;
  if (v < -1e-12 || u + v > 1.0 + 1e-12) return false;
  const double t = e2.dot(q) * inv;
  if (t <= eps) return false;
  *t_out = t;
  *near_edge = u < 1e-9 || v < 1e-9 || u + v > 1.0 - 1e-9;
  return true;
}

}  // namespace

bool point_inside(const SurfaceMesh& mesh, const Vec3& p) {
  // Fixed skew directions; retry when a hit lands near a triangle edge,
  // where parity counting is unreliable.
  static const Vec3 dirs[4] = {
      Vec3(0.57735026, 0.30151134, 0.75479714).normalized(),
      Vec3(-0.27262862, 0.89442719, 0.35245849).normalized(),
      Vec3(0.80178373, -0.26726124, 0.53452248).normalized(),
      Vec3(0.11043153, 0.66258916, -0.74080868).normalized()};
  for (const Vec3& d : dirs) {
    int crossings = 0;
    bool clean = true;
    for (const auto& f : mesh.faces) {
      double t;
      bool near_edge;
      if (ray_triangle(p, d, mesh.vertices[f[0]], mesh.vertices[f[1]],
                       mesh.vertices[f[2]], &t, &near_edge)) {
        if (near_edge) {
          clean = false;
          break;
        }
        ++crossings;
      }
    }
    if (clean) return (crossings % 2) == 1;
  }
  // All rays grazed an edge; fall back to the last parity computed.
  int crossings = 0;
  for (const auto& f : mesh.faces) {
    double t;
    bool near_edge;
    if (ray_triangle(p, dirs[0], mesh.vertices[f[0]], mesh.vertices[f[1]],
                     mesh.vertices[f[2]], &t, &near_edge))
      ++crossings;
  }
  return (crossings % 2) == 1;
}

namespace {

inline void min_max(double a, double b, double c, double& lo, double& hi) {
  lo = std::min(a, std::min(b, c));
  hi = std::max(a, std::max(b, c));
}

bool plane_box_overlap(const Vec3& n, const Vec3& v, const Vec3& half) {
  Vec3 vmin, vmax;
  for (int i = 0; i < 3; ++i) {
    if (n(i) > 0) {
      vmin(i) = -half(i) - v(i);
      vmax(i) = half(i) - v(i);
    } else {
      vmin(i) = half(i) - v(i);
      vmax(i) = -half(i) - v(i);
    }
  }
  if (n.dot(vmin) > 0) return false;
  return n.dot(vmax) >= 0;
}

}  // namespace

bool triangle_box_overlap(const Vec3& box_center, const Vec3& box_half,
                          const Vec3& a, const Vec3& b, const Vec3& c) {
  // Akenine-Moller SAT: 3 box axes, 1 triangle normal, 9 cross axes.
  const Vec3 v0 = a - box_center, v1 = b - box_center, v2 = c - box_center;
  const Vec3 e0 = v1 - v0, e1 = v2 - v1, e2 = v0 - v2;

  double lo, hi;
  for (int i = 0; i < 3; ++i) {
    min_max(v0(i), v1(i), v2(i), lo, hi);
    if (lo > box_half(i) || hi < -box_half(i)) return false;
  }

  const Vec3 edges[3] = {e0, e1, e2};
  const Vec3 verts[3] = {v0, v1, v2};
  for (int i = 0; i < 3; ++i) {
    const Vec3& e = edges[i];
    for (int axis = 0; axis < 3; ++axis) {
      Vec3 ax = Vec3::Zero();
      ax(axis) = 1.0;
      const Vec3 cross = ax.cross(e);
      if (cross.squaredNorm() < 1e-24) continue;
      double p0 = cross.dot(verts[0]);
      double p1 = cross.dot(verts[1]);
      double p2 = cross.dot(verts[2]);
      min_max(p0, p1, p2, lo, hi);
      const double r = box_half(0) * std::abs(cross(0)) +
                       box_half(1) * std::abs(cross(1)) +
                       box_half(2) * std::abs(cross(2));
      if (lo > r || hi < -r) return false;
    }
  }

  return plane_box_overlap(e0.cross(e1), v0, box_half);
}

SurfaceMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open OBJ file: " + path);
  SurfaceMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v(0) >> v(1) >> v(2);
      if (ss.fail()) throw IoError("malformed vertex record in " + path);
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string item;
      while (ss >> item) {
        // "i", "i/t", "i//n", "i/t/n" all start with the vertex index.
        idx.push_back(std::stoi(item.substr(0, item.find('/'))));
      }
      if (idx.size() < 3) throw IoError("face with <3 vertices in " + path);
      for (size_t k = 1; k + 1 < idx.size(); ++k)  // fan-triangulate
        mesh.faces.push_back({idx[0] - 1, idx[k] - 1, idx[k + 1] - 1});
    }
  }
  mesh.validate();
  return mesh;
}

void write_obj(const std::string& path, const SurfaceMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write OBJ file: " + path);
  out.precision(17);
  for (const auto& v : mesh.vertices)
    out << "v " << v(0) << " " << v(1) << " " << v(2) << "\n";
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

void write_obj_colored(const std::string& path, const SurfaceMesh& mesh,
                       const std::vector<Vec3>& colors) {
  if (colors.size() != mesh.vertices.size())
    throw ConfigError("color count does not match vertex count");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write OBJ file: " + path);
  out.precision(17);
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    const Vec3& c = colors[i];
    out << "v " << v(0) << " " << v(1) << " " << v(2) << " " << c(0) << " "
        << c(1) << " " << c(2) << "\n";
  }
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

}  // namespace softact
