#include "softact/hex_mesh.hh"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace softact {

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1},
                               {1, 0, 0}, {1, 0, 1}, {1, 1, 0}, {1, 1, 1}};

}  // namespace

int HexMesh::element_at(int i, int j, int k) const {
  if (i < 0 || j < 0 || k < 0 || i >= grid_dims[0] || j >= grid_dims[1] ||
      k >= grid_dims[2])
    return -1;
  return voxel_to_element[(i * grid_dims[1] + j) * grid_dims[2] + k];
}

Vec3 HexMesh::element_corner(int e) const {
  const auto& v = element_voxels[e];
  return grid_origin + h * Vec3(v[0], v[1], v[2]);
}

Vec3 HexMesh::element_center(int e) const {
  return element_corner(e) + Vec3::Constant(0.5 * h);
}

Vec24 HexMesh::gather(int e, const std::vector<Vec3>& positions) const {
  Vec24 out;
  for (int n = 0; n < 8; ++n)
    out.segment<3>(3 * n) = positions[elements[e][n]];
  return out;
}

void HexMesh::rebuild_voxel_index() {
  voxel_to_element.assign(
      static_cast<size_t>(grid_dims[0]) * grid_dims[1] * grid_dims[2], -1);
  for (int e = 0; e < num_elements(); ++e) {
    const auto& v = element_voxels[e];
    voxel_to_element[(v[0] * grid_dims[1] + v[1]) * grid_dims[2] + v[2]] = e;
  }
}

void HexMesh::validate() const {
  if (h <= 0) throw ConfigError("voxel size must be positive");
  if (elements.empty()) throw ConfigError("hex mesh has no elements");
  if (tags.size() != nodes.size())
    throw ConfigError("node tag count does not match node count");
  for (int e = 0; e < num_elements(); ++e) {
    for (int n = 0; n < 8; ++n) {
      const int idx = elements[e][n];
      if (idx < 0 || idx >= num_nodes())
        throw ConfigError("element " + std::to_string(e) +
                          " references node out of range");
    }
    const Vec3 corner = element_corner(e);
    for (int n = 0; n < 8; ++n) {
      const Vec3 expect =
          corner + h * Vec3(kCorner[n][0], kCorner[n][1], kCorner[n][2]);
      if ((nodes[elements[e][n]] - expect).norm() > 1e-9 * h)
        throw ConfigError("element " + std::to_string(e) +
                          " is not an axis-aligned cube in rest state");
    }
  }
}

HexMesh voxelize(const SurfaceMesh& surface, double h) {
  if (h <= 0) throw ConfigError("voxel size must be positive");
  surface.validate();
  const auto bad_edges = non_manifold_edges(surface);
  if (!bad_edges.empty()) {
    std::ostringstream msg;
    msg << "surface is not closed; offending edges:";
    for (const auto& e : bad_edges) msg << " (" << e.first << "," << e.second << ")";
    throw ConfigError(msg.str());
  }

  const Vec3 lo = surface.bbox_min(), hi = surface.bbox_max();
  std::array<int, 3> vlo, vhi;
  for (int d = 0; d < 3; ++d) {
    vlo[d] = static_cast<int>(std::floor(lo(d) / h));
    vhi[d] = static_cast<int>(std::ceil(hi(d) / h)) - 1;
  }

  HexMesh mesh;
  mesh.h = h;
  mesh.grid_origin = h * Vec3(vlo[0], vlo[1], vlo[2]);
  for (int d = 0; d < 3; ++d) mesh.grid_dims[d] = vhi[d] - vlo[d] + 1;

  const Vec3 half = Vec3::Constant(0.5 * h);
  std::vector<std::array<int, 3>> occupied;
  for (int i = 0; i < mesh.grid_dims[0]; ++i)
    for (int j = 0; j < mesh.grid_dims[1]; ++j)
      for (int k = 0; k < mesh.grid_dims[2]; ++k) {
        const Vec3 center =
            mesh.grid_origin + h * (Vec3(i, j, k) + Vec3::Constant(0.5));
        bool occ = point_inside(surface, center);
        if (!occ) {
          for (const auto& f : surface.faces) {
            if (triangle_box_overlap(center, half, surface.vertices[f[0]],
                                     surface.vertices[f[1]],
                                     surface.vertices[f[2]])) {
              occ = true;
              break;
            }
          }
        }
        if (occ) occupied.push_back({i, j, k});
      }
  if (occupied.empty()) throw ConfigError("no occupied voxels at h = " + std::to_string(h));

  // Grid nodes in z-fastest lexicographic order, compacted to used ones.
  const int ny = mesh.grid_dims[1] + 1, nz = mesh.grid_dims[2] + 1;
  auto gnode = [&](int i, int j, int k) { return (i * ny + j) * nz + k; };
  std::map<int, int> node_id;
  for (const auto& v : occupied)
    for (const auto& c : kCorner)
      node_id[gnode(v[0] + c[0], v[1] + c[1], v[2] + c[2])] = 0;
  int next = 0;
  for (auto& [g, id] : node_id) id = next++;

  mesh.nodes.resize(node_id.size());
  for (const auto& [g, id] : node_id) {
    const int i = g / (ny * nz), j = (g / nz) % ny, k = g % nz;
    mesh.nodes[id] = mesh.grid_origin + h * Vec3(i, j, k);
  }
  mesh.tags.assign(mesh.nodes.size(), NodeTag::Free);

  for (const auto& v : occupied) {
    std::array<int, 8> elem;
    for (int n = 0; n < 8; ++n)
      elem[n] = node_id.at(
          gnode(v[0] + kCorner[n][0], v[1] + kCorner[n][1], v[2] + kCorner[n][2]));
    mesh.elements.push_back(elem);
    mesh.element_voxels.push_back(v);
  }
  mesh.rebuild_voxel_index();
  mesh.validate();
  return mesh;
}

namespace {

// Shared nodes of two hexes; a quad face in common means exactly 4.
std::vector<int> shared_nodes(const std::array<int, 8>& a,
                              const std::array<int, 8>& b) {
  std::vector<int> out;
  for (int x : a)
    if (std::find(b.begin(), b.end(), x) != b.end()) out.push_back(x);
  return out;
}

}  // namespace

HexMesh duplicate_cut_vertices(const HexMesh& mesh,
                               const std::vector<CutFace>& cuts) {
  HexMesh out = mesh;
  if (cuts.empty()) return out;

  std::set<std::pair<int, int>> cut_set;
  std::set<int> seam_nodes;
  for (const auto& c : cuts) {
    if (c.elem_a < 0 || c.elem_a >= mesh.num_elements() || c.elem_b < 0 ||
        c.elem_b >= mesh.num_elements())
      throw ConfigError("cut face references element out of range");
    const auto shared = shared_nodes(mesh.elements[c.elem_a], mesh.elements[c.elem_b]);
    if (shared.size() != 4)
      throw ConfigError("cut elements " + std::to_string(c.elem_a) + "," +
                        std::to_string(c.elem_b) + " are not face-adjacent");
    cut_set.insert({std::min(c.elem_a, c.elem_b), std::max(c.elem_a, c.elem_b)});
    seam_nodes.insert(shared.begin(), shared.end());
  }

  std::vector<std::vector<int>> star(mesh.num_nodes());
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int n : mesh.elements[e]) star[n].push_back(e);

  for (int node : seam_nodes) {
    const auto& elems = star[node];
    const int m = static_cast<int>(elems.size());
    // Components of the element star; adjacency = an uncut shared quad face
    // that contains this node.
    std::vector<int> comp(m, -1);
    int ncomp = 0;
    for (int s = 0; s < m; ++s) {
      if (comp[s] >= 0) continue;
      comp[s] = ncomp;
      std::vector<int> stack{s};
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        for (int t = 0; t < m; ++t) {
          if (comp[t] >= 0) continue;
          const auto shared =
              shared_nodes(mesh.elements[elems[cur]], mesh.elements[elems[t]]);
          if (shared.size() != 4) continue;
          if (std::find(shared.begin(), shared.end(), node) == shared.end())
            continue;
          const auto key = std::minmax(elems[cur], elems[t]);
          if (cut_set.count({key.first, key.second})) continue;
          comp[t] = ncomp;
          stack.push_back(t);
        }
      }
      ++ncomp;
    }

    for (const auto& c : cuts) {
      int ia = -1, ib = -1;
      for (int s = 0; s < m; ++s) {
        if (elems[s] == c.elem_a) ia = s;
        if (elems[s] == c.elem_b) ib = s;
      }
      if (ia >= 0 && ib >= 0 && comp[ia] == comp[ib])
        throw ConfigError(
            "cut seam does not separate elements " + std::to_string(c.elem_a) +
            " and " + std::to_string(c.elem_b) + " at node " +
            std::to_string(node));
    }
    if (ncomp == 1) continue;

    // Component 0 keeps the original node id; the rest get fresh copies.
    std::vector<int> copy_id(ncomp, node);
    for (int c = 1; c < ncomp; ++c) {
      copy_id[c] = out.num_nodes();
      out.nodes.push_back(out.nodes[node]);
      out.tags.push_back(out.tags[node]);
    }
    for (int s = 0; s < m; ++s) {
      if (comp[s] == 0) continue;
      for (int n = 0; n < 8; ++n)
        if (out.elements[elems[s]][n] == node)
          out.elements[elems[s]][n] = copy_id[comp[s]];
    }
  }

  out.cut_faces.insert(out.cut_faces.end(), cuts.begin(), cuts.end());
  return out;
}

std::vector<CutFace> read_cut_spec(const std::string& path,
                                   const HexMesh& mesh) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cut spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("cut spec parse failure in " + path + ": " + e.what());
  }
  auto locate = [&](const nlohmann::json& arr) {
    const Vec3 p(arr.at(0).get<double>(), arr.at(1).get<double>(),
                 arr.at(2).get<double>());
    std::array<int, 3> v;
    for (int d = 0; d < 3; ++d)
      v[d] = static_cast<int>(
          std::lround((p(d) - mesh.grid_origin(d)) / mesh.h - 0.5));
    const int e = mesh.element_at(v[0], v[1], v[2]);
    if (e < 0)
      throw ConfigError("cut spec point is not an element center: " +
                        arr.dump());
    return e;
  };
  std::vector<CutFace> cuts;
  for (const auto& fp : j.at("face_pairs")) {
    CutFace c;
    c.elem_a = locate(fp.at("a"));
    c.elem_b = locate(fp.at("b"));
    const auto& va = mesh.element_voxels[c.elem_a];
    const auto& vb = mesh.element_voxels[c.elem_b];
    const int dist = std::abs(va[0] - vb[0]) + std::abs(va[1] - vb[1]) +
                     std::abs(va[2] - vb[2]);
    if (dist != 1)
      throw ConfigError("cut spec pair is not face-adjacent: " + fp.dump());
    cuts.push_back(c);
  }
  return cuts;
}

void tag_nodes_in_box(HexMesh& mesh, const Vec3& lo, const Vec3& hi,
                      NodeTag tag) {
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const Vec3& p = mesh.nodes[n];
    if ((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all())
      mesh.tags[n] = tag;
  }
}

std::vector<Vec3> EmbeddingMap::apply(
    const std::vector<Vec3>& node_positions) const {
  std::vector<Vec3> out(element.size());
  for (size_t v = 0; v < element.size(); ++v) {
    Vec3 p = Vec3::Zero();
    for (int n = 0; n < 8; ++n) p += weights[v](n) * node_positions[nodes[v][n]];
    out[v] = p;
  }
  return out;
}

EmbeddingMap embed_surface(const HexMesh& mesh, const SurfaceMesh& surface) {
  EmbeddingMap map;
  std::vector<int> too_far;
  for (size_t v = 0; v < surface.vertices.size(); ++v) {
    const Vec3& p = surface.vertices[v];
    const Vec3 rel = (p - mesh.grid_origin) / mesh.h;
    const int vi = static_cast<int>(std::floor(rel(0)));
    const int vj = static_cast<int>(std::floor(rel(1)));
    const int vk = static_cast<int>(std::floor(rel(2)));

    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = -1; dk <= 1; ++dk) {
          const int e = mesh.element_at(vi + di, vj + dj, vk + dk);
          if (e < 0) continue;
          const Vec3 blo = mesh.element_corner(e);
          const Vec3 bhi = blo + Vec3::Constant(mesh.h);
          const Vec3 clamped = p.cwiseMax(blo).cwiseMin(bhi);
          const double dist = (p - clamped).norm();
          if (dist < best_dist - 1e-15 ||
              (dist < best_dist + 1e-15 && e < best)) {
            best = e;
            best_dist = dist;
          }
        }
    if (best < 0 || best_dist > 0.5 * mesh.h + 1e-12 * mesh.h) {
      too_far.push_back(static_cast<int>(v));
      continue;
    }

    const Vec3 corner = mesh.element_corner(best);
    Vec3 xi = (p - corner) / mesh.h;
    xi = xi.cwiseMax(0.0).cwiseMin(1.0);
    Vec8 w;
    for (int n = 0; n < 8; ++n) {
      double val = 1.0;
      for (int d = 0; d < 3; ++d) val *= kCorner[n][d] ? xi(d) : 1.0 - xi(d);
      w(n) = val;
    }
    w /= w.sum();
    int imax = 0;
    w.maxCoeff(&imax);
    double rest = 0.0;
    for (int n = 0; n < 8; ++n)
      if (n != imax) rest += w(n);
    w(imax) = 1.0 - rest;

    map.element.push_back(best);
    map.nodes.push_back(mesh.elements[best]);
    map.weights.push_back(w);
  }
  if (!too_far.empty()) {
    std::ostringstream msg;
    msg << "surface vertices farther than h/2 from any element:";
    for (int v : too_far) msg << " " << v;
    throw ConfigError(msg.str());
  }
  return map;
}

SampleSet build_samples(const HexMesh& mesh, int n_per_element) {
  const int k = static_cast<int>(std::lround(std::cbrt(double(n_per_element))));
  if (k < 1 || k * k * k != n_per_element)
    throw ConfigError("samples per element must be a perfect cube, got " +
                      std::to_string(n_per_element));

  SampleSet set;
  set.n_per_element = n_per_element;
  const double w = mesh.element_volume() / n_per_element;
  set.samples.reserve(static_cast<size_t>(mesh.num_elements()) * n_per_element);

  for (int e = 0; e < mesh.num_elements(); ++e) {
    const Vec3 corner = mesh.element_corner(e);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        for (int c = 0; c < k; ++c) {
          const Vec3 xi((a + 0.5) / k, (b + 0.5) / k, (c + 0.5) / k);
          Sample s;
          s.element = e;
          s.weight = w;
          s.point = corner + mesh.h * xi;
          s.G.setZero();
          for (int n = 0; n < 8; ++n) {
            // d/dX_b of the trilinear shape function, rest cube of side h.
            Vec3 dNdx;
            for (int d = 0; d < 3; ++d) {
              double val = 1.0;
              for (int o = 0; o < 3; ++o) {
                if (o == d)
                  val *= kCorner[n][o] ? 1.0 : -1.0;
                else
                  val *= kCorner[n][o] ? xi(o) : 1.0 - xi(o);
              }
              dNdx(d) = val / mesh.h;
            }
            for (int row = 0; row < 3; ++row)
              for (int col = 0; col < 3; ++col)
                s.G(3 * row + col, 3 * n + row) = dNdx(col);
          }
          set.samples.push_back(std::move(s));
        }
  }
  return set;
}

void write_hex_mesh(const std::string& path, const HexMesh& mesh) {
  nlohmann::json j;
  j["voxel_size"] = mesh.h;
  j["grid_origin"] = {mesh.grid_origin(0), mesh.grid_origin(1),
                      mesh.grid_origin(2)};
  j["grid_dims"] = mesh.grid_dims;
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& p : mesh.nodes) nodes.push_back({p(0), p(1), p(2)});
  auto& tags = j["tags"] = nlohmann::json::array();
  for (auto t : mesh.tags) tags.push_back(static_cast<int>(t));
  j["elements"] = mesh.elements;
  j["element_voxels"] = mesh.element_voxels;
  auto& cuts = j["cut_faces"] = nlohmann::json::array();
  for (const auto& c : mesh.cut_faces) cuts.push_back({c.elem_a, c.elem_b});

  std::ofstream out(path);
  if (!out) throw IoError("cannot write hex mesh: " + path);
  out << j.dump(1) << "\n";
}

HexMesh read_hex_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open hex mesh: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("hex mesh parse failure in " + path + ": " + e.what());
  }
  HexMesh mesh;
  try {
    mesh.h = j.at("voxel_size").get<double>();
    const auto& o = j.at("grid_origin");
    mesh.grid_origin = Vec3(o.at(0).get<double>(), o.at(1).get<double>(),
                            o.at(2).get<double>());
    mesh.grid_dims = j.at("grid_dims").get<std::array<int, 3>>();
    for (const auto& p : j.at("nodes"))
      mesh.nodes.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                              p.at(2).get<double>());
    for (const auto& t : j.at("tags"))
      mesh.tags.push_back(static_cast<NodeTag>(t.get<int>()));
    mesh.elements = j.at("elements").get<std::vector<std::array<int, 8>>>();
    mesh.element_voxels =
        j.at("element_voxels").get<std::vector<std::array<int, 3>>>();
    for (const auto& c : j.at("cut_faces"))
      mesh.cut_faces.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw IoError("hex mesh schema failure in " + path + ": " + e.what());
  }
  mesh.rebuild_voxel_index();
  mesh.validate();
  return mesh;
}

}  // namespace softact
