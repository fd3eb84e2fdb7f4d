#pragma once

#include <array>
#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

namespace unimod {

using cplx = std::complex<double>;

struct HalfEdge {
    int origin = -1;
    int twin = -1;
    int next = -1;
    int face = -1;

    bool operator==(const HalfEdge&) const = default;
};

/// Combinatorial triangulated closed oriented surface.
///
/// Half-edges are the corners of the mesh: half-edge h is the corner of face(h) at origin(h).
/// Generator labels sit on half-edges. A plain label such as "a1" marks the segment of the
/// generator loop that carries the generator matrix; "~a1" marks further segments of the
/// same loop (produced by refinement) which carry the identity. Twins of labeled half-edges
/// are implicitly the inverse direction and stay unlabeled.
class HalfEdgeMesh {
public:
    HalfEdgeMesh() = default;

    /// Validates all invariants; throws Error(Validation) on failure.
    HalfEdgeMesh(int num_vertices, std::vector<HalfEdge> half_edges, std::vector<std::string> labels,
                 int genus);

    int num_vertices() const { return num_vertices_; }
    int num_half_edges() const { return static_cast<int>(half_edges_.size()); }
    int num_edges() const { return num_half_edges() / 2; }
    int num_faces() const { return static_cast<int>(face_half_edge_.size()); }
    int genus() const { return genus_; }
    int euler_characteristic() const { return num_vertices() - num_edges() + num_faces(); }

    const HalfEdge& half_edge(int h) const { return half_edges_[h]; }
    const std::vector<HalfEdge>& half_edges() const { return half_edges_; }
    int origin(int h) const { return half_edges_[h].origin; }
    int twin(int h) const { return half_edges_[h].twin; }
    int next(int h) const { return half_edges_[h].next; }
    int prev(int h) const { return next(next(h)); }
    int face(int h) const { return half_edges_[h].face; }
    int dest(int h) const { return origin(next(h)); }

    const std::string& label(int h) const { return labels_[h]; }
    const std::vector<std::string>& labels() const { return labels_; }

    /// First half-edge of face f; the face's corners are (h, next(h), prev(h)).
    int face_half_edge(int f) const { return face_half_edge_[f]; }
    std::array<int, 3> face_half_edges(int f) const;
    std::array<int, 3> face_vertices(int f) const;
    /// Some half-edge leaving v.
    int vertex_half_edge(int v) const { return vertex_half_edge_[v]; }
    /// Outgoing half-edges around v in counter-clockwise order, starting at vertex_half_edge(v).
    std::vector<int> outgoing(int v) const;

    /// Optional layout coordinates for the origin of each half-edge (empty when absent).
    const std::vector<cplx>& corner_layout() const { return corner_layout_; }
    void set_corner_layout(std::vector<cplx> layout);

    bool faces_have_distinct_vertices() const;

    bool operator==(const HalfEdgeMesh& other) const;

private:
    void validate();

    int num_vertices_ = 0;
    int genus_ = 0;
    std::vector<HalfEdge> half_edges_;
    std::vector<std::string> labels_;
    std::vector<int> face_half_edge_;
    std::vector<int> vertex_half_edge_;
    std::vector<cplx> corner_layout_;
};

/// Standard 4g-gon with word a1 b1 a1^-1 b1^-1 ... fan-triangulated from a center vertex.
/// Vertex 0 is the glued polygon corner, vertex 1 the center. Throws UnsupportedGenus for genus < 2.
HalfEdgeMesh build_polygon_gluing(int genus);

/// 1-to-4 midpoint subdivision. Old vertices keep their indices; the midpoint of edge
/// {h, twin(h)} (h < twin(h)) gets index V + (rank of h among such half-edges).
HalfEdgeMesh refine(const HalfEdgeMesh& mesh);

/// Regular n-by-n triangulated flat torus (genus 1), used by the spectral harness.
/// Carries no generator labels; twisted cocycles on it are built directly.
HalfEdgeMesh build_torus_grid(int n);

void save_mesh(const HalfEdgeMesh& mesh, std::ostream& out);
HalfEdgeMesh load_mesh(std::istream& in);
void save_mesh(const HalfEdgeMesh& mesh, const std::string& path);
HalfEdgeMesh load_mesh(const std::string& path);

enum class LayoutPolicy { Polygon, Equilateral };
enum class DensityPolicy { Uniform, Hyperbolic };

LayoutPolicy parse_layout(const std::string& name);
DensityPolicy parse_density(const std::string& name);
std::string to_string(LayoutPolicy p);
std::string to_string(DensityPolicy p);

/// Mesh plus per-face conformal charts, edge rotations and area density.
///
/// Charts are indexed by corner (= half-edge). rotation(h) is the unit complex number r with
/// z_{face(twin h)} = r * z_{face(h)} + c on the shared edge.
class ConformalSurface {
public:
    ConformalSurface(HalfEdgeMesh mesh, std::vector<cplx> corner_chart, std::vector<double> density);

    const HalfEdgeMesh& mesh() const { return mesh_; }
    int num_vertices() const { return mesh_.num_vertices(); }
    int num_faces() const { return mesh_.num_faces(); }

    cplx chart(int h) const { return chart_[h]; }
    const std::vector<cplx>& charts() const { return chart_; }
    double density(int f) const { return density_[f]; }
    const std::vector<double>& densities() const { return density_; }
    double area(int f) const { return area_[f]; }
    cplx rotation(int h) const { return rotation_[h]; }
    /// Rotation taking the reference chart of vertex origin(h) into the chart of face(h).
    cplx vertex_rotation(int h) const { return vertex_rotation_[h]; }
    /// Reference face of vertex v: face(mesh.vertex_half_edge(v)).
    cplx centroid(int f) const;

    double total_area() const;
    double weighted_area() const;

private:
    HalfEdgeMesh mesh_;
    std::vector<cplx> chart_;
    std::vector<double> density_;
    std::vector<double> area_;
    std::vector<cplx> rotation_;
    std::vector<cplx> vertex_rotation_;
};

ConformalSurface equip_conformal(const HalfEdgeMesh& mesh, LayoutPolicy layout, DensityPolicy density);

/// `chart <face> z0re z0im z1re z1im z2re z2im` and `rho <face> <value>` lines.
void save_conformal(const ConformalSurface& surface, std::ostream& out);
ConformalSurface load_conformal(const HalfEdgeMesh& mesh, std::istream& in);

/// Euclidean radius of the regular hyperbolic 4g-gon (angle sum 2*pi) in the Poincare disk.
double hyperbolic_polygon_radius(int sides);

}  // namespace unimod
