#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "unimod/calculus.hpp"
#include "unimod/surface.hpp"

namespace unimod {

using Mat = Eigen::MatrixXcd;

/// Flat U(n) bundle: a transport per half-edge with s_origin = U_h s_dest.
/// Face holonomies U_h0 U_h1 U_h2 are I except on the marked face, where they equal exp(2 pi i d / n) I.
class UnitaryCocycle {
public:
    /// Validates unitarity, U_twin = U^*, and face holonomies (1e-10). Throws Validation.
    UnitaryCocycle(const HalfEdgeMesh& mesh, int rank, int degree, std::vector<Mat> transports, int marked_face);

    /// Generators in the order A1, B1, ..., Ag, Bg. Plain labels carry the generator, "~" labels
    /// carry I, a spanning tree of the remaining edges carries I, and a dual tree rooted at the
    /// marked face absorbs the rest. Throws RelationMismatch when prod [Ai, Bi] != exp(2 pi i d/n) I.
    static UnitaryCocycle from_generators(const HalfEdgeMesh& mesh, int rank, int degree,
                                          const std::vector<Mat>& generators, int marked_face = 0);

    int rank() const { return rank_; }
    int degree() const { return degree_; }
    int marked_face() const { return marked_face_; }
    int num_half_edges() const { return static_cast<int>(transport_.size()); }
    cplx central_phase() const;

    const Mat& transport(int h) const { return transport_[h]; }
    /// Holonomy of face f read from its first half-edge.
    Mat face_holonomy(int f) const;
    /// T_h maps the frame of vertex origin(h) into the frame of face(h): X_face = T_h X T_h^*.
    /// The face frame is the frame of its lowest-index vertex.
    const Mat& corner_transport(int h) const { return corner_transport_[h]; }

    /// Dimension of {X : U_e X = X U_e for all e}.
    int commutant_dim() const;
    bool is_irreducible() const { return commutant_dim() == 1; }

    /// Holonomy residual and unitarity residual of the stored data.
    double flatness_residual() const;
    double unitarity_residual() const;

    const HalfEdgeMesh& mesh() const { return mesh_; }

private:
    void validate() const;

    HalfEdgeMesh mesh_;
    int rank_ = 1;
    int degree_ = 0;
    int marked_face_ = 0;
    std::vector<Mat> transport_;
    std::vector<Mat> corner_transport_;
};

/// prod_i A_i B_i A_i^-1 B_i^-1 for generators ordered A1, B1, ...
Mat relation_product(const std::vector<Mat>& generators);

/// Named generator sets: "g2n1d0" (trivial line bundle), "g2n2d1" (irreducible rank 2, degree 1),
/// "g2n3d1" (clock and shift, rank 3, degree 1), "g2n2d0" (trivial rank 2).
std::vector<std::string> preset_names();
void preset_generators(const std::string& name, int& genus, int& rank, int& degree, std::vector<Mat>& generators);

/// `cocycle <n> <d>`, `gen a1 <2 n^2 reals>` ... , `twist <face>`.
struct GeneratorFile {
    int rank = 1;
    int degree = 0;
    int marked_face = 0;
    std::map<std::string, Mat> generators;
};
void save_generators(const GeneratorFile& g, std::ostream& out);
GeneratorFile load_generators(std::istream& in);
/// Orders the generators of a loaded file as A1, B1, ..., checking that all of them are present.
std::vector<Mat> ordered_generators(const GeneratorFile& g, int genus);

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;
    double kernel_component = 0.0;  // norm of the right-hand side removed by the kernel projection
    bool dense = false;
};

enum class SolverMode { Auto, Iterative, Dense };

struct SolverOptions {
    SolverMode mode = SolverMode::Auto;
    double tolerance = 1e-10;
    int max_iteration_factor = 10;
    int dense_limit = 4000;
};

/// Twisted P1/P0 Dolbeault complex on n x n matrix-valued cochains.
///
/// Corner h carries (L_h, R_h); the value of vertex origin(h) seen in face(h) is L_h X R_h.
/// Vertex cochains are weighted by vertex_weight, face cochains by face_weight, with the trace
/// pairing tr(A B^*) per site. All adjoints are exact adjoints for these weighted products.
class TwistedComplex {
public:
    TwistedComplex(const ConformalSurface& S, int rank, std::vector<Mat> left, std::vector<Mat> right,
                   Eigen::VectorXd vertex_weight, Eigen::VectorXd face_weight, SolverOptions options = {});

    const ConformalSurface& surface() const { return surface_; }
    int rank() const { return rank_; }
    int num_vertices() const { return surface_.num_vertices(); }
    int num_faces() const { return surface_.num_faces(); }
    Eigen::Index vertex_dim() const { return static_cast<Eigen::Index>(num_vertices()) * rank_ * rank_; }
    Eigen::Index face_dim() const { return static_cast<Eigen::Index>(num_faces()) * rank_ * rank_; }
    const Eigen::VectorXd& vertex_weights() const { return vertex_weight_; }
    const Eigen::VectorXd& face_weights() const { return face_weight_; }
    const Mat& left(int h) const { return left_[h]; }
    const Mat& right(int h) const { return right_[h]; }
    const SolverOptions& options() const { return options_; }
    void set_options(const SolverOptions& o) { options_ = o; }

    Field dbar(const Field& X) const;
    Field dhol(const Field& X) const;
    Field dbar_adjoint(const Field& a) const;
    Field dhol_adjoint(const Field& b) const;
    /// Centroid value of the P1 interpolant, and its adjoint.
    Field interpolate(const Field& X) const;
    Field interpolate_adjoint(const Field& a) const;
    Field laplacian(const Field& X) const { return dbar_adjoint(dbar(X)); }

    cplx ip_vertex(const Field& X, const Field& Y) const;
    cplx ip_face(const Field& a, const Field& b) const;
    double norm_vertex(const Field& X) const { return std::sqrt(std::max(0.0, ip_vertex(X, X).real())); }
    double norm_face(const Field& a) const { return std::sqrt(std::max(0.0, ip_face(a, a).real())); }

    /// Orthonormal basis (vertex product) of the covariantly constant sections.
    const std::vector<Field>& kernel_basis() const { return kernel_; }
    Field project_off_kernel(const Field& X) const;
    /// Solution in (ker)^perp of laplacian(x) = projected h.
    Field delta0_inverse(const Field& h, SolveStats* stats = nullptr) const;
    /// I - dbar delta0^-1 dbar^*.
    Field harmonic_projection(const Field& a, SolveStats* stats = nullptr) const;

private:
    void compute_kernel();
    Field solve_iterative(const Field& b, SolveStats& stats) const;
    Field solve_dense(const Field& b, SolveStats& stats) const;

    ConformalSurface surface_;
    int rank_;
    std::vector<Mat> left_, right_;
    Eigen::VectorXd vertex_weight_, face_weight_;
    std::vector<std::array<cplx, 3>> grad_;
    std::vector<Field> kernel_;
    SolverOptions options_;
};

/// End(E) complex: L = T, R = T^*, vertex weights = lumped mass (density or uniform), face weights = 2 * area.
TwistedComplex end_complex(const ConformalSurface& S, const UnitaryCocycle& c,
                           MassWeight weight = MassWeight::Density, SolverOptions options = {});

/// Pointwise [nu, I f] on faces.
Field ad_on_scalar(const TwistedComplex& E, const Field& nu, const Field& f);
/// Exact adjoint of f -> ad_on_scalar(nu, f): I^*(nu^* a - a nu^*).
Field ad_star(const TwistedComplex& E, const Field& nu, const Field& a);

/// Pointwise helpers on flat per-site blocks.
Field blockwise_adjoint(const Field& a, int rank);
Field scale_faces(const Field& a, const Field& scalar, int rank, bool conjugate_scalar = false);
inline Eigen::Map<const Mat> site(const Field& v, int i, int n) { return {v.data() + static_cast<Eigen::Index>(i) * n * n, n, n}; }
inline Eigen::Map<Mat> site(Field& v, int i, int n) { return {v.data() + static_cast<Eigen::Index>(i) * n * n, n, n}; }

}  // namespace unimod
