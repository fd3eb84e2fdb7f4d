#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "unimod/surface.hpp"

namespace unimod {

/// Flat storage for per-site values. Matrix-valued fields store one column-major n x n block per site.
using Field = Eigen::VectorXcd;
using Scalar0Cochain = Field;
/// Per-face coefficient of dzbar (x) d/dz in the face chart.
using Beltrami = Field;

/// Conventions
///   dz = dx + i dy, area element rho dx^dy.
///   *dz = -i dz, *dzbar = +i dzbar; * of c dzbar^dz is the per-face value 2i c / rho.
///   <a dzbar, b dzbar> and <a dz, b dz> integrate to 2 A a conj(b) per face (independent of rho).
///   wedge_trace_integrate(a dzbar, b dz) = sum 2 A tr(a b); the reversed order gives the negative.
///   With these, i * wedge_trace_integrate(a, *conj(a)^T) = ip_form(a, a).
enum class FormType { Form10, Form01, Form11, Face0 };

const char* to_string(FormType t);

struct FormP0 {
    FormType type = FormType::Form01;
    int rank = 1;
    Field coeff;

    FormP0() = default;
    FormP0(FormType t, int n, Field c) : type(t), rank(n), coeff(std::move(c)) {}
    static FormP0 zero(FormType t, int num_faces, int n = 1);

    int num_faces() const { return static_cast<int>(coeff.size()) / (rank * rank); }
    Eigen::Map<const Eigen::MatrixXcd> block(int f) const {
        return {coeff.data() + static_cast<Eigen::Index>(f) * rank * rank, rank, rank};
    }
    Eigen::Map<Eigen::MatrixXcd> block(int f) { return {coeff.data() + static_cast<Eigen::Index>(f) * rank * rank, rank, rank}; }
};

enum class MassWeight { Density, Uniform };

/// Complex P1 gradients: G[f][k] = d(phi_k)/dx + i d(phi_k)/dy for the hat function of corner k of face f.
/// dbar f = sum f_k G_k / 2 and d f = sum f_k conj(G_k) / 2.
std::vector<std::array<cplx, 3>> p1_gradients(const ConformalSurface& S);

/// Lumped vertex mass: one third of the (density-weighted) area of the incident faces.
Eigen::VectorXd vertex_mass(const ConformalSurface& S, MassWeight weight);

FormP0 dbar(const Scalar0Cochain& f, const ConformalSurface& S);
FormP0 d_hol(const Scalar0Cochain& f, const ConformalSurface& S);
/// Matrix adjoints of dbar / d_hol for ip_scalar(weight) and ip_form.
Scalar0Cochain dbar_star(const FormP0& alpha, const ConformalSurface& S, MassWeight weight = MassWeight::Density);
Scalar0Cochain d_star(const FormP0& beta, const ConformalSurface& S, MassWeight weight = MassWeight::Density);

FormP0 hodge_star(const FormP0& w, const ConformalSurface& S);
/// The area 2-form rho dx^dy written as a dzbar^dz coefficient.
FormP0 area_form(const ConformalSurface& S);

cplx ip_scalar(const Scalar0Cochain& f, const Scalar0Cochain& g, const ConformalSurface& S,
               MassWeight weight = MassWeight::Density);
cplx ip_form(const FormP0& a, const FormP0& b, const ConformalSurface& S);

FormP0 mu_contract(const Beltrami& mu, const FormP0& w);
FormP0 mu_bar_contract(const Beltrami& mu, const FormP0& a);
/// Pointwise conjugate transpose; swaps (1,0) and (0,1).
FormP0 conj_transpose(const FormP0& w);

cplx wedge_trace_integrate(const FormP0& a, const FormP0& b, const ConformalSurface& S);

struct FaceDerivative {
    FormP0 dbar_part;  // coefficient of dzbar
    FormP0 dhol_part;  // coefficient of dz
};

/// Differentiates a per-face field of chart weight w (value changes by r^w under z -> r z;
/// 0 for functions, 2 for Beltrami coefficients). Vertex values come from an area-weighted
/// least-squares fit of a + b w + c conj(w) to the incident face centroids in the vertex's
/// reference chart; the P1 interpolant of the lifted values is then differentiated per face.
FaceDerivative face_derivative(const Field& face_values, int weight, const ConformalSurface& S);

}  // namespace unimod
