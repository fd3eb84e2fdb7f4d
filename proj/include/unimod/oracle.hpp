#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unimod/bundle.hpp"

namespace unimod {

/// Brute-force dense assembly straight from charts and corner transports, sharing no code with
/// TwistedComplex. Vertex product: lumped density mass; face product: 2 * area; both per site with tr(A B^*).
struct DenseSpace {
    enum class Degree { Vertex, Face } degree = Degree::Vertex;
    int rank = 1;
    int sites = 0;
    Eigen::Index dim() const { return static_cast<Eigen::Index>(sites) * rank * rank; }
};

struct DenseOperator {
    std::string name;
    Mat matrix;
    DenseSpace domain, codomain;
    Eigen::VectorXd domain_weight, codomain_weight;  // per flat entry

    Field apply(const Field& x) const { return matrix * x; }
    /// W_domain^-1 M^H W_codomain.
    DenseOperator adjoint() const;
};

struct OperatorParams {
    Field nu;     // for "ad" and "ad_star"
    Beltrami mu;  // for "mu" and "mu_bar"
};

/// Names: dbar, dhol, dbar_adjoint, dhol_adjoint, interpolate, laplacian, projector, ad, ad_star, mu, mu_bar.
/// Throws DenseCap when a dimension exceeds `cap`.
DenseOperator materialize(const std::string& op, const UnitaryCocycle& c, const ConformalSurface& S,
                          const OperatorParams& params = {}, Eigen::Index cap = 6000);
std::vector<std::string> operator_names();

struct RestrictedInverse {
    DenseOperator inverse;
    int kernel_dim = 0;
    double lambda_max = 0.0;
};
/// Inverse of a weight-self-adjoint PSD operator on the complement of its numerical kernel
/// (eigenvalues <= threshold * lambda_max).
RestrictedInverse restricted_inverse_dense(const DenseOperator& laplacian, double threshold = 1e-10);

/// Flat torus with diagonal U(1) twists: mesh operators against exact Fourier solutions.
struct TorusLevel {
    int grid = 0;
    double projector_error = 0.0;  // |P_mesh a - P_exact a| / |a|, face product
    double inverse_error = 0.0;    // |K_mesh h - K_exact h| / |K_exact h|, vertex product
    double frame_residual = 0.0;   // disagreement of the face-frame phase across corners
    int kernel_dim = 0;
};
struct TorusCrosscheck {
    int rank = 1;
    int untwisted_entries = 0;        // expected kernel dimension
    double spectral_idempotence = 0;  // |P^2 - P| of the Fourier-diagonal projector
    double constant_form_residual = 0;
    std::vector<TorusLevel> levels;
    bool monotone = false;            // projector_error decreasing across levels
};
TorusCrosscheck torus_spectral_crosscheck(int rank, int modes, const std::vector<int>& grids = {6, 12, 24},
                                          std::uint64_t seed = 1);

/// Transports for the grid torus with constant holonomies diag(exp(i theta_x)), diag(exp(i theta_y)).
UnitaryCocycle torus_twisted_cocycle(const HalfEdgeMesh& torus_grid, int grid, const std::vector<double>& theta_x,
                                     const std::vector<double>& theta_y);

}  // namespace unimod
