#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "unimod/bundle.hpp"

namespace unimod {

/// mu (+) nu: a Beltrami coefficient per face and an End(E)-valued (0,1) form (face frames).
struct TangentVector {
    Beltrami mu;
    Field nu;
};

/// Everything evaluated at one center point: the surface, the bundle, and both twisted complexes.
struct CenterPoint {
    ConformalSurface surface;
    UnitaryCocycle cocycle;
    TwistedComplex end;      // End(E), face weight 2 * area
    TwistedComplex tangent;  // TX: vector fields at vertices, Beltrami coefficients on faces, face weight rho * area
};

/// TX complex: corner transport = vertex rotation (vector fields have chart weight 1), R = 1.
TwistedComplex tangent_complex(const ConformalSurface& S, SolverOptions options = {});
CenterPoint make_center(const ConformalSurface& S, const UnitaryCocycle& c, SolverOptions options = {});

Beltrami project_harmonic_mu(const CenterPoint& cp, const Beltrami& mu, SolveStats* stats = nullptr);
Field project_harmonic_nu(const CenterPoint& cp, const Field& nu, SolveStats* stats = nullptr);

/// Orthonormal bases of ker dbar^* in each complex, by dense QR of the weighted dbar.
struct HarmonicBases {
    std::vector<Field> mu_basis;
    std::vector<Field> nu_basis;
    Mat mu_gram;
    Mat nu_gram;
};
std::vector<Field> harmonic_basis(const TwistedComplex& C, Eigen::Index dense_cap = 6000);
HarmonicBases harmonic_bases(const CenterPoint& cp, Eigen::Index dense_cap = 6000);
inline std::vector<Field> harmonic_nu_basis(const CenterPoint& cp, Eigen::Index dense_cap = 6000) {
    return harmonic_basis(cp.end, dense_cap);
}

/// Kodaira-Spencer map at the center: the pair of harmonic projections.
TangentVector ks_center(const CenterPoint& cp, const TangentVector& v);

/// Pointwise nu - (tr nu / n) I.
Field project_traceless(const Field& nu, int rank);

/// Seeded Gaussian coefficients, projected to harmonics and multiplied by scale.
TangentVector random_tangent(const CenterPoint& cp, std::uint64_t seed, double scale = 1.0, bool traceless = false);

bool is_harmonic(const CenterPoint& cp, const TangentVector& v, double tol = 1e-8);

/// `mu <face> re im` and `nu <face> <2 n^2 reals>` lines.
void save_tangent(const TangentVector& v, int rank, std::ostream& out);
TangentVector load_tangent(std::istream& in, int num_faces, int rank);

}  // namespace unimod
