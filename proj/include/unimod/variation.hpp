#pragma once

#include <string>
#include <vector>

#include "unimod/tangent.hpp"

namespace unimod {

enum class CoordinateSystem { Universal, Fibered };
const char* to_string(CoordinateSystem s);

struct Term {
    std::string name;     // short id, e.g. "T4"
    std::string formula;  // the integral it evaluates, in this library's operator names
    cplx value;
    int sign = 1;         // used by difference reports: +1 removed term, -1 added term
};

struct SolverSummary {
    int solves = 0;
    int max_iterations = 0;
    double max_residual = 0.0;
    double max_kernel_component = 0.0;
    bool dense_fallback = false;

    void record(const SolveStats& s);
};

struct VariationReport {
    std::string system;  // "universal", "fibered" or "difference"
    std::vector<Term> terms;
    cplx total = 0.0;
    std::string inputs_digest;
    std::vector<double> input_norms;  // |mu_i|, |nu_i| per slot
    std::string conventions_digest;
    SolverSummary solver;
    std::vector<std::string> warnings;

    cplx term(const std::string& name) const;
    int count_sign(int sign) const;
};

/// Fixed readings of every operator constant, one per line.
const std::string& conventions_text();
/// FNV-1a hex digest of conventions_text().
std::string conventions_digest();
/// FNV-1a hex digest over the raw doubles of the inputs, in order.
std::string inputs_digest(const std::vector<const TangentVector*>& inputs);

/// <X, Y> for End(E)-valued (0,1) forms, evaluated as i * wedge_trace_integrate(X, *(Y^*)).
cplx pair_forms(const CenterPoint& cp, const Field& X, const Field& Y);

cplx metric_g(const CenterPoint& cp, const TangentVector& v1, const TangentVector& v2);

struct FirstVariation {
    cplx d_eps;
    cplx d_eps_bar;
};
FirstVariation first_variation(const CenterPoint& cp, const TangentVector& dir, const TangentVector& v1,
                               const TangentVector& v2, CoordinateSystem system);

VariationReport second_variation_universal(const CenterPoint& cp, const TangentVector& v1, const TangentVector& v2,
                                           const TangentVector& v3, const TangentVector& v4);
VariationReport second_variation_fibered(const CenterPoint& cp, const TangentVector& v1, const TangentVector& v2,
                                         const TangentVector& v3, const TangentVector& v4);
/// Universal minus fibered as the signed list of terms present in only one of them.
VariationReport difference_report(const CenterPoint& cp, const TangentVector& v1, const TangentVector& v2,
                                  const TangentVector& v3, const TangentVector& v4);

struct PositivityCertificate {
    double term_a = 0.0;  // <K h, h>, h = d^*(conj(mu2) nu1)
    double term_b = 0.0;  // <|mu2|^2 nu1, nu1>
    double total = 0.0;
    double imag_a = 0.0;
    double imag_b = 0.0;
    SolverSummary solver;
};
PositivityCertificate positivity_certificate(const CenterPoint& cp, const Beltrami& mu2, const Field& nu1);

/// Dense materializations used by the projector-derivative check.
struct DenseComplex {
    Mat D, D_adj, K, P;
    Eigen::VectorXd vertex_weight, face_weight;  // per flat entry
};
DenseComplex materialize_complex(const TwistedComplex& C, Eigen::Index dense_cap = 6000);

/// Seeded perturbation A of dbar with A = 0 on the covariant constants, scaled to Frobenius norm `scale`
/// relative to the weighted dbar.
Mat random_dbar_perturbation(const TwistedComplex& C, std::uint64_t seed, double scale = 1.0);

/// d/dt P(t) at 0 for D(t) = dbar + t A, from the Leibniz formula -(P A K D^* + D K A^* P).
Mat projector_derivative(const DenseComplex& dc, const Mat& A);
/// P(t) computed independently by a QR of the weighted D(t) restricted to (ker)^perp.
Mat projector_at(const TwistedComplex& C, const DenseComplex& dc, const Mat& A, double t);

struct ProjectorDerivativeCheck {
    std::vector<double> steps;
    std::vector<double> errors;  // relative Frobenius error of the central difference
    double slope = 0.0;          // least-squares slope of log(error) against log(step)
    double orthogonality = 0.0;  // max |<dP nu, eta>| over harmonic pairs, relative
};
ProjectorDerivativeCheck projector_derivative_check(const TwistedComplex& C, const Mat& A,
                                                    const std::vector<double>& steps, Eigen::Index dense_cap = 6000);

}  // namespace unimod
