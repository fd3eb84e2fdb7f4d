#include "unimod/variation.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <tuple>

#include "unimod/error.hpp"

namespace unimod {

const char* to_string(CoordinateSystem s) { return s == CoordinateSystem::Universal ? "universal" : "fibered"; }

void SolverSummary::record(const SolveStats& s) {
    ++solves;
    max_iterations = std::max(max_iterations, s.iterations);
    max_residual = std::max(max_residual, s.residual);
    max_kernel_component = std::max(max_kernel_component, s.kernel_component);
    dense_fallback = dense_fallback || s.dense;
}

cplx VariationReport::term(const std::string& name) const {
    for (const auto& t : terms)
        if (t.name == name) return t.value;
    throw Error(ErrorKind::InvalidArgument, "no term named " + name);
}

int VariationReport::count_sign(int sign) const {
    int k = 0;
    for (const auto& t : terms) k += t.sign == sign;
    return k;
}

namespace {

struct Fnv {
    std::uint64_t h = 1469598103934665603ull;
    void bytes(const void* p, size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 1099511628211ull;
        }
    }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

}  // namespace

const std::string& conventions_text() {
    static const std::string text =
        "dz = dx + i dy; *dz = -i dz; *dzbar = i dzbar; area rho dx^dy\n"
        "<a dzbar, b dzbar> = sum 2A tr(a b^*)\n"
        "pair(X, Y) = i wedge_trace_integrate(X, *(Y^*))\n"
        "A(mu, nu) X = [nu, I X] - mu dhol X\n"
        "A(mu, nu)^* a = I^*(nu^* a - a nu^*) - dhol^*(conj(mu) a)\n"
        "K = delta0^-1 on (ker)^perp, right-hand sides projected off the kernel\n"
        "h12 = A(mu2, nu2)^* nu1 - dbar^*(mu1 nu2^*); Q12 = K h12\n"
        "T2 = pair([I Q12, nu3], nu4)\n"
        "T10 = pair(mu3 nu2^*, mu4 nu1^*)\n"
        "first variation: d_eps = -pair(nu1, mu2 nu^*), d_eps_bar = -pair(mu1 nu^*, nu2)\n"
        "dP = -(P A K D^* + D K A^* P)\n";
    return text;
}

std::string conventions_digest() {
    Fnv f;
    f.bytes(conventions_text().data(), conventions_text().size());
    return f.hex();
}

std::string inputs_digest(const std::vector<const TangentVector*>& inputs) {
    Fnv f;
    for (const auto* v : inputs) {
        const Eigen::Index sizes[2] = {v->mu.size(), v->nu.size()};
        f.bytes(sizes, sizeof sizes);
        f.bytes(v->mu.data(), sizeof(cplx) * v->mu.size());
        f.bytes(v->nu.data(), sizeof(cplx) * v->nu.size());
    }
    return f.hex();
}

namespace {

void check_vector(const CenterPoint& cp, const TangentVector& v, const char* what) {
    if (v.mu.size() != cp.tangent.face_dim() || v.nu.size() != cp.end.face_dim())
        throw Error(ErrorKind::InvalidArgument, std::string(what) + ": tangent vector does not match the center point");
}

// Operators of one center point, with solver bookkeeping.
struct Ops {
    const CenterPoint& cp;
    const TwistedComplex& E;
    int n;
    SolverSummary* summary;

    Ops(const CenterPoint& c, SolverSummary* s) : cp(c), E(c.end), n(c.end.rank()), summary(s) {}

    Field mul(const Beltrami& mu, const Field& a) const { return scale_faces(a, mu, n); }
    Field mul_bar(const Beltrami& mu, const Field& a) const { return scale_faces(a, mu, n, true); }
    Field adj(const Field& a) const { return blockwise_adjoint(a, n); }

    Field A(const Beltrami& mu, const Field& nu, const Field& X) const {
        return ad_on_scalar(E, nu, X) - mul(mu, E.dhol(X));
    }
    Field A_star(const Beltrami& mu, const Field& nu, const Field& a) const {
        return ad_star(E, nu, a) - E.dhol_adjoint(mul_bar(mu, a));
    }
    Field K(const Field& h) const {
        SolveStats st;
        Field x = E.delta0_inverse(h, &st);
        if (summary) summary->record(st);
        return x;
    }
    cplx pair(const Field& X, const Field& Y) const { return pair_forms(cp, X, Y); }
};

std::vector<double> norms_of(const CenterPoint& cp, const std::vector<const TangentVector*>& vs) {
    std::vector<double> out;
    for (const auto* v : vs) {
        out.push_back(cp.tangent.norm_face(v->mu));
        out.push_back(cp.end.norm_face(v->nu));
    }
    return out;
}

using TermFn = std::function<cplx()>;

VariationReport assemble(const std::string& system, const CenterPoint& cp,
                         const std::vector<const TangentVector*>& inputs,
                         std::vector<std::tuple<std::string, std::string, int, TermFn>> entries) {
    VariationReport r;
    r.system = system;
    r.inputs_digest = inputs_digest(inputs);
    r.input_norms = norms_of(cp, inputs);
    r.conventions_digest = conventions_digest();
    bool failed = false;
    for (auto& [name, formula, sign, fn] : entries) {
        Term t{name, formula, 0.0, sign};
        try {
            t.value = fn();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Solver) throw;
            t.value = cplx(std::nan(""), std::nan(""));
            r.warnings.push_back(name + ": " + e.what());
            failed = true;
        }
        r.terms.push_back(t);
    }
    cplx total = 0.0;
    for (const auto& t : r.terms) total += t.value;
    r.total = failed ? cplx(std::nan(""), std::nan("")) : total;
    return r;
}

}  // namespace

cplx pair_forms(const CenterPoint& cp, const Field& X, const Field& Y) {
    const int n = cp.end.rank();
    if (X.size() != cp.end.face_dim() || Y.size() != cp.end.face_dim())
        throw Error(ErrorKind::InvalidArgument, "pair_forms: size mismatch");
    const FormP0 x(FormType::Form01, n, X);
    const FormP0 ystar = hodge_star(conj_transpose(FormP0(FormType::Form01, n, Y)), cp.surface);
    return cplx(0.0, 1.0) * wedge_trace_integrate(x, ystar, cp.surface);
}

cplx metric_g(const CenterPoint& cp, const TangentVector& v1, const TangentVector& v2) {
    check_vector(cp, v1, "metric_g");
    check_vector(cp, v2, "metric_g");
    cplx beltrami = 0.0;
    for (int f = 0; f < cp.surface.num_faces(); ++f)
        beltrami += cp.surface.density(f) * cp.surface.area(f) * v1.mu[f] * std::conj(v2.mu[f]);
    return beltrami + pair_forms(cp, v1.nu, v2.nu);
}

FirstVariation first_variation(const CenterPoint& cp, const TangentVector& dir, const TangentVector& v1,
                               const TangentVector& v2, CoordinateSystem system) {
    check_vector(cp, dir, "first_variation");
    check_vector(cp, v1, "first_variation");
    check_vector(cp, v2, "first_variation");
    const int n = cp.end.rank();
    if (system == CoordinateSystem::Universal) {
        const Field nu_star = blockwise_adjoint(dir.nu, n);
        return {-pair_forms(cp, v1.nu, scale_faces(nu_star, v2.mu, n)),
                -pair_forms(cp, scale_faces(nu_star, v1.mu, n), v2.nu)};
    }
    FirstVariation out{0.0, 0.0};
    for (int f = 0; f < cp.surface.num_faces(); ++f) {
        const double w = 2.0 * cp.surface.area(f);
        const auto nu = site(dir.nu, f, n);
        out.d_eps -= w * std::conj(v2.mu[f]) * (site(v1.nu, f, n) * nu).trace();
        out.d_eps_bar -= w * v1.mu[f] * std::conj((site(v2.nu, f, n) * nu).trace());
    }
    return out;
}

namespace {

// Terms shared by both systems, followed by the terms specific to one of them.
struct SecondVariation {
    const CenterPoint& cp;
    const TangentVector &v1, &v2, &v3, &v4;
    SolverSummary summary;
    Ops ops;
    std::optional<Field> q12, q21, kh3;

    SecondVariation(const CenterPoint& c, const TangentVector& a, const TangentVector& b, const TangentVector& d,
                    const TangentVector& e)
        : cp(c), v1(a), v2(b), v3(d), v4(e), ops(c, &summary) {
        for (const auto* v : {&v1, &v2, &v3, &v4}) check_vector(cp, *v, "second variation");
    }

    const Field& Q12() {
        if (!q12) q12 = ops.K(ops.A_star(v2.mu, v2.nu, v1.nu) - ops.E.dbar_adjoint(ops.mul(v1.mu, ops.adj(v2.nu))));
        return *q12;
    }
    const Field& Q21() {
        if (!q21) q21 = ops.K(ops.A_star(v1.mu, v1.nu, v2.nu) - ops.E.dbar_adjoint(ops.mul(v2.mu, ops.adj(v1.nu))));
        return *q21;
    }
    const Field& KA3() {
        if (!kh3) kh3 = ops.K(ops.A_star(v2.mu, v2.nu, v3.nu));
        return *kh3;
    }

    cplx T1() { return ops.pair(ops.A(v1.mu, v1.nu, KA3()), v4.nu); }
    cplx T2() { return ops.pair(-ad_on_scalar(ops.E, v3.nu, Q12()), v4.nu); }
    cplx T3() { return -ops.pair(ops.mul(v1.mu, ops.mul_bar(v2.mu, v3.nu)), v4.nu); }
    cplx T4() {
        const Field x = ops.K(ops.E.dbar_adjoint(ops.mul(v3.mu, ops.adj(v2.nu))));
        return ops.pair(ops.A(v1.mu, v1.nu, x), v4.nu);
    }
    cplx T5() { return ops.pair(ops.mul(v3.mu, ops.E.dhol(Q12())), v4.nu); }
    cplx T6() { return ops.pair(ops.mul_bar(v2.mu, ops.mul(v3.mu, v1.nu)), v4.nu); }
    cplx T7() { return ops.pair(ops.E.dbar(KA3()), ops.mul(v4.mu, ops.adj(v1.nu))); }
    cplx T8() { return ops.pair(v3.nu, ops.mul(v4.mu, ops.E.dhol(Q21()))); }
    cplx T9() { return ops.pair(v3.nu, ops.mul_bar(v1.mu, ops.mul(v4.mu, v2.nu))); }
    cplx T10() { return ops.pair(ops.mul(v3.mu, ops.adj(v2.nu)), ops.mul(v4.mu, ops.adj(v1.nu))); }

    Field dKdstar(const Field& a) { return ops.E.dhol(ops.K(ops.E.dhol_adjoint(a))); }
    Field dKdbarstar(const Field& a) { return ops.E.dhol(ops.K(ops.E.dbar_adjoint(a))); }

    cplx N1() { return -ops.pair(ops.mul(v3.mu, dKdstar(ops.mul_bar(v2.mu, v1.nu))), v4.nu); }
    cplx N2() { return -ops.pair(v3.nu, ops.mul(v4.mu, dKdstar(ops.mul_bar(v1.mu, v2.nu)))); }
    cplx N3() { return -ops.pair(ops.mul(v3.mu, dKdbarstar(ops.mul(v1.mu, ops.adj(v2.nu)))), v4.nu); }
    cplx N4() { return -ops.pair(v3.nu, ops.mul(v4.mu, dKdbarstar(ops.mul(v2.mu, ops.adj(v1.nu))))); }

    using TermEntry = std::tuple<std::string, std::string, int, TermFn>;

    TermEntry entry(const std::string& name, int sign = 1) {
        static const std::map<std::string, std::string> formulas = {
            {"T1", "pair(A(mu1,nu1) K A(mu2,nu2)^* nu3, nu4)"},
            {"T2", "pair([I Q12, nu3], nu4)"},
            {"T3", "-pair(mu1 conj(mu2) nu3, nu4)"},
            {"T4", "pair(A(mu1,nu1) K dbar^*(mu3 nu2^*), nu4)"},
            {"T5", "pair(mu3 dhol Q12, nu4)"},
            {"T6", "pair(conj(mu2) mu3 nu1, nu4)"},
            {"T7", "pair(dbar K A(mu2,nu2)^* nu3, mu4 nu1^*)"},
            {"T8", "pair(nu3, mu4 dhol Q21)"},
            {"T9", "pair(nu3, conj(mu1) mu4 nu2)"},
            {"T10", "pair(mu3 nu2^*, mu4 nu1^*)"},
            {"N1", "-pair(mu3 dhol K dhol^*(conj(mu2) nu1), nu4)"},
            {"N2", "-pair(nu3, mu4 dhol K dhol^*(conj(mu1) nu2))"},
            {"N3", "-pair(mu3 dhol K dbar^*(mu1 nu2^*), nu4)"},
            {"N4", "-pair(nu3, mu4 dhol K dbar^*(mu2 nu1^*))"},
        };
        static const std::map<std::string, cplx (SecondVariation::*)()> fns = {
            {"T1", &SecondVariation::T1}, {"T2", &SecondVariation::T2}, {"T3", &SecondVariation::T3},
            {"T4", &SecondVariation::T4}, {"T5", &SecondVariation::T5}, {"T6", &SecondVariation::T6},
            {"T7", &SecondVariation::T7}, {"T8", &SecondVariation::T8}, {"T9", &SecondVariation::T9},
            {"T10", &SecondVariation::T10}, {"N1", &SecondVariation::N1}, {"N2", &SecondVariation::N2},
            {"N3", &SecondVariation::N3}, {"N4", &SecondVariation::N4},
        };
        auto fn = fns.at(name);
        return {name, formulas.at(name), sign, [this, fn, sign] { return static_cast<double>(sign) * (this->*fn)(); }};
    }

    VariationReport run(const std::string& system, const std::vector<std::pair<std::string, int>>& names) {
        std::vector<TermEntry> entries;
        for (const auto& [name, sign] : names) entries.push_back(entry(name, sign));
        VariationReport r = assemble(system, cp, {&v1, &v2, &v3, &v4}, std::move(entries));
        r.solver = summary;
        return r;
    }
};

}  // namespace

VariationReport second_variation_universal(const CenterPoint& cp, const TangentVector& v1, const TangentVector& v2,
                                           const TangentVector& v3, const TangentVector& v4) {
    SecondVariation sv(cp, v1, v2, v3, v4);
    return sv.run("universal", {{"T1", 1}, {"T2", 1}, {"T3", 1}, {"T4", 1}, {"T5", 1},
                                {"T6", 1}, {"T7", 1}, {"T8", 1}, {"T9", 1}, {"T10", 1}});
}

VariationReport second_variation_fibered(const CenterPoint& cp, const TangentVector& v1, const TangentVector& v2,
                                         const TangentVector& v3, const TangentVector& v4) {
    SecondVariation sv(cp, v1, v2, v3, v4);
    return sv.run("fibered", {{"T1", 1}, {"T2", 1}, {"T3", 1}, {"T4", 1}, {"T5", 1}, {"T7", 1},
                              {"T8", 1}, {"T10", 1}, {"N1", 1}, {"N2", 1}, {"N3", 1}, {"N4", 1}});
}

VariationReport difference_report(const CenterPoint& cp, const TangentVector& v1, const TangentVector& v2,
                                  const TangentVector& v3, const TangentVector& v4) {
    SecondVariation sv(cp, v1, v2, v3, v4);
    return sv.run("difference", {{"T6", 1}, {"T9", 1}, {"N1", -1}, {"N2", -1}, {"N3", -1}, {"N4", -1}});
}

PositivityCertificate positivity_certificate(const CenterPoint& cp, const Beltrami& mu2, const Field& nu1) {
    if (mu2.size() != cp.tangent.face_dim() || nu1.size() != cp.end.face_dim())
        throw Error(ErrorKind::InvalidArgument, "positivity_certificate: size mismatch");
    PositivityCertificate c;
    Ops ops(cp, &c.solver);
    const Field h = cp.end.dhol_adjoint(ops.mul_bar(mu2, nu1));
    const cplx a = cp.end.ip_vertex(ops.K(h), h);
    const cplx b = cp.end.ip_face(ops.mul_bar(mu2, ops.mul(mu2, nu1)), nu1);
    c.term_a = a.real();
    c.term_b = b.real();
    c.imag_a = a.imag();
    c.imag_b = b.imag();
    c.total = c.term_a + c.term_b;
    return c;
}

DenseComplex materialize_complex(const TwistedComplex& C, Eigen::Index dense_cap) {
    const Eigen::Index nv = C.vertex_dim(), nf = C.face_dim();
    if (std::max(nv, nf) > dense_cap) throw Error(ErrorKind::DenseCap, "complex exceeds the dense cap");
    const int n2 = C.rank() * C.rank();
    DenseComplex dc;
    dc.vertex_weight.resize(nv);
    dc.face_weight.resize(nf);
    for (Eigen::Index i = 0; i < nv; ++i) dc.vertex_weight[i] = C.vertex_weights()[i / n2];
    for (Eigen::Index i = 0; i < nf; ++i) dc.face_weight[i] = C.face_weights()[i / n2];
    dc.D.resize(nf, nv);
    Field e = Field::Zero(nv);
    for (Eigen::Index j = 0; j < nv; ++j) {
        e[j] = 1.0;
        dc.D.col(j) = C.dbar(e);
        e[j] = 0.0;
    }
    dc.D_adj = dc.vertex_weight.cwiseInverse().asDiagonal() * dc.D.adjoint() * dc.face_weight.asDiagonal();
    Mat Pi = Mat::Zero(nv, nv);
    for (const auto& k : C.kernel_basis()) Pi += k * (dc.vertex_weight.asDiagonal() * k).adjoint();
    const Mat lap = dc.D_adj * dc.D;
    dc.K = Eigen::PartialPivLU<Mat>(lap + Pi).inverse() - Pi;
    dc.P = Mat::Identity(nf, nf) - dc.D * dc.K * dc.D_adj;
    return dc;
}

Mat random_dbar_perturbation(const TwistedComplex& C, std::uint64_t seed, double scale) {
    const Eigen::Index nv = C.vertex_dim(), nf = C.face_dim();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Mat A(nf, nv);
    for (Eigen::Index j = 0; j < nv; ++j)
        for (Eigen::Index i = 0; i < nf; ++i) {
            const double re = g(rng);
            A(i, j) = cplx(re, g(rng));
        }
    if (scale == 0.0) return Mat::Zero(nf, nv);
    const int n2 = C.rank() * C.rank();
    Eigen::VectorXd wv(nv), swf(nf);
    for (Eigen::Index i = 0; i < nv; ++i) wv[i] = C.vertex_weights()[i / n2];
    for (Eigen::Index i = 0; i < nf; ++i) swf[i] = std::sqrt(C.face_weights()[i / n2]);
    Mat Pi = Mat::Zero(nv, nv);
    for (const auto& k : C.kernel_basis()) Pi += k * (wv.asDiagonal() * k).adjoint();
    A = A * (Mat::Identity(nv, nv) - Pi);
    Mat D(nf, nv);
    Field e = Field::Zero(nv);
    for (Eigen::Index j = 0; j < nv; ++j) {
        e[j] = 1.0;
        D.col(j) = C.dbar(e);
        e[j] = 0.0;
    }
    const double ratio = (swf.asDiagonal() * D).norm() / (swf.asDiagonal() * A).norm();
    return scale * ratio * A;
}

Mat projector_derivative(const DenseComplex& dc, const Mat& A) {
    const Mat A_adj = dc.vertex_weight.cwiseInverse().asDiagonal() * A.adjoint() * dc.face_weight.asDiagonal();
    return -(dc.P * A * dc.K * dc.D_adj + dc.D * dc.K * A_adj * dc.P);
}

Mat projector_at(const TwistedComplex& C, const DenseComplex& dc, const Mat& A, double t) {
    const Eigen::Index nf = C.face_dim();
    const Eigen::Index rank = C.vertex_dim() - static_cast<Eigen::Index>(C.kernel_basis().size());
    const Eigen::VectorXd sw = dc.face_weight.cwiseSqrt();
    const Eigen::ColPivHouseholderQR<Mat> qr(sw.asDiagonal() * (dc.D + t * A));
    const Mat Q = Mat(qr.householderQ()).leftCols(rank);
    // weighted orthogonal projector onto the complement of range D(t)
    return sw.cwiseInverse().asDiagonal() * (Mat::Identity(nf, nf) - Q * Q.adjoint()) * sw.asDiagonal();
}

ProjectorDerivativeCheck projector_derivative_check(const TwistedComplex& C, const Mat& A,
                                                    const std::vector<double>& steps, Eigen::Index dense_cap) {
    const DenseComplex dc = materialize_complex(C, dense_cap);
    if (A.rows() != dc.D.rows() || A.cols() != dc.D.cols())
        throw Error(ErrorKind::InvalidArgument, "projector_derivative_check: perturbation has the wrong shape");
    const Mat dP = projector_derivative(dc, A);
    const double scale = std::max(dP.norm(), 1e-300);
    ProjectorDerivativeCheck out;
    out.steps = steps;
    for (double h : steps) {
        const Mat fd = (projector_at(C, dc, A, h) - projector_at(C, dc, A, -h)) / (2.0 * h);
        out.errors.push_back(dP.norm() == 0.0 ? (fd.norm()) : (fd - dP).norm() / scale);
    }
    if (steps.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double m = static_cast<double>(steps.size());
        for (size_t i = 0; i < steps.size(); ++i) {
            const double x = std::log(steps[i]), y = std::log(std::max(out.errors[i], 1e-300));
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        out.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    }
    // P dP P = 0: harmonic forms see no first-order change
    const auto basis = harmonic_basis(C, dense_cap);
    double worst = 0.0;
    for (const auto& nu : basis) {
        const Field d = dP * nu;
        for (const auto& eta : basis) worst = std::max(worst, std::abs(C.ip_face(d, eta)));
    }
    out.orthogonality = worst / scale;
    return out;
}

}  // namespace unimod
