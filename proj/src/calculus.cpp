#include "unimod/calculus.hpp"

#include "unimod/error.hpp"

namespace unimod {

namespace {

constexpr cplx I_unit{0.0, 1.0};

void require_type(const FormP0& w, FormType t, const char* op) {
    if (w.type != t)
        throw Error(ErrorKind::InvalidArgument,
                    std::string(op) + ": expected a " + to_string(t) + " form, got " + to_string(w.type));
}

void require_sizes(const Field& v, int expected, const char* op) {
    if (v.size() != expected) throw Error(ErrorKind::InvalidArgument, std::string(op) + ": size mismatch");
}

}  // namespace

const char* to_string(FormType t) {
    switch (t) {
        case FormType::Form10: return "(1,0)";
        case FormType::Form01: return "(0,1)";
        case FormType::Form11: return "(1,1)";
        case FormType::Face0: return "face-function";
    }
    return "?";
}

FormP0 FormP0::zero(FormType t, int num_faces, int n) {
    return FormP0(t, n, Field::Zero(static_cast<Eigen::Index>(num_faces) * n * n));
}

std::vector<std::array<cplx, 3>> p1_gradients(const ConformalSurface& S) {
    const auto& mesh = S.mesh();
    std::vector<std::array<cplx, 3>> G(S.num_faces());
    for (int f = 0; f < S.num_faces(); ++f) {
        const auto hs = mesh.face_half_edges(f);
        const cplx z[3] = {S.chart(hs[0]), S.chart(hs[1]), S.chart(hs[2])};
        const double two_a = 2.0 * S.area(f);
        for (int k = 0; k < 3; ++k) G[f][k] = I_unit * (z[(k + 2) % 3] - z[(k + 1) % 3]) / two_a;
    }
    return G;
}

Eigen::VectorXd vertex_mass(const ConformalSurface& S, MassWeight weight) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(S.num_vertices());
    for (int f = 0; f < S.num_faces(); ++f) {
        const double w = S.area(f) * (weight == MassWeight::Density ? S.density(f) : 1.0) / 3.0;
        for (int v : S.mesh().face_vertices(f)) m[v] += w;
    }
    return m;
}

namespace {

FormP0 p1_derivative(const Scalar0Cochain& f, const ConformalSurface& S, bool holomorphic) {
    require_sizes(f, S.num_vertices(), "p1 derivative");
    const auto G = p1_gradients(S);
    FormP0 out = FormP0::zero(holomorphic ? FormType::Form10 : FormType::Form01, S.num_faces());
    for (int fc = 0; fc < S.num_faces(); ++fc) {
        const auto vs = S.mesh().face_vertices(fc);
        cplx s = 0.0;
        for (int k = 0; k < 3; ++k) s += f[vs[k]] * (holomorphic ? std::conj(G[fc][k]) : G[fc][k]);
        out.coeff[fc] = 0.5 * s;
    }
    return out;
}

Scalar0Cochain p1_adjoint(const FormP0& a, const ConformalSurface& S, MassWeight weight, bool holomorphic) {
    if (a.rank != 1 || a.num_faces() != S.num_faces())
        throw Error(ErrorKind::InvalidArgument, "scalar adjoint: size mismatch");
    const auto G = p1_gradients(S);
    const Eigen::VectorXd m = vertex_mass(S, weight);
    Scalar0Cochain out = Scalar0Cochain::Zero(S.num_vertices());
    for (int fc = 0; fc < S.num_faces(); ++fc) {
        const auto vs = S.mesh().face_vertices(fc);
        for (int k = 0; k < 3; ++k)
            out[vs[k]] += S.area(fc) * (holomorphic ? G[fc][k] : std::conj(G[fc][k])) * a.coeff[fc];
    }
    return out.cwiseQuotient(m.cast<cplx>());
}

}  // namespace

FormP0 dbar(const Scalar0Cochain& f, const ConformalSurface& S) { return p1_derivative(f, S, false); }
FormP0 d_hol(const Scalar0Cochain& f, const ConformalSurface& S) { return p1_derivative(f, S, true); }

Scalar0Cochain dbar_star(const FormP0& alpha, const ConformalSurface& S, MassWeight weight) {
    require_type(alpha, FormType::Form01, "dbar_star");
    return p1_adjoint(alpha, S, weight, false);
}

Scalar0Cochain d_star(const FormP0& beta, const ConformalSurface& S, MassWeight weight) {
    require_type(beta, FormType::Form10, "d_star");
    return p1_adjoint(beta, S, weight, true);
}

FormP0 hodge_star(const FormP0& w, const ConformalSurface& S) {
    FormP0 out = w;
    switch (w.type) {
        case FormType::Form10: out.coeff *= -I_unit; break;
        case FormType::Form01: out.coeff *= I_unit; break;
        case FormType::Form11:
            out.type = FormType::Face0;
            for (int f = 0; f < w.num_faces(); ++f) out.block(f) *= 2.0 * I_unit / S.density(f);
            break;
        case FormType::Face0:
            out.type = FormType::Form11;
            for (int f = 0; f < w.num_faces(); ++f) out.block(f) *= -0.5 * I_unit * S.density(f);
            break;
    }
    return out;
}

FormP0 area_form(const ConformalSurface& S) {
    FormP0 out = FormP0::zero(FormType::Form11, S.num_faces());
    for (int f = 0; f < S.num_faces(); ++f) out.coeff[f] = -0.5 * I_unit * S.density(f);
    return out;
}

cplx ip_scalar(const Scalar0Cochain& f, const Scalar0Cochain& g, const ConformalSurface& S, MassWeight weight) {
    require_sizes(f, S.num_vertices(), "ip_scalar");
    require_sizes(g, S.num_vertices(), "ip_scalar");
    const Eigen::VectorXd m = vertex_mass(S, weight);
    cplx s = 0.0;
    for (int v = 0; v < S.num_vertices(); ++v) s += m[v] * f[v] * std::conj(g[v]);
    return s;
}

cplx ip_form(const FormP0& a, const FormP0& b, const ConformalSurface& S) {
    if (a.type != b.type) throw Error(ErrorKind::InvalidArgument, "ip_form: type mismatch");
    if (a.rank != b.rank || a.coeff.size() != b.coeff.size() || a.num_faces() != S.num_faces())
        throw Error(ErrorKind::InvalidArgument, "ip_form: size mismatch");
    const int n2 = a.rank * a.rank;
    cplx s = 0.0;
    for (int f = 0; f < S.num_faces(); ++f) {
        double w = 2.0 * S.area(f);
        if (a.type == FormType::Form11) w = 4.0 * S.area(f) / S.density(f);
        if (a.type == FormType::Face0) w = S.density(f) * S.area(f);
        cplx t = 0.0;
        for (int k = 0; k < n2; ++k) t += a.coeff[f * n2 + k] * std::conj(b.coeff[f * n2 + k]);
        s += w * t;
    }
    return s;
}

FormP0 mu_contract(const Beltrami& mu, const FormP0& w) {
    require_type(w, FormType::Form10, "mu_contract");
    if (mu.size() != w.num_faces()) throw Error(ErrorKind::InvalidArgument, "mu_contract: size mismatch");
    FormP0 out(FormType::Form01, w.rank, w.coeff);
    for (int f = 0; f < w.num_faces(); ++f) out.block(f) *= mu[f];
    return out;
}

FormP0 mu_bar_contract(const Beltrami& mu, const FormP0& a) {
    require_type(a, FormType::Form01, "mu_bar_contract");
    if (mu.size() != a.num_faces()) throw Error(ErrorKind::InvalidArgument, "mu_bar_contract: size mismatch");
    FormP0 out(FormType::Form10, a.rank, a.coeff);
    for (int f = 0; f < a.num_faces(); ++f) out.block(f) *= std::conj(mu[f]);
    return out;
}

FormP0 conj_transpose(const FormP0& w) {
    FormP0 out = w;
    if (w.type == FormType::Form10) out.type = FormType::Form01;
    else if (w.type == FormType::Form01) out.type = FormType::Form10;
    else throw Error(ErrorKind::InvalidArgument, "conj_transpose: only defined on 1-forms");
    for (int f = 0; f < w.num_faces(); ++f) out.block(f) = w.block(f).adjoint();
    return out;
}

cplx wedge_trace_integrate(const FormP0& a, const FormP0& b, const ConformalSurface& S) {
    double sign = 0.0;
    if (a.type == FormType::Form01 && b.type == FormType::Form10) sign = 1.0;
    if (a.type == FormType::Form10 && b.type == FormType::Form01) sign = -1.0;
    if (sign == 0.0)
        throw Error(ErrorKind::InvalidArgument, std::string("wedge_trace_integrate: cannot wedge ") + to_string(a.type) +
                                                    " with " + to_string(b.type));
    if (a.rank != b.rank || a.coeff.size() != b.coeff.size() || a.num_faces() != S.num_faces())
        throw Error(ErrorKind::InvalidArgument, "wedge_trace_integrate: size mismatch");
    cplx s = 0.0;
    for (int f = 0; f < S.num_faces(); ++f) s += 2.0 * S.area(f) * (a.block(f) * b.block(f)).trace();
    return sign * s;
}

FaceDerivative face_derivative(const Field& face_values, int weight, const ConformalSurface& S) {
    require_sizes(face_values, S.num_faces(), "face_derivative");
    const auto& mesh = S.mesh();
    auto rot_pow = [weight](cplx r) { return std::pow(r, weight); };
    Field lifted(S.num_vertices());
    for (int v = 0; v < S.num_vertices(); ++v) {
        Eigen::Matrix3cd N = Eigen::Matrix3cd::Zero();
        Eigen::Vector3cd rhs = Eigen::Vector3cd::Zero();
        for (int h : mesh.outgoing(v)) {
            const int f = mesh.face(h);
            const cplx rot = S.vertex_rotation(h);
            const cplx w = (S.centroid(f) - S.chart(h)) / rot;
            const cplx value = face_values[f] / rot_pow(rot);
            const Eigen::Vector3cd row(1.0, w, std::conj(w));
            N += S.area(f) * row.conjugate() * row.transpose();
            rhs += S.area(f) * row.conjugate() * value;
        }
        lifted[v] = N.ldlt().solve(rhs)[0];
    }
    const auto G = p1_gradients(S);
    FaceDerivative out{FormP0::zero(FormType::Form01, S.num_faces()), FormP0::zero(FormType::Form10, S.num_faces())};
    for (int f = 0; f < S.num_faces(); ++f) {
        const auto hs = mesh.face_half_edges(f);
        cplx d = 0.0, dh = 0.0;
        for (int k = 0; k < 3; ++k) {
            const cplx value = lifted[mesh.origin(hs[k])] * rot_pow(S.vertex_rotation(hs[k]));
            d += value * G[f][k];
            dh += value * std::conj(G[f][k]);
        }
        out.dbar_part.coeff[f] = 0.5 * d;
        out.dhol_part.coeff[f] = 0.5 * dh;
    }
    return out;
}

}  // namespace unimod
