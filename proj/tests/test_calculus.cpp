#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "unimod/calculus.hpp"
#include "unimod/error.hpp"

using namespace unimod;
using testsupport::random_field;
using testsupport::rel;

namespace {

constexpr cplx iu{0.0, 1.0};

// Independent dense dbar / d: per face solve f = a + b x + c y from the three corner values.
Eigen::MatrixXcd dense_derivative(const ConformalSurface& S, bool holomorphic) {
    Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(S.num_faces(), S.num_vertices());
    for (int f = 0; f < S.num_faces(); ++f) {
        const auto hs = S.mesh().face_half_edges(f);
        Eigen::Matrix3d M;
        for (int k = 0; k < 3; ++k) M.row(k) << 1.0, S.chart(hs[k]).real(), S.chart(hs[k]).imag();
        const Eigen::Matrix3d Minv = M.inverse();
        for (int k = 0; k < 3; ++k) {
            const double bx = Minv(1, k), cy = Minv(2, k);
            D(f, S.mesh().origin(hs[k])) += holomorphic ? 0.5 * cplx(bx, -cy) : 0.5 * cplx(bx, cy);
        }
    }
    return D;
}

// Tetrahedron with faces (0,1,2) (1,0,3) (2,1,3) (0,2,3) and opposite edges of equal length.
HalfEdgeMesh tetrahedron() {
    std::istringstream in(
        "surf 4 6 4 0\n"
        "he 0 0 3 1 0\nhe 1 1 6 2 0\nhe 2 2 9 0 0\n"
        "he 3 1 0 4 1\nhe 4 0 11 5 1\nhe 5 3 7 3 1\n"
        "he 6 2 1 7 2\nhe 7 1 5 8 2\nhe 8 3 10 6 2\n"
        "he 9 0 2 10 3\nhe 10 2 8 11 3\nhe 11 3 4 9 3\n");
    return load_mesh(in);
}

// Charts for the isosceles right disphenoid whose face 0 is the triangle (0, 1, i).
ConformalSurface right_tetrahedron() {
    const auto mesh = tetrahedron();
    auto len = [](int a, int b) {
        const int lo = std::min(a, b), hi = std::max(a, b);
        if ((lo == 1 && hi == 2) || (lo == 0 && hi == 3)) return std::sqrt(2.0);
        return 1.0;
    };
    std::vector<cplx> chart(mesh.num_half_edges());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const auto hs = mesh.face_half_edges(f);
        const auto v = mesh.face_vertices(f);
        const double a = len(v[0], v[1]), b = len(v[0], v[2]), c = len(v[1], v[2]);
        const double x = (a * a + b * b - c * c) / (2 * a);
        chart[hs[0]] = 0.0;
        chart[hs[1]] = a;
        chart[hs[2]] = cplx(x, std::sqrt(std::max(0.0, b * b - x * x)));
    }
    return ConformalSurface(mesh, chart, std::vector<double>(4, 1.0));
}

}  // namespace

TEST_CASE("gradient on the reference triangle") {
    const auto S = right_tetrahedron();
    CHECK(S.chart(0) == cplx(0));
    CHECK(S.chart(1) == cplx(1));
    CHECK(std::abs(S.chart(2) - iu) < 1e-15);
    Scalar0Cochain f = Scalar0Cochain::Zero(4);
    f << 0.0, 1.0, iu, 0.0;
    const auto d = d_hol(f, S);
    const auto db = dbar(f, S);
    CHECK(std::abs(d.coeff[0] - 1.0) < 1e-14);
    CHECK(std::abs(db.coeff[0]) < 1e-14);
    // conjugate function: dbar z-bar = 1
    const auto db2 = dbar(f.conjugate(), S);
    CHECK(std::abs(db2.coeff[0] - 1.0) < 1e-14);
}

TEST_CASE("constants are killed") {
    const auto S = testsupport::genus2(1);
    const Scalar0Cochain one = Scalar0Cochain::Constant(S.num_vertices(), cplx(2.5, -1.0));
    CHECK(dbar(one, S).coeff.norm() < 1e-12);
    CHECK(d_hol(one, S).coeff.norm() < 1e-12);
    CHECK(dbar_star(dbar(one, S), S).norm() < 1e-12);
}

TEST_CASE("operators match the dense affine oracle") {
    std::mt19937_64 rng(11);
    for (auto density : {DensityPolicy::Uniform, DensityPolicy::Hyperbolic}) {
        const auto S = testsupport::genus2(1, LayoutPolicy::Polygon, density);
        const Eigen::MatrixXcd Db = dense_derivative(S, false), Dh = dense_derivative(S, true);
        const Eigen::VectorXd m = vertex_mass(S, MassWeight::Density);
        Eigen::VectorXd w(S.num_faces());
        for (int f = 0; f < S.num_faces(); ++f) w[f] = 2.0 * S.area(f);
        const Eigen::MatrixXcd Db_adj = m.cwiseInverse().asDiagonal() * Db.adjoint() * w.asDiagonal();
        const Eigen::MatrixXcd Dh_adj = m.cwiseInverse().asDiagonal() * Dh.adjoint() * w.asDiagonal();
        for (int t = 0; t < 20; ++t) {
            const auto f = random_field(rng, S.num_vertices());
            const auto a = random_field(rng, S.num_faces());
            CHECK((dbar(f, S).coeff - Db * f).norm() <= 1e-12 * (Db * f).norm());
            CHECK((d_hol(f, S).coeff - Dh * f).norm() <= 1e-12 * (Dh * f).norm());
            CHECK((dbar_star(FormP0(FormType::Form01, 1, a), S) - Db_adj * a).norm() <= 1e-12 * (Db_adj * a).norm());
            CHECK((d_star(FormP0(FormType::Form10, 1, a), S) - Dh_adj * a).norm() <= 1e-12 * (Dh_adj * a).norm());
        }
    }
}

TEST_CASE("adjointness on random pairs") {
    std::mt19937_64 rng(3);
    const auto S = testsupport::genus2(1);
    for (auto weight : {MassWeight::Density, MassWeight::Uniform})
        for (int t = 0; t < 100; ++t) {
            const auto f = random_field(rng, S.num_vertices());
            const FormP0 a(FormType::Form01, 1, random_field(rng, S.num_faces()));
            const FormP0 b(FormType::Form10, 1, random_field(rng, S.num_faces()));
            CHECK(rel(ip_form(dbar(f, S), a, S), ip_scalar(f, dbar_star(a, S, weight), S, weight)) < 1e-10);
            CHECK(rel(ip_form(d_hol(f, S), b, S), ip_scalar(f, d_star(b, S, weight), S, weight)) < 1e-10);
        }
}

TEST_CASE("hodge star conventions") {
    std::mt19937_64 rng(5);
    const auto S = testsupport::genus2(1);
    const FormP0 nu(FormType::Form01, 1, random_field(rng, S.num_faces()));
    const FormP0 beta(FormType::Form10, 1, random_field(rng, S.num_faces()));
    CHECK((hodge_star(nu, S).coeff - iu * nu.coeff).norm() < 1e-14);
    CHECK((hodge_star(hodge_star(nu, S), S).coeff + nu.coeff).norm() < 1e-14);
    CHECK((hodge_star(hodge_star(beta, S), S).coeff + beta.coeff).norm() < 1e-14);
    const auto one = hodge_star(area_form(S), S);
    CHECK(one.type == FormType::Face0);
    for (int f = 0; f < S.num_faces(); ++f) CHECK(std::abs(one.coeff[f] - 1.0) < 1e-14);
    const FormP0 nu2(FormType::Form01, 1, random_field(rng, S.num_faces()));
    CHECK(rel(ip_form(hodge_star(nu, S), hodge_star(nu2, S), S), ip_form(nu, nu2, S)) < 1e-14);
    const cplx lambda(0.3, -1.7);
    CHECK((hodge_star(FormP0(FormType::Form01, 1, lambda * nu.coeff), S).coeff - lambda * hodge_star(nu, S).coeff)
              .norm() < 1e-13);
}

TEST_CASE("inner products") {
    std::mt19937_64 rng(7);
    const auto S = testsupport::genus2(1);
    const auto f = random_field(rng, S.num_vertices()), g = random_field(rng, S.num_vertices());
    CHECK(ip_scalar(f, f, S).real() > 0);
    CHECK(std::abs(ip_scalar(f, f, S).imag()) < 1e-14 * ip_scalar(f, f, S).real());
    CHECK(rel(ip_scalar(f, g, S), std::conj(ip_scalar(g, f, S))) < 1e-14);
    const FormP0 a(FormType::Form01, 1, random_field(rng, S.num_faces()));
    const FormP0 b(FormType::Form01, 1, random_field(rng, S.num_faces()));
    CHECK(rel(ip_form(a, b, S), std::conj(ip_form(b, a, S))) < 1e-14);
    CHECK_THROWS_AS(ip_form(a, FormP0(FormType::Form10, 1, b.coeff), S), Error);
}

TEST_CASE("form Gram matrix is positive definite and diagonal") {
    const auto S = testsupport::genus2(1);
    const int F = S.num_faces();
    Eigen::MatrixXcd gram(F, F);
    for (int i = 0; i < F; ++i)
        for (int j = 0; j < F; ++j) {
            FormP0 ei = FormP0::zero(FormType::Form01, F), ej = FormP0::zero(FormType::Form01, F);
            ei.coeff[i] = 1.0;
            ej.coeff[j] = 1.0;
            gram(i, j) = ip_form(ei, ej, S);
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    for (int i = 0; i < F; ++i) CHECK(std::abs(gram(i, i) - 2.0 * S.area(i)) < 1e-14);
}

TEST_CASE("wedge trace conventions") {
    std::mt19937_64 rng(9);
    const auto S = testsupport::genus2(1);
    const int F = S.num_faces();
    for (int n : {1, 2, 3}) {
        const FormP0 a(FormType::Form01, n, random_field(rng, F * n * n));
        const cplx w = iu * wedge_trace_integrate(a, hodge_star(conj_transpose(a), S), S);
        CHECK(w.real() > 0.0);
        CHECK(std::abs(w.imag()) < 1e-12 * w.real());
        CHECK(rel(w, ip_form(a, a, S)) < 1e-12);
        const FormP0 b(FormType::Form10, n, random_field(rng, F * n * n));
        const cplx lambda(-0.4, 2.2);
        CHECK(rel(wedge_trace_integrate(FormP0(FormType::Form01, n, lambda * a.coeff), b, S),
                  lambda * wedge_trace_integrate(a, b, S)) < 1e-13);
        CHECK(rel(wedge_trace_integrate(b, a, S), -wedge_trace_integrate(a, b, S)) < 1e-13);
        // direct per-face sum
        cplx direct = 0.0;
        for (int f = 0; f < F; ++f) direct += 2.0 * S.area(f) * (a.block(f) * b.block(f)).trace();
        CHECK(rel(wedge_trace_integrate(a, b, S), direct) < 1e-12);
    }
    const FormP0 a(FormType::Form01, 1, random_field(rng, F));
    CHECK_THROWS_AS(wedge_trace_integrate(a, a, S), Error);
}

TEST_CASE("Beltrami contractions") {
    std::mt19937_64 rng(13);
    const auto S = testsupport::genus2(1);
    const int F = S.num_faces();
    const Beltrami mu = random_field(rng, F);
    const FormP0 w(FormType::Form10, 1, random_field(rng, F));
    const FormP0 a(FormType::Form01, 1, random_field(rng, F));
    const auto mw = mu_contract(mu, w);
    const auto ma = mu_bar_contract(mu, a);
    CHECK(mw.type == FormType::Form01);
    CHECK(ma.type == FormType::Form10);
    for (int f = 0; f < F; ++f) {
        CHECK(std::abs(std::abs(mw.coeff[f]) - std::abs(mu[f]) * std::abs(w.coeff[f])) < 1e-13);
        CHECK(std::abs(ma.coeff[f] - std::conj(mu[f]) * a.coeff[f]) < 1e-13);
    }
    CHECK(mu_contract(Beltrami::Zero(F), w).coeff.norm() == 0.0);
    const cplx lambda(1.5, 0.25);
    CHECK((mu_contract(lambda * mu, w).coeff - lambda * mw.coeff).norm() < 1e-12);
    CHECK((mu_contract(mu, FormP0(FormType::Form10, 1, lambda * w.coeff)).coeff - lambda * mw.coeff).norm() < 1e-12);
    CHECK_THROWS_AS(mu_contract(mu, a), Error);
}

TEST_CASE("face derivative of constant and linear fields") {
    const auto S = testsupport::genus2(2, LayoutPolicy::Polygon, DensityPolicy::Uniform);
    const auto& mesh = S.mesh();
    // the polygon layout is one global chart on interior faces; faces whose three vertices
    // and all their neighbouring faces stay inside the polygon see a flat patch
    std::vector<char> interior_vertex(S.num_vertices(), 1);
    for (int h = 0; h < mesh.num_half_edges(); ++h)
        if (std::abs(S.rotation(h) - 1.0) > 1e-12) interior_vertex[mesh.origin(h)] = interior_vertex[mesh.dest(h)] = 0;
    const cplx a(0.3, 0.1), b(1.2, -0.7), c(-0.5, 0.4);
    Field constant(S.num_faces()), linear(S.num_faces());
    for (int f = 0; f < S.num_faces(); ++f) {
        const cplx z = S.centroid(f);
        constant[f] = a;
        linear[f] = a + b * z + c * std::conj(z);
    }
    const auto dc = face_derivative(constant, 0, S);
    const auto dl = face_derivative(linear, 0, S);
    int checked = 0;
    for (int f = 0; f < S.num_faces(); ++f) {
        const auto vs = mesh.face_vertices(f);
        if (!interior_vertex[vs[0]] || !interior_vertex[vs[1]] || !interior_vertex[vs[2]]) continue;
        ++checked;
        CHECK(std::abs(dc.dbar_part.coeff[f]) < 1e-12);
        CHECK(std::abs(dc.dhol_part.coeff[f]) < 1e-12);
        CHECK(std::abs(dl.dhol_part.coeff[f] - b) < 1e-11);
        CHECK(std::abs(dl.dbar_part.coeff[f] - c) < 1e-11);
    }
    CHECK(checked > 0);
    const auto again = face_derivative(linear, 0, S);
    CHECK(again.dbar_part.coeff == dl.dbar_part.coeff);
}

TEST_CASE("face derivative of a constant on the equilateral layout") {
    const auto S = testsupport::genus2(1, LayoutPolicy::Equilateral, DensityPolicy::Uniform);
    const Field c = Field::Constant(S.num_faces(), 0.7);
    const auto d = face_derivative(c, 0, S);
    CHECK(d.dbar_part.coeff.norm() < 1e-12);
    CHECK(d.dhol_part.coeff.norm() < 1e-12);
}
