#include "doctest.h"
#include "test_support.hpp"
#include "unimod/error.hpp"
#include "unimod/oracle.hpp"
#include "unimod/variation.hpp"

using namespace unimod;
using testsupport::random_field;

namespace {

CenterPoint center(const std::string& preset, int levels = 1) {
    int genus, n, d;
    std::vector<Mat> gens;
    preset_generators(preset, genus, n, d, gens);
    const auto S = testsupport::genus2(levels);
    return make_center(S, UnitaryCocycle::from_generators(S.mesh(), n, d, gens));
}

double rel(const Field& a, const Field& b) { return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-300}); }

// inner product <x, y> = y^H W x
cplx ip(const Eigen::VectorXd& w, const Field& x, const Field& y) { return y.dot(w.asDiagonal() * x); }

}  // namespace

TEST_CASE("dense materializations match the functional path") {
    std::mt19937_64 rng(1);
    for (const char* preset : {"g2n1d0", "g2n2d1", "g2n3d1"}) {
        CAPTURE(preset);
        const auto cp = center(preset);
        const auto& E = cp.end;
        OperatorParams params{random_field(rng, E.face_dim()), random_field(rng, cp.tangent.face_dim())};
        const auto D = materialize("dbar", cp.cocycle, cp.surface);
        const auto Dh = materialize("dhol", cp.cocycle, cp.surface);
        const auto Ds = materialize("dbar_adjoint", cp.cocycle, cp.surface);
        const auto Dhs = materialize("dhol_adjoint", cp.cocycle, cp.surface);
        const auto I = materialize("interpolate", cp.cocycle, cp.surface);
        const auto L = materialize("laplacian", cp.cocycle, cp.surface);
        const auto ad = materialize("ad", cp.cocycle, cp.surface, params);
        const auto ads = materialize("ad_star", cp.cocycle, cp.surface, params);
        const auto mu = materialize("mu", cp.cocycle, cp.surface, params);
        const auto mub = materialize("mu_bar", cp.cocycle, cp.surface, params);
        const int n2 = E.rank() * E.rank();
        for (Eigen::Index i = 0; i < E.vertex_dim(); ++i)
            CHECK(std::abs(D.domain_weight[i] - E.vertex_weights()[i / n2]) <= 1e-14 * E.vertex_weights()[i / n2]);
        for (Eigen::Index i = 0; i < E.face_dim(); ++i)
            CHECK(std::abs(D.codomain_weight[i] - E.face_weights()[i / n2]) <= 1e-14 * E.face_weights()[i / n2]);
        for (int t = 0; t < 50; ++t) {
            const Field x = random_field(rng, E.vertex_dim());
            const Field a = random_field(rng, E.face_dim());
            CHECK(rel(D.apply(x), E.dbar(x)) <= 1e-12);
            CHECK(rel(Dh.apply(x), E.dhol(x)) <= 1e-12);
            CHECK(rel(Ds.apply(a), E.dbar_adjoint(a)) <= 1e-12);
            CHECK(rel(Dhs.apply(a), E.dhol_adjoint(a)) <= 1e-12);
            CHECK(rel(I.apply(x), E.interpolate(x)) <= 1e-12);
            CHECK(rel(L.apply(x), E.laplacian(x)) <= 1e-12);
            CHECK(rel(ad.apply(x), ad_on_scalar(E, params.nu, x)) <= 1e-12);
            CHECK(rel(ads.apply(a), ad_star(E, params.nu, a)) <= 1e-12);
            CHECK(rel(mu.apply(a), scale_faces(a, params.mu, E.rank())) <= 1e-12);
            CHECK(rel(mub.apply(a), scale_faces(a, params.mu, E.rank(), true)) <= 1e-12);
        }
        // weighted Hermitian laplacian
        const Mat WL = L.domain_weight.asDiagonal() * L.matrix;
        CHECK((WL - WL.adjoint()).norm() <= 1e-12 * WL.norm());
    }
}

TEST_CASE("rank one trivial cocycle reduces to the scalar operators") {
    const auto cp = center("g2n1d0");
    const auto D = materialize("dbar", cp.cocycle, cp.surface);
    const auto Dh = materialize("dhol", cp.cocycle, cp.surface);
    Field e = Field::Zero(cp.surface.num_vertices());
    double worst = 0.0;
    for (int v = 0; v < cp.surface.num_vertices(); ++v) {
        e[v] = 1.0;
        worst = std::max(worst, (D.matrix.col(v) - dbar(e, cp.surface).coeff).cwiseAbs().maxCoeff());
        worst = std::max(worst, (Dh.matrix.col(v) - d_hol(e, cp.surface).coeff).cwiseAbs().maxCoeff());
        e[v] = 0.0;
    }
    CHECK(worst <= 1e-12 * D.matrix.cwiseAbs().maxCoeff());
}

TEST_CASE("restricted inverse and kernel dimension") {
    std::mt19937_64 rng(2);
    for (const char* preset : {"g2n1d0", "g2n2d0", "g2n2d1", "g2n3d1"}) {
        CAPTURE(preset);
        const auto cp = center(preset);
        const auto L = materialize("laplacian", cp.cocycle, cp.surface);
        const auto R = restricted_inverse_dense(L);
        CHECK(R.kernel_dim == cp.cocycle.commutant_dim());
        CHECK(R.kernel_dim == static_cast<int>(cp.end.kernel_basis().size()));
        const Eigen::Index nv = L.matrix.rows();
        Mat Pi = Mat::Zero(nv, nv);
        for (const auto& k : cp.end.kernel_basis()) Pi += k * (L.domain_weight.asDiagonal() * k).adjoint();
        CHECK((L.matrix * R.inverse.matrix - (Mat::Identity(nv, nv) - Pi)).norm() <= 1e-10 * std::sqrt(double(nv)));
    }
    CHECK(center("g2n2d1").cocycle.commutant_dim() == 1);
    CHECK(center("g2n2d0").cocycle.commutant_dim() == 4);

    const auto cp = center("g2n2d1");
    const auto R = restricted_inverse_dense(materialize("laplacian", cp.cocycle, cp.surface));
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Field h = random_field(rng, cp.end.vertex_dim());
        worst = std::max(worst, rel(cp.end.delta0_inverse(h), R.inverse.apply(h)));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("dense projector algebra") {
    const auto cp = center("g2n2d1");
    const auto P = materialize("projector", cp.cocycle, cp.surface);
    const auto D = materialize("dbar", cp.cocycle, cp.surface);
    const Mat& M = P.matrix;
    CHECK((M * M - M).norm() <= 1e-10 * M.norm());
    CHECK((P.adjoint().matrix - M).norm() <= 1e-10 * M.norm());
    CHECK((M * D.matrix).norm() <= 1e-10 * D.matrix.norm());
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const Field a = random_field(rng, cp.end.face_dim());
        CHECK(rel(P.apply(a), cp.end.harmonic_projection(a)) <= 1e-8);
    }
}

TEST_CASE("dense second variation agrees with the term reports") {
    for (const char* preset : {"g2n2d1", "g2n3d1"}) {
        CAPTURE(preset);
        const auto cp = center(preset);
        const auto& c = cp.cocycle;
        const auto& S = cp.surface;
        const auto D = materialize("dbar", c, S), Dh = materialize("dhol", c, S);
        const auto K = restricted_inverse_dense(materialize("laplacian", c, S)).inverse.matrix;
        const Eigen::VectorXd& wf = D.codomain_weight;
        const int n = c.rank();
        std::vector<TangentVector> v;
        for (int i = 0; i < 4; ++i) v.push_back(random_tangent(cp, 500 + i));
        std::vector<DenseOperator> A, As, Mu, Mub;
        for (const auto& x : v) {
            const OperatorParams p{x.nu, x.mu};
            Mu.push_back(materialize("mu", c, S, p));
            Mub.push_back(materialize("mu_bar", c, S, p));
            DenseOperator a = materialize("ad", c, S, p);
            a.matrix -= Mu.back().matrix * Dh.matrix;
            As.push_back(a.adjoint());
            A.push_back(a);
        }
        auto pr = [&](const Field& x, const Field& y) { return ip(wf, x, y); };
        auto adj = [&](const Field& a) { return blockwise_adjoint(a, n); };
        const Mat Ds = D.adjoint().matrix, Dhs = Dh.adjoint().matrix;
        const auto &m1 = Mu[0].matrix, &m2 = Mu[1].matrix, &m3 = Mu[2].matrix, &m4 = Mu[3].matrix;
        const auto &m1b = Mub[0].matrix, &m2b = Mub[1].matrix;
        const Field &n1 = v[0].nu, &n2 = v[1].nu, &n3 = v[2].nu, &n4 = v[3].nu;
        const Field Q12 = K * (As[1].matrix * n1 - Ds * (m1 * adj(n2)));
        const Field Q21 = K * (As[0].matrix * n2 - Ds * (m2 * adj(n1)));
        const auto ad3 = materialize("ad", c, S, OperatorParams{n3, v[2].mu});
        const cplx shared = pr(A[0].matrix * K * As[1].matrix * n3, n4) + pr(-(ad3.matrix * Q12), n4) -
                            pr(m1 * m2b * n3, n4) + pr(A[0].matrix * K * Ds * (m3 * adj(n2)), n4) +
                            pr(m3 * Dh.matrix * Q12, n4) + pr(D.matrix * K * As[1].matrix * n3, m4 * adj(n1)) +
                            pr(n3, m4 * Dh.matrix * Q21) + pr(m3 * adj(n2), m4 * adj(n1));
        const cplx removed = pr(m2b * m3 * n1, n4) + pr(n3, m1b * m4 * n2);
        const cplx added = -pr(m3 * Dh.matrix * K * Dhs * (m2b * n1), n4) - pr(n3, m4 * Dh.matrix * K * Dhs * (m1b * n2)) -
                           pr(m3 * Dh.matrix * K * Ds * (m1 * adj(n2)), n4) - pr(n3, m4 * Dh.matrix * K * Ds * (m2 * adj(n1)));
        const auto u = second_variation_universal(cp, v[0], v[1], v[2], v[3]);
        const auto f = second_variation_fibered(cp, v[0], v[1], v[2], v[3]);
        CHECK(std::abs(u.total - (shared + removed)) <= 1e-8 * std::abs(u.total));
        CHECK(std::abs(f.total - (shared + added)) <= 1e-8 * std::abs(f.total));

        // Hermitian symmetry of the dense functional itself
        const auto us = second_variation_universal(cp, v[1], v[0], v[3], v[2]);
        CHECK(std::abs(u.total - std::conj(us.total)) <= 1e-8 * std::abs(u.total));
    }
}

TEST_CASE("flat torus spectral crosscheck") {
    for (int rank : {1, 2}) {
        CAPTURE(rank);
        const auto r = torus_spectral_crosscheck(rank, 3, {6, 12, 24});
        CHECK(r.spectral_idempotence == 0.0);
        CHECK(r.constant_form_residual <= 1e-10);
        CHECK(r.monotone);
        for (const auto& lv : r.levels) {
            CHECK(lv.kernel_dim == r.untwisted_entries);
            CHECK(lv.frame_residual <= 1e-12);
            MESSAGE("grid " << lv.grid << ": projector " << lv.projector_error << ", inverse " << lv.inverse_error);
        }
        CHECK(r.levels.back().inverse_error < r.levels.front().inverse_error);
    }
}

TEST_CASE("dense cap") {
    const auto cp = center("g2n2d1");
    CHECK_THROWS_AS(materialize("dbar", cp.cocycle, cp.surface, {}, 10), Error);
    CHECK_THROWS_AS(materialize("nope", cp.cocycle, cp.surface), Error);
}
