#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "unimod/tangent.hpp"

using namespace unimod;
using testsupport::random_field;
using testsupport::rel;

namespace {

CenterPoint center(const std::string& preset, int levels = 1) {
    int genus, n, d;
    std::vector<Mat> gens;
    preset_generators(preset, genus, n, d, gens);
    const auto S = testsupport::genus2(levels);
    return make_center(S, UnitaryCocycle::from_generators(S.mesh(), n, d, gens));
}

// rank of the unweighted dbar matrix, by SVD
Eigen::Index dense_rank(const TwistedComplex& C) {
    Mat M(C.face_dim(), C.vertex_dim());
    Field e = Field::Zero(C.vertex_dim());
    for (Eigen::Index j = 0; j < C.vertex_dim(); ++j) {
        e[j] = 1.0;
        M.col(j) = C.dbar(e);
        e[j] = 0.0;
    }
    Eigen::JacobiSVD<Mat> svd(M);
    const auto& s = svd.singularValues();
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[i] > 1e-10 * s[0]) ++r;
    return r;
}

}  // namespace

TEST_CASE("tangent projector") {
    std::mt19937_64 rng(1);
    const auto cp = center("g2n2d1");
    const auto& T = cp.tangent;
    for (int t = 0; t < 5; ++t) {
        const auto xi = random_field(rng, T.vertex_dim());
        const auto exact = T.dbar(xi);
        CHECK(T.norm_face(project_harmonic_mu(cp, exact)) <= 1e-8 * T.norm_face(exact));
        const auto mu = random_field(rng, T.face_dim());
        const auto pm = project_harmonic_mu(cp, mu);
        CHECK(T.norm_face(project_harmonic_mu(cp, pm) - pm) <= 1e-8 * T.norm_face(mu));
        CHECK(std::abs(T.ip_face(pm, exact)) <= 1e-8 * T.norm_face(mu) * T.norm_face(exact));
    }
}

TEST_CASE("harmonic bases") {
    const auto cp = center("g2n2d1");
    const auto b = harmonic_bases(cp);
    CHECK((b.mu_gram - Mat::Identity(b.mu_gram.rows(), b.mu_gram.cols())).norm() < 1e-10);
    CHECK((b.nu_gram - Mat::Identity(b.nu_gram.rows(), b.nu_gram.cols())).norm() < 1e-10);
    CHECK(static_cast<Eigen::Index>(b.nu_basis.size()) == cp.end.face_dim() - dense_rank(cp.end));
    CHECK(static_cast<Eigen::Index>(b.mu_basis.size()) == cp.tangent.face_dim() - dense_rank(cp.tangent));
    for (const auto& v : b.nu_basis) CHECK(cp.end.norm_face(project_harmonic_nu(cp, v) - v) < 1e-8);
    for (const auto& v : b.mu_basis) CHECK(cp.tangent.norm_face(project_harmonic_mu(cp, v) - v) < 1e-8);
    MESSAGE("discrete harmonic dims: mu " << b.mu_basis.size() << ", nu " << b.nu_basis.size());
}

TEST_CASE("Kodaira-Spencer map at the center") {
    std::mt19937_64 rng(2);
    const auto cp = center("g2n2d1");
    const auto v = random_tangent(cp, 99);
    const auto k = ks_center(cp, v);
    CHECK(cp.tangent.norm_face(k.mu - v.mu) <= 1e-8 * cp.tangent.norm_face(v.mu));
    CHECK(cp.end.norm_face(k.nu - v.nu) <= 1e-8 * cp.end.norm_face(v.nu));
    const TangentVector exact{cp.tangent.dbar(random_field(rng, cp.tangent.vertex_dim())),
                              cp.end.dbar(random_field(rng, cp.end.vertex_dim()))};
    const auto z = ks_center(cp, exact);
    CHECK(cp.tangent.norm_face(z.mu) <= 1e-8 * cp.tangent.norm_face(exact.mu));
    CHECK(cp.end.norm_face(z.nu) <= 1e-8 * cp.end.norm_face(exact.nu));
    const TangentVector w{random_field(rng, cp.tangent.face_dim()), random_field(rng, cp.end.face_dim())};
    const cplx lam(-1.3, 0.6);
    const auto kw = ks_center(cp, w);
    const auto klw = ks_center(cp, {lam * w.mu, lam * w.nu});
    CHECK(cp.tangent.norm_face(klw.mu - lam * kw.mu) <= 1e-10 * std::abs(lam) * cp.tangent.norm_face(w.mu));
    CHECK(cp.end.norm_face(klw.nu - lam * kw.nu) <= 1e-10 * std::abs(lam) * cp.end.norm_face(w.nu));
}

TEST_CASE("traceless projection") {
    std::mt19937_64 rng(3);
    const auto cp = center("g2n3d1");
    const int n = 3;
    const auto nu = random_field(rng, cp.end.face_dim());
    const auto nu0 = project_traceless(nu, n);
    for (int f = 0; f < cp.end.num_faces(); ++f) CHECK(std::abs(site(nu0, f, n).trace()) < 1e-13);
    CHECK((project_traceless(nu0, n) - nu0).norm() < 1e-13);
    CHECK(std::abs(cp.end.ip_face(nu0, nu - nu0)) < 1e-11 * nu.squaredNorm());
}

TEST_CASE("random tangent vectors") {
    const auto cp = center("g2n2d1");
    const auto a = random_tangent(cp, 5), b = random_tangent(cp, 5), c = random_tangent(cp, 6);
    CHECK(a.mu == b.mu);
    CHECK(a.nu == b.nu);
    CHECK(a.mu != c.mu);
    CHECK(is_harmonic(cp, a));
    const auto z = random_tangent(cp, 5, 0.0);
    CHECK(z.mu.norm() == 0.0);
    CHECK(z.nu.norm() == 0.0);
    const auto t = random_tangent(cp, 5, 1.0, true);
    CHECK(is_harmonic(cp, t));
}

TEST_CASE("tangent serialization round trip") {
    const auto cp = center("g2n2d1");
    const auto v = random_tangent(cp, 17);
    std::stringstream ss;
    save_tangent(v, 2, ss);
    const auto back = load_tangent(ss, cp.surface.num_faces(), 2);
    CHECK(back.mu == v.mu);
    CHECK(back.nu == v.nu);
}
