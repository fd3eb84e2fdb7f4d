#include <numbers>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "unimod/bundle.hpp"
#include "unimod/error.hpp"

using namespace unimod;
using testsupport::random_field;
using testsupport::rel;

namespace {

struct Setup {
    ConformalSurface S;
    UnitaryCocycle c;
    TwistedComplex E;
};

Setup make(const std::string& preset, int levels = 1, int marked_face = 0,
           DensityPolicy density = DensityPolicy::Hyperbolic) {
    int genus, n, d;
    std::vector<Mat> gens;
    preset_generators(preset, genus, n, d, gens);
    auto S = testsupport::genus2(levels, LayoutPolicy::Polygon, density);
    auto c = UnitaryCocycle::from_generators(S.mesh(), n, d, gens, marked_face);
    auto E = end_complex(S, c);
    return {S, c, E};
}

Field identity_section(const TwistedComplex& E) {
    Field X = Field::Zero(E.vertex_dim());
    for (int v = 0; v < E.num_vertices(); ++v) site(X, v, E.rank()) = Mat::Identity(E.rank(), E.rank());
    return X;
}

Mat dense_laplacian(const TwistedComplex& E) {
    Mat M(E.vertex_dim(), E.vertex_dim());
    Field e = Field::Zero(E.vertex_dim());
    for (Eigen::Index j = 0; j < E.vertex_dim(); ++j) {
        e[j] = 1.0;
        M.col(j) = E.laplacian(e);
        e[j] = 0.0;
    }
    return M;
}

}  // namespace

TEST_CASE("trivial line bundle") {
    const auto s = make("g2n1d0");
    for (int f = 0; f < s.S.num_faces(); ++f) CHECK(std::abs(s.c.face_holonomy(f)(0, 0) - 1.0) < 1e-14);
    CHECK(s.c.commutant_dim() == 1);
    CHECK(s.E.kernel_basis().size() == 1);
}

TEST_CASE("rank two degree one preset") {
    int genus, n, d;
    std::vector<Mat> gens;
    preset_generators("g2n2d1", genus, n, d, gens);
    CHECK((relation_product(gens) + Mat::Identity(2, 2)).norm() < 1e-14);
    const auto s = make("g2n2d1");
    CHECK((s.c.face_holonomy(0) + Mat::Identity(2, 2)).norm() < 1e-12);
    for (int f = 1; f < s.S.num_faces(); ++f) CHECK((s.c.face_holonomy(f) - Mat::Identity(2, 2)).norm() < 1e-12);
    CHECK(s.c.commutant_dim() == 1);
    CHECK(s.c.is_irreducible());
    CHECK(s.E.kernel_basis().size() == 1);
}

TEST_CASE("rank three clock and shift lands on the central phase") {
    const auto s = make("g2n3d1");
    const cplx w = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    CHECK((s.c.face_holonomy(0) - w * Mat::Identity(3, 3)).norm() < 1e-12);
    CHECK(s.c.commutant_dim() == 1);
}

TEST_CASE("trivial rank two commutant") {
    const auto s = make("g2n2d0");
    CHECK(s.c.commutant_dim() == 4);
    CHECK(s.E.kernel_basis().size() == 4);
}

TEST_CASE("relation mismatch is reported") {
    int genus, n, d;
    std::vector<Mat> gens;
    preset_generators("g2n2d1", genus, n, d, gens);
    Mat H(2, 2);
    H << 0.0, 1.0, 1.0, 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    const Mat kick = es.eigenvectors() * (cplx(0, 1e-2) * es.eigenvalues().cast<cplx>()).array().exp().matrix().asDiagonal() *
                     es.eigenvectors().adjoint();
    gens[2] = gens[2] * kick;
    const auto S = testsupport::genus2(1);
    try {
        UnitaryCocycle::from_generators(S.mesh(), n, d, gens);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RelationMismatch);
        CHECK(std::string(e.what()).find("residual") != std::string::npos);
    }
}

TEST_CASE("covariant constants and adjointness") {
    std::mt19937_64 rng(21);
    for (const char* preset : {"g2n1d0", "g2n2d1", "g2n3d1"}) {
        const auto s = make(preset);
        const auto& E = s.E;
        CHECK(E.dbar(identity_section(E)).norm() < 1e-12);
        CHECK(E.dhol(identity_section(E)).norm() < 1e-12);
        for (int t = 0; t < 30; ++t) {
            const auto X = random_field(rng, E.vertex_dim());
            const auto a = random_field(rng, E.face_dim());
            CHECK(rel(E.ip_face(E.dbar(X), a), E.ip_vertex(X, E.dbar_adjoint(a))) < 1e-10);
            CHECK(rel(E.ip_face(E.dhol(X), a), E.ip_vertex(X, E.dhol_adjoint(a))) < 1e-10);
            CHECK(rel(E.ip_face(E.interpolate(X), a), E.ip_vertex(X, E.interpolate_adjoint(a))) < 1e-10);
        }
    }
}

TEST_CASE("rank one trivial bundle reduces to the scalar calculus") {
    std::mt19937_64 rng(4);
    const auto s = make("g2n1d0");
    const auto f = random_field(rng, s.S.num_vertices());
    CHECK((s.E.dbar(f) - dbar(f, s.S).coeff).norm() < 1e-13 * f.norm());
    CHECK((s.E.dhol(f) - d_hol(f, s.S).coeff).norm() < 1e-13 * f.norm());
    const auto a = random_field(rng, s.S.num_faces());
    CHECK((s.E.dbar_adjoint(a) - dbar_star(FormP0(FormType::Form01, 1, a), s.S)).norm() < 1e-12 * a.norm());
}

TEST_CASE("laplacian identities") {
    std::mt19937_64 rng(8);
    const auto s = make("g2n2d1");
    const auto& E = s.E;
    for (int t = 0; t < 5; ++t) {
        const auto X = random_field(rng, E.vertex_dim());
        // dbar^* dbar = d^* d, and the Laplacian commutes with pointwise adjoints
        CHECK((E.laplacian(X) - E.dhol_adjoint(E.dhol(X))).norm() < 1e-10 * E.laplacian(X).norm());
        CHECK((E.laplacian(blockwise_adjoint(X, 2)) - blockwise_adjoint(E.laplacian(X), 2)).norm() <
              1e-10 * E.laplacian(X).norm());
    }
}

TEST_CASE("restricted inverse") {
    std::mt19937_64 rng(10);
    for (const char* preset : {"g2n1d0", "g2n2d1", "g2n2d0"}) {
        const auto s = make(preset);
        const auto& E = s.E;
        for (int t = 0; t < 5; ++t) {
            const Field g = E.project_off_kernel(random_field(rng, E.vertex_dim()));
            SolveStats st;
            const Field x = E.delta0_inverse(E.laplacian(g), &st);
            CHECK(E.norm_vertex(x - g) <= 1e-8 * E.norm_vertex(g));
            CHECK(st.residual <= 1e-10);
            const Field h = random_field(rng, E.vertex_dim());
            CHECK(E.ip_vertex(E.delta0_inverse(h), h).real() >= 0.0);
        }
        CHECK(E.delta0_inverse(identity_section(E)).norm() < 1e-12);
    }
}

TEST_CASE("dense and iterative modes agree") {
    std::mt19937_64 rng(12);
    auto s = make("g2n2d1");
    TwistedComplex dense = s.E;
    SolverOptions o;
    o.mode = SolverMode::Dense;
    dense.set_options(o);
    const auto h = random_field(rng, s.E.vertex_dim());
    const auto a = s.E.delta0_inverse(h), b = dense.delta0_inverse(h);
    CHECK(s.E.norm_vertex(a - b) <= 1e-8 * s.E.norm_vertex(a));
}

TEST_CASE("rank one inverse matches the scalar restricted inverse") {
    std::mt19937_64 rng(14);
    const auto s = make("g2n1d0");
    const auto& S = s.S;
    const auto h = random_field(rng, S.num_vertices());
    const auto x = s.E.delta0_inverse(h);
    // the scalar problem: dbar_star dbar x = h - mean(h), with x of zero mean
    const Eigen::VectorXd m = vertex_mass(S, MassWeight::Density);
    const cplx mean_h = m.cast<cplx>().dot(h) / m.sum();
    CHECK((dbar_star(dbar(x, S), S) - (h.array() - mean_h).matrix()).norm() < 1e-8 * h.norm());
    CHECK(std::abs(ip_scalar(x, Field::Ones(S.num_vertices()), S)) < 1e-10 * x.norm());
}

TEST_CASE("harmonic projection") {
    std::mt19937_64 rng(16);
    const auto s = make("g2n2d1");
    const auto& E = s.E;
    for (int t = 0; t < 5; ++t) {
        const auto a = random_field(rng, E.face_dim());
        const auto Pa = E.harmonic_projection(a);
        CHECK(E.norm_face(E.harmonic_projection(Pa) - Pa) <= 1e-8 * E.norm_face(a));
        CHECK(E.norm_vertex(E.dbar_adjoint(Pa)) <= 1e-8 * E.norm_vertex(E.dbar_adjoint(a)));
        const auto f = random_field(rng, E.vertex_dim());
        CHECK(E.norm_face(E.harmonic_projection(E.dbar(f))) <= 1e-8 * E.norm_face(E.dbar(f)));
        CHECK(std::abs(E.ip_face(Pa, E.dbar(f))) <= 1e-8 * E.norm_face(a) * E.norm_face(E.dbar(f)));
        const auto b = random_field(rng, E.face_dim());
        CHECK(rel(E.ip_face(Pa, b), E.ip_face(a, E.harmonic_projection(b))) < 1e-8);
    }
}

TEST_CASE("ad operators") {
    std::mt19937_64 rng(18);
    {
        const auto s = make("g2n1d0");
        const auto nu = random_field(rng, s.E.face_dim());
        CHECK(ad_on_scalar(s.E, nu, random_field(rng, s.E.vertex_dim())).norm() < 1e-14);
        CHECK(ad_star(s.E, nu, random_field(rng, s.E.face_dim())).norm() < 1e-14);
    }
    const auto s = make("g2n2d1");
    const auto& E = s.E;
    const auto nu = random_field(rng, E.face_dim());
    CHECK(ad_on_scalar(E, nu, identity_section(E)).norm() < 1e-13);
    // real diagonal nu commutes with its own adjoint
    Field diag = Field::Zero(E.face_dim());
    for (int f = 0; f < E.num_faces(); ++f) {
        site(diag, f, 2)(0, 0) = 0.3 + 0.01 * f;
        site(diag, f, 2)(1, 1) = -1.1;
    }
    CHECK(ad_star(E, diag, diag).norm() < 1e-14);
    for (int t = 0; t < 20; ++t) {
        const auto f = random_field(rng, E.vertex_dim());
        const auto a = random_field(rng, E.face_dim());
        CHECK(rel(E.ip_face(ad_on_scalar(E, nu, f), a), E.ip_vertex(f, ad_star(E, nu, a))) < 1e-10);
        // bilinearity against the pointwise definition
        const cplx lam(0.7, -0.2);
        const auto nu2 = random_field(rng, E.face_dim());
        CHECK((ad_on_scalar(E, nu + lam * nu2, f) - ad_on_scalar(E, nu, f) - lam * ad_on_scalar(E, nu2, f)).norm() <
              1e-12 * nu.norm() * f.norm());
    }
}

TEST_CASE("marked face location is a gauge choice") {
    const auto a = make("g2n2d1", 1, 0);
    const auto b = make("g2n2d1", 1, 17);
    Eigen::SelfAdjointEigenSolver<Mat> ea, eb;
    const Eigen::VectorXd wa = a.E.vertex_weights().cwiseSqrt();
    auto sym = [](const TwistedComplex& E) {
        const Mat L = dense_laplacian(E);
        Eigen::VectorXd w(E.vertex_dim());
        for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = std::sqrt(E.vertex_weights()[j / 4]);
        Mat M = w.asDiagonal() * L * w.cwiseInverse().asDiagonal();
        return Mat(0.5 * (M + M.adjoint()));
    };
    ea.compute(sym(a.E));
    eb.compute(sym(b.E));
    CHECK((ea.eigenvalues() - eb.eigenvalues()).norm() < 1e-9 * ea.eigenvalues().norm());
    CHECK((b.c.face_holonomy(17) + Mat::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("generator file round trip") {
    int genus, n, d;
    std::vector<Mat> gens;
    preset_generators("g2n3d1", genus, n, d, gens);
    GeneratorFile g{n, d, 3, {{"a1", gens[0]}, {"b1", gens[1]}, {"a2", gens[2]}, {"b2", gens[3]}}};
    std::stringstream ss;
    save_generators(g, ss);
    const auto back = load_generators(ss);
    CHECK(back.rank == 3);
    CHECK(back.degree == 1);
    CHECK(back.marked_face == 3);
    const auto ordered = ordered_generators(back, 2);
    for (int i = 0; i < 4; ++i) CHECK((ordered[i] - gens[i]).norm() == 0.0);
    std::istringstream bad("cocycle 2 1\ngen a1 1 0 0\n");
    CHECK_THROWS_AS(load_generators(bad), ParseError);
}
