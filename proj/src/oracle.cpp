#include "unimod/oracle.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "unimod/error.hpp"

namespace unimod {

DenseOperator DenseOperator::adjoint() const {
    DenseOperator out;
    out.name = name + "^*";
    out.domain = codomain;
    out.codomain = domain;
    out.domain_weight = codomain_weight;
    out.codomain_weight = domain_weight;
    out.matrix = domain_weight.cwiseInverse().asDiagonal() * matrix.adjoint() * codomain_weight.asDiagonal();
    return out;
}

std::vector<std::string> operator_names() {
    return {"dbar", "dhol", "dbar_adjoint", "dhol_adjoint", "interpolate", "laplacian",
            "projector", "ad", "ad_star", "mu", "mu_bar"};
}

namespace {

struct Assembly {
    const UnitaryCocycle& c;
    const ConformalSurface& S;
    int n, n2, V, F;
    Eigen::VectorXd wv, wf;

    Assembly(const UnitaryCocycle& cc, const ConformalSurface& s, Eigen::Index cap)
        : c(cc), S(s), n(cc.rank()), n2(n * n), V(s.num_vertices()), F(s.num_faces()) {
        if (static_cast<Eigen::Index>(std::max(V, F)) * n2 > cap)
            throw Error(ErrorKind::DenseCap, "operator exceeds the dense cap");
        const auto& mesh = S.mesh();
        wv = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(V) * n2);
        wf.resize(static_cast<Eigen::Index>(F) * n2);
        for (int f = 0; f < F; ++f) {
            const auto hs = mesh.face_half_edges(f);
            const double a = area(hs);
            wf.segment(static_cast<Eigen::Index>(f) * n2, n2).setConstant(2.0 * a);
            for (int h : hs)
                wv.segment(static_cast<Eigen::Index>(mesh.origin(h)) * n2, n2).array() += S.density(f) * a / 3.0;
        }
    }

    double area(const std::array<int, 3>& hs) const {
        const cplx e1 = S.chart(hs[1]) - S.chart(hs[0]), e2 = S.chart(hs[2]) - S.chart(hs[0]);
        return 0.5 * std::abs((std::conj(e1) * e2).imag());
    }

    DenseSpace vertex_space() const { return {DenseSpace::Degree::Vertex, n, V}; }
    DenseSpace face_space() const { return {DenseSpace::Degree::Face, n, F}; }

    DenseOperator make(const std::string& name, bool from_vertex, bool to_vertex) const {
        DenseOperator op;
        op.name = name;
        op.domain = from_vertex ? vertex_space() : face_space();
        op.codomain = to_vertex ? vertex_space() : face_space();
        op.domain_weight = from_vertex ? wv : wf;
        op.codomain_weight = to_vertex ? wv : wf;
        op.matrix = Mat::Zero(op.codomain.dim(), op.domain.dim());
        return op;
    }

    // vec(L X R) = kron(R^T, L) vec(X), column-major blocks
    Mat kron_transport(int h) const {
        const Mat& L = c.corner_transport(h);
        const Mat R = L.adjoint();
        Mat K(n2, n2);
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
                for (int r = 0; r < n; ++r)
                    for (int col = 0; col < n; ++col) K(r + n * col, p + n * q) = L(r, p) * R(q, col);
        return K;
    }

    // corner k of face: dbar and dhol of the affine hat function
    std::array<std::pair<cplx, cplx>, 3> hat_derivatives(const std::array<int, 3>& hs) const {
        Eigen::Matrix3d M;
        for (int k = 0; k < 3; ++k) M.row(k) << 1.0, S.chart(hs[k]).real(), S.chart(hs[k]).imag();
        const Eigen::Matrix3d C = M.inverse();  // column k: coefficients of hat k
        std::array<std::pair<cplx, cplx>, 3> out;
        for (int k = 0; k < 3; ++k) {
            const double bx = C(1, k), by = C(2, k);
            out[k] = {cplx(bx, by) / 2.0, cplx(bx, -by) / 2.0};
        }
        return out;
    }

    DenseOperator derivative(bool holomorphic) const {
        auto op = make(holomorphic ? "dhol" : "dbar", true, false);
        const auto& mesh = S.mesh();
        for (int f = 0; f < F; ++f) {
            const auto hs = mesh.face_half_edges(f);
            const auto g = hat_derivatives(hs);
            for (int k = 0; k < 3; ++k) {
                const cplx coef = holomorphic ? g[k].second : g[k].first;
                op.matrix.block(static_cast<Eigen::Index>(f) * n2, static_cast<Eigen::Index>(mesh.origin(hs[k])) * n2, n2,
                                n2) += coef * kron_transport(hs[k]);
            }
        }
        return op;
    }

    DenseOperator interpolate() const {
        auto op = make("interpolate", true, false);
        const auto& mesh = S.mesh();
        for (int f = 0; f < F; ++f)
            for (int h : mesh.face_half_edges(f))
                op.matrix.block(static_cast<Eigen::Index>(f) * n2, static_cast<Eigen::Index>(mesh.origin(h)) * n2, n2, n2) +=
                    kron_transport(h) / 3.0;
        return op;
    }

    DenseOperator commutator(const Field& nu) const {
        if (nu.size() != static_cast<Eigen::Index>(F) * n2) throw Error(ErrorKind::InvalidArgument, "ad: nu has the wrong size");
        auto op = make("commutator", false, false);
        for (int f = 0; f < F; ++f) {
            const Eigen::Map<const Mat> v(nu.data() + static_cast<Eigen::Index>(f) * n2, n, n);
            auto B = op.matrix.block(static_cast<Eigen::Index>(f) * n2, static_cast<Eigen::Index>(f) * n2, n2, n2);
            // [v, Y]_{rc} = v_{rp} Y_{pc} - Y_{rq} v_{qc}
            for (int r = 0; r < n; ++r)
                for (int col = 0; col < n; ++col)
                    for (int p = 0; p < n; ++p) {
                        B(r + n * col, p + n * col) += v(r, p);
                        B(r + n * col, r + n * p) -= v(p, col);
                    }
        }
        return op;
    }

    DenseOperator scalar(const Beltrami& mu, bool conjugate) const {
        if (mu.size() != F) throw Error(ErrorKind::InvalidArgument, "mu has the wrong size");
        auto op = make(conjugate ? "mu_bar" : "mu", false, false);
        for (int f = 0; f < F; ++f)
            for (int i = 0; i < n2; ++i) {
                const Eigen::Index k = static_cast<Eigen::Index>(f) * n2 + i;
                op.matrix(k, k) = conjugate ? std::conj(mu[f]) : mu[f];
            }
        return op;
    }
};

DenseOperator compose(const std::string& name, const DenseOperator& a, const DenseOperator& b) {
    DenseOperator out;
    out.name = name;
    out.domain = b.domain;
    out.domain_weight = b.domain_weight;
    out.codomain = a.codomain;
    out.codomain_weight = a.codomain_weight;
    out.matrix = a.matrix * b.matrix;
    return out;
}

}  // namespace

DenseOperator materialize(const std::string& op, const UnitaryCocycle& c, const ConformalSurface& S,
                          const OperatorParams& params, Eigen::Index cap) {
    if (!(c.mesh() == S.mesh())) throw Error(ErrorKind::InvalidArgument, "materialize: cocycle and surface differ");
    const Assembly a(c, S, cap);
    if (op == "dbar") return a.derivative(false);
    if (op == "dhol") return a.derivative(true);
    if (op == "dbar_adjoint") return a.derivative(false).adjoint();
    if (op == "dhol_adjoint") return a.derivative(true).adjoint();
    if (op == "interpolate") return a.interpolate();
    if (op == "laplacian") {
        const auto D = a.derivative(false);
        return compose("laplacian", D.adjoint(), D);
    }
    if (op == "projector") {
        const auto D = a.derivative(false);
        const auto Dadj = D.adjoint();
        const auto K = restricted_inverse_dense(compose("laplacian", Dadj, D)).inverse;
        auto P = compose("projector", D, compose("", K, Dadj));
        P.matrix = Mat::Identity(P.matrix.rows(), P.matrix.cols()) - P.matrix;
        return P;
    }
    if (op == "ad") return compose("ad", a.commutator(params.nu), a.interpolate());
    if (op == "ad_star") return compose("ad", a.commutator(params.nu), a.interpolate()).adjoint();
    if (op == "mu") return a.scalar(params.mu, false);
    if (op == "mu_bar") return a.scalar(params.mu, true);
    throw Error(ErrorKind::InvalidArgument, "unknown operator '" + op + "'");
}

RestrictedInverse restricted_inverse_dense(const DenseOperator& lap, double threshold) {
    if (lap.matrix.rows() != lap.matrix.cols()) throw Error(ErrorKind::InvalidArgument, "restricted inverse needs a square operator");
    const Eigen::VectorXd s = lap.domain_weight.cwiseSqrt();
    // W^{1/2} L W^{-1/2} is Hermitian when L is self-adjoint for W
    Mat H = s.asDiagonal() * lap.matrix * s.cwiseInverse().asDiagonal();
    H = 0.5 * (H + H.adjoint()).eval();
    const Eigen::SelfAdjointEigenSolver<Mat> es(H);
    const Eigen::VectorXd& lam = es.eigenvalues();
    RestrictedInverse out;
    out.lambda_max = lam.cwiseAbs().maxCoeff();
    Eigen::VectorXd inv(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam[i] <= threshold * out.lambda_max) {
            inv[i] = 0.0;
            ++out.kernel_dim;
        } else {
            inv[i] = 1.0 / lam[i];
        }
    }
    const Mat& Vm = es.eigenvectors();
    out.inverse = lap;
    out.inverse.name = "restricted_inverse";
    out.inverse.matrix = s.cwiseInverse().asDiagonal() * (Vm * inv.asDiagonal() * Vm.adjoint()) * s.asDiagonal();
    return out;
}

// ---------------------------------------------------------------------------
// flat torus

namespace {

// integer lattice offset of the chart position of corner h relative to the canonical vertex position
std::pair<int, int> winding(const HalfEdgeMesh& mesh, int grid, int h) {
    const cplx p = mesh.corner_layout()[h] * static_cast<double>(grid);
    const int v = mesh.origin(h);
    const long ix = std::lround(p.real()), iy = std::lround(p.imag());
    const long dx = ix - v % grid, dy = iy - v / grid;
    if (dx % grid != 0 || dy % grid != 0) throw Error(ErrorKind::InvalidArgument, "mesh is not a grid torus");
    return {static_cast<int>(dx / grid), static_cast<int>(dy / grid)};
}

}  // namespace

UnitaryCocycle torus_twisted_cocycle(const HalfEdgeMesh& mesh, int grid, const std::vector<double>& tx,
                                     const std::vector<double>& ty) {
    if (tx.size() != ty.size() || tx.empty()) throw Error(ErrorKind::InvalidArgument, "twist angles: size mismatch");
    const int n = static_cast<int>(tx.size());
    std::vector<Mat> U(mesh.num_half_edges());
    for (int h = 0; h < mesh.num_half_edges(); ++h) {
        const auto wo = winding(mesh, grid, h), wd = winding(mesh, grid, mesh.next(h));
        U[h] = Mat::Zero(n, n);
        for (int j = 0; j < n; ++j)
            U[h](j, j) = std::polar(1.0, tx[j] * (wd.first - wo.first) + ty[j] * (wd.second - wo.second));
    }
    return UnitaryCocycle(mesh, n, 0, std::move(U), 0);
}

namespace {

struct Mode {
    int p, q;
    cplx coef;
};

// entry (j, k) of a matrix-valued function on the cover, quasi-periodic with phases phi
struct TwistedFunction {
    int n;
    std::vector<double> tx, ty;
    std::vector<std::vector<Mode>> modes;  // per flat entry j + n k

    cplx wavenumber(int j, int k, const Mode& m) const {
        return {2.0 * std::numbers::pi * m.p + tx[j] - tx[k], 2.0 * std::numbers::pi * m.q + ty[j] - ty[k]};
    }
    Mat eval(cplx z, double (*multiplier)(cplx) = nullptr) const {
        Mat out = Mat::Zero(n, n);
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (const auto& m : modes[j + n * k]) {
                    const cplx kv = wavenumber(j, k, m);
                    const double mult = multiplier ? multiplier(kv) : 1.0;
                    out(j, k) += mult * m.coef * std::exp(cplx(0.0, kv.real() * z.real() + kv.imag() * z.imag()));
                }
        return out;
    }
};

double inverse_symbol(cplx k) { return 2.0 / std::norm(k); }
double harmonic_symbol(cplx k) { return std::norm(k) < 1e-20 ? 1.0 : 0.0; }

}  // namespace

TorusCrosscheck torus_spectral_crosscheck(int rank, int modes, const std::vector<int>& grids, std::uint64_t seed) {
    if (rank < 1 || modes < 1) throw Error(ErrorKind::InvalidArgument, "torus crosscheck needs rank >= 1 and modes >= 1");
    TorusCrosscheck out;
    out.rank = rank;
    std::vector<double> tx(rank), ty(rank);
    for (int j = 0; j < rank; ++j) {
        tx[j] = 2.0 * std::numbers::pi * 0.37 * j;
        ty[j] = 2.0 * std::numbers::pi * 0.21 * j;
    }
    out.untwisted_entries = rank;  // only diagonal entries see no twist

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> wave(-2, 2);
    auto draw = [&](bool allow_zero) {
        TwistedFunction F{rank, tx, ty, std::vector<std::vector<Mode>>(rank * rank)};
        for (int k = 0; k < rank; ++k)
            for (int j = 0; j < rank; ++j) {
                auto& list = F.modes[j + rank * k];
                if (allow_zero && j == k) list.push_back({0, 0, cplx(g(rng), g(rng))});
                while (static_cast<int>(list.size()) < modes + (allow_zero && j == k)) {
                    Mode m{wave(rng), wave(rng), 0.0};
                    if (m.p == 0 && m.q == 0 && j == k) continue;
                    const double re = g(rng);
                    m.coef = cplx(re, g(rng));
                    list.push_back(m);
                }
            }
        return F;
    };
    const TwistedFunction form = draw(true), rhs = draw(false);

    // the Fourier projector is a 0/1 mask
    {
        double worst = 0.0;
        for (const auto& list : form.modes)
            for (const auto& m : list) {
                const double s = harmonic_symbol(form.wavenumber(0, 0, m));
                worst = std::max(worst, std::abs(s * s - s));
            }
        out.spectral_idempotence = worst;
    }

    std::vector<double> errors;
    for (int grid : grids) {
        const auto mesh = build_torus_grid(grid);
        const auto S = equip_conformal(mesh, LayoutPolicy::Polygon, DensityPolicy::Uniform);
        const auto c = torus_twisted_cocycle(mesh, grid, tx, ty);
        const auto E = end_complex(S, c, MassWeight::Uniform);
        TorusLevel lv;
        lv.grid = grid;
        lv.kernel_dim = static_cast<int>(E.kernel_basis().size());

        // face frame = phase factor times the cover value
        std::vector<Mat> factor(S.num_faces());
        for (int f = 0; f < S.num_faces(); ++f) {
            const auto hs = mesh.face_half_edges(f);
            for (int k = 0; k < 3; ++k) {
                const auto w = winding(mesh, grid, hs[k]);
                const Mat& T = c.corner_transport(hs[k]);
                Mat fk(rank, rank);
                for (int a = 0; a < rank; ++a)
                    for (int b = 0; b < rank; ++b)
                        fk(a, b) = T(a, a) * std::conj(T(b, b)) *
                                   std::polar(1.0, -((tx[a] - tx[b]) * w.first + (ty[a] - ty[b]) * w.second));
                if (k == 0) factor[f] = fk;
                else lv.frame_residual = std::max(lv.frame_residual, (fk - factor[f]).cwiseAbs().maxCoeff());
            }
        }

        Field a(E.face_dim()), pa(E.face_dim());
        for (int f = 0; f < S.num_faces(); ++f) {
            const cplx z = S.centroid(f);
            site(a, f, rank) = factor[f].cwiseProduct(form.eval(z));
            site(pa, f, rank) = factor[f].cwiseProduct(form.eval(z, harmonic_symbol));
        }
        lv.projector_error = E.norm_face(E.harmonic_projection(a) - pa) / E.norm_face(a);

        Field h(E.vertex_dim()), x(E.vertex_dim());
        for (int v = 0; v < S.num_vertices(); ++v) {
            const cplx z(static_cast<double>(v % grid) / grid, static_cast<double>(v / grid) / grid);
            site(h, v, rank) = rhs.eval(z);
            site(x, v, rank) = rhs.eval(z, inverse_symbol);
        }
        lv.inverse_error = E.norm_vertex(E.delta0_inverse(h) - x) / E.norm_vertex(x);

        errors.push_back(lv.projector_error);
        out.levels.push_back(lv);
    }
    out.monotone = true;
    for (size_t i = 1; i < errors.size(); ++i) out.monotone = out.monotone && errors[i] < errors[i - 1];

    // untwisted bundle: constant forms are harmonic
    {
        const int grid = grids.front();
        const auto mesh = build_torus_grid(grid);
        const auto S = equip_conformal(mesh, LayoutPolicy::Polygon, DensityPolicy::Uniform);
        const auto c = torus_twisted_cocycle(mesh, grid, std::vector<double>(rank, 0.0), std::vector<double>(rank, 0.0));
        const auto E = end_complex(S, c, MassWeight::Uniform);
        Mat C(rank, rank);
        for (int k = 0; k < rank; ++k)
            for (int j = 0; j < rank; ++j) C(j, k) = cplx(1.0 + j, 0.5 - k);
        Field a(E.face_dim());
        for (int f = 0; f < S.num_faces(); ++f) site(a, f, rank) = C;
        out.constant_form_residual = E.norm_face(E.harmonic_projection(a) - a) / E.norm_face(a);
    }
    return out;
}

}  // namespace unimod
