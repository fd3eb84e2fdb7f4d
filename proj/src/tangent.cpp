#include "unimod/tangent.hpp"

#include <iomanip>
#include <random>
#include <sstream>

#include "unimod/error.hpp"

namespace unimod {

TwistedComplex tangent_complex(const ConformalSurface& S, SolverOptions options) {
    const int H = S.mesh().num_half_edges();
    std::vector<Mat> L(H), R(H, Mat::Identity(1, 1));
    for (int h = 0; h < H; ++h) L[h] = Mat::Constant(1, 1, S.vertex_rotation(h));
    Eigen::VectorXd fw(S.num_faces());
    for (int f = 0; f < S.num_faces(); ++f) fw[f] = S.density(f) * S.area(f);
    return TwistedComplex(S, 1, std::move(L), std::move(R), vertex_mass(S, MassWeight::Density), fw, options);
}

CenterPoint make_center(const ConformalSurface& S, const UnitaryCocycle& c, SolverOptions options) {
    return CenterPoint{S, c, end_complex(S, c, MassWeight::Density, options), tangent_complex(S, options)};
}

Beltrami project_harmonic_mu(const CenterPoint& cp, const Beltrami& mu, SolveStats* stats) {
    return cp.tangent.harmonic_projection(mu, stats);
}

Field project_harmonic_nu(const CenterPoint& cp, const Field& nu, SolveStats* stats) {
    return cp.end.harmonic_projection(nu, stats);
}

std::vector<Field> harmonic_basis(const TwistedComplex& C, Eigen::Index dense_cap) {
    const Eigen::Index nf = C.face_dim(), nv = C.vertex_dim();
    if (nf > dense_cap) throw Error(ErrorKind::DenseCap, "harmonic basis exceeds the dense cap");
    const int n2 = C.rank() * C.rank();
    Eigen::VectorXd sw(nf);
    for (Eigen::Index i = 0; i < nf; ++i) sw[i] = std::sqrt(C.face_weights()[i / n2]);
    Mat M(nf, nv);
    Field e = Field::Zero(nv);
    for (Eigen::Index j = 0; j < nv; ++j) {
        e[j] = 1.0;
        M.col(j) = sw.asDiagonal() * C.dbar(e);
        e[j] = 0.0;
    }
    // range of the weighted dbar has dimension nv - dim ker; its orthogonal complement is harmonic
    const Eigen::Index rank = nv - static_cast<Eigen::Index>(C.kernel_basis().size());
    const Eigen::ColPivHouseholderQR<Mat> qr(M);
    const Mat Q = qr.householderQ();
    std::vector<Field> out;
    for (Eigen::Index j = rank; j < nf; ++j) {
        Field b = sw.cwiseInverse().asDiagonal() * Q.col(j);
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& k : out) b -= C.ip_face(b, k) * k;
        out.push_back(b / C.norm_face(b));
    }
    return out;
}

namespace {

Mat gram(const TwistedComplex& C, const std::vector<Field>& basis) {
    Mat G(basis.size(), basis.size());
    for (size_t i = 0; i < basis.size(); ++i)
        for (size_t j = 0; j < basis.size(); ++j) G(i, j) = C.ip_face(basis[i], basis[j]);
    return G;
}

}  // namespace

HarmonicBases harmonic_bases(const CenterPoint& cp, Eigen::Index dense_cap) {
    HarmonicBases b;
    b.mu_basis = harmonic_basis(cp.tangent, dense_cap);
    b.nu_basis = harmonic_basis(cp.end, dense_cap);
    b.mu_gram = gram(cp.tangent, b.mu_basis);
    b.nu_gram = gram(cp.end, b.nu_basis);
    return b;
}

TangentVector ks_center(const CenterPoint& cp, const TangentVector& v) {
    return {project_harmonic_mu(cp, v.mu), project_harmonic_nu(cp, v.nu)};
}

Field project_traceless(const Field& nu, int rank) {
    Field out = nu;
    const Eigen::Index sites = nu.size() / (rank * rank);
    for (Eigen::Index f = 0; f < sites; ++f) {
        auto b = site(out, static_cast<int>(f), rank);
        const cplx t = b.trace() / static_cast<double>(rank);
        b.diagonal().array() -= t;
    }
    return out;
}

TangentVector random_tangent(const CenterPoint& cp, std::uint64_t seed, double scale, bool traceless) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    auto draw = [&](Eigen::Index size) {
        Field v(size);
        for (Eigen::Index i = 0; i < size; ++i) {
            const double re = g(rng);
            v[i] = cplx(re, g(rng));
        }
        return v;
    };
    TangentVector v;
    v.mu = draw(cp.tangent.face_dim());
    v.nu = draw(cp.end.face_dim());
    if (scale == 0.0) return {Beltrami::Zero(v.mu.size()), Field::Zero(v.nu.size())};
    if (traceless) v.nu = project_traceless(v.nu, cp.end.rank());
    v = ks_center(cp, v);
    v.mu *= scale;
    v.nu *= scale;
    return v;
}

bool is_harmonic(const CenterPoint& cp, const TangentVector& v, double tol) {
    const double mu_scale = std::max(cp.tangent.norm_face(v.mu), 1e-300);
    const double nu_scale = std::max(cp.end.norm_face(v.nu), 1e-300);
    return cp.tangent.norm_face(project_harmonic_mu(cp, v.mu) - v.mu) <= tol * mu_scale &&
           cp.end.norm_face(project_harmonic_nu(cp, v.nu) - v.nu) <= tol * nu_scale;
}

void save_tangent(const TangentVector& v, int rank, std::ostream& out) {
    out << std::setprecision(17);
    for (Eigen::Index f = 0; f < v.mu.size(); ++f) out << "mu " << f << ' ' << v.mu[f].real() << ' ' << v.mu[f].imag() << '\n';
    const int n2 = rank * rank;
    for (Eigen::Index f = 0; f < v.nu.size() / n2; ++f) {
        out << "nu " << f;
        const auto b = site(v.nu, static_cast<int>(f), rank);
        for (int r = 0; r < rank; ++r)
            for (int c = 0; c < rank; ++c) out << ' ' << b(r, c).real() << ' ' << b(r, c).imag();
        out << '\n';
    }
}

TangentVector load_tangent(std::istream& in, int num_faces, int rank) {
    TangentVector v{Beltrami::Zero(num_faces), Field::Zero(static_cast<Eigen::Index>(num_faces) * rank * rank)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        int f;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (!(ls >> f) || f < 0 || f >= num_faces) throw ParseError(line_no, "bad face index");
        if (tag == "mu") {
            double re, im;
            if (!(ls >> re >> im)) throw ParseError(line_no, "mu needs two numbers");
            v.mu[f] = {re, im};
        } else if (tag == "nu") {
            auto b = site(v.nu, f, rank);
            for (int r = 0; r < rank; ++r)
                for (int c = 0; c < rank; ++c) {
                    double re, im;
                    if (!(ls >> re >> im)) throw ParseError(line_no, "nu needs 2 n^2 numbers");
                    b(r, c) = {re, im};
                }
        } else {
            throw ParseError(line_no, "unknown record '" + tag + "'");
        }
    }
    return v;
}

}  // namespace unimod
