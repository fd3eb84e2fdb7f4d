#include "unimod/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <queue>
#include <sstream>

#include "unimod/error.hpp"

namespace unimod {

namespace {

Mat identity(int n) { return Mat::Identity(n, n); }

int find_root(std::vector<int>& parent, int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
}

bool unite(std::vector<int>& parent, int a, int b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
}

// Eigenvectors of a Hermitian PSD matrix whose eigenvalues are at most rel_tol * max(trace, tiny).
Eigen::MatrixXcd null_space(const Eigen::MatrixXcd& normal, double rel_tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(normal);
    const double scale = std::max(normal.trace().real(), 1e-300);
    std::vector<int> cols;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i] <= rel_tol * scale) cols.push_back(i);
    Eigen::MatrixXcd out(normal.rows(), static_cast<Eigen::Index>(cols.size()));
    for (size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(cols[j]);
    return out;
}

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Mat hermitian_exp_i(const Mat& H, double t) {
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    const Eigen::VectorXcd phases = (cplx(0.0, t) * es.eigenvalues().cast<cplx>()).array().exp();
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

// ---------------------------------------------------------------------------
// cocycle

UnitaryCocycle::UnitaryCocycle(const HalfEdgeMesh& mesh, int rank, int degree, std::vector<Mat> transports,
                               int marked_face)
    : mesh_(mesh), rank_(rank), degree_(degree), marked_face_(marked_face), transport_(std::move(transports)) {
    if (rank_ < 1) throw Error(ErrorKind::InvalidArgument, "rank must be >= 1");
    if (degree_ < 0 || degree_ >= rank_) throw Error(ErrorKind::InvalidArgument, "degree must lie in [0, rank)");
    if (marked_face_ < 0 || marked_face_ >= mesh_.num_faces())
        throw Error(ErrorKind::InvalidArgument, "marked face out of range");
    if (static_cast<int>(transport_.size()) != mesh_.num_half_edges())
        throw Error(ErrorKind::InvalidArgument, "one transport per half-edge expected");
    for (int h = 0; h < mesh_.num_half_edges(); ++h) {
        if (transport_[h].rows() != rank_ || transport_[h].cols() != rank_)
            throw Error(ErrorKind::InvalidArgument, "transport size does not match rank");
        const int t = mesh_.twin(h);
        if (h < t) {
            if ((transport_[t] - transport_[h].adjoint()).norm() > 1e-10)
                throw Error(ErrorKind::Validation, "reverse transport is not the inverse at half-edge " + std::to_string(h));
            transport_[t] = transport_[h].adjoint();
        }
    }
    corner_transport_.resize(mesh_.num_half_edges());
    for (int f = 0; f < mesh_.num_faces(); ++f) {
        auto hs = mesh_.face_half_edges(f);
        int base = 0;
        for (int k = 1; k < 3; ++k)
            if (mesh_.origin(hs[k]) < mesh_.origin(hs[base])) base = k;
        const int hb = hs[base], hn = hs[(base + 1) % 3], hp = hs[(base + 2) % 3];
        corner_transport_[hb] = identity(rank_);
        corner_transport_[hn] = transport_[hb];
        corner_transport_[hp] = transport_[hp].adjoint();
    }
    validate();
}

cplx UnitaryCocycle::central_phase() const {
    return std::polar(1.0, 2.0 * std::numbers::pi * degree_ / rank_);
}

Mat UnitaryCocycle::face_holonomy(int f) const {
    const auto hs = mesh_.face_half_edges(f);
    return transport_[hs[0]] * transport_[hs[1]] * transport_[hs[2]];
}

double UnitaryCocycle::unitarity_residual() const {
    double r = 0.0;
    for (const auto& U : transport_) r = std::max(r, (U.adjoint() * U - identity(rank_)).norm());
    return r;
}

double UnitaryCocycle::flatness_residual() const {
    double r = 0.0;
    for (int f = 0; f < mesh_.num_faces(); ++f) {
        const cplx target = f == marked_face_ ? central_phase() : cplx(1.0);
        r = std::max(r, (face_holonomy(f) - target * identity(rank_)).norm());
    }
    return r;
}

void UnitaryCocycle::validate() const {
    const double u = unitarity_residual();
    if (u > 1e-10) throw Error(ErrorKind::Validation, "transports are not unitary (residual " + std::to_string(u) + ")");
    for (int f = 0; f < mesh_.num_faces(); ++f) {
        const cplx target = f == marked_face_ ? central_phase() : cplx(1.0);
        const double r = (face_holonomy(f) - target * identity(rank_)).norm();
        if (r > 1e-10) {
            std::ostringstream msg;
            msg << "face " << f << " holonomy off by " << r;
            throw Error(ErrorKind::Validation, msg.str());
        }
    }
}

int UnitaryCocycle::commutant_dim() const {
    const int n2 = rank_ * rank_;
    Mat normal = Mat::Zero(n2, n2);
    const Mat I = identity(rank_);
    for (int h = 0; h < mesh_.num_half_edges(); ++h) {
        if (h > mesh_.twin(h)) continue;
        const Mat K = kron(I, transport_[h]) - kron(transport_[h].transpose(), I);
        normal += K.adjoint() * K;
    }
    return static_cast<int>(null_space(normal, 1e-12).cols());
}

Mat relation_product(const std::vector<Mat>& gens) {
    if (gens.empty() || gens.size() % 2 != 0) throw Error(ErrorKind::InvalidArgument, "need 2g generators");
    const int n = static_cast<int>(gens[0].rows());
    Mat p = identity(n);
    for (size_t i = 0; i < gens.size(); i += 2) {
        const Mat& A = gens[i];
        const Mat& B = gens[i + 1];
        p = p * A * B * A.inverse() * B.inverse();
    }
    return p;
}

UnitaryCocycle UnitaryCocycle::from_generators(const HalfEdgeMesh& mesh, int rank, int degree,
                                               const std::vector<Mat>& generators, int marked_face) {
    const int g = mesh.genus();
    if (static_cast<int>(generators.size()) != 2 * g)
        throw Error(ErrorKind::InvalidArgument, "expected " + std::to_string(2 * g) + " generators");
    if (degree < 0 || degree >= rank) throw Error(ErrorKind::InvalidArgument, "degree must lie in [0, rank)");
    for (const auto& G : generators) {
        if (G.rows() != rank || G.cols() != rank) throw Error(ErrorKind::InvalidArgument, "generator size mismatch");
        if ((G.adjoint() * G - identity(rank)).norm() > 1e-10)
            throw Error(ErrorKind::InvalidArgument, "generator is not unitary to 1e-10");
    }
    const cplx omega = std::polar(1.0, 2.0 * std::numbers::pi * degree / rank);
    const double mismatch = (relation_product(generators) - omega * identity(rank)).norm();
    if (mismatch > 1e-8) {
        std::ostringstream msg;
        msg << "generators violate the surface relation: residual " << std::scientific << mismatch;
        throw Error(ErrorKind::RelationMismatch, msg.str());
    }
    if (marked_face < 0 || marked_face >= mesh.num_faces())
        throw Error(ErrorKind::InvalidArgument, "marked face out of range");

    const int H = mesh.num_half_edges();
    std::vector<Mat> U(H);
    std::vector<char> known(H, 0);
    auto assign = [&](int h, const Mat& M) {
        U[h] = M;
        U[mesh.twin(h)] = M.adjoint();
        known[h] = known[mesh.twin(h)] = 1;
    };

    std::map<std::string, int> index;
    for (int i = 0; i < g; ++i) {
        index["a" + std::to_string(i + 1)] = 2 * i;
        index["b" + std::to_string(i + 1)] = 2 * i + 1;
    }
    std::vector<int> parent(mesh.num_vertices());
    std::iota(parent.begin(), parent.end(), 0);
    for (int h = 0; h < H; ++h) {
        const std::string& lab = mesh.label(h);
        if (lab.empty()) continue;
        const bool continuation = lab[0] == '~';
        const auto it = index.find(continuation ? lab.substr(1) : lab);
        if (it == index.end()) throw Error(ErrorKind::InvalidArgument, "label '" + lab + "' names no generator");
        if (continuation) {
            assign(h, identity(rank));
            if (!unite(parent, mesh.origin(h), mesh.dest(h)))
                throw Error(ErrorKind::Validation, "generator continuation segments form a cycle");
        } else {
            assign(h, generators[it->second]);
        }
    }
    for (int h = 0; h < H; ++h)
        if (!known[h] && h < mesh.twin(h) && unite(parent, mesh.origin(h), mesh.dest(h))) assign(h, identity(rank));

    // dual tree through the remaining edges, rooted at the marked face
    const int F = mesh.num_faces();
    std::vector<int> parent_edge(F, -2), order;
    parent_edge[marked_face] = -1;
    std::queue<int> q;
    q.push(marked_face);
    while (!q.empty()) {
        const int f = q.front();
        q.pop();
        order.push_back(f);
        for (int h : mesh.face_half_edges(f)) {
            if (known[h]) continue;
            const int t = mesh.twin(h);
            const int nf = mesh.face(t);
            if (parent_edge[nf] != -2) continue;
            parent_edge[nf] = t;
            q.push(nf);
        }
    }
    if (static_cast<int>(order.size()) != F)
        throw Error(ErrorKind::Validation, "generator labels do not cut the surface into a disk");
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int f = *it;
        const int h = parent_edge[f];
        if (h < 0) continue;
        const int h1 = mesh.next(h), h2 = mesh.next(h1);
        if (!known[h1] || !known[h2]) throw Error(ErrorKind::Validation, "dual tree is not a tree");
        assign(h, (U[h1] * U[h2]).adjoint());
    }
    for (int h = 0; h < H; ++h)
        if (!known[h]) throw Error(ErrorKind::Validation, "unassigned transport after tree construction");
    return UnitaryCocycle(mesh, rank, degree, std::move(U), marked_face);
}

// ---------------------------------------------------------------------------
// presets and files

std::vector<std::string> preset_names() { return {"g2n1d0", "g2n2d0", "g2n2d1", "g2n3d1"}; }

void preset_generators(const std::string& name, int& genus, int& rank, int& degree, std::vector<Mat>& gens) {
    genus = 2;
    gens.clear();
    const cplx i(0.0, 1.0);
    if (name == "g2n1d0") {
        rank = 1;
        degree = 0;
        gens.assign(4, identity(1));
    } else if (name == "g2n2d0") {
        rank = 2;
        degree = 0;
        gens.assign(4, identity(2));
    } else if (name == "g2n2d1") {
        rank = 2;
        degree = 1;
        Mat sx(2, 2), sz(2, 2);
        sx << 0, 1, 1, 0;
        sz << 1, 0, 0, -1;
        const Mat H = 0.7 * sx + 0.4 * sz;
        gens = {i * sz, i * sx, hermitian_exp_i(H, 1.0), std::exp(0.3 * i) * hermitian_exp_i(H, 1.3)};
    } else if (name == "g2n3d1") {
        rank = 3;
        degree = 1;
        const cplx w = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
        Mat Z = Mat::Zero(3, 3), X = Mat::Zero(3, 3);
        for (int j = 0; j < 3; ++j) {
            Z(j, j) = std::pow(w, j);
            X((j + 1) % 3, j) = 1.0;
        }
        Mat H(3, 3);
        H << 0.5, cplx(0.2, 0.1), cplx(-0.3, 0.4), cplx(0.2, -0.1), -0.2, cplx(0.1, 0.3), cplx(-0.3, -0.4),
            cplx(0.1, -0.3), 0.9;
        gens = {Z, X, hermitian_exp_i(H, 1.0), hermitian_exp_i(H, 0.6)};
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown bundle preset '" + name + "'");
    }
}

void save_generators(const GeneratorFile& g, std::ostream& out) {
    out << std::setprecision(17);
    out << "cocycle " << g.rank << ' ' << g.degree << '\n';
    for (const auto& [name, M] : g.generators) {
        out << "gen " << name;
        for (int r = 0; r < M.rows(); ++r)
            for (int c = 0; c < M.cols(); ++c) out << ' ' << M(r, c).real() << ' ' << M(r, c).imag();
        out << '\n';
    }
    out << "twist " << g.marked_face << '\n';
}

GeneratorFile load_generators(std::istream& in) {
    GeneratorFile g;
    bool header = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "cocycle") {
            if (!(ls >> g.rank >> g.degree) || g.rank < 1 || g.degree < 0 || g.degree >= g.rank)
                throw ParseError(line_no, "expected 'cocycle <n> <d>' with 0 <= d < n");
            header = true;
        } else if (tag == "gen") {
            if (!header) throw ParseError(line_no, "generator before header");
            std::string name;
            if (!(ls >> name)) throw ParseError(line_no, "missing generator name");
            Mat M(g.rank, g.rank);
            for (int r = 0; r < g.rank; ++r)
                for (int c = 0; c < g.rank; ++c) {
                    double re, im;
                    if (!(ls >> re >> im)) throw ParseError(line_no, "generator needs 2 n^2 numbers");
                    M(r, c) = {re, im};
                }
            if (g.generators.count(name)) throw ParseError(line_no, "duplicate generator " + name);
            g.generators[name] = M;
        } else if (tag == "twist") {
            if (!(ls >> g.marked_face) || g.marked_face < 0) throw ParseError(line_no, "bad twist face");
        } else {
            throw ParseError(line_no, "unknown record '" + tag + "'");
        }
    }
    if (!header) throw ParseError(line_no + 1, "missing cocycle header");
    return g;
}

std::vector<Mat> ordered_generators(const GeneratorFile& g, int genus) {
    std::vector<Mat> out;
    for (int i = 1; i <= genus; ++i)
        for (const char* p : {"a", "b"}) {
            const auto it = g.generators.find(p + std::to_string(i));
            if (it == g.generators.end())
                throw Error(ErrorKind::InvalidArgument, std::string("missing generator ") + p + std::to_string(i));
            out.push_back(it->second);
        }
    if (static_cast<int>(g.generators.size()) != 2 * genus)
        throw Error(ErrorKind::InvalidArgument, "unexpected extra generators");
    return out;
}

// ---------------------------------------------------------------------------
// twisted complex

TwistedComplex::TwistedComplex(const ConformalSurface& S, int rank, std::vector<Mat> left, std::vector<Mat> right,
                               Eigen::VectorXd vertex_weight, Eigen::VectorXd face_weight, SolverOptions options)
    : surface_(S),
      rank_(rank),
      left_(std::move(left)),
      right_(std::move(right)),
      vertex_weight_(std::move(vertex_weight)),
      face_weight_(std::move(face_weight)),
      grad_(p1_gradients(S)),
      options_(options) {
    const int H = S.mesh().num_half_edges();
    if (static_cast<int>(left_.size()) != H || static_cast<int>(right_.size()) != H)
        throw Error(ErrorKind::InvalidArgument, "one corner transport pair per half-edge expected");
    if (vertex_weight_.size() != S.num_vertices() || face_weight_.size() != S.num_faces())
        throw Error(ErrorKind::InvalidArgument, "weight sizes do not match the surface");
    if (vertex_weight_.minCoeff() <= 0.0 || face_weight_.minCoeff() <= 0.0)
        throw Error(ErrorKind::InvalidArgument, "weights must be positive");
    compute_kernel();
}

namespace {

// Accumulates sum_k coef_k * L_k X_{v_k} R_k over the corners of each face.
template <class Coef>
Field face_combination(const TwistedComplex& E, const Field& X, Coef coef) {
    const int n = E.rank();
    const auto& mesh = E.surface().mesh();
    if (X.size() != E.vertex_dim()) throw Error(ErrorKind::InvalidArgument, "vertex cochain has the wrong size");
    Field out = Field::Zero(E.face_dim());
    Mat tmp(n, n);
    for (int f = 0; f < E.num_faces(); ++f) {
        auto acc = site(out, f, n);
        const auto hs = mesh.face_half_edges(f);
        for (int k = 0; k < 3; ++k) {
            const int h = hs[k];
            tmp.noalias() = E.left(h) * site(X, mesh.origin(h), n);
            acc.noalias() += coef(f, k) * (tmp * E.right(h));
        }
    }
    return out;
}

// Adjoint of face_combination for the weighted products.
template <class Coef>
Field vertex_combination(const TwistedComplex& E, const Field& a, Coef coef) {
    const int n = E.rank();
    const auto& mesh = E.surface().mesh();
    if (a.size() != E.face_dim()) throw Error(ErrorKind::InvalidArgument, "face cochain has the wrong size");
    Field out = Field::Zero(E.vertex_dim());
    Mat tmp(n, n);
    for (int f = 0; f < E.num_faces(); ++f) {
        const auto af = site(a, f, n);
        const auto hs = mesh.face_half_edges(f);
        for (int k = 0; k < 3; ++k) {
            const int h = hs[k];
            tmp.noalias() = E.left(h).adjoint() * af;
            site(out, mesh.origin(h), n).noalias() += (E.face_weights()[f] * std::conj(coef(f, k))) * (tmp * E.right(h).adjoint());
        }
    }
    for (int v = 0; v < E.num_vertices(); ++v) site(out, v, n) /= E.vertex_weights()[v];
    return out;
}

}  // namespace

Field TwistedComplex::dbar(const Field& X) const {
    return face_combination(*this, X, [this](int f, int k) { return 0.5 * grad_[f][k]; });
}

Field TwistedComplex::dhol(const Field& X) const {
    return face_combination(*this, X, [this](int f, int k) { return 0.5 * std::conj(grad_[f][k]); });
}

Field TwistedComplex::dbar_adjoint(const Field& a) const {
    return vertex_combination(*this, a, [this](int f, int k) { return 0.5 * grad_[f][k]; });
}

Field TwistedComplex::dhol_adjoint(const Field& b) const {
    return vertex_combination(*this, b, [this](int f, int k) { return 0.5 * std::conj(grad_[f][k]); });
}

Field TwistedComplex::interpolate(const Field& X) const {
    return face_combination(*this, X, [](int, int) { return cplx(1.0 / 3.0); });
}

Field TwistedComplex::interpolate_adjoint(const Field& a) const {
    return vertex_combination(*this, a, [](int, int) { return cplx(1.0 / 3.0); });
}

cplx TwistedComplex::ip_vertex(const Field& X, const Field& Y) const {
    const int n2 = rank_ * rank_;
    cplx s = 0.0;
    for (int v = 0; v < num_vertices(); ++v)
        s += vertex_weight_[v] * Y.segment(static_cast<Eigen::Index>(v) * n2, n2).dot(X.segment(static_cast<Eigen::Index>(v) * n2, n2));
    return s;
}

cplx TwistedComplex::ip_face(const Field& a, const Field& b) const {
    const int n2 = rank_ * rank_;
    cplx s = 0.0;
    for (int f = 0; f < num_faces(); ++f)
        s += face_weight_[f] * b.segment(static_cast<Eigen::Index>(f) * n2, n2).dot(a.segment(static_cast<Eigen::Index>(f) * n2, n2));
    return s;
}

void TwistedComplex::compute_kernel() {
    // propagate a covariantly constant section X_v = A_v X0 B_v along a spanning tree from vertex 0,
    // then impose the remaining edge constraints on X0
    const auto& mesh = surface_.mesh();
    const int n = rank_, n2 = n * n, V = num_vertices();
    std::vector<Mat> A(V), B(V);
    std::vector<char> seen(V, 0);
    A[0] = identity(n);
    B[0] = identity(n);
    seen[0] = 1;
    std::queue<int> q;
    q.push(0);
    while (!q.empty()) {
        const int v = q.front();
        q.pop();
        for (int h : mesh.outgoing(v)) {
            const int w = mesh.dest(h), nh = mesh.next(h);
            if (seen[w]) continue;
            A[w] = left_[nh].inverse() * left_[h] * A[v];
            B[w] = B[v] * right_[h] * right_[nh].inverse();
            seen[w] = 1;
            q.push(w);
        }
    }
    Mat normal = Mat::Zero(n2, n2);
    for (int h = 0; h < mesh.num_half_edges(); ++h) {
        const int v = mesh.origin(h), w = mesh.dest(h), nh = mesh.next(h);
        const Mat K = kron((B[v] * right_[h]).transpose(), left_[h] * A[v]) -
                      kron((B[w] * right_[nh]).transpose(), left_[nh] * A[w]);
        normal += K.adjoint() * K;
    }
    const Mat ns = null_space(normal, 1e-14);
    kernel_.clear();
    for (Eigen::Index j = 0; j < ns.cols(); ++j) {
        const Mat X0 = Eigen::Map<const Mat>(ns.col(j).data(), n, n);
        Field s(vertex_dim());
        for (int v = 0; v < V; ++v) site(s, v, n) = A[v] * X0 * B[v];
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& k : kernel_) s -= ip_vertex(s, k) * k;
        const double nrm = norm_vertex(s);
        if (nrm > 0.0) kernel_.push_back(s / nrm);
    }
}

Field TwistedComplex::project_off_kernel(const Field& X) const {
    Field out = X;
    for (const auto& k : kernel_) out -= ip_vertex(out, k) * k;
    return out;
}

Field TwistedComplex::solve_iterative(const Field& b, SolveStats& stats) const {
    const double bnorm = norm_vertex(b);
    Field x = Field::Zero(b.size());
    if (bnorm == 0.0) {
        stats.residual = 0.0;
        return x;
    }
    Field r = b, p = b;
    double rr = ip_vertex(r, r).real();
    const long max_it = static_cast<long>(options_.max_iteration_factor) * b.size();
    int it = 0;
    while (std::sqrt(rr) > options_.tolerance * bnorm && it < max_it) {
        const Field Ap = laplacian(p);
        const double pAp = ip_vertex(Ap, p).real();
        if (!(pAp > 0.0)) break;
        const double alpha = rr / pAp;
        x += alpha * p;
        r -= alpha * Ap;
        if (it % 50 == 49) r = project_off_kernel(b - laplacian(x));
        const double rr_new = ip_vertex(r, r).real();
        p = r + (rr_new / rr) * p;
        rr = rr_new;
        ++it;
    }
    stats.iterations = it;
    stats.residual = norm_vertex(project_off_kernel(b - laplacian(x))) / bnorm;
    return x;
}

Field TwistedComplex::solve_dense(const Field& b, SolveStats& stats) const {
    const Eigen::Index N = vertex_dim();
    const int n2 = rank_ * rank_;
    Mat M(N, N);
    Field e = Field::Zero(N);
    for (Eigen::Index j = 0; j < N; ++j) {
        e[j] = 1.0;
        M.col(j) = laplacian(e);
        e[j] = 0.0;
    }
    // adding the kernel projector makes the system invertible without changing the solution on (ker)^perp
    for (const auto& k : kernel_)
        for (Eigen::Index j = 0; j < N; ++j) M.col(j) += (vertex_weight_[j / n2] * std::conj(k[j])) * k;
    Field x = M.partialPivLu().solve(b);
    stats.dense = true;
    stats.residual = norm_vertex(project_off_kernel(b - laplacian(x))) / std::max(norm_vertex(b), 1e-300);
    return x;
}

Field TwistedComplex::delta0_inverse(const Field& h, SolveStats* stats_out) const {
    if (h.size() != vertex_dim()) throw Error(ErrorKind::InvalidArgument, "delta0_inverse: size mismatch");
    SolveStats stats;
    const Field b = project_off_kernel(h);
    stats.kernel_component = norm_vertex(h - b);
    Field x;
    if (options_.mode == SolverMode::Dense) {
        if (vertex_dim() > options_.dense_limit)
            throw Error(ErrorKind::DenseCap, "dense solve requested above the dense limit");
        x = solve_dense(b, stats);
    } else {
        x = solve_iterative(b, stats);
        if (stats.residual > options_.tolerance) {
            if (options_.mode == SolverMode::Auto && vertex_dim() <= options_.dense_limit) {
                x = solve_dense(b, stats);
            } else {
                std::ostringstream msg;
                msg << "conjugate gradient stalled after " << stats.iterations << " iterations, relative residual "
                    << std::scientific << stats.residual;
                throw Error(ErrorKind::Solver, msg.str());
            }
        }
    }
    if (stats_out) *stats_out = stats;
    return project_off_kernel(x);
}

Field TwistedComplex::harmonic_projection(const Field& a, SolveStats* stats) const {
    return a - dbar(delta0_inverse(dbar_adjoint(a), stats));
}

TwistedComplex end_complex(const ConformalSurface& S, const UnitaryCocycle& c, MassWeight weight,
                           SolverOptions options) {
    if (!(c.mesh() == S.mesh())) throw Error(ErrorKind::InvalidArgument, "cocycle and surface use different meshes");
    const int H = S.mesh().num_half_edges();
    std::vector<Mat> L(H), R(H);
    for (int h = 0; h < H; ++h) {
        L[h] = c.corner_transport(h);
        R[h] = c.corner_transport(h).adjoint();
    }
    Eigen::VectorXd fw(S.num_faces());
    for (int f = 0; f < S.num_faces(); ++f) fw[f] = 2.0 * S.area(f);
    return TwistedComplex(S, c.rank(), std::move(L), std::move(R), vertex_mass(S, weight), fw, options);
}

Field ad_on_scalar(const TwistedComplex& E, const Field& nu, const Field& f) {
    if (nu.size() != E.face_dim()) throw Error(ErrorKind::InvalidArgument, "ad_on_scalar: rank mismatch");
    const int n = E.rank();
    const Field If = E.interpolate(f);
    Field out(E.face_dim());
    for (int fc = 0; fc < E.num_faces(); ++fc)
        site(out, fc, n) = site(nu, fc, n) * site(If, fc, n) - site(If, fc, n) * site(nu, fc, n);
    return out;
}

Field ad_star(const TwistedComplex& E, const Field& nu, const Field& a) {
    if (nu.size() != E.face_dim() || a.size() != E.face_dim())
        throw Error(ErrorKind::InvalidArgument, "ad_star: rank mismatch");
    const int n = E.rank();
    Field b(E.face_dim());
    for (int f = 0; f < E.num_faces(); ++f) {
        const Mat ns = site(nu, f, n).adjoint();
        site(b, f, n) = ns * site(a, f, n) - site(a, f, n) * ns;
    }
    return E.interpolate_adjoint(b);
}

Field blockwise_adjoint(const Field& a, int rank) {
    Field out(a.size());
    const Eigen::Index sites = a.size() / (rank * rank);
    for (Eigen::Index i = 0; i < sites; ++i) site(out, static_cast<int>(i), rank) = site(a, static_cast<int>(i), rank).adjoint();
    return out;
}

Field scale_faces(const Field& a, const Field& scalar, int rank, bool conjugate_scalar) {
    Field out = a;
    const int n2 = rank * rank;
    for (Eigen::Index f = 0; f < scalar.size(); ++f)
        out.segment(f * n2, n2) *= conjugate_scalar ? std::conj(scalar[f]) : scalar[f];
    return out;
}

}  // namespace unimod
