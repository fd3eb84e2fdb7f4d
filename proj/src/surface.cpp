#include "unimod/surface.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <queue>
#include <sstream>

#include "unimod/error.hpp"

namespace unimod {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::Validation, what); }

bool is_generator_name(const std::string& s) {
    if (s.size() < 2 || (s[0] != 'a' && s[0] != 'b')) return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_valid_label(const std::string& s) {
    if (s.empty()) return true;
    if (s[0] == '~') return is_generator_name(s.substr(1));
    return is_generator_name(s);
}

}  // namespace

HalfEdgeMesh::HalfEdgeMesh(int num_vertices, std::vector<HalfEdge> half_edges, std::vector<std::string> labels,
                           int genus)
    : num_vertices_(num_vertices), genus_(genus), half_edges_(std::move(half_edges)), labels_(std::move(labels)) {
    if (labels_.empty()) labels_.resize(half_edges_.size());
    validate();
}

void HalfEdgeMesh::validate() {
    const int H = num_half_edges();
    if (num_vertices_ <= 0) invalid("mesh has no vertices");
    if (H == 0 || H % 2 != 0) invalid("half-edge count must be positive and even");
    if (static_cast<int>(labels_.size()) != H) invalid("label count does not match half-edge count");

    int max_face = -1;
    for (int h = 0; h < H; ++h) {
        const HalfEdge& e = half_edges_[h];
        if (e.origin < 0 || e.origin >= num_vertices_) invalid("half-edge " + std::to_string(h) + ": origin out of range");
        if (e.twin < 0 || e.twin >= H) invalid("half-edge " + std::to_string(h) + ": twin out of range");
        if (e.next < 0 || e.next >= H) invalid("half-edge " + std::to_string(h) + ": next out of range");
        if (e.face < 0) invalid("half-edge " + std::to_string(h) + ": negative face");
        max_face = std::max(max_face, e.face);
    }
    for (int h = 0; h < H; ++h) {
        const HalfEdge& e = half_edges_[h];
        if (e.twin == h) invalid("half-edge " + std::to_string(h) + " is its own twin (boundary)");
        if (half_edges_[e.twin].twin != h)
            invalid("half-edge " + std::to_string(h) + ": twin(twin) != identity (non-manifold edge)");
        const int n1 = e.next, n2 = half_edges_[n1].next, n3 = half_edges_[n2].next;
        if (n3 != h || n1 == h || n2 == h) invalid("half-edge " + std::to_string(h) + ": next-cycle length is not 3");
        if (half_edges_[n1].face != e.face || half_edges_[n2].face != e.face)
            invalid("half-edge " + std::to_string(h) + ": next-cycle crosses faces");
        if (half_edges_[e.twin].origin != half_edges_[n1].origin)
            invalid("half-edge " + std::to_string(h) + ": inconsistent orientation with twin");
        if (!is_valid_label(labels_[h])) invalid("half-edge " + std::to_string(h) + ": bad label '" + labels_[h] + "'");
        if (!labels_[h].empty() && !labels_[e.twin].empty())
            invalid("half-edge " + std::to_string(h) + ": both directions of an edge are labeled");
    }

    const int F = max_face + 1;
    std::vector<int> per_face(F, 0);
    for (const auto& e : half_edges_) ++per_face[e.face];
    for (int f = 0; f < F; ++f)
        if (per_face[f] != 3) invalid("face " + std::to_string(f) + " does not have exactly 3 half-edges");

    // vertex links must be single cycles
    std::vector<int> out_count(num_vertices_, 0), first_out(num_vertices_, -1);
    for (int h = 0; h < H; ++h) {
        ++out_count[half_edges_[h].origin];
        if (first_out[half_edges_[h].origin] < 0) first_out[half_edges_[h].origin] = h;
    }
    for (int v = 0; v < num_vertices_; ++v) {
        if (out_count[v] == 0) invalid("vertex " + std::to_string(v) + " is isolated");
        int h = first_out[v], steps = 0;
        do {
            h = half_edges_[half_edges_[half_edges_[h].next].next].twin;
            ++steps;
        } while (h != first_out[v] && steps <= out_count[v]);
        if (steps != out_count[v]) invalid("vertex " + std::to_string(v) + " is non-manifold");
    }

    // connectivity through faces
    std::vector<char> seen(F, 0);
    std::vector<std::vector<int>> face_he(F);
    for (int h = 0; h < H; ++h) face_he[half_edges_[h].face].push_back(h);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!q.empty()) {
        const int f = q.front();
        q.pop();
        for (int h : face_he[f]) {
            const int g = half_edges_[half_edges_[h].twin].face;
            if (!seen[g]) {
                seen[g] = 1;
                ++reached;
                q.push(g);
            }
        }
    }
    if (reached != F) invalid("mesh is not connected");

    const int chi = num_vertices_ - H / 2 + F;
    if (chi != 2 - 2 * genus_)
        invalid("Euler characteristic " + std::to_string(chi) + " does not match genus " + std::to_string(genus_));
    if (!corner_layout_.empty() && static_cast<int>(corner_layout_.size()) != H) invalid("corner layout size mismatch");

    face_half_edge_.assign(F, -1);
    for (int h = 0; h < H; ++h)
        if (face_half_edge_[half_edges_[h].face] < 0) face_half_edge_[half_edges_[h].face] = h;
    vertex_half_edge_ = first_out;
}

std::array<int, 3> HalfEdgeMesh::face_half_edges(int f) const {
    const int h = face_half_edge_[f];
    return {h, next(h), next(next(h))};
}

std::array<int, 3> HalfEdgeMesh::face_vertices(int f) const {
    const auto hs = face_half_edges(f);
    return {origin(hs[0]), origin(hs[1]), origin(hs[2])};
}

std::vector<int> HalfEdgeMesh::outgoing(int v) const {
    std::vector<int> out;
    int h = vertex_half_edge_[v];
    do {
        out.push_back(h);
        h = twin(prev(h));
    } while (h != vertex_half_edge_[v]);
    return out;
}

void HalfEdgeMesh::set_corner_layout(std::vector<cplx> layout) {
    if (!layout.empty() && static_cast<int>(layout.size()) != num_half_edges()) invalid("corner layout size mismatch");
    corner_layout_ = std::move(layout);
}

bool HalfEdgeMesh::faces_have_distinct_vertices() const {
    for (int f = 0; f < num_faces(); ++f) {
        const auto v = face_vertices(f);
        if (v[0] == v[1] || v[1] == v[2] || v[0] == v[2]) return false;
    }
    return true;
}

bool HalfEdgeMesh::operator==(const HalfEdgeMesh& other) const {
    return num_vertices_ == other.num_vertices_ && genus_ == other.genus_ && half_edges_ == other.half_edges_ &&
           labels_ == other.labels_;
}

double hyperbolic_polygon_radius(int sides) {
    // vertex radius r of a regular N-gon with interior angle 2*pi/N: r^2 = cos(2*pi/N)
    return std::sqrt(std::cos(2.0 * std::numbers::pi / sides));
}

HalfEdgeMesh build_polygon_gluing(int genus) {
    if (genus < 2)
        throw Error(ErrorKind::UnsupportedGenus, "polygon gluing requires genus >= 2, got " + std::to_string(genus));
    const int N = 4 * genus;
    constexpr int P = 0, C = 1;
    std::vector<HalfEdge> he(3 * N);
    std::vector<std::string> labels(3 * N);
    for (int k = 0; k < N; ++k) {
        he[3 * k + 0] = {C, 3 * ((k + N - 1) % N) + 2, 3 * k + 1, k};
        he[3 * k + 1] = {P, -1, 3 * k + 2, k};
        he[3 * k + 2] = {P, 3 * ((k + 1) % N), 3 * k, k};
    }
    for (int i = 0; i < genus; ++i) {
        const int a = 3 * (4 * i) + 1, b = 3 * (4 * i + 1) + 1;
        const int a_inv = 3 * (4 * i + 2) + 1, b_inv = 3 * (4 * i + 3) + 1;
        he[a].twin = a_inv;
        he[a_inv].twin = a;
        he[b].twin = b_inv;
        he[b_inv].twin = b;
        labels[a] = "a" + std::to_string(i + 1);
        labels[b] = "b" + std::to_string(i + 1);
    }
    HalfEdgeMesh mesh(2, std::move(he), std::move(labels), genus);

    const double r = hyperbolic_polygon_radius(N);
    auto corner = [&](int k) { return std::polar(r, 2.0 * std::numbers::pi * (k - 0.5) / N); };
    std::vector<cplx> layout(3 * N);
    for (int k = 0; k < N; ++k) {
        layout[3 * k + 0] = 0.0;
        layout[3 * k + 1] = corner(k);
        layout[3 * k + 2] = corner(k + 1);
    }
    mesh.set_corner_layout(std::move(layout));
    return mesh;
}

HalfEdgeMesh refine(const HalfEdgeMesh& mesh) {
    const int V = mesh.num_vertices(), H = mesh.num_half_edges(), F = mesh.num_faces();
    std::vector<int> mid(H, -1);
    int next_vertex = V;
    for (int h = 0; h < H; ++h)
        if (h < mesh.twin(h)) mid[h] = mid[mesh.twin(h)] = next_vertex++;

    // position of each half-edge within its face
    std::vector<int> first_half(H), second_half(H);
    for (int f = 0; f < F; ++f) {
        const auto hs = mesh.face_half_edges(f);
        first_half[hs[0]] = 12 * f + 0;
        second_half[hs[0]] = 12 * f + 3;
        first_half[hs[1]] = 12 * f + 4;
        second_half[hs[1]] = 12 * f + 7;
        first_half[hs[2]] = 12 * f + 8;
        second_half[hs[2]] = 12 * f + 2;
    }

    std::vector<HalfEdge> he(4 * H);
    std::vector<std::string> labels(4 * H);
    const bool has_layout = !mesh.corner_layout().empty();
    std::vector<cplx> layout(has_layout ? 4 * H : 0);
    for (int f = 0; f < F; ++f) {
        const auto hs = mesh.face_half_edges(f);
        const int a = mesh.origin(hs[0]), b = mesh.origin(hs[1]), c = mesh.origin(hs[2]);
        const int m0 = mid[hs[0]], m1 = mid[hs[1]], m2 = mid[hs[2]];
        const int base = 12 * f;
        const std::array<int, 12> origins = {a, m0, m2, m0, b, m1, m2, m1, c, m0, m1, m2};
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 3; ++k) {
                const int id = base + 3 * j + k;
                he[id].origin = origins[3 * j + k];
                he[id].next = base + 3 * j + (k + 1) % 3;
                he[id].face = 4 * f + j;
            }
        he[base + 1].twin = base + 11;
        he[base + 11].twin = base + 1;
        he[base + 5].twin = base + 9;
        he[base + 9].twin = base + 5;
        he[base + 6].twin = base + 10;
        he[base + 10].twin = base + 6;
        for (int h : hs) {
            const int t = mesh.twin(h);
            he[first_half[h]].twin = second_half[t];
            he[second_half[h]].twin = first_half[t];
            const std::string& lab = mesh.label(h);
            if (!lab.empty()) {
                labels[first_half[h]] = lab;
                labels[second_half[h]] = lab[0] == '~' ? lab : "~" + lab;
            }
        }
        if (has_layout) {
            const auto& L = mesh.corner_layout();
            const cplx za = L[hs[0]], zb = L[hs[1]], zc = L[hs[2]];
            const cplx zm0 = 0.5 * (za + zb), zm1 = 0.5 * (zb + zc), zm2 = 0.5 * (zc + za);
            const std::array<cplx, 12> pos = {za, zm0, zm2, zm0, zb, zm1, zm2, zm1, zc, zm0, zm1, zm2};
            for (int i = 0; i < 12; ++i) layout[base + i] = pos[i];
        }
    }
    HalfEdgeMesh out(next_vertex, std::move(he), std::move(labels), mesh.genus());
    if (has_layout) out.set_corner_layout(std::move(layout));
    return out;
}

HalfEdgeMesh build_torus_grid(int n) {
    if (n < 3) throw Error(ErrorKind::InvalidArgument, "torus grid needs n >= 3");
    auto vid = [n](int i, int j) { return ((i % n + n) % n) + n * ((j % n + n) % n); };
    std::vector<HalfEdge> he;
    std::vector<cplx> layout;
    std::map<std::pair<int, int>, int> directed;
    int face = 0;
    auto add_tri = [&](std::array<std::pair<int, int>, 3> ij) {
        const int base = static_cast<int>(he.size());
        for (int k = 0; k < 3; ++k) {
            const int o = vid(ij[k].first, ij[k].second), d = vid(ij[(k + 1) % 3].first, ij[(k + 1) % 3].second);
            he.push_back({o, -1, base + (k + 1) % 3, face});
            layout.emplace_back(static_cast<double>(ij[k].first) / n, static_cast<double>(ij[k].second) / n);
            directed[{o, d}] = base + k;
        }
        ++face;
    };
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            add_tri({{{i, j}, {i + 1, j}, {i + 1, j + 1}}});
            add_tri({{{i, j}, {i + 1, j + 1}, {i, j + 1}}});
        }
    for (int h = 0; h < static_cast<int>(he.size()); ++h) {
        const int o = he[h].origin, d = he[he[h].next].origin;
        he[h].twin = directed.at({d, o});
    }
    HalfEdgeMesh mesh(n * n, std::move(he), {}, 1);
    mesh.set_corner_layout(std::move(layout));
    return mesh;
}

// ---------------------------------------------------------------------------
// mesh serialization

void save_mesh(const HalfEdgeMesh& mesh, std::ostream& out) {
    out << "surf " << mesh.num_vertices() << ' ' << mesh.num_edges() << ' ' << mesh.num_faces() << ' '
        << mesh.genus() << '\n';
    for (int h = 0; h < mesh.num_half_edges(); ++h) {
        const auto& e = mesh.half_edge(h);
        out << "he " << h << ' ' << e.origin << ' ' << e.twin << ' ' << e.next << ' ' << e.face;
        if (!mesh.label(h).empty()) out << ' ' << mesh.label(h);
        out << '\n';
    }
}

HalfEdgeMesh load_mesh(std::istream& in) {
    std::string line;
    int line_no = 0;
    int V = -1, E = -1, F = -1, genus = -1;
    std::vector<HalfEdge> he;
    std::vector<std::string> labels;
    std::vector<char> seen;
    int records = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "surf") {
            if (V >= 0) throw ParseError(line_no, "duplicate header");
            if (!(ls >> V >> E >> F >> genus) || V <= 0 || E <= 0 || F <= 0 || genus < 0)
                throw ParseError(line_no, "malformed header, expected 'surf <V> <E> <F> <genus>'");
            he.assign(2 * E, HalfEdge{});
            labels.assign(2 * E, "");
            seen.assign(2 * E, 0);
        } else if (tag == "he") {
            if (V < 0) throw ParseError(line_no, "half-edge record before header");
            int id;
            HalfEdge e;
            if (!(ls >> id >> e.origin >> e.twin >> e.next >> e.face))
                throw ParseError(line_no, "malformed half-edge record");
            if (id < 0 || id >= 2 * E) throw ParseError(line_no, "half-edge id out of range");
            if (seen[id]) throw ParseError(line_no, "duplicate half-edge id " + std::to_string(id));
            if (e.face >= F) throw ParseError(line_no, "face index out of range");
            std::string label, extra;
            ls >> label;
            if (ls >> extra) throw ParseError(line_no, "trailing tokens");
            seen[id] = 1;
            he[id] = e;
            labels[id] = label;
            ++records;
        } else {
            throw ParseError(line_no, "unknown record '" + tag + "'");
        }
    }
    if (V < 0) throw ParseError(line_no + 1, "missing header");
    if (records != 2 * E)
        throw ParseError(line_no + 1, "truncated file: expected " + std::to_string(2 * E) + " half-edge records, got " +
                                          std::to_string(records));
    HalfEdgeMesh mesh(V, std::move(he), std::move(labels), genus);
    if (mesh.num_faces() != F) throw Error(ErrorKind::Validation, "face count does not match header");
    return mesh;
}

void save_mesh(const HalfEdgeMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
    save_mesh(mesh, out);
}

HalfEdgeMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
    return load_mesh(in);
}

// ---------------------------------------------------------------------------
// conformal structure

LayoutPolicy parse_layout(const std::string& name) {
    if (name == "polygon") return LayoutPolicy::Polygon;
    if (name == "equilateral") return LayoutPolicy::Equilateral;
    throw Error(ErrorKind::InvalidArgument, "unknown layout policy '" + name + "'");
}

DensityPolicy parse_density(const std::string& name) {
    if (name == "uniform") return DensityPolicy::Uniform;
    if (name == "hyperbolic" || name == "octagon-hyperbolic") return DensityPolicy::Hyperbolic;
    throw Error(ErrorKind::InvalidArgument, "unknown density policy '" + name + "'");
}

std::string to_string(LayoutPolicy p) { return p == LayoutPolicy::Polygon ? "polygon" : "equilateral"; }
std::string to_string(DensityPolicy p) { return p == DensityPolicy::Uniform ? "uniform" : "hyperbolic"; }

ConformalSurface::ConformalSurface(HalfEdgeMesh mesh, std::vector<cplx> corner_chart, std::vector<double> density)
    : mesh_(std::move(mesh)), chart_(std::move(corner_chart)), density_(std::move(density)) {
    const int H = mesh_.num_half_edges(), F = mesh_.num_faces();
    if (static_cast<int>(chart_.size()) != H || static_cast<int>(density_.size()) != F)
        throw Error(ErrorKind::Chart, "chart/density sizes do not match mesh");
    if (!mesh_.faces_have_distinct_vertices())
        throw Error(ErrorKind::Chart, "a face has repeated vertices; refine the mesh first");
    area_.resize(F);
    for (int f = 0; f < F; ++f) {
        const auto hs = mesh_.face_half_edges(f);
        const cplx e1 = chart_[hs[1]] - chart_[hs[0]], e2 = chart_[hs[2]] - chart_[hs[0]];
        area_[f] = 0.5 * (std::conj(e1) * e2).imag();
        if (!(area_[f] > 0.0)) throw Error(ErrorKind::Chart, "degenerate or inverted chart triangle in face " + std::to_string(f));
        if (!(density_[f] > 0.0) || !std::isfinite(density_[f]))
            throw Error(ErrorKind::Chart, "density must be positive in face " + std::to_string(f));
    }
    rotation_.resize(H);
    for (int h = 0; h < H; ++h) {
        const int t = mesh_.twin(h);
        const cplx e_here = chart_[mesh_.next(h)] - chart_[h];
        const cplx e_there = chart_[mesh_.next(t)] - chart_[t];
        if (std::abs(std::abs(e_here) - std::abs(e_there)) > 1e-10 * std::abs(e_here))
            throw Error(ErrorKind::Chart, "shared edge lengths disagree at half-edge " + std::to_string(h));
        const cplx r = -e_there / e_here;
        rotation_[h] = r / std::abs(r);
    }
    vertex_rotation_.resize(H);
    for (int v = 0; v < mesh_.num_vertices(); ++v) {
        cplx rot = 1.0;
        for (int h : mesh_.outgoing(v)) {
            vertex_rotation_[h] = rot;
            rot = rotation_[mesh_.prev(h)] * rot;
        }
    }
}

cplx ConformalSurface::centroid(int f) const {
    const auto hs = mesh_.face_half_edges(f);
    return (chart_[hs[0]] + chart_[hs[1]] + chart_[hs[2]]) / 3.0;
}

double ConformalSurface::total_area() const {
    double s = 0.0;
    for (double a : area_) s += a;
    return s;
}

double ConformalSurface::weighted_area() const {
    double s = 0.0;
    for (int f = 0; f < num_faces(); ++f) s += density_[f] * area_[f];
    return s;
}

ConformalSurface equip_conformal(const HalfEdgeMesh& mesh, LayoutPolicy layout, DensityPolicy density) {
    const int H = mesh.num_half_edges(), F = mesh.num_faces();
    if (!mesh.faces_have_distinct_vertices())
        throw Error(ErrorKind::Chart, "conformal structure needs three distinct vertices per face; refine first");
    std::vector<cplx> chart(H);
    if (layout == LayoutPolicy::Polygon) {
        if (mesh.corner_layout().empty()) throw Error(ErrorKind::InvalidArgument, "mesh carries no polygon layout");
        chart = mesh.corner_layout();
    } else {
        const cplx tri[3] = {0.0, 1.0, std::polar(1.0, std::numbers::pi / 3.0)};
        for (int f = 0; f < F; ++f) {
            const auto hs = mesh.face_half_edges(f);
            for (int k = 0; k < 3; ++k) chart[hs[k]] = tri[k];
        }
    }
    std::vector<double> rho(F, 1.0);
    if (density == DensityPolicy::Hyperbolic) {
        if (mesh.corner_layout().empty())
            throw Error(ErrorKind::InvalidArgument, "hyperbolic density needs the polygon layout");
        const auto& L = mesh.corner_layout();
        for (int f = 0; f < F; ++f) {
            const auto hs = mesh.face_half_edges(f);
            const cplx c = (L[hs[0]] + L[hs[1]] + L[hs[2]]) / 3.0;
            const double s = 1.0 - std::norm(c);
            if (!(s > 0.0)) throw Error(ErrorKind::Chart, "layout leaves the unit disk");
            rho[f] = 4.0 / (s * s);
        }
    }
    return ConformalSurface(mesh, std::move(chart), std::move(rho));
}

void save_conformal(const ConformalSurface& surface, std::ostream& out) {
    out << std::setprecision(17);
    const auto& mesh = surface.mesh();
    for (int f = 0; f < mesh.num_faces(); ++f) {
        out << "chart " << f;
        for (int h : mesh.face_half_edges(f)) out << ' ' << surface.chart(h).real() << ' ' << surface.chart(h).imag();
        out << '\n';
    }
    for (int f = 0; f < mesh.num_faces(); ++f) out << "rho " << f << ' ' << surface.density(f) << '\n';
}

ConformalSurface load_conformal(const HalfEdgeMesh& mesh, std::istream& in) {
    const int F = mesh.num_faces();
    std::vector<cplx> chart(mesh.num_half_edges());
    std::vector<double> rho(F);
    std::vector<char> have_chart(F, 0), have_rho(F, 0);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        int f;
        if (!(ls >> f) || f < 0 || f >= F) throw ParseError(line_no, "bad face index");
        if (tag == "chart") {
            const auto hs = mesh.face_half_edges(f);
            for (int k = 0; k < 3; ++k) {
                double re, im;
                if (!(ls >> re >> im)) throw ParseError(line_no, "chart needs six coordinates");
                chart[hs[k]] = {re, im};
            }
            have_chart[f] = 1;
        } else if (tag == "rho") {
            if (!(ls >> rho[f])) throw ParseError(line_no, "rho needs a value");
            have_rho[f] = 1;
        } else {
            throw ParseError(line_no, "unknown record '" + tag + "'");
        }
    }
    for (int f = 0; f < F; ++f)
        if (!have_chart[f] || !have_rho[f]) throw ParseError(line_no + 1, "missing data for face " + std::to_string(f));
    return ConformalSurface(mesh, std::move(chart), std::move(rho));
}

}  // namespace unimod
