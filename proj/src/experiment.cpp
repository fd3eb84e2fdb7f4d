#include "experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "unimod/error.hpp"
#include "unimod/oracle.hpp"

namespace unimod::experiment {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::Config, what); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t sample_seed(std::uint64_t seed, int sample, int slot) {
    return splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(sample) << 8 | static_cast<std::uint64_t>(slot)));
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

json cjson(cplx z) { return {{"re", z.real()}, {"im", z.imag()}}; }

// |a - b| against max(|a|, |b|), floored so that two vanishing values compare absolutely
double rel_diff(cplx a, cplx b, double floor) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor}); }

struct Failures {
    json list = json::array();
    void check(bool ok, const std::string& name, double value, double tolerance, int sample = -1) {
        if (ok) return;
        json f = {{"check", name}, {"value", value}, {"tolerance", tolerance}};
        if (sample >= 0) f["sample"] = sample;
        list.push_back(std::move(f));
    }
    void merge(const json& other) {
        for (const auto& f : other) list.push_back(f);
    }
};

// runs fn(i) for i in [0, count) on `threads` workers; results come back in index order
template <class F>
auto run_pool(int count, int threads, F fn) -> std::vector<decltype(fn(0))> {
    std::vector<decltype(fn(0))> out(count);
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::mutex m;
    int next = 0;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                int i;
                {
                    std::lock_guard<std::mutex> lock(m);
                    if (next >= count || failure) return;
                    i = next++;
                }
                try {
                    out[i] = fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

double weighted_opnorm(const Mat& M, const Eigen::VectorXd& w_out, const Eigen::VectorXd& w_in, double tol,
                       std::string& method) {
    const Mat W = w_out.cwiseSqrt().asDiagonal() * M * w_in.cwiseSqrt().cwiseInverse().asDiagonal();
    const double frob = W.norm();
    if (frob <= tol) {
        method = "frobenius_bound";
        return frob;
    }
    method = "power_iteration";
    Field x = Field::Ones(W.cols()).normalized();
    double s = 0.0;
    for (int it = 0; it < 300; ++it) {
        Field y = W.adjoint() * (W * x);
        const double ny = y.norm();
        if (ny == 0.0) return 0.0;
        s = std::sqrt(ny);
        x = y / ny;
    }
    return s;
}

Field random_field(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    Field v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double re = g(rng);
        v[i] = cplx(re, g(rng));
    }
    return v;
}

bool is_trivial(const UnitaryCocycle& c) {
    for (int h = 0; h < c.num_half_edges(); ++h) {
        const Mat& U = c.transport(h);
        if ((U - Mat::Identity(U.rows(), U.cols())).norm() > 1e-12) return false;
    }
    return true;
}

json center_json(const Config& cfg, const CenterPoint& cp) {
    return {{"genus", cp.surface.mesh().genus()},
            {"vertices", cp.surface.num_vertices()},
            {"faces", cp.surface.num_faces()},
            {"rank", cp.cocycle.rank()},
            {"degree", cp.cocycle.degree()},
            {"bundle", cfg.generators_file.empty() ? cfg.preset : cfg.generators_file},
            {"commutant_dim", cp.cocycle.commutant_dim()},
            {"kernel_dim", cp.end.kernel_basis().size()},
            {"density", to_string(cfg.density)},
            {"conventions_digest", conventions_digest()}};
}

json config_json(const Config& c) {
    json tol = {{"projector", c.tol.projector},         {"adjoint", c.tol.adjoint},
                {"oracle", c.tol.oracle},               {"materialize", c.tol.materialize},
                {"first_variation", c.tol.first_variation}, {"term_sum", c.tol.term_sum},
                {"hermitian", c.tol.hermitian},         {"reconcile", c.tol.reconcile},
                {"real_part", c.tol.real_part},         {"psd", c.tol.psd},
                {"vanishing", c.tol.vanishing},         {"fd_error", c.tol.fd_error},
                {"fd_step", c.tol.fd_step},             {"slope", c.tol.slope},
                {"orthogonality", c.tol.orthogonality}};
    const char* modes[] = {"auto", "iterative", "dense"};
    return {{"seed", c.seed},
            {"samples", c.samples},
            {"trials", c.trials},
            {"rhs_trials", c.rhs_trials},
            {"first_variation_trials", c.first_variation_trials},
            {"zero_mu", c.zero_mu},
            {"traceless", c.traceless},
            {"tangent_scale", c.tangent_scale},
            {"steps", c.steps},
            {"perturbation_scale", c.perturbation_scale},
            {"dense_cap", c.dense_cap},
            {"solver",
             {{"mode", modes[static_cast<int>(c.solver.mode)]},
              {"tolerance", c.solver.tolerance},
              {"max_iteration_factor", c.solver.max_iteration_factor},
              {"dense_limit", c.solver.dense_limit}}},
            {"tolerances", tol}};
}

// ---------------------------------------------------------------------------

Result check_operators(const Config& cfg, const CenterPoint& cp) {
    Failures fail;
    json summary;
    const auto& E = cp.end;
    const auto& T = cp.tangent;
    const auto& tol = cfg.tol;

    // projector algebra on the dense oracle
    {
        const auto D = materialize("dbar", cp.cocycle, cp.surface, {}, cfg.dense_cap);
        const auto P = materialize("projector", cp.cocycle, cp.surface, {}, cfg.dense_cap);
        const Mat& M = P.matrix;
        std::string m1, m2, m3;
        const double idem = weighted_opnorm(M * M - M, P.codomain_weight, P.domain_weight, tol.projector, m1);
        const double self = weighted_opnorm(M - P.adjoint().matrix, P.codomain_weight, P.domain_weight, tol.projector, m2);
        const double kill = weighted_opnorm(M * D.matrix, P.codomain_weight, D.domain_weight, tol.projector, m3);
        summary["projector"] = {{"idempotence", idem}, {"idempotence_method", m1},
                                {"self_adjointness", self}, {"self_adjointness_method", m2},
                                {"annihilates_dbar", kill}, {"annihilates_dbar_method", m3}};
        fail.check(idem <= tol.projector, "projector_idempotence", idem, tol.projector);
        fail.check(self <= tol.projector, "projector_self_adjoint", self, tol.projector);
        fail.check(kill <= tol.projector, "projector_annihilates_dbar", kill, tol.projector);
    }

    // adjointness
    {
        std::mt19937_64 rng(sample_seed(cfg.seed, 0, 1));
        double r_dbar = 0, r_dhol = 0, r_interp = 0, r_ad = 0, r_tan = 0;
        auto residual = [](cplx lhs, cplx rhs, double scale) { return std::abs(lhs - rhs) / std::max(scale, 1e-300); };
        for (int t = 0; t < cfg.trials; ++t) {
            const Field x = random_field(rng, E.vertex_dim()), a = random_field(rng, E.face_dim());
            const Field nu = random_field(rng, E.face_dim());
            const Field Dx = E.dbar(x), Dsa = E.dbar_adjoint(a);
            r_dbar = std::max(r_dbar, residual(E.ip_face(Dx, a), E.ip_vertex(x, Dsa),
                                               E.norm_face(Dx) * E.norm_face(a) + E.norm_vertex(x) * E.norm_vertex(Dsa)));
            const Field Hx = E.dhol(x), Hsa = E.dhol_adjoint(a);
            r_dhol = std::max(r_dhol, residual(E.ip_face(Hx, a), E.ip_vertex(x, Hsa),
                                               E.norm_face(Hx) * E.norm_face(a) + E.norm_vertex(x) * E.norm_vertex(Hsa)));
            const Field Ix = E.interpolate(x), Isa = E.interpolate_adjoint(a);
            r_interp = std::max(r_interp, residual(E.ip_face(Ix, a), E.ip_vertex(x, Isa),
                                                   E.norm_face(Ix) * E.norm_face(a) + E.norm_vertex(x) * E.norm_vertex(Isa)));
            const Field Ax = ad_on_scalar(E, nu, x), Asa = ad_star(E, nu, a);
            r_ad = std::max(r_ad, residual(E.ip_face(Ax, a), E.ip_vertex(x, Asa),
                                           E.norm_face(Ax) * E.norm_face(a) + E.norm_vertex(x) * E.norm_vertex(Asa)));
            const Field y = random_field(rng, T.vertex_dim()), b = random_field(rng, T.face_dim());
            const Field Ty = T.dbar(y), Tsb = T.dbar_adjoint(b);
            r_tan = std::max(r_tan, residual(T.ip_face(Ty, b), T.ip_vertex(y, Tsb),
                                             T.norm_face(Ty) * T.norm_face(b) + T.norm_vertex(y) * T.norm_vertex(Tsb)));
        }
        summary["adjointness"] = {{"trials", cfg.trials}, {"dbar", r_dbar}, {"dhol", r_dhol}, {"interpolate", r_interp},
                                  {"ad", r_ad}, {"tangent_dbar", r_tan}};
        for (auto [name, r] : {std::pair{"adjoint_dbar", r_dbar}, {"adjoint_dhol", r_dhol}, {"adjoint_interpolate", r_interp},
                               {"adjoint_ad", r_ad}, {"adjoint_tangent_dbar", r_tan}})
            fail.check(r <= tol.adjoint, name, r, tol.adjoint);
    }

    // kernel dimension against the commutant
    const auto lap = materialize("laplacian", cp.cocycle, cp.surface, {}, cfg.dense_cap);
    const auto R = restricted_inverse_dense(lap);
    {
        const int commutant = cp.cocycle.commutant_dim();
        const int iterative = static_cast<int>(E.kernel_basis().size());
        const int n = cp.cocycle.rank();
        json k = {{"commutant_dim", commutant}, {"kernel_dim", iterative}, {"dense_kernel_dim", R.kernel_dim},
                  {"irreducible", cp.cocycle.is_irreducible()}, {"trivial", is_trivial(cp.cocycle)}};
        fail.check(iterative == commutant, "kernel_dim_equals_commutant", iterative, commutant);
        fail.check(R.kernel_dim == commutant, "dense_kernel_dim_equals_commutant", R.kernel_dim, commutant);
        if (is_trivial(cp.cocycle)) fail.check(commutant == n * n, "trivial_commutant_is_n_squared", commutant, n * n);
        if (cfg.generators_file.empty() && cfg.preset == "g2n2d1")
            fail.check(commutant == 1, "irreducible_preset_commutant_is_one", commutant, 1);
        summary["kernel"] = k;
    }

    // iterative vs dense restricted inverse
    {
        std::mt19937_64 rng(sample_seed(cfg.seed, 0, 2));
        double worst = 0.0;
        for (int t = 0; t < cfg.rhs_trials; ++t) {
            const Field h = random_field(rng, E.vertex_dim());
            const Field a = E.delta0_inverse(h), b = R.inverse.apply(h);
            worst = std::max(worst, (a - b).norm() / std::max(b.norm(), 1e-300));
        }
        summary["oracle_inverse"] = {{"trials", cfg.rhs_trials}, {"max_relative_error", worst}};
        fail.check(worst <= tol.oracle, "oracle_inverse", worst, tol.oracle);
    }

    // functional path against dense materialization
    {
        std::mt19937_64 rng(sample_seed(cfg.seed, 0, 3));
        OperatorParams params{random_field(rng, E.face_dim()), random_field(rng, T.face_dim())};
        json m;
        double worst = 0.0;
        for (const auto& name : operator_names()) {
            if (name == "projector" || name == "laplacian") continue;
            const auto op = materialize(name, cp.cocycle, cp.surface, params, cfg.dense_cap);
            double w = 0.0;
            for (int t = 0; t < 20; ++t) {
                const Field x = random_field(rng, op.domain.dim());
                Field f;
                if (name == "dbar") f = E.dbar(x);
                else if (name == "dhol") f = E.dhol(x);
                else if (name == "dbar_adjoint") f = E.dbar_adjoint(x);
                else if (name == "dhol_adjoint") f = E.dhol_adjoint(x);
                else if (name == "interpolate") f = E.interpolate(x);
                else if (name == "ad") f = ad_on_scalar(E, params.nu, x);
                else if (name == "ad_star") f = ad_star(E, params.nu, x);
                else if (name == "mu") f = scale_faces(x, params.mu, E.rank());
                else f = scale_faces(x, params.mu, E.rank(), true);
                const Field g = op.apply(x);
                w = std::max(w, (f - g).norm() / std::max(g.norm(), 1e-300));
            }
            m[name] = w;
            worst = std::max(worst, w);
        }
        summary["materialize"] = m;
        fail.check(worst <= tol.materialize, "materialize_equivalence", worst, tol.materialize);
    }

    Result r;
    r.report = {{"summary", summary}, {"failures", fail.list}};
    r.passed = fail.list.empty();
    return r;
}

// ---------------------------------------------------------------------------

TangentVector draw(const Config& cfg, const CenterPoint& cp, int sample, int slot) {
    auto v = random_tangent(cp, sample_seed(cfg.seed, sample, slot), cfg.tangent_scale, cfg.traceless);
    if (cfg.zero_mu) v.mu.setZero();
    return v;
}

double term_sum_residual(const VariationReport& r) {
    cplx sum = 0.0;
    double scale = 0.0;
    for (const auto& t : r.terms) {
        sum += t.value;
        scale += std::abs(t.value);
    }
    return std::abs(sum - r.total) / std::max(scale, 1e-300);
}

Result second_variation(const Config& cfg, const CenterPoint& cp) {
    const auto& tol = cfg.tol;
    struct Sample {
        json record;
        json failures;
        std::string csv;
    };
    auto one = [&](int s) {
        Failures fail;
        std::vector<TangentVector> v;
        double scale = 1.0;
        for (int i = 0; i < 4; ++i) {
            v.push_back(draw(cfg, cp, s, i));
            scale *= std::sqrt(std::max(0.0, metric_g(cp, v.back(), v.back()).real()));
        }
        const double floor = tol.vanishing * scale + 1e-300;
        const auto u = second_variation_universal(cp, v[0], v[1], v[2], v[3]);
        const auto f = second_variation_fibered(cp, v[0], v[1], v[2], v[3]);
        const auto d = difference_report(cp, v[0], v[1], v[2], v[3]);
        const auto us = second_variation_universal(cp, v[1], v[0], v[3], v[2]);
        const auto fs = second_variation_fibered(cp, v[1], v[0], v[3], v[2]);

        for (const auto* r : {&u, &f, &d}) {
            const double res = term_sum_residual(*r);
            fail.check(res <= tol.term_sum, "term_sum_" + r->system, res, tol.term_sum, s);
            fail.check(r->warnings.empty(), "solver_" + r->system, static_cast<double>(r->warnings.size()), 0, s);
        }
        const double hu = rel_diff(u.total, std::conj(us.total), floor);
        const double hf = rel_diff(f.total, std::conj(fs.total), floor);
        fail.check(hu <= tol.hermitian, "hermitian_universal", hu, tol.hermitian, s);
        fail.check(hf <= tol.hermitian, "hermitian_fibered", hf, tol.hermitian, s);
        const double rec = std::abs(d.total - (u.total - f.total)) /
                           std::max({std::abs(u.total), std::abs(f.total), std::abs(d.total), floor});
        fail.check(rec <= tol.reconcile, "difference_reconciles", rec, tol.reconcile, s);
        fail.check(d.count_sign(-1) == 4, "difference_added_terms", d.count_sign(-1), 4, s);
        fail.check(d.count_sign(+1) == 2, "difference_removed_terms", d.count_sign(+1), 2, s);
        double shared = 0.0;
        for (const auto& t : f.terms)
            if (t.name[0] == 'T') shared = std::max(shared, rel_diff(t.value, u.term(t.name), floor));
        fail.check(shared <= tol.reconcile, "shared_terms_identical", shared, tol.reconcile, s);
        if (cp.cocycle.rank() == 1 && cfg.zero_mu) {
            const double m = std::max(std::abs(u.total), std::abs(f.total));
            fail.check(m <= tol.vanishing, "rank_one_zero_mu_vanishing", m, tol.vanishing, s);
        }

        Sample out;
        json seeds = json::array();
        for (int i = 0; i < 4; ++i) seeds.push_back(sample_seed(cfg.seed, s, i));
        out.record = {{"sample", s},
                      {"seeds", seeds},
                      {"universal", to_json(u)},
                      {"fibered", to_json(f)},
                      {"difference", to_json(d)},
                      {"hermitian_residual", {{"universal", hu}, {"fibered", hf}}},
                      {"reconcile_residual", rec}};
        out.failures = fail.list;
        std::ostringstream csv;
        for (const auto* r : {&u, &f, &d})
            for (const auto& t : r->terms)
                csv << s << ',' << r->system << ',' << t.name << ',' << num(t.value.real()) << ',' << num(t.value.imag())
                    << '\n';
        out.csv = csv.str();
        return out;
    };
    const auto samples = run_pool(cfg.samples, cfg.threads, one);

    // first variation: identical integrals along two code paths
    auto fv = [&](int t) {
        const int s = 1000000 + t;
        const auto dir = draw(cfg, cp, s, 0), v1 = draw(cfg, cp, s, 1), v2 = draw(cfg, cp, s, 2);
        const auto a = first_variation(cp, dir, v1, v2, CoordinateSystem::Universal);
        const auto b = first_variation(cp, dir, v1, v2, CoordinateSystem::Fibered);
        const auto sw = first_variation(cp, dir, v2, v1, CoordinateSystem::Universal);
        return std::array<double, 2>{std::max(rel_diff(a.d_eps, b.d_eps, 1e-300), rel_diff(a.d_eps_bar, b.d_eps_bar, 1e-300)),
                                     rel_diff(a.d_eps_bar, std::conj(sw.d_eps), 1e-300)};
    };
    const auto fvs = run_pool(cfg.first_variation_trials, cfg.threads, fv);
    double fv_agree = 0.0, fv_herm = 0.0;
    for (const auto& x : fvs) {
        fv_agree = std::max(fv_agree, x[0]);
        fv_herm = std::max(fv_herm, x[1]);
    }

    Failures fail;
    Result r;
    json records = json::array();
    std::string csv = "sample,system,term,re,im\n";
    double worst_h = 0.0, worst_rec = 0.0;
    for (const auto& s : samples) {
        fail.merge(s.failures);
        records.push_back(s.record);
        csv += s.csv;
        worst_h = std::max({worst_h, s.record["hermitian_residual"]["universal"].get<double>(),
                            s.record["hermitian_residual"]["fibered"].get<double>()});
        worst_rec = std::max(worst_rec, s.record["reconcile_residual"].get<double>());
    }
    fail.check(fv_agree <= tol.first_variation, "first_variation_agreement", fv_agree, tol.first_variation);
    fail.check(fv_herm <= tol.first_variation, "first_variation_hermitian", fv_herm, tol.first_variation);
    r.report = {{"summary",
                 {{"samples", cfg.samples},
                  {"max_hermitian_residual", worst_h},
                  {"max_reconcile_residual", worst_rec},
                  {"first_variation", {{"trials", cfg.first_variation_trials},
                                       {"max_agreement_residual", fv_agree},
                                       {"max_hermitian_residual", fv_herm}}}}},
                {"failures", fail.list},
                {"samples", records}};
    r.passed = fail.list.empty();
    r.artifacts["terms.csv"] = csv;
    return r;
}

// ---------------------------------------------------------------------------

Result positivity(const Config& cfg, const CenterPoint& cp) {
    const auto& tol = cfg.tol;
    const TangentVector zero = random_tangent(cp, 0, 0.0);
    struct Sample {
        json record, failures;
        std::string csv, tsv;
    };
    auto one = [&](int s) {
        Failures fail;
        const auto a = draw(cfg, cp, s, 0), b = random_tangent(cp, sample_seed(cfg.seed, s, 1), cfg.tangent_scale);
        const Field& nu1 = a.nu;
        const Beltrami& mu2 = b.mu;
        const auto c = positivity_certificate(cp, mu2, nu1);
        const TangentVector v1{zero.mu, nu1}, v2{mu2, zero.nu};
        const auto d = difference_report(cp, v1, v2, v2, v1);
        const double scale = std::abs(c.term_a) + std::abs(c.term_b);
        const double nprod = cp.tangent.norm_face(mu2) * cp.end.norm_face(nu1);
        fail.check(c.term_a >= -tol.psd * scale, "term_a_nonnegative", c.term_a, -tol.psd * scale, s);
        fail.check(c.term_b > 0.0, "term_b_positive", c.term_b, 0.0, s);
        fail.check(c.total > 0.0, "total_positive", c.total, 0.0, s);
        const double ia = std::abs(c.imag_a) / std::max(scale, 1e-300), ib = std::abs(c.imag_b) / std::max(scale, 1e-300);
        fail.check(ia <= tol.real_part, "term_a_real", ia, tol.real_part, s);
        fail.check(ib <= tol.real_part, "term_b_real", ib, tol.real_part, s);
        const double dim = std::abs(d.total.imag()) / std::max(std::abs(d.total), 1e-300);
        fail.check(dim <= tol.real_part, "restricted_difference_real", dim, tol.real_part, s);
        fail.check(d.total.real() > 0.0, "restricted_difference_positive", d.total.real(), 0.0, s);
        const double rec = std::abs(d.total.real() - c.total) / std::max(std::abs(c.total), 1e-300);
        fail.check(rec <= tol.reconcile, "certificate_matches_difference", rec, tol.reconcile, s);

        Sample out;
        const std::uint64_t seed = sample_seed(cfg.seed, s, 0);
        out.record = {{"sample", s},
                      {"seeds", {seed, sample_seed(cfg.seed, s, 1)}},
                      {"term_a", c.term_a},
                      {"term_b", c.term_b},
                      {"total", c.total},
                      {"imag_a", c.imag_a},
                      {"imag_b", c.imag_b},
                      {"restricted_difference", cjson(d.total)},
                      {"norm_product", nprod},
                      {"solver", {{"solves", c.solver.solves}, {"max_residual", c.solver.max_residual}}}};
        out.failures = fail.list;
        out.csv = std::to_string(seed) + ',' + num(c.term_a) + ',' + num(c.term_b) + ',' + num(c.total) + '\n';
        out.tsv = num(nprod) + '\t' + num(c.total) + '\n';
        return out;
    };
    const auto samples = run_pool(cfg.samples, cfg.threads, one);

    Failures fail;
    const auto a = draw(cfg, cp, 0, 0);
    const auto z1 = positivity_certificate(cp, a.mu, zero.nu);
    const auto z2 = positivity_certificate(cp, zero.mu, a.nu);
    fail.check(z1.total == 0.0 && z1.term_a == 0.0 && z1.term_b == 0.0, "zero_nu_gives_zero", z1.total, 0.0);
    fail.check(z2.total == 0.0 && z2.term_a == 0.0 && z2.term_b == 0.0, "zero_mu_gives_zero", z2.total, 0.0);

    json records = json::array();
    std::string csv = "seed,term_a,term_b,total\n", tsv = "# norm_product\ttotal\n";
    double min_total = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        fail.merge(s.failures);
        records.push_back(s.record);
        csv += s.csv;
        tsv += s.tsv;
        min_total = std::min(min_total, s.record["total"].get<double>());
    }
    Result r;
    r.report = {{"summary", {{"samples", cfg.samples}, {"min_total", cfg.samples ? json(min_total) : json(nullptr)}}},
                {"failures", fail.list},
                {"samples", records}};
    r.passed = fail.list.empty();
    r.artifacts["positivity.csv"] = csv;
    r.artifacts["plotdata.tsv"] = tsv;
    return r;
}

// ---------------------------------------------------------------------------

Result projector_derivative(const Config& cfg, const CenterPoint& cp) {
    const auto& tol = cfg.tol;
    const auto& E = cp.end;
    // index of the step where the error bound is asserted
    int at = -1;
    for (size_t i = 0; i < cfg.steps.size(); ++i)
        if (std::abs(std::log(cfg.steps[i] / tol.fd_step)) < 1e-9) at = static_cast<int>(i);

    struct Sample {
        json record, failures;
        std::string tsv;
    };
    auto one = [&](int s) {
        Failures fail;
        const std::uint64_t seed = sample_seed(cfg.seed, s, 0);
        const Mat A = random_dbar_perturbation(E, seed, cfg.perturbation_scale);
        const auto c = projector_derivative_check(E, A, cfg.steps, cfg.dense_cap);
        if (at >= 0) fail.check(c.errors[at] <= tol.fd_error, "fd_error_at_step", c.errors[at], tol.fd_error, s);
        fail.check(std::abs(c.slope - 2.0) <= tol.slope, "fd_slope", c.slope, tol.slope, s);
        fail.check(c.orthogonality <= tol.orthogonality, "harmonic_orthogonality", c.orthogonality, tol.orthogonality, s);
        Sample out;
        out.record = {{"sample", s}, {"seed", seed},           {"steps", c.steps},
                      {"errors", c.errors}, {"slope", c.slope}, {"orthogonality", c.orthogonality}};
        out.failures = fail.list;
        for (size_t i = 0; i < c.steps.size(); ++i)
            out.tsv += std::to_string(s) + '\t' + num(c.steps[i]) + '\t' + num(c.errors[i]) + '\n';
        return out;
    };
    const auto samples = run_pool(cfg.samples, cfg.threads, one);

    Failures fail;
    const auto zero = projector_derivative_check(E, random_dbar_perturbation(E, 0, 0.0), cfg.steps, cfg.dense_cap);
    const double zmax = *std::max_element(zero.errors.begin(), zero.errors.end());
    fail.check(zmax == 0.0, "zero_perturbation_error", zmax, 0.0);
    json records = json::array();
    std::string tsv = "# sample\tstep\terror\n";
    double worst_slope = 0.0, worst_err = 0.0;
    for (const auto& s : samples) {
        fail.merge(s.failures);
        records.push_back(s.record);
        tsv += s.tsv;
        worst_slope = std::max(worst_slope, std::abs(s.record["slope"].get<double>() - 2.0));
        if (at >= 0) worst_err = std::max(worst_err, s.record["errors"][at].get<double>());
    }
    Result r;
    r.report = {{"summary",
                 {{"samples", cfg.samples},
                  {"asserted_step", at >= 0 ? json(cfg.steps[at]) : json(nullptr)},
                  {"max_error_at_step", at >= 0 ? json(worst_err) : json(nullptr)},
                  {"max_slope_deviation", worst_slope},
                  {"zero_perturbation_error", zmax}}},
                {"failures", fail.list},
                {"samples", records}};
    r.passed = fail.list.empty();
    r.artifacts["plotdata.tsv"] = tsv;
    return r;
}

// ---------------------------------------------------------------------------
// config parsing

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        config_error(where + key + ": wrong type");
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) config_error(where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (std::find_if(known.begin(), known.end(), [&](const char* s) { return k == s; }) == known.end())
            config_error("unknown key '" + where + k + "'");
    }
}

}  // namespace

std::vector<std::string> commands() { return {"check_operators", "second_variation", "positivity", "projector_derivative"}; }

json to_json(const VariationReport& r) {
    json terms = json::array();
    for (const auto& t : r.terms) {
        json o = {{"name", t.name}, {"formula", t.formula}, {"re", t.value.real()}, {"im", t.value.imag()}};
        if (r.system == "difference") o["sign"] = t.sign;
        terms.push_back(std::move(o));
    }
    return {{"system", r.system},
            {"terms", terms},
            {"total", cjson(r.total)},
            {"inputs_digest", r.inputs_digest},
            {"input_norms", r.input_norms},
            {"conventions_digest", r.conventions_digest},
            {"solver_stats",
             {{"solves", r.solver.solves},
              {"max_iterations", r.solver.max_iterations},
              {"max_residual", r.solver.max_residual},
              {"max_kernel_component", r.solver.max_kernel_component},
              {"dense_fallback", r.solver.dense_fallback}}},
            {"warnings", r.warnings}};
}

Config parse_config(const json& j, const std::string& command) {
    Config c;
    const auto cmds = commands();
    if (std::find(cmds.begin(), cmds.end(), command) == cmds.end()) config_error("unknown command '" + command + "'");
    c.command = command;
    if (j.is_null()) return c;
    reject_unknown(j,
                   {"command", "mesh", "bundle", "seed", "samples", "threads", "trials", "rhs_trials",
                    "first_variation_trials", "zero_mu", "traceless", "tangent_scale", "steps", "perturbation_scale",
                    "dense_cap", "solver", "tolerances"},
                   "");
    if (j.contains("command") && get<std::string>(j, "command", "") != command)
        config_error("config is for command '" + j["command"].get<std::string>() + "'");
    if (j.contains("mesh")) {
        const auto& m = j["mesh"];
        reject_unknown(m, {"genus", "refinements", "layout", "density", "file"}, "mesh.");
        if (m.contains("file")) {
            c.mesh_file = get<std::string>(m, "file", "mesh.");
            c.refinements = 0;
            // mesh files carry no polygon chart
            c.layout = LayoutPolicy::Equilateral;
            c.density = DensityPolicy::Uniform;
            if (!std::filesystem::exists(c.mesh_file)) config_error("mesh.file: '" + c.mesh_file + "' does not exist");
        }
        if (m.contains("genus")) c.genus = get<int>(m, "genus", "mesh.");
        if (m.contains("refinements")) c.refinements = get<int>(m, "refinements", "mesh.");
        try {
            if (m.contains("layout")) c.layout = parse_layout(get<std::string>(m, "layout", "mesh."));
            if (m.contains("density")) c.density = parse_density(get<std::string>(m, "density", "mesh."));
        } catch (const Error& e) {
            config_error(std::string("mesh: ") + e.what());
        }
    }
    if (j.contains("bundle")) {
        const auto& b = j["bundle"];
        reject_unknown(b, {"preset", "generators", "rank", "degree"}, "bundle.");
        if (b.contains("rank")) c.rank = get<int>(b, "rank", "bundle.");
        if (b.contains("degree")) c.degree = get<int>(b, "degree", "bundle.");
        if (b.contains("rank") && c.rank < 1) config_error("bundle.rank must be >= 1");
        if (b.contains("preset") && b.contains("generators")) config_error("bundle: give either preset or generators");
        if (b.contains("preset")) c.preset = get<std::string>(b, "preset", "bundle.");
        if (b.contains("generators")) {
            c.generators_file = get<std::string>(b, "generators", "bundle.");
            if (!std::filesystem::exists(c.generators_file))
                config_error("bundle.generators: '" + c.generators_file + "' does not exist");
        }
    }
    if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", "");
    if (j.contains("samples")) c.samples = get<int>(j, "samples", "");
    if (j.contains("threads")) c.threads = get<int>(j, "threads", "");
    if (j.contains("trials")) c.trials = get<int>(j, "trials", "");
    if (j.contains("rhs_trials")) c.rhs_trials = get<int>(j, "rhs_trials", "");
    if (j.contains("first_variation_trials")) c.first_variation_trials = get<int>(j, "first_variation_trials", "");
    if (j.contains("zero_mu")) c.zero_mu = get<bool>(j, "zero_mu", "");
    if (j.contains("traceless")) c.traceless = get<bool>(j, "traceless", "");
    if (j.contains("tangent_scale")) c.tangent_scale = get<double>(j, "tangent_scale", "");
    if (j.contains("steps")) c.steps = get<std::vector<double>>(j, "steps", "");
    if (j.contains("perturbation_scale")) c.perturbation_scale = get<double>(j, "perturbation_scale", "");
    if (j.contains("dense_cap")) c.dense_cap = get<Eigen::Index>(j, "dense_cap", "");
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        reject_unknown(s, {"mode", "tolerance", "max_iteration_factor", "dense_limit"}, "solver.");
        if (s.contains("mode")) {
            const auto m = get<std::string>(s, "mode", "solver.");
            if (m == "auto") c.solver.mode = SolverMode::Auto;
            else if (m == "iterative") c.solver.mode = SolverMode::Iterative;
            else if (m == "dense") c.solver.mode = SolverMode::Dense;
            else config_error("solver.mode: expected auto, iterative or dense");
        }
        if (s.contains("tolerance")) c.solver.tolerance = get<double>(s, "tolerance", "solver.");
        if (s.contains("max_iteration_factor")) c.solver.max_iteration_factor = get<int>(s, "max_iteration_factor", "solver.");
        if (s.contains("dense_limit")) c.solver.dense_limit = get<int>(s, "dense_limit", "solver.");
    }
    if (j.contains("tolerances")) {
        const auto& t = j["tolerances"];
        const std::pair<const char*, double*> table[] = {
            {"projector", &c.tol.projector},     {"adjoint", &c.tol.adjoint},
            {"oracle", &c.tol.oracle},           {"materialize", &c.tol.materialize},
            {"first_variation", &c.tol.first_variation}, {"term_sum", &c.tol.term_sum},
            {"hermitian", &c.tol.hermitian},     {"reconcile", &c.tol.reconcile},
            {"real_part", &c.tol.real_part},     {"psd", &c.tol.psd},
            {"vanishing", &c.tol.vanishing},     {"fd_error", &c.tol.fd_error},
            {"fd_step", &c.tol.fd_step},         {"slope", &c.tol.slope},
            {"orthogonality", &c.tol.orthogonality}};
        if (!t.is_object()) config_error("tolerances must be an object");
        for (const auto& [k, v] : t.items()) {
            double* slot = nullptr;
            for (const auto& [name, p] : table)
                if (k == name) slot = p;
            if (!slot) config_error("unknown key 'tolerances." + k + "'");
            if (!v.is_number()) config_error("tolerances." + k + ": wrong type");
            *slot = v.get<double>();
        }
    }

    // validation
    if (c.mesh_file.empty() && c.genus < 2) config_error("mesh.genus must be >= 2");
    if (c.refinements < 0 || c.refinements > 4) config_error("mesh.refinements must be in [0, 4]");
    if (c.samples < 0 || c.trials < 0 || c.rhs_trials < 0 || c.first_variation_trials < 0)
        config_error("sample and trial counts must be >= 0");
    if (c.threads < 1 || c.threads > 256) config_error("threads must be in [1, 256]");
    if (!(c.tangent_scale > 0.0)) config_error("tangent_scale must be > 0");
    if (!(c.perturbation_scale > 0.0)) config_error("perturbation_scale must be > 0");
    if (c.dense_cap < 1) config_error("dense_cap must be >= 1");
    if (c.steps.size() < 2) config_error("steps needs at least two values");
    for (double s : c.steps)
        if (!(s > 0.0)) config_error("steps must be > 0");
    if (!(c.solver.tolerance > 0.0)) config_error("solver.tolerance must be > 0");
    if (c.solver.max_iteration_factor < 1 || c.solver.dense_limit < 0) config_error("solver limits out of range");
    for (double t : {c.tol.projector, c.tol.adjoint, c.tol.oracle, c.tol.materialize, c.tol.first_variation,
                     c.tol.term_sum, c.tol.hermitian, c.tol.reconcile, c.tol.real_part, c.tol.psd, c.tol.vanishing,
                     c.tol.fd_error, c.tol.fd_step, c.tol.slope, c.tol.orthogonality})
        if (!(t > 0.0)) config_error("tolerances must be > 0");
    return c;
}

CenterPoint build_center(const Config& c) {
    HalfEdgeMesh mesh = c.mesh_file.empty() ? build_polygon_gluing(c.genus) : load_mesh(c.mesh_file);
    for (int i = 0; i < c.refinements; ++i) mesh = refine(mesh);
    if (!c.mesh_file.empty() && c.genus != mesh.genus() && c.genus != 2)
        config_error("mesh.genus disagrees with the mesh file");
    const auto S = equip_conformal(mesh, c.layout, c.density);
    int n, d, marked = 0;
    std::vector<Mat> gens;
    if (!c.generators_file.empty()) {
        std::ifstream in(c.generators_file);
        if (!in) config_error("cannot open " + c.generators_file);
        const auto g = load_generators(in);
        n = g.rank;
        d = g.degree;
        marked = g.marked_face;
        gens = ordered_generators(g, mesh.genus());
    } else {
        int genus;
        preset_generators(c.preset, genus, n, d, gens);
        if (genus != mesh.genus())
            config_error("preset " + c.preset + " is for genus " + std::to_string(genus) + ", mesh has genus " +
                         std::to_string(mesh.genus()));
    }
    if ((c.rank > 0 && c.rank != n) || (c.degree >= 0 && c.degree != d))
        config_error("bundle rank/degree do not match the generators (n=" + std::to_string(n) + ", d=" +
                     std::to_string(d) + ")");
    return make_center(S, UnitaryCocycle::from_generators(mesh, n, d, gens, marked), c.solver);
}

Result run(const Config& c) {
    const CenterPoint cp = build_center(c);
    Result r;
    if (c.command == "check_operators") r = check_operators(c, cp);
    else if (c.command == "second_variation") r = second_variation(c, cp);
    else if (c.command == "positivity") r = positivity(c, cp);
    else r = projector_derivative(c, cp);
    json report = {{"command", c.command}, {"passed", r.passed}, {"center", center_json(c, cp)}, {"config", config_json(c)}};
    for (auto& [k, v] : r.report.items()) report[k] = v;
    r.report = std::move(report);
    return r;
}

}  // namespace unimod::experiment
