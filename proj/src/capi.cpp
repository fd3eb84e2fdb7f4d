#include "unimod/unimod.h"

#include <cstring>
#include <memory>

#include "experiment.hpp"
#include "unimod/error.hpp"
#include "unimod/variation.hpp"

struct unimod_center {
    unimod::CenterPoint cp;
};
struct unimod_tangent {
    unimod::TangentVector v;
};

namespace {

thread_local std::string last_error;

unimod_status status_of(unimod::ErrorKind k) {
    using K = unimod::ErrorKind;
    switch (k) {
        case K::InvalidArgument: return UNIMOD_ERR_INVALID_ARGUMENT;
        case K::Parse: return UNIMOD_ERR_PARSE;
        case K::Validation: return UNIMOD_ERR_VALIDATION;
        case K::UnsupportedGenus: return UNIMOD_ERR_UNSUPPORTED_GENUS;
        case K::Chart: return UNIMOD_ERR_CHART;
        case K::RelationMismatch: return UNIMOD_ERR_RELATION_MISMATCH;
        case K::Solver: return UNIMOD_ERR_SOLVER;
        case K::DenseCap: return UNIMOD_ERR_DENSE_CAP;
        case K::Io: return UNIMOD_ERR_IO;
        case K::Config: return UNIMOD_ERR_CONFIG;
    }
    return UNIMOD_ERR_INTERNAL;
}

template <class F>
unimod_status guard(F&& f) {
    try {
        f();
        last_error.clear();
        return UNIMOD_OK;
    } catch (const unimod::Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const nlohmann::json::exception& e) {
        last_error = std::string("config: ") + e.what();
        return UNIMOD_ERR_CONFIG;
    } catch (const std::exception& e) {
        last_error = e.what();
        return UNIMOD_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown failure";
        return UNIMOD_ERR_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw unimod::Error(unimod::ErrorKind::InvalidArgument, what);
}

char* dup(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

}  // namespace

extern "C" {

const char* unimod_version(void) { return "0.1.0"; }
const char* unimod_last_error(void) { return last_error.c_str(); }

const char* unimod_status_name(unimod_status s) {
    switch (s) {
        case UNIMOD_OK: return "ok";
        case UNIMOD_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case UNIMOD_ERR_PARSE: return "parse";
        case UNIMOD_ERR_VALIDATION: return "validation";
        case UNIMOD_ERR_UNSUPPORTED_GENUS: return "unsupported_genus";
        case UNIMOD_ERR_CHART: return "chart";
        case UNIMOD_ERR_RELATION_MISMATCH: return "relation_mismatch";
        case UNIMOD_ERR_SOLVER: return "solver";
        case UNIMOD_ERR_DENSE_CAP: return "dense_cap";
        case UNIMOD_ERR_IO: return "io";
        case UNIMOD_ERR_CONFIG: return "config";
        case UNIMOD_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

unimod_status unimod_center_create_preset(const char* preset, int refinements, unimod_center** out) {
    return guard([&] {
        require(preset && out, "null argument");
        *out = nullptr;
        unimod::experiment::json j = {{"mesh", {{"refinements", refinements}}}, {"bundle", {{"preset", preset}}}};
        const auto cfg = unimod::experiment::parse_config(j, "check_operators");
        *out = new unimod_center{unimod::experiment::build_center(cfg)};
    });
}

unimod_status unimod_center_create_config(const char* config_json, unimod_center** out) {
    return guard([&] {
        require(config_json && out, "null argument");
        *out = nullptr;
        auto j = unimod::experiment::json::parse(config_json);
        j.erase("command");
        const auto cfg = unimod::experiment::parse_config(j, "check_operators");
        *out = new unimod_center{unimod::experiment::build_center(cfg)};
    });
}

void unimod_center_destroy(unimod_center* c) { delete c; }

unimod_status unimod_center_info_get(const unimod_center* c, unimod_center_info* out) {
    return guard([&] {
        require(c && out, "null argument");
        out->genus = c->cp.surface.mesh().genus();
        out->vertices = c->cp.surface.num_vertices();
        out->faces = c->cp.surface.num_faces();
        out->rank = c->cp.cocycle.rank();
        out->degree = c->cp.cocycle.degree();
        out->commutant_dim = c->cp.cocycle.commutant_dim();
        out->kernel_dim = static_cast<int>(c->cp.end.kernel_basis().size());
    });
}

unimod_status unimod_tangent_random(const unimod_center* c, uint64_t seed, double scale, int traceless,
                                    unimod_tangent** out) {
    return guard([&] {
        require(c && out, "null argument");
        *out = nullptr;
        *out = new unimod_tangent{unimod::random_tangent(c->cp, seed, scale, traceless != 0)};
    });
}

void unimod_tangent_destroy(unimod_tangent* t) { delete t; }

unimod_status unimod_metric(const unimod_center* c, const unimod_tangent* v1, const unimod_tangent* v2, double* re,
                            double* im) {
    return guard([&] {
        require(c && v1 && v2 && re && im, "null argument");
        const auto g = unimod::metric_g(c->cp, v1->v, v2->v);
        *re = g.real();
        *im = g.imag();
    });
}

unimod_status unimod_second_variation(const unimod_center* c, unimod_system system, const unimod_tangent* v1,
                                      const unimod_tangent* v2, const unimod_tangent* v3, const unimod_tangent* v4,
                                      double* re, double* im, char** report_json) {
    return guard([&] {
        require(c && v1 && v2 && v3 && v4 && re && im, "null argument");
        unimod::VariationReport r;
        switch (system) {
            case UNIMOD_UNIVERSAL: r = unimod::second_variation_universal(c->cp, v1->v, v2->v, v3->v, v4->v); break;
            case UNIMOD_FIBERED: r = unimod::second_variation_fibered(c->cp, v1->v, v2->v, v3->v, v4->v); break;
            case UNIMOD_DIFFERENCE: r = unimod::difference_report(c->cp, v1->v, v2->v, v3->v, v4->v); break;
            default: require(false, "unknown system");
        }
        *re = r.total.real();
        *im = r.total.imag();
        if (report_json) *report_json = dup(unimod::experiment::to_json(r).dump(2));
    });
}

unimod_status unimod_positivity(const unimod_center* c, const unimod_tangent* v2, const unimod_tangent* v1,
                                double* term_a, double* term_b, double* total) {
    return guard([&] {
        require(c && v1 && v2 && term_a && term_b && total, "null argument");
        const auto p = unimod::positivity_certificate(c->cp, v2->v.mu, v1->v.nu);
        *term_a = p.term_a;
        *term_b = p.term_b;
        *total = p.total;
    });
}

unimod_status unimod_run(const char* command, const char* config_json, char** out_json, int* passed) {
    return guard([&] {
        require(command && out_json && passed, "null argument");
        *out_json = nullptr;
        *passed = 0;
        unimod::experiment::json j;
        if (config_json && *config_json) j = unimod::experiment::json::parse(config_json);
        const auto cfg = unimod::experiment::parse_config(j, command);
        const auto r = unimod::experiment::run(cfg);
        unimod::experiment::json out = {{"report", r.report}, {"artifacts", r.artifacts}};
        *out_json = dup(out.dump(2));
        *passed = r.passed ? 1 : 0;
    });
}

void unimod_string_free(char* s) { std::free(s); }

}  // extern "C"
