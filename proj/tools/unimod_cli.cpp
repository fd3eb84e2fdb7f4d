// unimod command line: thin wrapper over unimod_run.
//
// exit codes: 0 all assertions held, 1 an assertion or the solver failed, 2 bad config or input.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "unimod/unimod.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<long long> dense_cap;
    std::optional<double> tol;
    std::optional<std::string> density;
    std::optional<int> samples;
    std::optional<int> threads;
    std::optional<std::string> out;
};

int exit_code(unimod_status s) {
    switch (s) {
        case UNIMOD_OK: return 0;
        case UNIMOD_ERR_SOLVER: return 1;
        default: return 2;
    }
}

int run(const std::string& command, const Options& o) {
    json cfg = json::object();
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) {
            std::cerr << "error: cannot open config " << o.config << "\n";
            return 2;
        }
        try {
            in >> cfg;
        } catch (const json::exception& e) {
            std::cerr << "error: " << o.config << ": " << e.what() << "\n";
            return 2;
        }
        if (!cfg.is_object()) {
            std::cerr << "error: config must be a JSON object\n";
            return 2;
        }
        // relative file references resolve against the config's directory
        const fs::path base = fs::path(o.config).parent_path();
        auto rebase = [&](json& section, const char* key) {
            if (section.is_object() && section.contains(key) && section[key].is_string()) {
                const fs::path p = section[key].get<std::string>();
                if (p.is_relative()) section[key] = (base / p).string();
            }
        };
        if (cfg.contains("mesh")) rebase(cfg["mesh"], "file");
        if (cfg.contains("bundle")) rebase(cfg["bundle"], "generators");
    }
    // the output directory is CLI plumbing, not part of the experiment
    std::string out_dir = "out";
    if (cfg.contains("out")) {
        if (!cfg["out"].is_string()) {
            std::cerr << "error (config): out must be a string\n";
            return 2;
        }
        out_dir = (fs::path(o.config).parent_path() / cfg["out"].get<std::string>()).string();
        cfg.erase("out");
    }
    if (o.out) out_dir = *o.out;
    if (o.seed) cfg["seed"] = *o.seed;
    if (o.samples) cfg["samples"] = *o.samples;
    if (o.threads) cfg["threads"] = *o.threads;
    if (o.dense_cap) cfg["dense_cap"] = *o.dense_cap;
    if (o.tol) cfg["solver"]["tolerance"] = *o.tol;
    if (o.density) cfg["mesh"]["density"] = *o.density;

    char* out = nullptr;
    int passed = 0;
    const unimod_status s = unimod_run(command.c_str(), cfg.dump().c_str(), &out, &passed);
    if (s != UNIMOD_OK) {
        std::cerr << "error (" << unimod_status_name(s) << "): " << unimod_last_error() << "\n";
        return exit_code(s);
    }
    const json result = json::parse(out);
    unimod_string_free(out);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        std::cerr << "error: cannot create " << out_dir << ": " << ec.message() << "\n";
        return 2;
    }
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        f << text;
        return static_cast<bool>(f);
    };
    if (!write("report.json", result["report"].dump(2) + "\n")) {
        std::cerr << "error: cannot write report.json\n";
        return 2;
    }
    for (const auto& [name, text] : result["artifacts"].items())
        if (!write(name, text.get<std::string>())) {
            std::cerr << "error: cannot write " << name << "\n";
            return 2;
        }

    const auto& report = result["report"];
    std::cout << command << ": " << (passed ? "PASS" : "FAIL") << "  (" << report["failures"].size()
              << " failed checks, report in " << (fs::path(out_dir) / "report.json").string() << ")\n";
    for (const auto& f : report["failures"]) {
        std::cout << "  " << f["check"].get<std::string>();
        if (f.contains("sample")) std::cout << " [sample " << f["sample"] << "]";
        std::cout << ": " << f["value"] << " vs " << f["tolerance"] << "\n";
    }
    return passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete checks of the variational formulas on the universal moduli space of pairs"};
    app.set_version_flag("--version", std::string(unimod_version()));
    app.require_subcommand(1);

    Options o;
    const std::pair<const char*, const char*> subs[] = {
        {"check-operators", "projector identities, adjointness, kernel dimensions, dense oracle"},
        {"second-variation", "universal and fibered second variations, term tables and reconciliation"},
        {"positivity", "positivity certificate for the curvature difference"},
        {"projector-derivative", "finite-difference check of the harmonic projector derivative"},
    };
    for (const auto& [name, help] : subs) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "base seed");
        sub->add_option("--samples", o.samples, "number of random samples");
        sub->add_option("--threads", o.threads, "worker threads");
        sub->add_option("--out", o.out, "output directory (default: out)");
        sub->add_option("--dense-cap", o.dense_cap, "largest dimension materialized densely");
        sub->add_option("--tol", o.tol, "relative residual tolerance of the iterative solver");
        sub->add_option("--density", o.density, "conformal density: hyperbolic or uniform");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    for (const auto* sub : app.get_subcommands()) {
        std::string command = sub->get_name();
        for (char& ch : command)
            if (ch == '-') ch = '_';
        return run(command, o);
    }
    return 2;
}
