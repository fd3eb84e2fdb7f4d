#pragma once

// Batch experiments behind the C API. Internal header: not installed.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "unimod/variation.hpp"

namespace unimod::experiment {

using json = nlohmann::ordered_json;

struct Tolerances {
    double projector = 1e-8;        // operator-norm projector identities
    double adjoint = 1e-10;         // adjointness residuals
    double oracle = 1e-8;           // iterative vs dense restricted inverse
    double materialize = 1e-12;     // functional path vs dense materialization
    double first_variation = 1e-12;
    double term_sum = 1e-12;
    double hermitian = 1e-8;
    double reconcile = 1e-10;
    double real_part = 1e-10;       // imaginary parts relative to the real total
    double psd = 1e-12;             // term_a >= -psd * scale
    double vanishing = 1e-12;
    double fd_error = 1e-6;
    double fd_step = 1e-4;          // step at which fd_error is asserted
    double slope = 0.2;
    double orthogonality = 1e-10;
};

struct Config {
    std::string command;
    int genus = 2;
    int refinements = 2;
    LayoutPolicy layout = LayoutPolicy::Polygon;
    DensityPolicy density = DensityPolicy::Hyperbolic;
    std::string mesh_file;
    std::string preset = "g2n2d1";
    std::string generators_file;
    int rank = 0;    // 0: taken from the preset or file
    int degree = -1; // -1: taken from the preset or file
    std::uint64_t seed = 1;
    int samples = 8;
    int threads = 1;
    int trials = 1000;
    int rhs_trials = 100;
    int first_variation_trials = 200;
    bool zero_mu = false;
    bool traceless = false;
    double tangent_scale = 1.0;
    std::vector<double> steps = {1e-3, 1e-4, 1e-5};
    double perturbation_scale = 1.0;
    Eigen::Index dense_cap = 6000;
    SolverOptions solver;
    Tolerances tol;
};

/// Throws Error(Config) on unknown keys, bad values or missing files.
Config parse_config(const json& j, const std::string& command);

/// Builds the center point described by the config.
CenterPoint build_center(const Config& c);

struct Result {
    json report;
    bool passed = false;
    std::map<std::string, std::string> artifacts;  // file name -> contents
};

Result run(const Config& c);
std::vector<std::string> commands();

json to_json(const VariationReport& r);

}  // namespace unimod::experiment
