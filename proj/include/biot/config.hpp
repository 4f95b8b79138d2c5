#pragma once

// JSON run configuration. Validation failures throw ConfigError naming the
// offending field.

#include <json.hpp>
#include <optional>
#include <string>

#include "biot/adapt.hpp"
#include "biot/io.hpp"

namespace biot {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string problem = "manufactured"; // manufactured | manufactured_incompressible |
                                          // lshape | external
    std::string mesh_file;                // external only
    Vec2 f_const{0.0, 0.0};               // external only
    double g_const = 0.0;                 // external only

    BiotParameters params;
    ReliabilityConstants constants; // C_F <= 0 means "default" (diam/pi)
    bool constants_default_CF = true;

    RefineMode mode = RefineMode::adaptive;
    double dorfler_theta = 0.5;
    int max_levels = 4;
    long max_dofs = 2000000;
    int prerefine = 0;

    std::string reference = "auto"; // auto | exact | overkill | none
    std::string output_dir = ".";
    bool export_csv = true;
    bool export_vtk = false;
    bool export_indicator_dump = false;
    bool inject_fault = false;
    int n_threads = 1;
};

namespace detail {

template <class T>
T get_field(const nlohmann::json& j, const char* name, T fallback) {
    if (!j.contains(name)) return fallback;
    try {
        return j.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config field '") + name + "' has the wrong type");
    }
}

} // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig c;
    c.problem = detail::get_field<std::string>(j, "problem", c.problem);
    if (c.problem != "manufactured" && c.problem != "manufactured_incompressible" &&
        c.problem != "lshape" && c.problem != "external")
        throw ConfigError("config field 'problem' must be one of manufactured, "
                          "manufactured_incompressible, lshape, external");
    c.mesh_file = detail::get_field<std::string>(j, "mesh_file", c.mesh_file);
    if (c.problem == "external" && c.mesh_file.empty())
        throw ConfigError("config field 'mesh_file' is required for problem = external");

    if (j.contains("source")) {
        const auto& s = j.at("source");
        if (s.contains("f")) {
            const auto fv = s.at("f");
            if (!fv.is_array() || fv.size() != 2)
                throw ConfigError("config field 'source.f' must be an array [fx, fy]");
            c.f_const = {fv[0].get<double>(), fv[1].get<double>()};
        }
        c.g_const = detail::get_field<double>(s, "g", c.g_const);
    }

    if (j.contains("params")) {
        const auto& p = j.at("params");
        c.params.mu = detail::get_field<double>(p, "mu", c.params.mu);
        c.params.tau = detail::get_field<double>(p, "tau", c.params.tau);
        if (p.contains("lambda_inv")) {
            c.params.lambda_inv = p.at("lambda_inv").get<double>();
        } else if (p.contains("lambda")) {
            const double lam = p.at("lambda").get<double>();
            if (!(lam > 0.0)) throw ConfigError("config field 'params.lambda' must be > 0");
            c.params.lambda_inv = 1.0 / lam;
        }
        if (!(c.params.mu > 0.0)) throw ConfigError("config field 'params.mu' must be > 0");
        if (!(c.params.tau > 0.0)) throw ConfigError("config field 'params.tau' must be > 0");
        if (!(c.params.lambda_inv >= 0.0))
            throw ConfigError("config field 'params.lambda_inv' must be >= 0");
    }

    if (j.contains("constants")) {
        const auto& k = j.at("constants");
        const auto getc = [&](const char* name, double fallback, bool* isdef = nullptr) {
            if (!k.contains(name)) return fallback;
            const auto& v = k.at(name);
            if (v.is_string() && v.get<std::string>() == "default") return fallback;
            if (isdef) *isdef = false;
            const double d = v.get<double>();
            if (!(d > 0.0))
                throw ConfigError(std::string("config field 'constants.") + name + "' must be > 0");
            return d;
        };
        c.constants.C_K = getc("C_K", c.constants.C_K);
        c.constants.C_D = getc("C_D", c.constants.C_D);
        c.constants.C_F = getc("C_F", c.constants.C_F, &c.constants_default_CF);
        c.constants.user_supplied = true;
    }

    if (j.contains("adapt")) {
        const auto& a = j.at("adapt");
        const std::string mode = detail::get_field<std::string>(a, "mode", "adaptive");
        if (mode == "uniform")
            c.mode = RefineMode::uniform;
        else if (mode == "adaptive")
            c.mode = RefineMode::adaptive;
        else
            throw ConfigError("config field 'adapt.mode' must be uniform or adaptive");
        c.dorfler_theta = detail::get_field<double>(a, "dorfler_theta", c.dorfler_theta);
        if (!(c.dorfler_theta > 0.0 && c.dorfler_theta <= 1.0))
            throw ConfigError("config field 'adapt.dorfler_theta' must be in (0, 1]");
        c.max_levels = detail::get_field<int>(a, "max_levels", c.max_levels);
        if (c.max_levels < 1) throw ConfigError("config field 'adapt.max_levels' must be >= 1");
        c.max_dofs = detail::get_field<long>(a, "max_dofs", c.max_dofs);
        if (c.max_dofs < 1) throw ConfigError("config field 'adapt.max_dofs' must be >= 1");
    }

    c.prerefine = detail::get_field<int>(j, "prerefine", 0);
    if (c.prerefine < 0 || c.prerefine > 12)
        throw ConfigError("config field 'prerefine' must be in [0, 12]");

    c.reference = detail::get_field<std::string>(j, "reference", c.reference);
    if (c.reference != "auto" && c.reference != "exact" && c.reference != "overkill" &&
        c.reference != "none")
        throw ConfigError("config field 'reference' must be auto, exact, overkill or none");
    if (c.reference == "exact" && c.problem != "manufactured" &&
        c.problem != "manufactured_incompressible")
        throw ConfigError("config field 'reference' = exact requires a manufactured problem");

    c.output_dir = detail::get_field<std::string>(j, "output_dir", c.output_dir);
    if (j.contains("export")) {
        const auto& e = j.at("export");
        c.export_csv = detail::get_field<bool>(e, "csv", c.export_csv);
        c.export_vtk = detail::get_field<bool>(e, "vtk", c.export_vtk);
        c.export_indicator_dump = detail::get_field<bool>(e, "indicator_dump", c.export_indicator_dump);
    }
    c.inject_fault = detail::get_field<bool>(j, "inject_fault", false);
    c.n_threads = detail::get_field<int>(j, "threads", 1);
    if (c.n_threads < 1 || c.n_threads > 256)
        throw ConfigError("config field 'threads' must be in [1, 256]");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

// resolved problem + reference choice + constants
inline BenchmarkProblem make_problem(const RunConfig& c) {
    BenchmarkProblem prob;
    if (c.problem == "manufactured") {
        prob = manufactured_problem(c.params);
    } else if (c.problem == "manufactured_incompressible") {
        prob = manufactured_incompressible_problem(c.params);
    } else if (c.problem == "lshape") {
        prob = lshape_problem(c.params);
    } else {
        prob = external_problem(read_mesh_file(c.mesh_file), c.f_const, c.g_const, c.params);
        if (!taylor_hood_stable(prob.initial_mesh)) prob.initial_mesh = refine_all(prob.initial_mesh);
    }
    for (int i = 0; i < c.prerefine; ++i) prob.initial_mesh = refine_all(prob.initial_mesh);
    return prob;
}

inline ReliabilityConstants resolve_constants(const RunConfig& c, const TriangleMesh& mesh) {
    ReliabilityConstants k = c.constants;
    if (!c.constants.user_supplied || c.constants_default_CF)
        k.C_F = domain_diameter(mesh) / M_PI;
    return k;
}

inline std::string resolve_reference(const RunConfig& c) {
    if (c.reference != "auto") return c.reference;
    if (c.problem == "manufactured" || c.problem == "manufactured_incompressible") return "exact";
    return "none";
}

} // namespace biot
