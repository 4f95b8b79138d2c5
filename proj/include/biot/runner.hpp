#pragma once

// Command implementations behind the CLI: solve (one pass + report.json),
// study (refinement loop + history CSV, with lambda / Dörfler sweeps) and
// check (the invariant suite on small fixtures).
//
// Exit codes: 0 ok, 1 configuration error, 2 numerical failure (the message
// names the stage), 3 invariant violation (check).

#include <cstdio>
#include <filesystem>
#include <random>

#include "biot/config.hpp"

namespace biot {

namespace detail {

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw NumericalError(std::string(name) + " stage: " + e.what());
    }
}

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.output_dir);
    return (std::filesystem::path(cfg.output_dir) / name).string();
}

} // namespace detail

// one solve/equilibrate/estimate pass; writes report.json and optional VTK
inline int cmd_solve(const RunConfig& cfg) {
    const BenchmarkProblem prob = detail::stage("setup", [&] { return make_problem(cfg); });
    const TriangleMesh& mesh = prob.initial_mesh;
    const ReliabilityConstants constants = resolve_constants(cfg, mesh);

    const SourceData sources =
        detail::stage("project-sources", [&] { return project_sources(mesh, prob.f, prob.g); });
    const BiotSolution sol = detail::stage("solve", [&] {
        const TaylorHoodSpaces spaces = make_taylor_hood(mesh);
        return solve(assemble(mesh, prob.params, sources, spaces, prob.pressure_mean));
    });
    const auto patches = vertex_patches(mesh);
    const FluxReconstruction flux = detail::stage(
        "equilibrate", [&] { return equilibrate_flux(mesh, sol, sources, patches, cfg.n_threads); });
    const StressReconstruction stress = detail::stage(
        "equilibrate", [&] { return equilibrate_stress(mesh, sol, sources, patches, cfg.n_threads); });
    const EstimatorBreakdown est = detail::stage(
        "estimate", [&] { return compute_estimators(sol, stress, flux, constants); });

    nlohmann::json rep;
    rep["problem"] = cfg.problem;
    rep["N"] = make_taylor_hood(mesh).n_dofs();
    rep["h"] = max_diameter(mesh);
    rep["eta_S"] = est.eta_S;
    rep["eta_A"] = est.eta_A;
    rep["eta_C"] = est.eta_C;
    rep["eta_F"] = est.eta_F;
    rep["eta_P"] = est.eta_P;
    rep["bound"] = est.bound;
    rep["constants"] = {{"C_K", constants.C_K}, {"C_D", constants.C_D}, {"C_F", constants.C_F}};
    rep["params"] = {{"mu", prob.params.mu},
                     {"lambda_inv", prob.params.lambda_inv},
                     {"tau", prob.params.tau}};
    rep["oscillation"] = {{"f", sources.osc_f}, {"g", sources.osc_g}};
    rep["residuals"] = {{"algebraic", sol.residual_norm},
                        {"flux_div_rel", flux.report.div_residual_rel()},
                        {"stress_div_rel", stress.report.div_residual_rel()},
                        {"flux_jump", flux.report.jump_moment_abs},
                        {"stress_jump", stress.report.jump_moment_abs},
                        {"weak_symmetry", stress.report.symmetry_moment_abs}};
    if (prob.exact) {
        const EnergyError err = energy_norm_error(sol, reference_from_exact(mesh, *prob.exact));
        rep["error"] = {{"u", std::sqrt(err.comp_u2)},
                        {"p", std::sqrt(err.comp_p2)},
                        {"phi", std::sqrt(err.comp_phi2)},
                        {"total", err.total}};
        rep["effectivity"] = std::sqrt(std::max(0.0, est.bound)) / std::max(err.total, 1e-300);
    }
    {
        std::ofstream f(detail::out_path(cfg, "report.json"));
        f << rep.dump(2) << "\n";
    }
    if (cfg.export_vtk) write_vtk(detail::out_path(cfg, "fields.vtk"), mesh, sol, est, flux, stress);
    if (cfg.export_indicator_dump)
        write_indicator_dump(detail::out_path(cfg, "indicators.csv"), est);
    return 0;
}

// fill err_* columns of an adaptive/uniform study against an overkill
// reference built on the finest level
inline void fill_overkill_errors(const BenchmarkProblem& prob, LoopResult& res) {
    if (res.states.empty()) throw std::logic_error("fill_overkill_errors: states were not kept");
    const OverkillReference ok = build_overkill(prob, *res.states.back().mesh);
    for (std::size_t l = 0; l < res.states.size(); ++l) {
        std::vector<const TriangleMesh*> chain;
        for (std::size_t k = l; k < res.states.size(); ++k) chain.push_back(res.states[k].mesh.get());
        chain.push_back(ok.mesh.get());
        const ReferenceOnMesh ref = reference_from_overkill(ok, ancestor_elements(chain));
        const EnergyError err = energy_norm_error(res.states[l].solution, ref);
        LevelRecord& rec = res.history.levels[l];
        rec.err_u = std::sqrt(err.comp_u2);
        rec.err_p = std::sqrt(err.comp_p2);
        rec.err_phi = std::sqrt(err.comp_phi2);
        rec.err_total = err.total;
        rec.effectivity = std::sqrt(std::max(0.0, rec.bound)) / std::max(err.total, 1e-300);
    }
}

inline ConvergenceHistory run_study(const RunConfig& cfg, const BenchmarkProblem& prob) {
    AdaptConfig acfg;
    acfg.mode = cfg.mode;
    acfg.dorfler_theta = cfg.dorfler_theta;
    acfg.max_levels = cfg.max_levels;
    acfg.max_dofs = cfg.max_dofs;
    acfg.constants = resolve_constants(cfg, prob.initial_mesh);
    acfg.n_threads = cfg.n_threads;

    const std::string ref = resolve_reference(cfg);
    BenchmarkProblem p = prob;
    if (ref == "none" || ref == "overkill") p.exact.reset();
    LoopResult res = run_loop(p, acfg, ref == "overkill");
    if (ref == "overkill") fill_overkill_errors(p, res);
    return std::move(res.history);
}

inline int cmd_study(const RunConfig& cfg, const std::string& sweep = {}) {
    if (sweep.empty()) {
        const BenchmarkProblem prob = detail::stage("setup", [&] { return make_problem(cfg); });
        const ConvergenceHistory h = run_study(cfg, prob);
        if (cfg.export_csv) write_history_file(detail::out_path(cfg, "history.csv"), h);
        return 0;
    }
    if (sweep == "lambda") {
        // lambda in {1, 1e2, 1e4, 1e8}; file names embed the exponent
        for (int exp : {0, 2, 4, 8}) {
            RunConfig c = cfg;
            c.params.lambda_inv = std::pow(10.0, -exp);
            const BenchmarkProblem prob = detail::stage("setup", [&] { return make_problem(c); });
            const ConvergenceHistory h = run_study(c, prob);
            char name[64];
            std::snprintf(name, sizeof(name), "history_lambda_e%02d.csv", exp);
            if (cfg.export_csv) write_history_file(detail::out_path(cfg, name), h);
        }
        return 0;
    }
    if (sweep == "dorfler") {
        for (double theta : {0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0}) {
            RunConfig c = cfg;
            c.mode = RefineMode::adaptive;
            c.dorfler_theta = theta;
            const BenchmarkProblem prob = detail::stage("setup", [&] { return make_problem(c); });
            const ConvergenceHistory h = run_study(c, prob);
            char name[64];
            std::snprintf(name, sizeof(name), "history_dorfler_%03d.csv",
                          static_cast<int>(std::lround(theta * 100)));
            if (cfg.export_csv) write_history_file(detail::out_path(cfg, name), h);
        }
        return 0;
    }
    throw ConfigError("unknown sweep '" + sweep + "' (expected lambda or dorfler)");
}

// --------------------------------------------------------------------------
// invariant suite on small fixtures

inline int cmd_check(const RunConfig& cfg) {
    int failures = 0;
    std::string first_violation;
    const auto check = [&](const char* name, bool ok) {
        std::printf("%-58s %s\n", name, ok ? "ok" : "VIOLATED");
        if (!ok) {
            ++failures;
            if (first_violation.empty()) first_violation = name;
        }
        return ok;
    };

    // mesh fixtures
    const TriangleMesh square2 = unit_square_mesh();
    const TriangleMesh fan = lshape_fan_mesh();
    {
        int ninterior = 0;
        for (int e = 0; e < fan.n_edges(); ++e)
            if (!fan.edge_is_boundary(e)) ++ninterior;
        check("mesh: L-shape fan combinatorics (13 edges, 5 interior)",
              fan.n_edges() == 13 && ninterior == 5 &&
                  fan.n_vertices() - fan.n_edges() + fan.n_triangles() == 1);
    }
    {
        const TriangleMesh r1 = refine_all(square2);
        const TriangleMesh r2 = refine_all(r1);
        check("mesh: mark-all quadrisection (2 -> 8 -> 32)",
              r1.n_triangles() == 8 && r2.n_triangles() == 32);
        // partition of unity at 50 random points
        std::mt19937 rng(20240811u);
        std::uniform_real_distribution<double> U(0.05, 0.95);
        const auto patches = vertex_patches(r2);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            const int t = static_cast<int>(rng() % r2.n_triangles());
            Vec2 ref{U(rng), U(rng)};
            if (ref.x + ref.y > 1.0) ref = {1.0 - ref.x, 1.0 - ref.y};
            double sum = 0.0;
            for (const auto& pz : patches) sum += hat_value(r2, pz.center, t, ref);
            worst = std::max(worst, std::abs(sum - 1.0));
        }
        check("mesh: hat partition of unity (50 random points, 1e-13)", worst <= 1e-13);
        std::size_t total = 0;
        for (const auto& pz : patches) total += pz.elements.size();
        check("mesh: each element in exactly 3 patches", total == 3u * r2.n_triangles());
    }
    {
        const QuadratureRule q8 = quadrature(8);
        double wsum = 0.0, ixy = 0.0;
        for (const auto& qp : q8.points) {
            wsum += qp.weight;
            ixy += qp.weight * qp.ref.x * qp.ref.x * qp.ref.y * qp.ref.y;
        }
        check("quadrature: weights sum to 1/2 and x^2 y^2 integrates to 1/180",
              std::abs(wsum - 0.5) <= 1e-14 && std::abs(ixy - 1.0 / 180.0) <= 1e-14);
    }
    {
        auto p2 = build_dofmap(square2, SpaceKind::LagrangeP2C);
        auto rt = build_dofmap(square2, SpaceKind::RT1);
        check("fem: dof counts on the 2-triangle square (P2C 9, RT1 14)",
              p2->total_dofs == 9 && rt->total_dofs == 14);
    }
    const TriangleMesh mesh = refine_all(square2);
    {
        auto rt = build_dofmap(mesh, SpaceKind::RT1);
        const Field f = interpolate_rt(rt, [&](int t, const Vec2& r) {
            const Vec2 x = mesh.affine(t).to_physical(r);
            return Vec2{x.x * x.x, x.x * x.y};
        });
        double jmax = 0.0;
        for (int e = 0; e < mesh.n_edges(); ++e) {
            if (mesh.edge_is_boundary(e)) continue;
            const auto mom = jump_moments(f, e);
            jmax = std::max({jmax, std::abs(mom[0]), std::abs(mom[1])});
        }
        check("fem: conforming RT1 interpolant is normal-continuous", jmax <= 1e-12);
    }
    // solve fixture: manufactured defaults on the initial benchmark mesh
    try {
        RunConfig scfg = cfg;
        scfg.problem = (cfg.problem == "external") ? "manufactured" : cfg.problem;
        if (scfg.problem == "manufactured" && !(scfg.params.lambda_inv > 0.0))
            scfg.params.lambda_inv = 1.0;
        const BenchmarkProblem prob = make_problem(scfg);
        const TriangleMesh& m = prob.initial_mesh;
        const SourceData sources = project_sources(m, prob.f, prob.g);
        const TaylorHoodSpaces spaces = make_taylor_hood(m);
        check("biot: Taylor-Hood caveat (no triangle with 2 boundary edges)", taylor_hood_stable(m));
        const LinearSystem sys = assemble(m, prob.params, sources, spaces, prob.pressure_mean);
        {
            Eigen::SparseMatrix<double> D = sys.A - Eigen::SparseMatrix<double>(sys.A.transpose());
            double amax = 0.0;
            for (int k = 0; k < D.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
                    amax = std::max(amax, std::abs(it.value()));
            check("biot: assembled matrix symmetric (1e-13)", amax <= 1e-13);
        }
        const BiotSolution sol = solve(sys);
        check("biot: algebraic residual <= 1e-10 * ||rhs||",
              sol.residual_norm <= 1e-10 * std::max(sol.rhs_norm, 1e-300));
        check("biot: discrete constraint orthogonality (1e-9 relative)",
              constraint_orthogonality_residual(sol) <= 1e-9);
        {
            static const QuadratureRule q5 = quadrature(5);
            double worst = 0.0;
            for (int t = 0; t < m.n_triangles(); ++t)
                for (const auto& qp : q5.points) {
                    const Mat2 th = postprocessed_stress(sol, t, qp.ref);
                    const double lhs = th.trace();
                    const double rhs = 2.0 * prob.params.mu * eval_vec_divergence(sol.u, t, qp.ref) -
                                       2.0 * (eval_scalar(sol.p, t, qp.ref) -
                                              eval_scalar(sol.phi, t, qp.ref));
                    worst = std::max(worst, std::abs(lhs - rhs));
                }
            check("biot: stress trace identity at quadrature points (1e-12)", worst <= 1e-12);
        }
        const auto patches = vertex_patches(m);
        FluxReconstruction flux = equilibrate_flux(m, sol, sources, patches, cfg.n_threads);
        StressReconstruction stress = equilibrate_stress(m, sol, sources, patches, cfg.n_threads);
        if (cfg.inject_fault) {
            // perturb one reconstruction coefficient, then re-verify
            flux.w_R.coeffs[flux.w_R.coeffs.size() / 2] += 1e-3;
            flux.report = verify_flux_field(m, sol, sources, flux.w_R);
        }
        check("equilibrate: mass-balance residual (1e-9 relative)",
              flux.report.div_residual_rel() <= 1e-9);
        check("equilibrate: momentum-balance residual (1e-9 relative)",
              stress.report.div_residual_rel() <= 1e-9);
        check("equilibrate: normal-jump moments (1e-10 relative)",
              flux.report.jump_moment_rel() <= 1e-10 && stress.report.jump_moment_rel() <= 1e-10);
        check("equilibrate: weak-symmetry vertex moments (1e-10 relative)",
              stress.report.symmetry_moment_rel() <= 1e-10);
        const ReliabilityConstants constants = resolve_constants(cfg, m);
        const EstimatorBreakdown est = compute_estimators(sol, stress, flux, constants);
        {
            double s2 = 0.0, isum = 0.0;
            for (int t = 0; t < m.n_triangles(); ++t) {
                s2 += est.eta_S2[t];
                isum += est.indicator[t];
            }
            const bool decomp = std::abs(std::sqrt(s2) - est.eta_S) <= 1e-12 * std::max(1.0, est.eta_S);
            const bool bcons = std::abs(isum - est.bound) <= 1e-12 * std::max(1.0, est.bound) &&
                               std::abs(total_bound(est, constants, prob.params) - est.bound) <=
                                   1e-12 * std::max(1.0, est.bound);
            check("estimate: per-element decomposition and bound consistency", decomp && bcons);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "check: unexpected failure: %s\n", e.what());
        return 3;
    }
    {
        const std::vector<double> ind = {9.0, 4.0, 1.0, 1.0};
        const auto m1 = mark_dorfler(ind, 0.5);
        const auto m2 = mark_dorfler(ind, 0.8);
        const auto m3 = mark_dorfler(ind, 1.0);
        check("adapt: Dörfler worked examples",
              m1 == std::vector<int>{0} && m2 == (std::vector<int>{0, 1}) &&
                  m3 == (std::vector<int>{0, 1, 2, 3}));
    }
    {
        const NormIdentityReport r = norm_identities_check(8);
        check("bench: manufactured norm identities",
              std::abs(r.norm_phi - 1.0 / 30.0) <= 1e-12 && std::abs(r.ratio_grad - 20.0) <= 1e-10 &&
                  std::abs(r.ratio_eps - 1.5) <= 1e-10);
    }
    if (failures > 0) {
        std::fprintf(stderr, "check: invariant violated: %s\n", first_violation.c_str());
        return 3;
    }
    return 0;
}

} // namespace biot
