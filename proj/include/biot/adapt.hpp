#pragma once

// Dörfler marking and the uniform/adaptive refinement loop with
// convergence bookkeeping.

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include "biot/bench.hpp"

namespace biot {

enum class RefineMode { uniform, adaptive };

struct AdaptConfig {
    RefineMode mode = RefineMode::adaptive;
    double dorfler_theta = 0.5;
    int max_levels = 4;
    long max_dofs = 2000000;
    ReliabilityConstants constants;
    int n_threads = 1;

    void validate() const {
        if (!(dorfler_theta > 0.0 && dorfler_theta <= 1.0))
            throw std::invalid_argument("adapt.dorfler_theta must be in (0, 1]");
        if (max_levels < 1) throw std::invalid_argument("adapt.max_levels must be >= 1");
        if (max_dofs < 1) throw std::invalid_argument("adapt.max_dofs must be >= 1");
        constants.validate();
    }
};

// Greedy bulk criterion: the minimal prefix (by descending indicator, ties by
// ascending element id) with sum >= theta * total. All-zero indicators give
// the empty set; theta = 1 marks every element with a nonzero indicator.
inline std::vector<int> mark_dorfler(const std::vector<double>& indicator2, double theta) {
    const double total = std::accumulate(indicator2.begin(), indicator2.end(), 0.0);
    std::vector<int> order(indicator2.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (indicator2[a] != indicator2[b]) return indicator2[a] > indicator2[b];
        return a < b;
    });
    std::vector<int> marked;
    if (total <= 0.0) return marked;
    double sum = 0.0;
    for (int id : order) {
        if (sum >= theta * total) break;
        if (indicator2[id] <= 0.0) break;
        marked.push_back(id);
        sum += indicator2[id];
    }
    std::sort(marked.begin(), marked.end());
    return marked;
}

struct LevelRecord {
    int level = 0;
    long N = 0;
    double h = 0.0;
    double eta_S = 0.0, eta_A = 0.0, eta_C = 0.0, eta_F = 0.0, eta_P = 0.0;
    double bound = 0.0;
    double err_u = std::numeric_limits<double>::quiet_NaN();
    double err_p = std::numeric_limits<double>::quiet_NaN();
    double err_phi = std::numeric_limits<double>::quiet_NaN();
    double err_total = std::numeric_limits<double>::quiet_NaN();
    double effectivity = std::numeric_limits<double>::quiet_NaN();
    long marked = 0;
    double seconds = 0.0;
    double osc_f = 0.0, osc_g = 0.0;
    EquilibrationReport flux_report, stress_report;
};

struct ConvergenceHistory {
    std::vector<LevelRecord> levels;
};

// retained per-level state for post-hoc error evaluation (overkill studies)
struct LevelState {
    std::shared_ptr<TriangleMesh> mesh;
    BiotSolution solution;
    EstimatorBreakdown estimators;
};

struct LoopResult {
    ConvergenceHistory history;
    std::vector<LevelState> states;
};

inline LoopResult run_loop(const BenchmarkProblem& prob, const AdaptConfig& cfg,
                           bool keep_states = false) {
    cfg.validate();
    prob.params.validate();

    LoopResult out;
    auto mesh = std::make_shared<TriangleMesh>(prob.initial_mesh);

    for (int level = 0;; ++level) {
        const auto t0 = std::chrono::steady_clock::now();
        LevelRecord rec;
        rec.level = level;
        try {
            const SourceData sources = project_sources(*mesh, prob.f, prob.g);
            const TaylorHoodSpaces spaces = make_taylor_hood(*mesh);
            const LinearSystem sys = assemble(*mesh, prob.params, sources, spaces, prob.pressure_mean);
            const BiotSolution sol = solve(sys);
            const auto patches = vertex_patches(*mesh);
            const FluxReconstruction flux = equilibrate_flux(*mesh, sol, sources, patches, cfg.n_threads);
            const StressReconstruction stress =
                equilibrate_stress(*mesh, sol, sources, patches, cfg.n_threads);
            const EstimatorBreakdown est = compute_estimators(sol, stress, flux, cfg.constants);

            rec.N = spaces.n_dofs();
            rec.h = max_diameter(*mesh);
            rec.eta_S = est.eta_S;
            rec.eta_A = est.eta_A;
            rec.eta_C = est.eta_C;
            rec.eta_F = est.eta_F;
            rec.eta_P = est.eta_P;
            rec.bound = est.bound;
            rec.osc_f = sources.osc_f;
            rec.osc_g = sources.osc_g;
            rec.flux_report = flux.report;
            rec.stress_report = stress.report;

            if (prob.exact) {
                const ReferenceOnMesh ref = reference_from_exact(*mesh, *prob.exact);
                const EnergyError err = energy_norm_error(sol, ref);
                rec.err_u = std::sqrt(err.comp_u2);
                rec.err_p = std::sqrt(err.comp_p2);
                rec.err_phi = std::sqrt(err.comp_phi2);
                rec.err_total = err.total;
                rec.effectivity = std::sqrt(std::max(0.0, est.bound)) / std::max(err.total, 1e-300);
            }

            std::vector<int> marked;
            if (cfg.mode == RefineMode::uniform) {
                marked.resize(mesh->n_triangles());
                std::iota(marked.begin(), marked.end(), 0);
            } else {
                marked = mark_dorfler(est.indicator, cfg.dorfler_theta);
            }
            rec.marked = static_cast<long>(marked.size());
            rec.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            out.history.levels.push_back(rec);
            if (keep_states) out.states.push_back({mesh, sol, est});

            if (level + 1 >= cfg.max_levels || rec.N >= cfg.max_dofs || marked.empty()) break;
            mesh = std::make_shared<TriangleMesh>(refine(*mesh, marked));
        } catch (const NumericalError& e) {
            throw NumericalError("level " + std::to_string(level) + ": " + e.what());
        }
    }
    return out;
}

} // namespace biot
