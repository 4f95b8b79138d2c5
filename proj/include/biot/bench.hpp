#pragma once

// Benchmark problems: the regular manufactured solution on the unit square,
// its divergence-free variant for the incompressible limit, the singular
// L-shaped problem with constant sources, the norm-identity checks and the
// overkill reference (P3^2/P2/P3 on a once-more refined mesh).
//
// Manufactured case: phi(x,y) = x y (1-x)(1-y), u = (phi, phi),
// p = -lambda (phi_x + phi_y) + phi; f is derived from the strong form
// f = -div(2 mu eps(u)) + grad p, g = phi_x + phi_y - tau laplace(phi).
//
// Incompressible variant (lambda_inv = 0): u = curl(phi^2) which is exactly
// divergence-free and vanishes on the boundary together with its tangential
// derivative, p = phi, f = -mu laplace(u) + grad p, g = -tau laplace(phi).
// The pressure is then only determined up to its mean, which is pinned to
// the exact value 1/36.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "biot/estimate.hpp"

namespace biot {

struct BenchmarkProblem {
    std::string name;
    TriangleMesh initial_mesh;
    std::function<Vec2(const Vec2&)> f;
    std::function<double(const Vec2&)> g;
    BiotParameters params;
    std::optional<double> pressure_mean; // used when lambda_inv == 0
    std::optional<ExactSolution> exact;
};

inline TriangleMesh unit_square_mesh() {
    return build_mesh({{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}},
                      {{{0, 1, 2}}, {{0, 2, 3}}}, "unit-square");
}

// [-1,1]^2 \ [0,1]^2 as six congruent right triangles fanning around the origin
inline TriangleMesh lshape_fan_mesh() {
    return build_mesh({{-1.0, -1.0},
                       {0.0, -1.0},
                       {1.0, -1.0},
                       {1.0, 0.0},
                       {0.0, 0.0},
                       {-1.0, 0.0},
                       {-1.0, 1.0},
                       {0.0, 1.0}},
                      {{{4, 1, 2}}, {{4, 2, 3}}, {{4, 0, 1}}, {{4, 5, 0}}, {{4, 6, 5}}, {{4, 7, 6}}},
                      "l-shape");
}

namespace detail {

inline void check_unit_square(const Vec2& x) {
    if (x.x < -1e-12 || x.x > 1.0 + 1e-12 || x.y < -1e-12 || x.y > 1.0 + 1e-12)
        throw std::domain_error("manufactured case: point outside [0,1]^2");
}

} // namespace detail

// closed-form evaluators of the regular manufactured case (finite lambda)
struct ManufacturedCase {
    BiotParameters params;

    double lambda() const { return 1.0 / params.lambda_inv; }

    double phi(const Vec2& x) const {
        detail::check_unit_square(x);
        return x.x * (1.0 - x.x) * x.y * (1.0 - x.y);
    }
    Vec2 grad_phi(const Vec2& x) const {
        detail::check_unit_square(x);
        const double a = x.x * (1.0 - x.x), da = 1.0 - 2.0 * x.x;
        const double b = x.y * (1.0 - x.y), db = 1.0 - 2.0 * x.y;
        return {da * b, a * db};
    }
    Vec2 u(const Vec2& x) const { const double v = phi(x); return {v, v}; }
    Mat2 grad_u(const Vec2& x) const {
        const Vec2 g = grad_phi(x);
        return {g.x, g.y, g.x, g.y};
    }
    double p(const Vec2& x) const {
        const Vec2 g = grad_phi(x);
        return -lambda() * (g.x + g.y) + phi(x);
    }
    Vec2 f(const Vec2& x) const {
        detail::check_unit_square(x);
        const double a = x.x * (1.0 - x.x), da = 1.0 - 2.0 * x.x;
        const double b = x.y * (1.0 - x.y), db = 1.0 - 2.0 * x.y;
        const double pxx = -2.0 * b, pyy = -2.0 * a, pxy = da * db;
        const double px = da * b, py = a * db;
        const double mu = params.mu, lam = lambda();
        return {px - (2.0 * mu + lam) * pxx - mu * pyy - (mu + lam) * pxy,
                py - (2.0 * mu + lam) * pyy - mu * pxx - (mu + lam) * pxy};
    }
    double g(const Vec2& x) const {
        detail::check_unit_square(x);
        const double a = x.x * (1.0 - x.x), da = 1.0 - 2.0 * x.x;
        const double b = x.y * (1.0 - x.y), db = 1.0 - 2.0 * x.y;
        return da * b + a * db - params.tau * (-2.0 * b - 2.0 * a);
    }

    ExactSolution exact() const {
        ExactSolution ex;
        ex.phi = [*this](const Vec2& x) { return phi(x); };
        ex.grad_phi = [*this](const Vec2& x) { return grad_phi(x); };
        ex.p = [*this](const Vec2& x) { return p(x); };
        ex.u = [*this](const Vec2& x) { return u(x); };
        ex.grad_u = [*this](const Vec2& x) { return grad_u(x); };
        return ex;
    }
};

// divergence-free manufactured case for the incompressible limit
struct IncompressibleCase {
    BiotParameters params;

    double phi(const Vec2& x) const {
        detail::check_unit_square(x);
        return x.x * (1.0 - x.x) * x.y * (1.0 - x.y);
    }
    Vec2 grad_phi(const Vec2& x) const {
        detail::check_unit_square(x);
        const double a = x.x * (1.0 - x.x), da = 1.0 - 2.0 * x.x;
        const double b = x.y * (1.0 - x.y), db = 1.0 - 2.0 * x.y;
        return {da * b, a * db};
    }
    double p(const Vec2& x) const { return phi(x); }
    Vec2 u(const Vec2& x) const {
        detail::check_unit_square(x);
        const double a = x.x * (1.0 - x.x), da = 1.0 - 2.0 * x.x;
        const double b = x.y * (1.0 - x.y), db = 1.0 - 2.0 * x.y;
        return {2.0 * a * a * b * db, -2.0 * a * da * b * b};
    }
    Mat2 grad_u(const Vec2& x) const {
        detail::check_unit_square(x);
        const double a = x.x * (1.0 - x.x), da = 1.0 - 2.0 * x.x, dda = -2.0;
        const double b = x.y * (1.0 - x.y), db = 1.0 - 2.0 * x.y, ddb = -2.0;
        return {4.0 * a * da * b * db, 2.0 * a * a * (db * db + b * ddb),
                -2.0 * (da * da + a * dda) * b * b, -4.0 * a * da * b * db};
    }
    Vec2 f(const Vec2& x) const {
        detail::check_unit_square(x);
        const double a = x.x * (1.0 - x.x), da = 1.0 - 2.0 * x.x, dda = -2.0;
        const double b = x.y * (1.0 - x.y), db = 1.0 - 2.0 * x.y, ddb = -2.0;
        const double lap_u1 = 4.0 * (da * da + a * dda) * b * db + 6.0 * a * a * db * ddb;
        const double lap_u2 = -6.0 * da * dda * b * b - 4.0 * a * da * (db * db + b * ddb);
        return {-params.mu * lap_u1 + da * b, -params.mu * lap_u2 + a * db};
    }
    double g(const Vec2& x) const {
        detail::check_unit_square(x);
        const double a = x.x * (1.0 - x.x), b = x.y * (1.0 - x.y);
        return 2.0 * params.tau * (a + b);
    }

    ExactSolution exact() const {
        ExactSolution ex;
        ex.phi = [*this](const Vec2& x) { return phi(x); };
        ex.grad_phi = [*this](const Vec2& x) { return grad_phi(x); };
        ex.p = [*this](const Vec2& x) { return p(x); };
        ex.u = [*this](const Vec2& x) { return u(x); };
        ex.grad_u = [*this](const Vec2& x) { return grad_u(x); };
        return ex;
    }
};

struct LShapedCase {
    Vec2 f{1.0, 1.0};
    double g = 1.0;
};

// benchmark meshes are refined uniformly so no triangle has two boundary
// edges (Taylor-Hood caveat); the L-shape gets two initial passes
inline BenchmarkProblem manufactured_problem(const BiotParameters& params) {
    if (!(params.lambda_inv > 0.0))
        throw std::invalid_argument(
            "manufactured case requires lambda_inv > 0 (use manufactured_incompressible)");
    ManufacturedCase mc{params};
    BenchmarkProblem prob;
    prob.name = "manufactured";
    prob.initial_mesh = refine_all(unit_square_mesh());
    prob.f = [mc](const Vec2& x) { return mc.f(x); };
    prob.g = [mc](const Vec2& x) { return mc.g(x); };
    prob.params = params;
    prob.exact = mc.exact();
    return prob;
}

inline BenchmarkProblem manufactured_incompressible_problem(const BiotParameters& params) {
    IncompressibleCase mc{params};
    BenchmarkProblem prob;
    prob.name = "manufactured_incompressible";
    prob.initial_mesh = refine_all(unit_square_mesh());
    prob.f = [mc](const Vec2& x) { return mc.f(x); };
    prob.g = [mc](const Vec2& x) { return mc.g(x); };
    prob.params = params;
    prob.pressure_mean = 1.0 / 36.0;
    prob.exact = mc.exact();
    return prob;
}

inline BenchmarkProblem lshape_problem(const BiotParameters& params) {
    LShapedCase lc;
    BenchmarkProblem prob;
    prob.name = "lshape";
    prob.initial_mesh = refine_all(refine_all(lshape_fan_mesh()));
    prob.f = [lc](const Vec2&) { return lc.f; };
    prob.g = [lc](const Vec2&) { return lc.g; };
    prob.params = params;
    prob.pressure_mean = 0.0;
    return prob;
}

inline BenchmarkProblem external_problem(TriangleMesh mesh, const Vec2& f_const, double g_const,
                                         const BiotParameters& params) {
    BenchmarkProblem prob;
    prob.name = "external";
    prob.initial_mesh = std::move(mesh);
    prob.f = [f_const](const Vec2&) { return f_const; };
    prob.g = [g_const](const Vec2&) { return g_const; };
    prob.params = params;
    prob.pressure_mean = 0.0;
    return prob;
}

// ---------------------------------------------------------------------------
// norm identities of the regular manufactured solution

struct NormIdentityReport {
    double norm_phi = 0.0;        // should be 1/30
    double ratio_grad = 0.0;      // ||grad phi||^2 / ||phi||^2, should be 20
    double ratio_eps = 0.0;       // ||eps(u)||^2 / ||grad phi||^2, should be 3/2
};

inline NormIdentityReport norm_identities_check(int quadrature_degree = 8) {
    if (quadrature_degree < 8)
        throw std::invalid_argument("norm_identities_check: degree must be >= 8");
    const TriangleMesh mesh = refine_all(unit_square_mesh());
    const QuadratureRule q = quadrature(quadrature_degree);
    ManufacturedCase mc{BiotParameters{1.0, 1.0, 1.0}};
    double n_phi2 = 0.0, n_grad2 = 0.0, n_eps2 = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const AffineMap F = mesh.affine(t);
        for (const auto& qp : q.points) {
            const Vec2 x = F.to_physical(qp.ref);
            const double w = qp.weight * std::abs(F.detB);
            const double v = mc.phi(x);
            const Vec2 g = mc.grad_phi(x);
            const Mat2 eps = mc.grad_u(x).sym();
            n_phi2 += w * v * v;
            n_grad2 += w * g.dot(g);
            n_eps2 += w * eps.frob_norm2();
        }
    }
    NormIdentityReport r;
    r.norm_phi = std::sqrt(n_phi2);
    r.ratio_grad = n_grad2 / n_phi2;
    r.ratio_eps = n_eps2 / n_grad2;
    return r;
}

// ---------------------------------------------------------------------------
// overkill reference

struct OverkillReference {
    std::shared_ptr<TriangleMesh> mesh; // once-more refined copy of the base mesh
    BiotSolution solution;              // P3^2 / P2 / P3
    long n_dofs = 0;
};

inline OverkillReference build_overkill(const BenchmarkProblem& prob, const TriangleMesh& base_mesh) {
    OverkillReference ok;
    ok.mesh = std::make_shared<TriangleMesh>(refine_all(base_mesh));
    const SourceData sources = project_sources(*ok.mesh, prob.f, prob.g);
    const TaylorHoodSpaces spaces = make_taylor_hood(*ok.mesh, 3);
    ok.n_dofs = spaces.n_dofs();
    const LinearSystem sys = assemble(*ok.mesh, prob.params, sources, spaces, prob.pressure_mean);
    ok.solution = solve(sys);
    return ok;
}

// reference adapter: integrate on the overkill mesh, mapping each of its
// elements to the containing element of the study mesh
inline ReferenceOnMesh reference_from_overkill(const OverkillReference& ok,
                                               std::vector<int> to_solution_elem) {
    ReferenceOnMesh r;
    r.imesh = ok.mesh.get();
    r.to_solution_elem = std::move(to_solution_elem);
    const BiotSolution* sol = &ok.solution;
    r.grad_u = [sol](int it, const Vec2& ref, const Vec2&) { return eval_vec_gradient(sol->u, it, ref); };
    r.p = [sol](int it, const Vec2& ref, const Vec2&) { return eval_scalar(sol->p, it, ref); };
    r.phi = [sol](int it, const Vec2& ref, const Vec2&) { return eval_scalar(sol->phi, it, ref); };
    r.grad_phi = [sol](int it, const Vec2& ref, const Vec2&) { return eval_gradient(sol->phi, it, ref); };
    return r;
}

// ancestor map through a refinement chain: chain.front() is the coarse mesh,
// chain.back() the fine one; returns per fine element its coarse ancestor
inline std::vector<int> ancestor_elements(const std::vector<const TriangleMesh*>& chain) {
    if (chain.empty()) return {};
    std::vector<int> map(chain.back()->n_triangles());
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<int>(i);
    for (std::size_t level = chain.size() - 1; level > 0; --level) {
        const auto& parent = chain[level]->parent;
        for (auto& t : map) t = parent[t];
    }
    return map;
}

} // namespace biot
