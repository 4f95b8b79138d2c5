#pragma once

// Estimator components eta_S, eta_A, eta_C, eta_F, eta_P, the compliance
// operator A, the guaranteed total bound, the per-element marking indicator
// and the parameter-weighted energy norm of the error.
//
// A xi = (1/2mu) (xi - (tr xi)/(2 mu lambda_inv + d) I); the coefficient is
// lambda/(2mu + d lambda) written through lambda_inv so lambda = infinity is
// a regular value (there ||.||_A degenerates to the deviatoric seminorm).

#include <cmath>
#include <functional>
#include <vector>

#include "biot/equilibrate.hpp"

namespace biot {

struct ReliabilityConstants {
    double C_K = 1.0; // Korn-type constant
    double C_D = 1.0; // dev-div constant
    double C_F = 1.0; // Poincare-Friedrichs constant (length units)
    bool user_supplied = false;

    void validate() const {
        if (!(C_K > 0.0) || !(C_D > 0.0) || !(C_F > 0.0))
            throw std::invalid_argument("reliability constants must be positive");
    }
};

// Defaults: C_F = diam(Omega)/pi is a valid Poincare-Friedrichs constant for
// H_0^1 on convex-enclosed domains; C_K = C_D = 1 are placeholders, so the
// guaranteed-bound property is conditional on user-supplied Korn/dev-div
// constants for the triangulation at hand.
inline ReliabilityConstants default_constants(const TriangleMesh& mesh) {
    ReliabilityConstants c;
    c.C_F = domain_diameter(mesh) / M_PI;
    return c;
}

inline Mat2 apply_A(const Mat2& xi, const BiotParameters& params) {
    const double w = 1.0 / (2.0 * params.mu * params.lambda_inv + params.d);
    const double c = xi.trace() * w;
    Mat2 out = xi;
    out.a11 -= c;
    out.a22 -= c;
    return out * (1.0 / (2.0 * params.mu));
}

struct EstimatorBreakdown {
    double eta_S = 0.0, eta_A = 0.0, eta_C = 0.0, eta_F = 0.0, eta_P = 0.0;
    // per-element squared contributions
    std::vector<double> eta_S2, eta_A2, eta_C2, eta_F2, eta_P2;
    std::vector<double> indicator; // constant-weighted combination used for marking
    double bound = 0.0;            // right side of the total error bound
};

// weight of eta_C^2 in the bound: mu (C_D w + 1/C_D)^2 + 4 C_F^2 / tau,
// with w = lambda/(2 mu + d lambda)
inline double constraint_weight(const ReliabilityConstants& c, const BiotParameters& p) {
    const double w = 1.0 / (2.0 * p.mu * p.lambda_inv + p.d);
    const double a = c.C_D * w + 1.0 / c.C_D;
    return p.mu * a * a + 4.0 * c.C_F * c.C_F / p.tau;
}

inline double total_bound_from(double eta_S2, double eta_A2, double eta_C2, double eta_F2,
                               double eta_P2, const ReliabilityConstants& c,
                               const BiotParameters& p) {
    return 2.0 * (eta_S2 + c.C_K * c.C_K / (4.0 * p.mu) * eta_A2 + constraint_weight(c, p) * eta_C2 +
                  eta_F2 + 4.0 * c.C_F * c.C_F * eta_P2);
}

inline double total_bound(const EstimatorBreakdown& b, const ReliabilityConstants& c,
                          const BiotParameters& p) {
    return total_bound_from(b.eta_S * b.eta_S, b.eta_A * b.eta_A, b.eta_C * b.eta_C,
                            b.eta_F * b.eta_F, b.eta_P * b.eta_P, c, p);
}

inline EstimatorBreakdown compute_estimators(const BiotSolution& sol,
                                             const StressReconstruction& stress_rec,
                                             const FluxReconstruction& flux_rec,
                                             const ReliabilityConstants& constants) {
    constants.validate();
    const TriangleMesh& m = *sol.mesh;
    if (stress_rec.theta_R.dofmap->mesh != &m || flux_rec.w_R.dofmap->mesh != &m)
        throw std::invalid_argument("compute_estimators: reconstructions on a different mesh");
    const BiotParameters& prm = sol.params;
    static const QuadratureRule q8 = quadrature(8);

    auto p1dm = build_dofmap(m, SpaceKind::DiscontinuousP1);
    const Field p1phi = project_P1_of_field(p1dm, sol.phi);

    EstimatorBreakdown out;
    const int nt = m.n_triangles();
    out.eta_S2.assign(nt, 0.0);
    out.eta_A2.assign(nt, 0.0);
    out.eta_C2.assign(nt, 0.0);
    out.eta_F2.assign(nt, 0.0);
    out.eta_P2.assign(nt, 0.0);
    out.indicator.assign(nt, 0.0);

    for (int t = 0; t < nt; ++t) {
        const AffineMap F = m.affine(t);
        double s2 = 0.0, a2 = 0.0, c2 = 0.0, f2 = 0.0, p2 = 0.0;
        for (const auto& qp : q8.points) {
            const double w = qp.weight * std::abs(F.detB);
            const Mat2 thR = eval_rt_tensor(stress_rec.theta_R, t, qp.ref);
            const Mat2 th = postprocessed_stress(sol, t, qp.ref);
            const Mat2 D = thR - th;
            s2 += w * D.frob_dot(apply_A(D, prm));
            a2 += w * thR.skew().frob_norm2();
            const double cons = prm.lambda_inv * (eval_scalar(sol.p, t, qp.ref) -
                                                  eval_scalar(sol.phi, t, qp.ref)) +
                                eval_vec_divergence(sol.u, t, qp.ref);
            c2 += w * cons * cons;
            const Vec2 dF = eval_rt(flux_rec.w_R, t, qp.ref) - postprocessed_flux(sol, t, qp.ref);
            f2 += w * prm.tau * dF.dot(dF);
            const double dP = eval_scalar(sol.phi, t, qp.ref) - eval_scalar(p1phi, t, qp.ref);
            p2 += w * prm.lambda_inv * prm.lambda_inv / prm.tau * dP * dP;
        }
        out.eta_S2[t] = s2;
        out.eta_A2[t] = a2;
        out.eta_C2[t] = c2;
        out.eta_F2[t] = f2;
        out.eta_P2[t] = p2;
        out.indicator[t] = total_bound_from(s2, a2, c2, f2, p2, constants, prm);
    }
    double S = 0, A = 0, C = 0, Ff = 0, P = 0, B = 0;
    for (int t = 0; t < nt; ++t) {
        S += out.eta_S2[t];
        A += out.eta_A2[t];
        C += out.eta_C2[t];
        Ff += out.eta_F2[t];
        P += out.eta_P2[t];
        B += out.indicator[t];
    }
    out.eta_S = std::sqrt(std::max(0.0, S));
    out.eta_A = std::sqrt(std::max(0.0, A));
    out.eta_C = std::sqrt(std::max(0.0, C));
    out.eta_F = std::sqrt(std::max(0.0, Ff));
    out.eta_P = std::sqrt(std::max(0.0, P));
    out.bound = B;
    return out;
}

// ---------------------------------------------------------------------------
// energy norm of the error against a reference solution
//
// The reference lives on an integration mesh (the solution mesh itself for
// exact references, a finer nested mesh for overkill references); each
// integration element maps to the solution element containing it.

struct ReferenceOnMesh {
    const TriangleMesh* imesh = nullptr;
    std::vector<int> to_solution_elem; // empty means identity
    std::function<Mat2(int, const Vec2&, const Vec2&)> grad_u; // (ielem, ref, x)
    std::function<double(int, const Vec2&, const Vec2&)> p;
    std::function<double(int, const Vec2&, const Vec2&)> phi;
    std::function<Vec2(int, const Vec2&, const Vec2&)> grad_phi;
};

struct EnergyError {
    double comp_u2 = 0.0;   // 2 mu ||eps(u - u_h)||^2
    double comp_p2 = 0.0;   // lambda_inv ||(p - p_h) - (phi - phi_h)||^2
    double comp_phi2 = 0.0; // tau ||grad(phi - phi_h)||^2
    double total = 0.0;
    // cross terms for the split lemma checks
    double eps_u2 = 0.0;          // ||eps(u - u_h)||^2
    double pdiff2 = 0.0;          // ||(p - p_h) - (phi - phi_h)||^2
    double grad_phi2 = 0.0;       // ||grad(phi - phi_h)||^2
    double cross_phi_divu = 0.0;  // (phi - phi_h, div(u - u_h))
    double cross_flux = 0.0;      // (phi - phi_h - (p - p_h), phi - phi_h)
};

inline EnergyError energy_norm_error(const BiotSolution& sol, const ReferenceOnMesh& ref) {
    const TriangleMesh& im = *ref.imesh;
    static const QuadratureRule q8 = quadrature(8);
    EnergyError e;
    for (int it = 0; it < im.n_triangles(); ++it) {
        const AffineMap Fi = im.affine(it);
        const int st = ref.to_solution_elem.empty() ? it : ref.to_solution_elem[it];
        const AffineMap Fs = sol.mesh->affine(st);
        for (const auto& qp : q8.points) {
            const double w = qp.weight * std::abs(Fi.detB);
            const Vec2 x = Fi.to_physical(qp.ref);
            const Vec2 sref = Fs.to_reference(x);

            const Mat2 grad_err = ref.grad_u(it, qp.ref, x) - eval_vec_gradient(sol.u, st, sref);
            const double p_err = ref.p(it, qp.ref, x) - eval_scalar(sol.p, st, sref);
            const double phi_err = ref.phi(it, qp.ref, x) - eval_scalar(sol.phi, st, sref);
            const Vec2 gphi_err = ref.grad_phi(it, qp.ref, x) - eval_gradient(sol.phi, st, sref);

            e.eps_u2 += w * grad_err.sym().frob_norm2();
            const double pd = p_err - phi_err;
            e.pdiff2 += w * pd * pd;
            e.grad_phi2 += w * gphi_err.dot(gphi_err);
            e.cross_phi_divu += w * phi_err * grad_err.trace();
            e.cross_flux += w * (phi_err - p_err) * phi_err;
        }
    }
    const BiotParameters& prm = sol.params;
    e.comp_u2 = 2.0 * prm.mu * e.eps_u2;
    e.comp_p2 = prm.lambda_inv * e.pdiff2;
    e.comp_phi2 = prm.tau * e.grad_phi2;
    e.total = std::sqrt(std::max(0.0, e.comp_u2 + e.comp_p2 + e.comp_phi2));
    return e;
}

// exact closed-form reference on the solution mesh itself
struct ExactSolution {
    std::function<Mat2(const Vec2&)> grad_u;
    std::function<double(const Vec2&)> p;
    std::function<double(const Vec2&)> phi;
    std::function<Vec2(const Vec2&)> grad_phi;
    std::function<Vec2(const Vec2&)> u;
};

inline ReferenceOnMesh reference_from_exact(const TriangleMesh& mesh, const ExactSolution& ex) {
    ReferenceOnMesh r;
    r.imesh = &mesh;
    r.grad_u = [&ex](int, const Vec2&, const Vec2& x) { return ex.grad_u(x); };
    r.p = [&ex](int, const Vec2&, const Vec2& x) { return ex.p(x); };
    r.phi = [&ex](int, const Vec2&, const Vec2& x) { return ex.phi(x); };
    r.grad_phi = [&ex](int, const Vec2&, const Vec2& x) { return ex.grad_phi(x); };
    return r;
}

// ---------------------------------------------------------------------------
// numerical evaluation of both sides of the split bounds and the total bound

struct BoundsReport {
    double stress_lhs = 0.0, stress_rhs = 0.0; // lemma for the deformation part
    double flux_lhs = 0.0, flux_rhs = 0.0;     // lemma for the flow part
    double total_lhs = 0.0, total_rhs = 0.0;   // energy norm^2 vs bound
    double effectivity = 0.0;                  // sqrt(bound) / energy error
};

inline BoundsReport verify_bounds(const BiotSolution& sol, const EstimatorBreakdown& est,
                                  const ReliabilityConstants& c, const EnergyError& err) {
    const BiotParameters& p = sol.params;
    BoundsReport r;
    r.stress_lhs = p.mu * err.eps_u2 + p.lambda_inv * err.pdiff2 - 2.0 * err.cross_phi_divu;
    const double w = 1.0 / (2.0 * p.mu * p.lambda_inv + p.d);
    const double cd = c.C_D * w + 1.0 / c.C_D;
    r.stress_rhs = est.eta_S * est.eta_S + c.C_K * c.C_K / (4.0 * p.mu) * est.eta_A * est.eta_A +
                   p.mu * cd * cd * est.eta_C * est.eta_C;
    r.flux_lhs = 0.75 * p.tau * err.grad_phi2 + 2.0 * p.lambda_inv * err.cross_flux;
    r.flux_rhs = est.eta_F * est.eta_F + 4.0 * c.C_F * c.C_F * est.eta_P * est.eta_P;
    r.total_lhs = err.comp_u2 + err.comp_p2 + err.comp_phi2;
    r.total_rhs = est.bound;
    r.effectivity = std::sqrt(std::max(0.0, est.bound)) / std::max(err.total, 1e-300);
    return r;
}

} // namespace biot
