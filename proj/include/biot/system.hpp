#pragma once

// Assembly and solution of the discrete three-field Biot system
//
//   2 mu (eps(u_h), eps(v)) - (p_h, div v)                 = (f, v)
//   (div u_h, q) + lambda_inv (p_h - phi_h, q)             = 0
//   lambda_inv (phi_h - p_h, psi) + tau (grad phi_h, grad psi) = (g, psi)
//
// on Taylor-Hood spaces (P2^2 / P1 / P2, zero trace on u and phi; P3^2 /
// P2 / P3 for the overkill reference). The second block row is flipped in
// sign so the assembled matrix is symmetric; the sparse system is solved
// with a direct LU factorization plus two steps of iterative refinement.
//
// lambda is kept as lambda_inv = 1/lambda so the incompressible limit is
// the regular parameter value lambda_inv = 0; in that case the pressure is
// only determined up to a constant and a single Lagrange-multiplier row
// pinning its mean is appended (the multiplier is zero in exact arithmetic
// since discrete displacement fields have mean-free divergence).

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biot/fem.hpp"

namespace biot {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BiotParameters {
    double mu = 1.0;         // shear modulus
    double lambda_inv = 1.0; // 1/lambda, 0 in the incompressible limit
    double tau = 1.0;
    static constexpr int d = 2;

    void validate() const {
        if (!(mu > 0.0)) throw std::invalid_argument("params.mu must be > 0");
        if (!(tau > 0.0)) throw std::invalid_argument("params.tau must be > 0");
        if (!(lambda_inv >= 0.0)) throw std::invalid_argument("params.lambda_inv must be >= 0");
    }
};

// Right-hand sides and their elementwise P1 projections. The projections,
// not the raw functions, enter assembly and equilibration; the oscillation
// norms ||f - P1 f|| and ||g - P1 g|| are reported alongside.
struct SourceData {
    std::function<Vec2(const Vec2&)> f;
    std::function<double(const Vec2&)> g;
    Field f1_p1, f2_p1, g_p1; // DiscontinuousP1
    double osc_f = 0.0;
    double osc_g = 0.0;
};

inline SourceData project_sources(const TriangleMesh& mesh, std::function<Vec2(const Vec2&)> f,
                                  std::function<double(const Vec2&)> g) {
    SourceData s;
    s.f = std::move(f);
    s.g = std::move(g);
    auto p1dm = build_dofmap(mesh, SpaceKind::DiscontinuousP1);
    s.f1_p1 = project_P1(p1dm, [&](int t, const Vec2& r) { return s.f(mesh.affine(t).to_physical(r)).x; });
    s.f2_p1 = project_P1(p1dm, [&](int t, const Vec2& r) { return s.f(mesh.affine(t).to_physical(r)).y; });
    s.g_p1 = project_P1(p1dm, [&](int t, const Vec2& r) { return s.g(mesh.affine(t).to_physical(r)); });
    const QuadratureRule q10 = quadrature(10);
    double of = 0.0, og = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const AffineMap F = mesh.affine(t);
        for (const auto& qp : q10.points) {
            const Vec2 x = F.to_physical(qp.ref);
            const double w = qp.weight * std::abs(F.detB);
            const Vec2 fv = s.f(x);
            const double d1 = fv.x - eval_scalar(s.f1_p1, t, qp.ref);
            const double d2 = fv.y - eval_scalar(s.f2_p1, t, qp.ref);
            const double dg = s.g(x) - eval_scalar(s.g_p1, t, qp.ref);
            of += w * (d1 * d1 + d2 * d2);
            og += w * dg * dg;
        }
    }
    s.osc_f = std::sqrt(std::max(0.0, of));
    s.osc_g = std::sqrt(std::max(0.0, og));
    return s;
}

inline Vec2 eval_source_f(const SourceData& s, int t, const Vec2& ref) {
    return {eval_scalar(s.f1_p1, t, ref), eval_scalar(s.f2_p1, t, ref)};
}

struct TaylorHoodSpaces {
    std::shared_ptr<DofMap> u;   // displacement (per-component map, zero trace)
    std::shared_ptr<DofMap> p;   // total pressure, no boundary condition
    std::shared_ptr<DofMap> phi; // fluid pressure, zero trace
    int displacement_degree = 2;

    long n_dofs() const { return 2L * u->n_free_per_row + p->n_free_per_row + phi->n_free_per_row; }
};

inline TaylorHoodSpaces make_taylor_hood(const TriangleMesh& mesh, int displacement_degree = 2) {
    TaylorHoodSpaces s;
    s.displacement_degree = displacement_degree;
    if (displacement_degree == 2) {
        s.u = build_dofmap(mesh, SpaceKind::LagrangeP2C, BoundaryCondition::zero_trace);
        s.p = build_dofmap(mesh, SpaceKind::LagrangeP1C);
        s.phi = build_dofmap(mesh, SpaceKind::LagrangeP2C, BoundaryCondition::zero_trace);
    } else if (displacement_degree == 3) {
        s.u = build_dofmap(mesh, SpaceKind::LagrangeP3C, BoundaryCondition::zero_trace);
        s.p = build_dofmap(mesh, SpaceKind::LagrangeP2C);
        s.phi = build_dofmap(mesh, SpaceKind::LagrangeP3C, BoundaryCondition::zero_trace);
    } else {
        throw std::invalid_argument("make_taylor_hood: displacement degree must be 2 or 3");
    }
    return s;
}

// Taylor-Hood caveat: no triangle may have two boundary edges.
inline bool taylor_hood_stable(const TriangleMesh& mesh) {
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        int nb = 0;
        for (int a = 0; a < 3; ++a)
            if (mesh.edge_is_boundary(mesh.tri_edges[t][a])) ++nb;
        if (nb >= 2) return false;
    }
    return true;
}

struct LinearSystem {
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd rhs;
    // free-dof offsets into the solution vector: [u_x | u_y | p | phi | mult]
    int off_u = 0, off_p = 0, off_phi = 0;
    int n_total = 0;
    bool has_mean_constraint = false;
    const TriangleMesh* mesh = nullptr;
    TaylorHoodSpaces spaces;
    BiotParameters params;
};

inline LinearSystem assemble(const TriangleMesh& mesh, const BiotParameters& params,
                             const SourceData& sources, const TaylorHoodSpaces& spaces,
                             std::optional<double> pressure_mean = std::nullopt) {
    params.validate();
    if (mesh.n_triangles() == 0) throw std::invalid_argument("assemble: empty mesh");
    if (spaces.u->mesh != &mesh) throw std::invalid_argument("assemble: dof maps built on another mesh");

    LinearSystem sys;
    sys.mesh = &mesh;
    sys.spaces = spaces;
    sys.params = params;
    const int nu = spaces.u->n_free_per_row;
    const int np = spaces.p->n_free_per_row;
    const int nphi = spaces.phi->n_free_per_row;
    sys.off_u = 0;
    sys.off_p = 2 * nu;
    sys.off_phi = 2 * nu + np;
    sys.has_mean_constraint = (params.lambda_inv == 0.0);
    sys.n_total = 2 * nu + np + nphi + (sys.has_mean_constraint ? 1 : 0);

    const double mean_target = pressure_mean.value_or(0.0);

    const int qdeg = std::max(4, 2 * spaces.displacement_degree);
    const QuadratureRule quad = quadrature(qdeg);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(mesh.n_triangles()) * 400);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.n_total);

    const int nlu = spaces.u->n_local();
    const int nlp = spaces.p->n_local();
    const int nlphi = spaces.phi->n_local();
    std::vector<int> du, dp, dphi;
    std::vector<double> Nu(nlu), Np(nlp), Nphi(nlphi);
    std::vector<Vec2> Gu(nlu), Gphi(nlphi), Gp(nlp);

    Eigen::MatrixXd Kuu(2 * nlu, 2 * nlu), Kup(2 * nlu, nlp), Kpp(nlp, nlp), Kpf(nlp, nlphi),
        Kff(nlphi, nlphi);
    Eigen::VectorXd Fu(2 * nlu), Ff(nlphi), Mp(nlp);

    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const AffineMap F = mesh.affine(t);
        Kuu.setZero();
        Kup.setZero();
        Kpp.setZero();
        Kpf.setZero();
        Kff.setZero();
        Fu.setZero();
        Ff.setZero();
        Mp.setZero();

        for (const auto& qp : quad.points) {
            const double w = qp.weight * std::abs(F.detB);
            detail::lagrange_shape(kind_base(spaces.u->space), qp.ref, Nu.data());
            detail::lagrange_shape(kind_base(spaces.p->space), qp.ref, Np.data());
            detail::lagrange_shape(kind_base(spaces.phi->space), qp.ref, Nphi.data());
            {
                Vec2 gref[10];
                detail::lagrange_shape_grad(kind_base(spaces.u->space), qp.ref, gref);
                for (int k = 0; k < nlu; ++k) Gu[k] = F.push_gradient(gref[k]);
                detail::lagrange_shape_grad(kind_base(spaces.phi->space), qp.ref, gref);
                for (int k = 0; k < nlphi; ++k) Gphi[k] = F.push_gradient(gref[k]);
            }

            // 2 mu eps(N_j e_b) : eps(N_i e_a)
            for (int i = 0; i < nlu; ++i) {
                for (int a = 0; a < 2; ++a) {
                    const int I = 2 * i + a;
                    for (int j = 0; j < nlu; ++j) {
                        const double gg = Gu[i].dot(Gu[j]);
                        for (int b = 0; b < 2; ++b) {
                            // 2 eps(N_j e_b):eps(N_i e_a) = delta_ab grad N_i . grad N_j
                            //                               + dN_i/dx_b dN_j/dx_a
                            const double dib = (b == 0) ? Gu[i].x : Gu[i].y;
                            const double dja = (a == 0) ? Gu[j].x : Gu[j].y;
                            Kuu(2 * i + a, 2 * j + b) +=
                                w * params.mu * ((a == b ? gg : 0.0) + dib * dja);
                        }
                    }
                    // -(p, div v): div(N_i e_a) = dN_i/dx_a
                    const double divia = (a == 0) ? Gu[i].x : Gu[i].y;
                    for (int j = 0; j < nlp; ++j) Kup(I, j) += w * (-divia * Np[j]);
                    const Vec2 fv = eval_source_f(sources, t, qp.ref);
                    Fu(I) += w * Nu[i] * (a == 0 ? fv.x : fv.y);
                }
            }
            for (int i = 0; i < nlp; ++i) {
                Mp(i) += w * Np[i];
                for (int j = 0; j < nlp; ++j) Kpp(i, j) += w * Np[i] * Np[j];
                for (int j = 0; j < nlphi; ++j) Kpf(i, j) += w * Np[i] * Nphi[j];
            }
            const double gval = eval_scalar(sources.g_p1, t, qp.ref);
            for (int i = 0; i < nlphi; ++i) {
                Ff(i) += w * Nphi[i] * gval;
                for (int j = 0; j < nlphi; ++j)
                    Kff(i, j) += w * (params.tau * Gphi[i].dot(Gphi[j]) +
                                      params.lambda_inv * Nphi[i] * Nphi[j]);
            }
        }

        spaces.u->element_dofs(t, du);
        spaces.p->element_dofs(t, dp);
        spaces.phi->element_dofs(t, dphi);

        const auto gu = [&](int k, int comp) -> int {
            const int fi = spaces.u->free_index[du[k]];
            return fi < 0 ? -1 : sys.off_u + comp * nu + fi;
        };
        const auto gp = [&](int k) -> int { return sys.off_p + spaces.p->free_index[dp[k]]; };
        const auto gphi = [&](int k) -> int {
            const int fi = spaces.phi->free_index[dphi[k]];
            return fi < 0 ? -1 : sys.off_phi + fi;
        };

        for (int i = 0; i < nlu; ++i)
            for (int a = 0; a < 2; ++a) {
                const int I = gu(i, a);
                if (I < 0) continue;
                rhs(I) += Fu(2 * i + a);
                for (int j = 0; j < nlu; ++j)
                    for (int b = 0; b < 2; ++b) {
                        const int J = gu(j, b);
                        if (J < 0) continue;
                        trip.emplace_back(I, J, Kuu(2 * i + a, 2 * j + b));
                    }
                for (int j = 0; j < nlp; ++j) {
                    const int J = gp(j);
                    trip.emplace_back(I, J, Kup(2 * i + a, j));
                    trip.emplace_back(J, I, Kup(2 * i + a, j)); // flipped second row keeps symmetry
                }
            }
        for (int i = 0; i < nlp; ++i) {
            const int I = gp(i);
            for (int j = 0; j < nlp; ++j)
                trip.emplace_back(I, gp(j), -params.lambda_inv * Kpp(i, j));
            for (int j = 0; j < nlphi; ++j) {
                const int J = gphi(j);
                if (J < 0) continue;
                trip.emplace_back(I, J, params.lambda_inv * Kpf(i, j));
                trip.emplace_back(J, I, params.lambda_inv * Kpf(i, j));
            }
            if (sys.has_mean_constraint) {
                const int M = sys.n_total - 1;
                trip.emplace_back(I, M, Mp(i));
                trip.emplace_back(M, I, Mp(i));
            }
        }
        for (int i = 0; i < nlphi; ++i) {
            const int I = gphi(i);
            if (I < 0) continue;
            rhs(I) += Ff(i);
            for (int j = 0; j < nlphi; ++j) {
                const int J = gphi(j);
                if (J < 0) continue;
                trip.emplace_back(I, J, Kff(i, j));
            }
        }
    }
    if (sys.has_mean_constraint) rhs(sys.n_total - 1) = mean_target;

    sys.A.resize(sys.n_total, sys.n_total);
    sys.A.setFromTriplets(trip.begin(), trip.end());
    sys.A.makeCompressed();
    sys.rhs = std::move(rhs);
    return sys;
}

struct BiotSolution {
    Field u;   // LagrangeP2C/P3C, components = 2, zero trace
    Field p;   // LagrangeP1C/P2C
    Field phi; // LagrangeP2C/P3C, zero trace
    BiotParameters params;
    TaylorHoodSpaces spaces;
    const TriangleMesh* mesh = nullptr;
    double residual_norm = 0.0;
    double rhs_norm = 0.0;
};

inline BiotSolution solve(const LinearSystem& sys) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(sys.A);
    if (lu.info() != Eigen::Success) {
        std::string hint = "sparse LU factorization failed (singular pivot)";
        if (sys.params.lambda_inv == 0.0 && !sys.has_mean_constraint)
            hint += " in the pressure block: lambda_inv = 0 requires the mean constraint";
        throw NumericalError(hint);
    }
    Eigen::VectorXd x = lu.solve(sys.rhs);
    // two steps of iterative refinement keep the residual near machine level
    // even for lambda ~ 1e8
    for (int it = 0; it < 2; ++it) {
        const Eigen::VectorXd r = sys.rhs - sys.A * x;
        x += lu.solve(r);
    }

    BiotSolution sol;
    sol.params = sys.params;
    sol.spaces = sys.spaces;
    sol.mesh = sys.mesh;
    sol.residual_norm = (sys.rhs - sys.A * x).norm();
    sol.rhs_norm = sys.rhs.norm();

    const int nu = sys.spaces.u->n_free_per_row;
    sol.u = Field::zeros(sys.spaces.u, 2);
    sol.p = Field::zeros(sys.spaces.p);
    sol.phi = Field::zeros(sys.spaces.phi);
    for (int i = 0; i < sys.spaces.u->dofs_per_row; ++i) {
        const int fi = sys.spaces.u->free_index[i];
        if (fi < 0) continue;
        sol.u.coeffs[i] = x(sys.off_u + fi);
        sol.u.coeffs[sys.spaces.u->dofs_per_row + i] = x(sys.off_u + nu + fi);
    }
    for (int i = 0; i < sys.spaces.p->dofs_per_row; ++i)
        sol.p.coeffs[i] = x(sys.off_p + sys.spaces.p->free_index[i]);
    for (int i = 0; i < sys.spaces.phi->dofs_per_row; ++i) {
        const int fi = sys.spaces.phi->free_index[i];
        if (fi >= 0) sol.phi.coeffs[i] = x(sys.off_phi + fi);
    }
    return sol;
}

// ---------------------------------------------------------------------------
// post-processed non-conforming stress and flux

// theta(u_h, p_h, phi_h) = 2 mu eps(u_h) - (p_h - phi_h) I, elementwise P2 entries
inline Mat2 postprocessed_stress(const BiotSolution& sol, int t, const Vec2& ref) {
    const Mat2 G = eval_vec_gradient(sol.u, t, ref);
    const double c = eval_scalar(sol.p, t, ref) - eval_scalar(sol.phi, t, ref);
    Mat2 th = G.sym() * (2.0 * sol.params.mu);
    th.a11 -= c;
    th.a22 -= c;
    return th;
}

// w(phi_h) = -grad phi_h, elementwise P1 vector
inline Vec2 postprocessed_flux(const BiotSolution& sol, int t, const Vec2& ref) {
    const Vec2 g = eval_gradient(sol.phi, t, ref);
    return {-g.x, -g.y};
}

// largest relative violation of (lambda_inv (p_h - phi_h) + div u_h, q_h) = 0
// over all continuous P1 basis functions
inline double constraint_orthogonality_residual(const BiotSolution& sol) {
    const TriangleMesh& m = *sol.mesh;
    static const QuadratureRule q = quadrature(5);
    std::vector<double> mom(m.n_vertices(), 0.0);
    double scale = 0.0;
    for (int t = 0; t < m.n_triangles(); ++t) {
        const AffineMap F = m.affine(t);
        for (const auto& qp : q.points) {
            const double w = qp.weight * std::abs(F.detB);
            const double val = sol.params.lambda_inv *
                                   (eval_scalar(sol.p, t, qp.ref) - eval_scalar(sol.phi, t, qp.ref)) +
                               eval_vec_divergence(sol.u, t, qp.ref);
            double lam[3];
            shapes::p1(qp.ref, lam);
            for (int k = 0; k < 3; ++k) mom[m.triangles[t][k]] += w * val * lam[k];
            scale += w * std::abs(val);
        }
    }
    double worst = 0.0;
    for (double v : mom) worst = std::max(worst, std::abs(v));
    return worst / std::max(scale, 1e-300);
}

} // namespace biot
