#pragma once

// Vertex-patch equilibration: the H(div)-conforming flux reconstruction
// w_h^R and the weakly symmetric H(div)-conforming stress reconstruction
// theta_h^R, both in (broken) RT1 via hat-function localized corrections.
//
// Per vertex patch omega_z the correction lives in broken RT1 (vector or
// two-row tensor) with zero normal trace on the patch boundary except on
// edges lying on the domain boundary. Constraints per patch:
//   * element divergence moments against P1(T) (hat-weighted residual),
//   * jump moments against P1(S) on interior edges containing z,
//   * (stress) weak-symmetry moments against every hat restricted to the
//     patch, with the base field's asymmetry shared out by the partition
//     of unity.
// Each patch problem minimizes the L2 norm of the correction subject to
// its constraints (Cholesky of the local mass matrix + complete orthogonal
// decomposition, which doubles as the minimum-norm least-squares fallback
// for rank-deficient systems). Corrections are accumulated Jacobi-style
// after all patches have solved, so the result does not depend on patch
// order or thread count.

#include <Eigen/Dense>
#include <array>
#include <atomic>
#include <cmath>
#include <thread>
#include <vector>

#include "biot/system.hpp"

namespace biot {

inline Mat2 skew_embed(double gamma) { return {0.0, gamma, -gamma, 0.0}; }

// moments of [[q . n]] against {1, s} on the interior edge e
template <class VecEval> // (element, ref) -> Vec2
inline std::array<double, 2> jump_moments(const TriangleMesh& m, int e, const VecEval& q) {
    if (m.edge_is_boundary(e)) throw std::invalid_argument("jump: boundary edge " + std::to_string(e));
    static const EdgeRule ge = edge_quadrature(3);
    const int tm = m.edge_tris[e][0], tp = m.edge_tris[e][1];
    const Vec2 n = m.edge_normals[e];
    const double L = m.edge_length(e);
    const int lo = m.edges[e][0], hi = m.edges[e][1];
    const auto ref_on = [&](int t, double tau) {
        const int llo = m.local_vertex_index(t, lo), lhi = m.local_vertex_index(t, hi);
        return shapes::ref_corners[llo] * (1.0 - tau) + shapes::ref_corners[lhi] * tau;
    };
    std::array<double, 2> mom{0.0, 0.0};
    for (std::size_t k = 0; k < ge.t.size(); ++k) {
        const double tau = ge.t[k];
        const double jn = q(tm, ref_on(tm, tau)).dot(n) - q(tp, ref_on(tp, tau)).dot(n);
        mom[0] += ge.w[k] * L * jn;
        mom[1] += ge.w[k] * L * jn * (2.0 * tau - 1.0);
    }
    return mom;
}

inline std::array<double, 2> jump_moments(const Field& f, int e, int row = 0) {
    return jump_moments(*f.dofmap->mesh, e,
                        [&](int t, const Vec2& r) { return eval_rt(f, t, r, row); });
}

struct EquilibrationReport {
    double div_residual_abs = 0.0;  // max |div condition violation| at quadrature points
    double div_scale = 0.0;         // max |target divergence|
    double jump_moment_abs = 0.0;   // max |interior-edge jump moment|
    double symmetry_moment_abs = 0.0; // stress only: max per-vertex asymmetry moment
    double field_norm = 0.0;        // L2 norm of the reconstruction
    double patch_ls_residual = 0.0; // worst patch least-squares constraint residual

    double div_residual_rel() const { return div_residual_abs / std::max(div_scale, 1e-300); }
    double jump_moment_rel() const { return jump_moment_abs / std::max(field_norm, 1e-300); }
    double symmetry_moment_rel() const { return symmetry_moment_abs / std::max(field_norm, 1e-300); }
};

struct FluxReconstruction {
    Field w_R; // conforming RT1
    double correction_norm = 0.0;
    EquilibrationReport report;
};

struct StressReconstruction {
    Field theta_R; // conforming RT1Tensor
    double correction_norm = 0.0;
    EquilibrationReport report;
};

namespace detail {

// tables shared by every patch, computed once per equilibration call
struct EquilibrationTables {
    int rows = 1;
    // per element: RT nodal mass (8x8), divergence moments (8x3: dof x lambda_i)
    std::vector<Eigen::Matrix<double, 8, 8>> mass;
    std::vector<Eigen::Matrix<double, 8, 3>> divmom;
    // per element and row: hat-weighted residual moments R(j,i) = (res * lam_j, lam_i)_T
    std::vector<std::array<Eigen::Matrix3d, 2>> resmom;
    // per edge and row: base jump moments J(j0,k) = <phi_endpoint_j0 [[base.n]], zeta_k>_S
    std::vector<std::array<Eigen::Matrix2d, 2>> basejump;
    // stress only, per element: component moments S[comp](j,k) = (lam_j, (b_k)_comp)_T
    std::vector<std::array<Eigen::Matrix<double, 3, 8>, 2>> compmom;
    // stress only, per element: asymmetry moments A(j1,j0) = (lam_j1 lam_j0, as12(base))_T
    std::vector<Eigen::Matrix3d> asymmom;
};

// residual_fn(t, ref, row) is the P1 target for div(correction) on each element
template <class ResidualFn>
inline EquilibrationTables build_tables(const TriangleMesh& m, const DofMap& broken,
                                        const Field& base, int rows, const ResidualFn& residual_fn,
                                        bool with_symmetry) {
    EquilibrationTables tb;
    tb.rows = rows;
    const int nt = m.n_triangles();
    const QuadratureRule q4 = quadrature(4);
    static const EdgeRule ge = edge_quadrature(3);

    tb.mass.assign(nt, Eigen::Matrix<double, 8, 8>::Zero());
    tb.divmom.assign(nt, Eigen::Matrix<double, 8, 3>::Zero());
    tb.resmom.assign(nt, {Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero()});
    if (with_symmetry) {
        tb.compmom.assign(nt, {Eigen::Matrix<double, 3, 8>::Zero(), Eigen::Matrix<double, 3, 8>::Zero()});
        tb.asymmom.assign(nt, Eigen::Matrix3d::Zero());
    }

    for (int t = 0; t < nt; ++t) {
        const AffineMap F = m.affine(t);
        for (const auto& qp : q4.points) {
            const double w = qp.weight * std::abs(F.detB);
            double lam[3];
            shapes::p1(qp.ref, lam);
            Vec2 bval[8];
            double bdiv[8];
            rt_basis_at(broken, t, qp.ref, bval, bdiv);
            for (int k = 0; k < 8; ++k) {
                for (int l = k; l < 8; ++l) tb.mass[t](k, l) += w * bval[k].dot(bval[l]);
                for (int i = 0; i < 3; ++i) tb.divmom[t](k, i) += w * bdiv[k] * lam[i];
            }
            for (int r = 0; r < rows; ++r) {
                const double res = residual_fn(t, qp.ref, r);
                for (int j = 0; j < 3; ++j)
                    for (int i = 0; i < 3; ++i) tb.resmom[t][r](j, i) += w * res * lam[j] * lam[i];
            }
            if (with_symmetry) {
                for (int k = 0; k < 8; ++k)
                    for (int j = 0; j < 3; ++j) {
                        tb.compmom[t][0](j, k) += w * lam[j] * bval[k].x;
                        tb.compmom[t][1](j, k) += w * lam[j] * bval[k].y;
                    }
                const Mat2 th = eval_rt_tensor(base, t, qp.ref);
                const double as12 = th.a12 - th.a21;
                for (int j1 = 0; j1 < 3; ++j1)
                    for (int j0 = 0; j0 < 3; ++j0)
                        tb.asymmom[t](j1, j0) += w * lam[j1] * lam[j0] * as12;
            }
        }
        for (int k = 0; k < 8; ++k)
            for (int l = 0; l < k; ++l) tb.mass[t](k, l) = tb.mass[t](l, k);
    }

    // base jump moments per interior edge and row
    tb.basejump.assign(m.n_edges(), {Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero()});
    for (int e = 0; e < m.n_edges(); ++e) {
        if (m.edge_is_boundary(e)) continue;
        const int tm = m.edge_tris[e][0], tp = m.edge_tris[e][1];
        const Vec2 n = m.edge_normals[e];
        const double L = m.edge_length(e);
        const int lo = m.edges[e][0], hi = m.edges[e][1];
        const auto ref_on = [&](int t, double tau) {
            const int llo = m.local_vertex_index(t, lo), lhi = m.local_vertex_index(t, hi);
            return shapes::ref_corners[llo] * (1.0 - tau) + shapes::ref_corners[lhi] * tau;
        };
        for (std::size_t q = 0; q < ge.t.size(); ++q) {
            const double tau = ge.t[q];
            const double hat[2] = {1.0 - tau, tau}; // endpoint hats lo, hi
            for (int r = 0; r < rows; ++r) {
                const double jn = eval_rt(base, tm, ref_on(tm, tau), r).dot(n) -
                                  eval_rt(base, tp, ref_on(tp, tau), r).dot(n);
                for (int j0 = 0; j0 < 2; ++j0) {
                    tb.basejump[e][r](j0, 0) += ge.w[q] * L * hat[j0] * jn;
                    tb.basejump[e][r](j0, 1) += ge.w[q] * L * hat[j0] * jn * (2.0 * tau - 1.0);
                }
            }
        }
    }
    return tb;
}

struct PatchResult {
    std::vector<int> global_dofs; // into the broken coefficient vector (all rows)
    Eigen::VectorXd correction;
    double ls_residual = 0.0;
};

inline PatchResult solve_patch(const TriangleMesh& m, const DofMap& broken, const VertexPatch& patch,
                               const EquilibrationTables& tb, double tau_scale, bool with_symmetry) {
    const int z = patch.center;
    const int rows = tb.rows;
    const int nE = static_cast<int>(patch.elements.size());
    const int nloc = nE * rows * 8;

    // local dof (le, r, k) -> (le*rows + r)*8 + k; collect global ids and pins
    std::vector<int> gdof(nloc);
    std::vector<char> pinned(nloc, 0);
    std::vector<int> dofs;
    for (int le = 0; le < nE; ++le) {
        const int t = patch.elements[le];
        broken.element_dofs(t, dofs);
        for (int r = 0; r < rows; ++r)
            for (int k = 0; k < 8; ++k) gdof[(le * rows + r) * 8 + k] = r * broken.dofs_per_row + dofs[k];
        for (int a = 0; a < 3; ++a) {
            const int e = m.tri_edges[t][a];
            const bool contains_z = (m.edges[e][0] == z || m.edges[e][1] == z);
            if (!contains_z && !m.edge_is_boundary(e)) {
                for (int r = 0; r < rows; ++r) {
                    pinned[(le * rows + r) * 8 + 2 * a] = 1;
                    pinned[(le * rows + r) * 8 + 2 * a + 1] = 1;
                }
            }
        }
    }
    std::vector<int> free_of(nloc, -1);
    int nfree = 0;
    for (int i = 0; i < nloc; ++i)
        if (!pinned[i]) free_of[i] = nfree++;

    // constraint rows
    struct Row {
        std::vector<std::pair<int, double>> entries; // (free col, value)
        double rhs = 0.0;
    };
    std::vector<Row> rowsc;

    // (a) divergence moments per element, row and lambda_i
    for (int le = 0; le < nE; ++le) {
        const int t = patch.elements[le];
        const int jz = m.local_vertex_index(t, z);
        for (int r = 0; r < rows; ++r)
            for (int i = 0; i < 3; ++i) {
                Row row;
                for (int k = 0; k < 8; ++k) {
                    const int loc = (le * rows + r) * 8 + k;
                    if (pinned[loc]) continue;
                    const double c = tb.divmom[t](k, i);
                    if (c != 0.0) row.entries.emplace_back(free_of[loc], c);
                }
                row.rhs = tb.resmom[t][r](jz, i) / tau_scale;
                rowsc.push_back(std::move(row));
            }
    }

    // (b) jump moments on interior edges containing z
    for (int e : patch.interior_edges) {
        const int tm = m.edge_tris[e][0], tp = m.edge_tris[e][1];
        int lem = -1, lep = -1;
        for (int le = 0; le < nE; ++le) {
            if (patch.elements[le] == tm) lem = le;
            if (patch.elements[le] == tp) lep = le;
        }
        int am = -1, ap = -1;
        for (int a = 0; a < 3; ++a) {
            if (m.tri_edges[tm][a] == e) am = a;
            if (m.tri_edges[tp][a] == e) ap = a;
        }
        const int j0 = (m.edges[e][0] == z) ? 0 : 1;
        for (int r = 0; r < rows; ++r)
            for (int k = 0; k < 2; ++k) {
                Row row;
                const int locm = (lem * rows + r) * 8 + 2 * am + k;
                const int locp = (lep * rows + r) * 8 + 2 * ap + k;
                row.entries.emplace_back(free_of[locm], 1.0);
                row.entries.emplace_back(free_of[locp], -1.0);
                row.rhs = -tb.basejump[e][r](j0, k);
                rowsc.push_back(std::move(row));
            }
    }

    // (c) weak-symmetry moments against every hat on the patch
    if (with_symmetry) {
        std::vector<int> pverts;
        for (int t : patch.elements)
            for (int k = 0; k < 3; ++k) pverts.push_back(m.triangles[t][k]);
        std::sort(pverts.begin(), pverts.end());
        pverts.erase(std::unique(pverts.begin(), pverts.end()), pverts.end());
        for (int y : pverts) {
            Row row;
            double rhs = 0.0;
            std::vector<double> dense(nfree, 0.0);
            for (int le = 0; le < nE; ++le) {
                const int t = patch.elements[le];
                const int jy = m.local_vertex_index(t, y);
                if (jy < 0) continue;
                const int jz = m.local_vertex_index(t, z);
                // (theta, J2(phi_y))_T = int phi_y (theta_12 - theta_21)
                for (int k = 0; k < 8; ++k) {
                    const int loc0 = (le * rows + 0) * 8 + k;
                    const int loc1 = (le * rows + 1) * 8 + k;
                    if (!pinned[loc0]) dense[free_of[loc0]] += tb.compmom[t][1](jy, k);
                    if (!pinned[loc1]) dense[free_of[loc1]] -= tb.compmom[t][0](jy, k);
                }
                rhs -= tb.asymmom[t](jy, jz);
            }
            for (int c = 0; c < nfree; ++c)
                if (dense[c] != 0.0) row.entries.emplace_back(c, dense[c]);
            row.rhs = rhs;
            rowsc.push_back(std::move(row));
        }
    }

    const int nrows = static_cast<int>(rowsc.size());
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(nrows, nfree);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(nrows);
    for (int i = 0; i < nrows; ++i) {
        for (const auto& [c, v] : rowsc[i].entries) C(i, c) = v;
        d(i) = rowsc[i].rhs;
    }
    // row scaling for rank detection
    for (int i = 0; i < nrows; ++i) {
        const double s = C.row(i).norm();
        if (s > 0.0) {
            C.row(i) /= s;
            d(i) /= s;
        }
    }

    // mass matrix on free dofs (block diagonal per element and row)
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nfree, nfree);
    for (int le = 0; le < nE; ++le) {
        const int t = patch.elements[le];
        for (int r = 0; r < rows; ++r)
            for (int k = 0; k < 8; ++k) {
                const int lk = (le * rows + r) * 8 + k;
                if (pinned[lk]) continue;
                for (int l = 0; l < 8; ++l) {
                    const int ll = (le * rows + r) * 8 + l;
                    if (pinned[ll]) continue;
                    M(free_of[lk], free_of[ll]) = tb.mass[t](k, l);
                }
            }
    }

    // min ||x||_M s.t. Cx = d  ->  y = argmin ||y||, (C L^{-T}) y = d, x = L^{-T} y
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    Eigen::MatrixXd G = llt.matrixU().template solve<Eigen::OnTheRight>(C);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(G);
    const Eigen::VectorXd y = cod.solve(d);
    const Eigen::VectorXd x = llt.matrixU().solve(y);

    PatchResult res;
    res.ls_residual = (G * y - d).norm();
    res.global_dofs.reserve(nloc);
    res.correction.resize(nloc);
    int nz = 0;
    for (int i = 0; i < nloc; ++i) {
        if (pinned[i]) continue;
        res.global_dofs.push_back(gdof[i]);
        res.correction(nz++) = x(free_of[i]);
    }
    res.correction.conservativeResize(nz);
    return res;
}

// run all patches (optionally threaded), then accumulate in patch order
inline void run_patches(const TriangleMesh& m, const DofMap& broken,
                        const std::vector<VertexPatch>& patches, const EquilibrationTables& tb,
                        double tau_scale, bool with_symmetry, int n_threads,
                        Eigen::VectorXd& corr, double& worst_ls) {
    const int np = static_cast<int>(patches.size());
    std::vector<PatchResult> results(np);
    if (n_threads <= 1) {
        for (int z = 0; z < np; ++z)
            results[z] = solve_patch(m, broken, patches[z], tb, tau_scale, with_symmetry);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < n_threads; ++w)
            pool.emplace_back([&]() {
                for (int z = next.fetch_add(1); z < np; z = next.fetch_add(1))
                    results[z] = solve_patch(m, broken, patches[z], tb, tau_scale, with_symmetry);
            });
        for (auto& th : pool) th.join();
    }
    worst_ls = 0.0;
    for (int z = 0; z < np; ++z) {
        const auto& r = results[z];
        for (std::size_t i = 0; i < r.global_dofs.size(); ++i)
            corr(r.global_dofs[i]) += r.correction(static_cast<Eigen::Index>(i));
        worst_ls = std::max(worst_ls, r.ls_residual);
    }
}

// L2 norm of an RT coefficient field (all rows)
inline double rt_l2_norm(const Field& f) {
    const TriangleMesh& m = *f.dofmap->mesh;
    static const QuadratureRule q4 = quadrature(4);
    double acc = 0.0;
    for (int t = 0; t < m.n_triangles(); ++t) {
        const AffineMap F = m.affine(t);
        for (const auto& qp : q4.points) {
            const double w = qp.weight * std::abs(F.detB);
            for (int r = 0; r < f.dofmap->rows; ++r) {
                const Vec2 v = eval_rt(f, t, qp.ref, r);
                acc += w * v.dot(v);
            }
        }
    }
    return std::sqrt(std::max(0.0, acc));
}

// copy broken coefficients into a conforming RT map (edge dofs from the T- side)
inline Field to_conforming(const Field& brokenf, std::shared_ptr<const DofMap> conf_dm) {
    const TriangleMesh& m = *brokenf.dofmap->mesh;
    Field out = Field::zeros(conf_dm);
    std::vector<int> bd, cd;
    for (int t = 0; t < m.n_triangles(); ++t) {
        brokenf.dofmap->element_dofs(t, bd);
        conf_dm->element_dofs(t, cd);
        for (int r = 0; r < conf_dm->rows; ++r) {
            const int bo = r * brokenf.dofmap->dofs_per_row, co = r * conf_dm->dofs_per_row;
            // interior dofs always; edge dofs only from the T- side
            out.coeffs[co + cd[6]] = brokenf.coeffs[bo + bd[6]];
            out.coeffs[co + cd[7]] = brokenf.coeffs[bo + bd[7]];
            for (int a = 0; a < 3; ++a) {
                const int e = m.tri_edges[t][a];
                if (m.edge_tris[e][0] != t) continue;
                out.coeffs[co + cd[2 * a]] = brokenf.coeffs[bo + bd[2 * a]];
                out.coeffs[co + cd[2 * a + 1]] = brokenf.coeffs[bo + bd[2 * a + 1]];
            }
        }
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// global constraint verification (always run after equilibration; also used
// by the invariant suite against deliberately perturbed fields)

inline EquilibrationReport verify_flux_field(const TriangleMesh& mesh, const BiotSolution& sol,
                                             const SourceData& sources, const Field& w_R) {
    EquilibrationReport rep;
    auto p1dm = build_dofmap(mesh, SpaceKind::DiscontinuousP1);
    const Field p1phi = project_P1_of_field(p1dm, sol.phi);
    const double tau = sol.params.tau, li = sol.params.lambda_inv;
    static const QuadratureRule q4 = quadrature(4);
    rep.field_norm = detail::rt_l2_norm(w_R);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        for (const auto& qp : q4.points) {
            const double target = eval_scalar(sources.g_p1, t, qp.ref) +
                                  li * (eval_scalar(sol.p, t, qp.ref) - eval_scalar(p1phi, t, qp.ref));
            const double got = tau * eval_rt_divergence(w_R, t, qp.ref);
            rep.div_residual_abs = std::max(rep.div_residual_abs, std::abs(got - target));
            rep.div_scale = std::max(rep.div_scale, std::abs(target));
        }
    }
    for (int e = 0; e < mesh.n_edges(); ++e) {
        if (mesh.edge_is_boundary(e)) continue;
        const auto mom = jump_moments(w_R, e);
        rep.jump_moment_abs = std::max({rep.jump_moment_abs, std::abs(mom[0]), std::abs(mom[1])});
    }
    return rep;
}

inline EquilibrationReport verify_stress_field(const TriangleMesh& mesh, const BiotSolution& sol,
                                               const SourceData& sources, const Field& theta_R) {
    EquilibrationReport rep;
    static const QuadratureRule q4 = quadrature(4);
    static const QuadratureRule q5 = quadrature(5);
    rep.field_norm = detail::rt_l2_norm(theta_R);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        for (const auto& qp : q4.points) {
            const Vec2 f = eval_source_f(sources, t, qp.ref);
            const Vec2 gphi = eval_gradient(sol.phi, t, qp.ref);
            const Vec2 target{-f.x + gphi.x, -f.y + gphi.y};
            const Vec2 got = eval_rt_tensor_divergence(theta_R, t, qp.ref);
            rep.div_residual_abs = std::max(
                {rep.div_residual_abs, std::abs(got.x - target.x), std::abs(got.y - target.y)});
            rep.div_scale = std::max({rep.div_scale, std::abs(target.x), std::abs(target.y)});
        }
    }
    for (int e = 0; e < mesh.n_edges(); ++e) {
        if (mesh.edge_is_boundary(e)) continue;
        for (int r = 0; r < 2; ++r) {
            const auto mom = jump_moments(theta_R, e, r);
            rep.jump_moment_abs = std::max({rep.jump_moment_abs, std::abs(mom[0]), std::abs(mom[1])});
        }
    }
    std::vector<double> mom(mesh.n_vertices(), 0.0);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const AffineMap F = mesh.affine(t);
        for (const auto& qp : q5.points) {
            const double w = qp.weight * std::abs(F.detB);
            const Mat2 th = eval_rt_tensor(theta_R, t, qp.ref);
            double lam[3];
            shapes::p1(qp.ref, lam);
            for (int k = 0; k < 3; ++k) mom[mesh.triangles[t][k]] += w * lam[k] * (th.a12 - th.a21);
        }
    }
    for (double v : mom) rep.symmetry_moment_abs = std::max(rep.symmetry_moment_abs, std::abs(v));
    return rep;
}

inline FluxReconstruction equilibrate_flux(const TriangleMesh& mesh, const BiotSolution& sol,
                                           const SourceData& sources,
                                           const std::vector<VertexPatch>& patches,
                                           int n_threads = 1) {
    auto dm_broken = build_dofmap(mesh, SpaceKind::BrokenRT1);
    auto dm_conf = build_dofmap(mesh, SpaceKind::RT1);
    auto p1dm = build_dofmap(mesh, SpaceKind::DiscontinuousP1);
    const Field p1phi = project_P1_of_field(p1dm, sol.phi);

    // base field w(phi_h) = -grad phi_h, elementwise P1 (exactly representable)
    Field base = interpolate_rt(dm_broken, [&](int t, const Vec2& r) {
        return postprocessed_flux(sol, t, r);
    });

    const double tau = sol.params.tau;
    const double li = sol.params.lambda_inv;
    // residual = g + lambda_inv (p_h - P1 phi_h) - tau div w(phi_h)
    const auto residual = [&](int t, const Vec2& r, int) {
        return eval_scalar(sources.g_p1, t, r) +
               li * (eval_scalar(sol.p, t, r) - eval_scalar(p1phi, t, r)) -
               tau * eval_rt_divergence(base, t, r);
    };
    const auto tables = detail::build_tables(mesh, *dm_broken, base, 1, residual, false);

    Eigen::VectorXd corr = Eigen::VectorXd::Zero(dm_broken->total_dofs);
    double worst_ls = 0.0;
    detail::run_patches(mesh, *dm_broken, patches, tables, tau, false, n_threads, corr, worst_ls);

    Field corr_field = Field::zeros(dm_broken);
    corr_field.coeffs = corr;
    Field total = Field::zeros(dm_broken);
    total.coeffs = base.coeffs + corr;

    FluxReconstruction rec;
    rec.w_R = detail::to_conforming(total, dm_conf);
    rec.correction_norm = detail::rt_l2_norm(corr_field);
    rec.report = verify_flux_field(mesh, sol, sources, rec.w_R); // always run
    rec.report.patch_ls_residual = worst_ls;
    return rec;
}

inline StressReconstruction equilibrate_stress(const TriangleMesh& mesh, const BiotSolution& sol,
                                               const SourceData& sources,
                                               const std::vector<VertexPatch>& patches,
                                               int n_threads = 1) {
    auto dm_broken = build_dofmap(mesh, SpaceKind::BrokenRT1Tensor);
    auto dm_conf = build_dofmap(mesh, SpaceKind::RT1Tensor);

    // base field: rowwise RT1 interpolant of theta(u_h, p_h, phi_h)
    Field base = Field::zeros(dm_broken);
    for (int r = 0; r < 2; ++r)
        interpolate_rt_into(base, [&, r](int t, const Vec2& ref) {
            return postprocessed_stress(sol, t, ref).row(r);
        }, r);

    // residual row r: (-f + grad phi_h - div theta_base)_r, elementwise P1
    const auto residual = [&](int t, const Vec2& ref, int r) {
        const Vec2 f = eval_source_f(sources, t, ref);
        const Vec2 gphi = eval_gradient(sol.phi, t, ref);
        const double divr = eval_rt_divergence(base, t, ref, r);
        return (r == 0 ? -f.x + gphi.x : -f.y + gphi.y) - divr;
    };
    const auto tables = detail::build_tables(mesh, *dm_broken, base, 2, residual, true);

    Eigen::VectorXd corr = Eigen::VectorXd::Zero(dm_broken->total_dofs);
    double worst_ls = 0.0;
    detail::run_patches(mesh, *dm_broken, patches, tables, 1.0, true, n_threads, corr, worst_ls);

    Field corr_field = Field::zeros(dm_broken);
    corr_field.coeffs = corr;
    Field total = Field::zeros(dm_broken);
    total.coeffs = base.coeffs + corr;

    StressReconstruction rec;
    rec.theta_R = detail::to_conforming(total, dm_conf);
    rec.correction_norm = detail::rt_l2_norm(corr_field);
    rec.report = verify_stress_field(mesh, sol, sources, rec.theta_R); // always run
    rec.report.patch_ls_residual = worst_ls;
    return rec;
}

} // namespace biot
