#pragma once

// Finite element spaces on TriangleMesh: continuous Lagrange P1/P2/P3,
// discontinuous P1, and next-to-lowest-order Raviart-Thomas RT1 (conforming
// and broken, scalar- and tensor-valued), with dof maps, evaluation and the
// elementwise L2 projection onto discontinuous P1.
//
// RT1 bases are built per element directly in physical coordinates against
// global functionals: edge dofs are moments of the normal trace against
// {1, s}, with the edge parameter s in [-1,1] running from the lower to the
// higher global vertex index and n the fixed global edge normal; interior
// dofs are the two component averages. Sharing the edge dofs then makes the
// global field normal-continuous with no sign bookkeeping.

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "biot/mesh.hpp"
#include "biot/quadrature.hpp"

namespace biot {

enum class SpaceKind {
    LagrangeP1C,
    LagrangeP2C,
    LagrangeP3C,
    DiscontinuousP1,
    RT1,
    BrokenRT1,
    RT1Tensor,
    BrokenRT1Tensor,
};

enum class BoundaryCondition { none, zero_trace };

inline SpaceKind kind_base(SpaceKind k) {
    if (k == SpaceKind::RT1Tensor) return SpaceKind::RT1;
    if (k == SpaceKind::BrokenRT1Tensor) return SpaceKind::BrokenRT1;
    return k;
}

inline int kind_rows(SpaceKind k) {
    return (k == SpaceKind::RT1Tensor || k == SpaceKind::BrokenRT1Tensor) ? 2 : 1;
}

inline bool kind_is_rt(SpaceKind k) {
    const SpaceKind b = kind_base(k);
    return b == SpaceKind::RT1 || b == SpaceKind::BrokenRT1;
}

namespace shapes {

constexpr std::array<Vec2, 3> ref_corners = {Vec2{0.0, 0.0}, Vec2{1.0, 0.0}, Vec2{0.0, 1.0}};

inline void p1(const Vec2& r, double v[3]) {
    v[0] = 1.0 - r.x - r.y;
    v[1] = r.x;
    v[2] = r.y;
}

inline void p1_grad(Vec2 g[3]) {
    g[0] = {-1.0, -1.0};
    g[1] = {1.0, 0.0};
    g[2] = {0.0, 1.0};
}

inline void p2(const Vec2& r, double v[6]) {
    const double l0 = 1.0 - r.x - r.y, l1 = r.x, l2 = r.y;
    v[0] = l0 * (2.0 * l0 - 1.0);
    v[1] = l1 * (2.0 * l1 - 1.0);
    v[2] = l2 * (2.0 * l2 - 1.0);
    v[3] = 4.0 * l1 * l2; // midpoint of the edge opposite vertex 0
    v[4] = 4.0 * l2 * l0;
    v[5] = 4.0 * l0 * l1;
}

inline void p2_grad(const Vec2& r, Vec2 g[6]) {
    const double l0 = 1.0 - r.x - r.y, l1 = r.x, l2 = r.y;
    const Vec2 d0{-1.0, -1.0}, d1{1.0, 0.0}, d2{0.0, 1.0};
    g[0] = d0 * (4.0 * l0 - 1.0);
    g[1] = d1 * (4.0 * l1 - 1.0);
    g[2] = d2 * (4.0 * l2 - 1.0);
    g[3] = 4.0 * (d1 * l2 + d2 * l1);
    g[4] = 4.0 * (d2 * l0 + d0 * l2);
    g[5] = 4.0 * (d0 * l1 + d1 * l0);
}

// Node order: 3 vertices; per edge a (opposite vertex a, endpoints
// i=(a+1)%3, j=(a+2)%3) the node nearer i, then the node nearer j;
// then the interior bubble.
inline void p3(const Vec2& r, double v[10]) {
    const double l[3] = {1.0 - r.x - r.y, r.x, r.y};
    for (int k = 0; k < 3; ++k) v[k] = 0.5 * l[k] * (3.0 * l[k] - 1.0) * (3.0 * l[k] - 2.0);
    for (int a = 0; a < 3; ++a) {
        const int i = (a + 1) % 3, j = (a + 2) % 3;
        v[3 + 2 * a] = 4.5 * l[i] * l[j] * (3.0 * l[i] - 1.0);
        v[3 + 2 * a + 1] = 4.5 * l[i] * l[j] * (3.0 * l[j] - 1.0);
    }
    v[9] = 27.0 * l[0] * l[1] * l[2];
}

inline void p3_grad(const Vec2& r, Vec2 g[10]) {
    const double l[3] = {1.0 - r.x - r.y, r.x, r.y};
    const Vec2 d[3] = {{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}};
    for (int k = 0; k < 3; ++k)
        g[k] = d[k] * (0.5 * (27.0 * l[k] * l[k] - 18.0 * l[k] + 2.0));
    for (int a = 0; a < 3; ++a) {
        const int i = (a + 1) % 3, j = (a + 2) % 3;
        g[3 + 2 * a] = 4.5 * (d[i] * (l[j] * (6.0 * l[i] - 1.0)) + d[j] * (l[i] * (3.0 * l[i] - 1.0)));
        g[3 + 2 * a + 1] = 4.5 * (d[j] * (l[i] * (6.0 * l[j] - 1.0)) + d[i] * (l[j] * (3.0 * l[j] - 1.0)));
    }
    g[9] = 27.0 * (d[0] * (l[1] * l[2]) + d[1] * (l[0] * l[2]) + d[2] * (l[0] * l[1]));
}

} // namespace shapes

// ---------------------------------------------------------------------------

struct DofMap {
    SpaceKind space = SpaceKind::LagrangeP1C;
    BoundaryCondition bc = BoundaryCondition::none;
    const TriangleMesh* mesh = nullptr;

    int rows = 1;          // 2 for tensor RT kinds
    int dofs_per_row = 0;  // scalar dof count (the spec's invariant table)
    int total_dofs = 0;    // rows * dofs_per_row

    std::vector<char> constrained;  // per row-dof (same pattern in every row)
    std::vector<int> free_index;    // row-dof -> compact free id, -1 if constrained
    int n_free_per_row = 0;

    // RT1 element cache: nodal basis as monomial coefficients, per element
    struct RtElement {
        Eigen::Matrix<double, 8, 8> coef; // column j = coefficients of basis j
        Vec2 center;
        double scale = 1.0;
    };
    std::vector<RtElement> rt;

    int n_local() const {
        switch (kind_base(space)) {
            case SpaceKind::LagrangeP1C: return 3;
            case SpaceKind::LagrangeP2C: return 6;
            case SpaceKind::LagrangeP3C: return 10;
            case SpaceKind::DiscontinuousP1: return 3;
            case SpaceKind::RT1: return 8;
            case SpaceKind::BrokenRT1: return 8;
            default: return 0;
        }
    }

    // global row-dof ids of element t (row 0; other rows add r*dofs_per_row)
    void element_dofs(int t, std::vector<int>& out) const {
        const TriangleMesh& m = *mesh;
        out.clear();
        switch (kind_base(space)) {
            case SpaceKind::LagrangeP1C:
                for (int k = 0; k < 3; ++k) out.push_back(m.triangles[t][k]);
                break;
            case SpaceKind::LagrangeP2C:
                for (int k = 0; k < 3; ++k) out.push_back(m.triangles[t][k]);
                for (int a = 0; a < 3; ++a) out.push_back(m.n_vertices() + m.tri_edges[t][a]);
                break;
            case SpaceKind::LagrangeP3C: {
                const int V = m.n_vertices(), E = m.n_edges();
                for (int k = 0; k < 3; ++k) out.push_back(m.triangles[t][k]);
                for (int a = 0; a < 3; ++a) {
                    const int e = m.tri_edges[t][a];
                    const int i = m.triangles[t][(a + 1) % 3];
                    // first local edge node is nearer local i; global slot 0 is nearer edges[e][0]
                    if (m.edges[e][0] == i) {
                        out.push_back(V + 2 * e);
                        out.push_back(V + 2 * e + 1);
                    } else {
                        out.push_back(V + 2 * e + 1);
                        out.push_back(V + 2 * e);
                    }
                }
                out.push_back(V + 2 * E + t);
                break;
            }
            case SpaceKind::DiscontinuousP1:
                for (int k = 0; k < 3; ++k) out.push_back(3 * t + k);
                break;
            case SpaceKind::RT1: {
                const int E = m.n_edges();
                for (int a = 0; a < 3; ++a) {
                    const int e = m.tri_edges[t][a];
                    out.push_back(2 * e);
                    out.push_back(2 * e + 1);
                }
                out.push_back(2 * E + 2 * t);
                out.push_back(2 * E + 2 * t + 1);
                break;
            }
            case SpaceKind::BrokenRT1:
                for (int k = 0; k < 8; ++k) out.push_back(8 * t + k);
                break;
            default:
                throw std::logic_error("element_dofs: unsupported space");
        }
    }
};

namespace detail {

// RT1 monomial basis in scaled, centered coordinates (u, v).
inline Vec2 rt_monomial(int k, double u, double v) {
    switch (k) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {u, 0.0};
        case 3: return {v, 0.0};
        case 4: return {0.0, u};
        case 5: return {0.0, v};
        case 6: return {u * u, u * v};
        default: return {u * v, v * v};
    }
}

inline double rt_monomial_div(int k, double u, double v, double scale) {
    switch (k) {
        case 0: case 1: case 3: case 4: return 0.0;
        case 2: case 5: return 1.0 / scale;
        case 6: return 3.0 * u / scale;
        default: return 3.0 * v / scale;
    }
}

inline void build_rt_cache(DofMap& dm) {
    const TriangleMesh& m = *dm.mesh;
    const QuadratureRule q2 = quadrature(2);
    const EdgeRule ge = edge_quadrature(2);
    dm.rt.resize(m.n_triangles());
    for (int t = 0; t < m.n_triangles(); ++t) {
        auto& rte = dm.rt[t];
        const auto& tri = m.triangles[t];
        const Vec2 a = m.vertices[tri[0]], b = m.vertices[tri[1]], c = m.vertices[tri[2]];
        rte.center = (a + b + c) / 3.0;
        rte.scale = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});

        Eigen::Matrix<double, 8, 8> M;
        M.setZero();
        // edge moments against {1, s}
        for (int le = 0; le < 3; ++le) {
            const int e = m.tri_edges[t][le];
            const Vec2 lo = m.vertices[m.edges[e][0]], hi = m.vertices[m.edges[e][1]];
            const Vec2 n = m.edge_normals[e];
            const double L = (hi - lo).norm();
            for (std::size_t q = 0; q < ge.t.size(); ++q) {
                const Vec2 x = lo + (hi - lo) * ge.t[q];
                const double u = (x.x - rte.center.x) / rte.scale;
                const double v = (x.y - rte.center.y) / rte.scale;
                const double s = 2.0 * ge.t[q] - 1.0;
                for (int j = 0; j < 8; ++j) {
                    const double vn = rt_monomial(j, u, v).dot(n);
                    M(2 * le, j) += ge.w[q] * L * vn;
                    M(2 * le + 1, j) += ge.w[q] * L * vn * s;
                }
            }
        }
        // interior component averages
        const AffineMap F = m.affine(t);
        for (const auto& qp : q2.points) {
            const Vec2 x = F.to_physical(qp.ref);
            const double u = (x.x - rte.center.x) / rte.scale;
            const double v = (x.y - rte.center.y) / rte.scale;
            const double w = qp.weight * std::abs(F.detB);
            for (int j = 0; j < 8; ++j) {
                const Vec2 val = rt_monomial(j, u, v);
                M(6, j) += w * val.x;
                M(7, j) += w * val.y;
            }
        }
        rte.coef = M.partialPivLu().inverse();
    }
}

} // namespace detail

inline std::shared_ptr<DofMap> build_dofmap(const TriangleMesh& mesh, SpaceKind space,
                                            BoundaryCondition bc = BoundaryCondition::none) {
    auto dm = std::make_shared<DofMap>();
    dm->space = space;
    dm->bc = bc;
    dm->mesh = &mesh;
    dm->rows = kind_rows(space);
    const int V = mesh.n_vertices(), E = mesh.n_edges(), T = mesh.n_triangles();
    switch (kind_base(space)) {
        case SpaceKind::LagrangeP1C: dm->dofs_per_row = V; break;
        case SpaceKind::LagrangeP2C: dm->dofs_per_row = V + E; break;
        case SpaceKind::LagrangeP3C: dm->dofs_per_row = V + 2 * E + T; break;
        case SpaceKind::DiscontinuousP1: dm->dofs_per_row = 3 * T; break;
        case SpaceKind::RT1: dm->dofs_per_row = 2 * E + 2 * T; break;
        case SpaceKind::BrokenRT1: dm->dofs_per_row = 8 * T; break;
        default: throw std::logic_error("build_dofmap: unsupported space");
    }
    dm->total_dofs = dm->rows * dm->dofs_per_row;

    dm->constrained.assign(dm->dofs_per_row, 0);
    if (bc == BoundaryCondition::zero_trace) {
        if (kind_is_rt(space) || kind_base(space) == SpaceKind::DiscontinuousP1)
            throw std::invalid_argument("build_dofmap: zero_trace only for continuous Lagrange spaces");
        for (int v = 0; v < V; ++v)
            if (mesh.vertex_on_boundary[v]) dm->constrained[v] = 1;
        if (kind_base(space) == SpaceKind::LagrangeP2C) {
            for (int e = 0; e < E; ++e)
                if (mesh.edge_is_boundary(e)) dm->constrained[V + e] = 1;
        } else if (kind_base(space) == SpaceKind::LagrangeP3C) {
            for (int e = 0; e < E; ++e)
                if (mesh.edge_is_boundary(e)) dm->constrained[V + 2 * e] = dm->constrained[V + 2 * e + 1] = 1;
        }
    }
    dm->free_index.assign(dm->dofs_per_row, -1);
    int idx = 0;
    for (int i = 0; i < dm->dofs_per_row; ++i)
        if (!dm->constrained[i]) dm->free_index[i] = idx++;
    dm->n_free_per_row = idx;

    if (kind_is_rt(space)) detail::build_rt_cache(*dm);
    return dm;
}

// ---------------------------------------------------------------------------

// Coefficient field over a dof map. Lagrange fields may stack two components
// (components = 2) for displacements; tensor RT kinds carry their two rows in
// the dof map itself. Coefficients of constrained dofs are stored (as zeros),
// so the vector length is always stacks() * dofs_per_row.
struct Field {
    std::shared_ptr<const DofMap> dofmap;
    int components = 1;
    Eigen::VectorXd coeffs;

    int stacks() const { return components * dofmap->rows; }

    static Field zeros(std::shared_ptr<const DofMap> dm, int comps = 1) {
        Field f;
        f.dofmap = std::move(dm);
        f.components = comps;
        f.coeffs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.stacks()) * f.dofmap->dofs_per_row);
        return f;
    }
};

namespace detail {

inline void lagrange_shape(SpaceKind base, const Vec2& r, double* val) {
    switch (base) {
        case SpaceKind::LagrangeP1C:
        case SpaceKind::DiscontinuousP1: shapes::p1(r, val); break;
        case SpaceKind::LagrangeP2C: shapes::p2(r, val); break;
        case SpaceKind::LagrangeP3C: shapes::p3(r, val); break;
        default: throw std::logic_error("lagrange_shape: not a Lagrange space");
    }
}

inline void lagrange_shape_grad(SpaceKind base, const Vec2& r, Vec2* g) {
    switch (base) {
        case SpaceKind::LagrangeP1C:
        case SpaceKind::DiscontinuousP1: shapes::p1_grad(g); break;
        case SpaceKind::LagrangeP2C: shapes::p2_grad(r, g); break;
        case SpaceKind::LagrangeP3C: shapes::p3_grad(r, g); break;
        default: throw std::logic_error("lagrange_shape_grad: not a Lagrange space");
    }
}

} // namespace detail

inline void check_element(const Field& f, int t) {
    if (t < 0 || t >= f.dofmap->mesh->n_triangles())
        throw std::out_of_range("evaluate: element id " + std::to_string(t) + " out of range");
}

// scalar Lagrange evaluation of stacked component c
inline double eval_scalar(const Field& f, int t, const Vec2& ref, int c = 0) {
    check_element(f, t);
    const DofMap& dm = *f.dofmap;
    const int nl = dm.n_local();
    double val[10];
    detail::lagrange_shape(kind_base(dm.space), ref, val);
    thread_local std::vector<int> dofs;
    dm.element_dofs(t, dofs);
    const int off = c * dm.dofs_per_row;
    double out = 0.0;
    for (int k = 0; k < nl; ++k) out += f.coeffs[off + dofs[k]] * val[k];
    return out;
}

inline Vec2 eval_gradient(const Field& f, int t, const Vec2& ref, int c = 0) {
    check_element(f, t);
    const DofMap& dm = *f.dofmap;
    const int nl = dm.n_local();
    Vec2 gref[10];
    detail::lagrange_shape_grad(kind_base(dm.space), ref, gref);
    const AffineMap F = f.dofmap->mesh->affine(t);
    thread_local std::vector<int> dofs;
    dm.element_dofs(t, dofs);
    const int off = c * dm.dofs_per_row;
    Vec2 acc{0.0, 0.0};
    for (int k = 0; k < nl; ++k) acc += gref[k] * f.coeffs[off + dofs[k]];
    return F.push_gradient(acc);
}

inline Vec2 eval_vec(const Field& f, int t, const Vec2& ref) {
    return {eval_scalar(f, t, ref, 0), eval_scalar(f, t, ref, 1)};
}

// Jacobian d u_i / d x_j of a two-component Lagrange field
inline Mat2 eval_vec_gradient(const Field& f, int t, const Vec2& ref) {
    const Vec2 g0 = eval_gradient(f, t, ref, 0);
    const Vec2 g1 = eval_gradient(f, t, ref, 1);
    return {g0.x, g0.y, g1.x, g1.y};
}

inline double eval_vec_divergence(const Field& f, int t, const Vec2& ref) {
    return eval_gradient(f, t, ref, 0).x + eval_gradient(f, t, ref, 1).y;
}

// RT evaluation (row r of a tensor field, or r = 0 for scalar kinds)
inline Vec2 eval_rt(const Field& f, int t, const Vec2& ref, int r = 0) {
    check_element(f, t);
    const DofMap& dm = *f.dofmap;
    const auto& rte = dm.rt[t];
    const AffineMap F = dm.mesh->affine(t);
    const Vec2 x = F.to_physical(ref);
    const double u = (x.x - rte.center.x) / rte.scale;
    const double v = (x.y - rte.center.y) / rte.scale;
    thread_local std::vector<int> dofs;
    dm.element_dofs(t, dofs);
    const int off = r * dm.dofs_per_row;
    // nodal coefficients -> monomial coefficients
    double mono[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int j = 0; j < 8; ++j) {
        const double cj = f.coeffs[off + dofs[j]];
        if (cj == 0.0) continue;
        for (int k = 0; k < 8; ++k) mono[k] += rte.coef(k, j) * cj;
    }
    Vec2 out{0.0, 0.0};
    for (int k = 0; k < 8; ++k) out += detail::rt_monomial(k, u, v) * mono[k];
    return out;
}

inline double eval_rt_divergence(const Field& f, int t, const Vec2& ref, int r = 0) {
    check_element(f, t);
    const DofMap& dm = *f.dofmap;
    const auto& rte = dm.rt[t];
    const AffineMap F = dm.mesh->affine(t);
    const Vec2 x = F.to_physical(ref);
    const double u = (x.x - rte.center.x) / rte.scale;
    const double v = (x.y - rte.center.y) / rte.scale;
    thread_local std::vector<int> dofs;
    dm.element_dofs(t, dofs);
    const int off = r * dm.dofs_per_row;
    double out = 0.0;
    for (int j = 0; j < 8; ++j) {
        const double cj = f.coeffs[off + dofs[j]];
        if (cj == 0.0) continue;
        for (int k = 0; k < 8; ++k)
            out += rte.coef(k, j) * cj * detail::rt_monomial_div(k, u, v, rte.scale);
    }
    return out;
}

// all 8 RT1 nodal basis values and divergences at one point
inline void rt_basis_at(const DofMap& dm, int t, const Vec2& ref, Vec2 val[8], double div[8]) {
    const auto& rte = dm.rt[t];
    const AffineMap F = dm.mesh->affine(t);
    const Vec2 x = F.to_physical(ref);
    const double u = (x.x - rte.center.x) / rte.scale;
    const double v = (x.y - rte.center.y) / rte.scale;
    Vec2 mval[8];
    double mdiv[8];
    for (int k = 0; k < 8; ++k) {
        mval[k] = detail::rt_monomial(k, u, v);
        mdiv[k] = detail::rt_monomial_div(k, u, v, rte.scale);
    }
    for (int j = 0; j < 8; ++j) {
        Vec2 acc{0.0, 0.0};
        double accd = 0.0;
        for (int k = 0; k < 8; ++k) {
            acc += mval[k] * rte.coef(k, j);
            accd += mdiv[k] * rte.coef(k, j);
        }
        val[j] = acc;
        div[j] = accd;
    }
}

inline Mat2 eval_rt_tensor(const Field& f, int t, const Vec2& ref) {
    const Vec2 r0 = eval_rt(f, t, ref, 0);
    const Vec2 r1 = eval_rt(f, t, ref, 1);
    return {r0.x, r0.y, r1.x, r1.y};
}

inline Vec2 eval_rt_tensor_divergence(const Field& f, int t, const Vec2& ref) {
    return {eval_rt_divergence(f, t, ref, 0), eval_rt_divergence(f, t, ref, 1)};
}

// ---------------------------------------------------------------------------
// canonical RT1 dofs of a target vector field given by (element, ref) -> Vec2

template <class EvalFn>
inline std::array<double, 8> rt_dofs_of(const TriangleMesh& m, int t, const EvalFn& target) {
    std::array<double, 8> d{};
    static const EdgeRule ge = edge_quadrature(3);
    static const QuadratureRule q4 = quadrature(4);
    const auto& tri = m.triangles[t];
    for (int le = 0; le < 3; ++le) {
        const int e = m.tri_edges[t][le];
        const int lo = m.edges[e][0], hi = m.edges[e][1];
        const Vec2 n = m.edge_normals[e];
        const double L = m.edge_length(e);
        int llo = -1, lhi = -1;
        for (int k = 0; k < 3; ++k) {
            if (tri[k] == lo) llo = k;
            if (tri[k] == hi) lhi = k;
        }
        for (std::size_t q = 0; q < ge.t.size(); ++q) {
            const double tau = ge.t[q];
            const Vec2 ref = shapes::ref_corners[llo] * (1.0 - tau) + shapes::ref_corners[lhi] * tau;
            const double vn = target(t, ref).dot(n);
            d[2 * le] += ge.w[q] * L * vn;
            d[2 * le + 1] += ge.w[q] * L * vn * (2.0 * tau - 1.0);
        }
    }
    const AffineMap F = m.affine(t);
    for (const auto& qp : q4.points) {
        const Vec2 val = target(t, qp.ref);
        const double w = qp.weight * std::abs(F.detB);
        d[6] += w * val.x;
        d[7] += w * val.y;
    }
    return d;
}

// Canonical RT1 interpolation, elementwise; exact whenever the target is
// elementwise of degree <= 2 with degree <= 2 normal traces. On a broken
// dof map this is the per-element interpolant; on a conforming map shared
// edge dofs are written from both sides (meaningful for normal-continuous
// targets, where the two writes agree).
template <class EvalFn>
inline void interpolate_rt_into(Field& f, const EvalFn& target, int row = 0) {
    const DofMap& dm = *f.dofmap;
    const TriangleMesh& m = *dm.mesh;
    const int off = row * dm.dofs_per_row;
    thread_local std::vector<int> dofs;
    for (int t = 0; t < m.n_triangles(); ++t) {
        const auto d = rt_dofs_of(m, t, target);
        dm.element_dofs(t, dofs);
        for (int k = 0; k < 8; ++k) f.coeffs[off + dofs[k]] = d[k];
    }
}

template <class EvalFn>
inline Field interpolate_rt(std::shared_ptr<const DofMap> dm, const EvalFn& target) {
    Field f = Field::zeros(std::move(dm));
    interpolate_rt_into(f, target, 0);
    return f;
}

// ---------------------------------------------------------------------------
// elementwise L2 projection onto discontinuous P1

template <class Fn>
inline Field project_P1(std::shared_ptr<const DofMap> p1dm, const Fn& fn) {
    const TriangleMesh& m = *p1dm->mesh;
    static const QuadratureRule q8 = quadrature(8);
    Field out = Field::zeros(p1dm);
    for (int t = 0; t < m.n_triangles(); ++t) {
        const AffineMap F = m.affine(t);
        Eigen::Matrix3d M;
        Eigen::Vector3d b;
        M.setZero();
        b.setZero();
        for (const auto& qp : q8.points) {
            double lam[3];
            shapes::p1(qp.ref, lam);
            const double w = qp.weight * std::abs(F.detB);
            const double v = fn(t, qp.ref);
            for (int i = 0; i < 3; ++i) {
                b(i) += w * v * lam[i];
                for (int j = 0; j < 3; ++j) M(i, j) += w * lam[i] * lam[j];
            }
        }
        const Eigen::Vector3d c = M.llt().solve(b);
        for (int i = 0; i < 3; ++i) out.coeffs[3 * t + i] = c(i);
    }
    return out;
}

inline Field project_P1_of_field(std::shared_ptr<const DofMap> p1dm, const Field& f, int c = 0) {
    return project_P1(p1dm, [&](int t, const Vec2& ref) { return eval_scalar(f, t, ref, c); });
}

} // namespace biot
