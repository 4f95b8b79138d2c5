#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <random>

#include "biot/bench.hpp"
#include "biot/equilibrate.hpp"

using namespace biot;

namespace {

// nodal interpolation helper for the continuous Lagrange spaces
Field interpolate_lagrange(std::shared_ptr<const DofMap> dm,
                           const std::function<double(const Vec2&)>& f) {
    const TriangleMesh& m = *dm->mesh;
    Field out = Field::zeros(dm);
    const int V = m.n_vertices(), E = m.n_edges();
    for (int v = 0; v < V; ++v) out.coeffs[v] = f(m.vertices[v]);
    if (kind_base(dm->space) == SpaceKind::LagrangeP2C) {
        for (int e = 0; e < E; ++e)
            out.coeffs[V + e] = f((m.vertices[m.edges[e][0]] + m.vertices[m.edges[e][1]]) * 0.5);
    } else if (kind_base(dm->space) == SpaceKind::LagrangeP3C) {
        for (int e = 0; e < E; ++e) {
            const Vec2 lo = m.vertices[m.edges[e][0]], hi = m.vertices[m.edges[e][1]];
            out.coeffs[V + 2 * e] = f(lo + (hi - lo) / 3.0);
            out.coeffs[V + 2 * e + 1] = f(lo + (hi - lo) * (2.0 / 3.0));
        }
        for (int t = 0; t < m.n_triangles(); ++t) {
            const auto& tri = m.triangles[t];
            out.coeffs[V + 2 * E + t] =
                f((m.vertices[tri[0]] + m.vertices[tri[1]] + m.vertices[tri[2]]) / 3.0);
        }
    }
    return out;
}

Eigen::MatrixXd dense_mass(const TriangleMesh& m, const DofMap& dm) {
    const QuadratureRule q = quadrature(6);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dm.dofs_per_row, dm.dofs_per_row);
    std::vector<int> dofs;
    const bool rt = kind_is_rt(dm.space);
    const int nl = dm.n_local();
    for (int t = 0; t < m.n_triangles(); ++t) {
        const AffineMap F = m.affine(t);
        dm.element_dofs(t, dofs);
        for (const auto& qp : q.points) {
            const double w = qp.weight * std::abs(F.detB);
            if (rt) {
                Vec2 val[8];
                double div[8];
                rt_basis_at(dm, t, qp.ref, val, div);
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) M(dofs[i], dofs[j]) += w * val[i].dot(val[j]);
            } else {
                double val[10];
                detail::lagrange_shape(kind_base(dm.space), qp.ref, val);
                for (int i = 0; i < nl; ++i)
                    for (int j = 0; j < nl; ++j) M(dofs[i], dofs[j]) += w * val[i] * val[j];
            }
        }
    }
    return M;
}

} // namespace

TEST_CASE("quadrature rules", "[fem]") {
    SECTION("degree 1: weights sum to the reference area 1/2") {
        const QuadratureRule q = quadrature(1);
        double s = 0.0;
        for (const auto& p : q.points) s += p.weight;
        REQUIRE(std::abs(s - 0.5) < 1e-15);
    }
    SECTION("degree 8 integrates x^2 y^2 to 1/180") {
        const QuadratureRule q = quadrature(8);
        double s = 0.0;
        for (const auto& p : q.points) s += p.weight * p.ref.x * p.ref.x * p.ref.y * p.ref.y;
        REQUIRE(std::abs(s - 1.0 / 180.0) < 1e-15);
    }
    SECTION("exact on all monomials up to the requested degree") {
        // reference integral of x^a y^b is a! b! / (a+b+2)!
        const auto exact = [](int a, int b) {
            double num = 1.0;
            for (int k = 2; k <= a; ++k) num *= k;
            for (int k = 2; k <= b; ++k) num *= k;
            double den = 1.0;
            for (int k = 2; k <= a + b + 2; ++k) den *= k;
            return num / den;
        };
        for (int deg = 1; deg <= 10; ++deg) {
            const QuadratureRule q = quadrature(deg);
            REQUIRE(q.exactness_degree >= deg);
            for (int a = 0; a <= deg; ++a)
                for (int b = 0; a + b <= deg; ++b) {
                    double s = 0.0;
                    for (const auto& p : q.points)
                        s += p.weight * std::pow(p.ref.x, a) * std::pow(p.ref.y, b);
                    REQUIRE(std::abs(s - exact(a, b)) < 1e-14);
                }
        }
    }
    SECTION("constant integrates to the element area") {
        const TriangleMesh m = lshape_fan_mesh();
        const QuadratureRule q = quadrature(3);
        for (int t = 0; t < m.n_triangles(); ++t) {
            const AffineMap F = m.affine(t);
            double s = 0.0;
            for (const auto& p : q.points) s += p.weight * std::abs(F.detB);
            REQUIRE(std::abs(s - 0.5) < 1e-14); // each fan triangle has area 1/2
        }
    }
    SECTION("unsupported degree") {
        REQUIRE_THROWS_AS(quadrature(0), std::invalid_argument);
        REQUIRE_THROWS_AS(quadrature(11), std::invalid_argument);
    }
}

TEST_CASE("dof map counts", "[fem]") {
    const TriangleMesh m = unit_square_mesh(); // V=4, E=5, T=2
    REQUIRE(build_dofmap(m, SpaceKind::LagrangeP1C)->total_dofs == 4);
    REQUIRE(build_dofmap(m, SpaceKind::LagrangeP2C)->total_dofs == 9);
    REQUIRE(build_dofmap(m, SpaceKind::LagrangeP3C)->total_dofs == 4 + 10 + 2);
    REQUIRE(build_dofmap(m, SpaceKind::DiscontinuousP1)->total_dofs == 6);
    REQUIRE(build_dofmap(m, SpaceKind::RT1)->total_dofs == 14);
    REQUIRE(build_dofmap(m, SpaceKind::BrokenRT1)->total_dofs == 16);
    REQUIRE(build_dofmap(m, SpaceKind::RT1Tensor)->total_dofs == 28);
    REQUIRE(build_dofmap(m, SpaceKind::BrokenRT1Tensor)->total_dofs == 32);

    // zero trace on the 2-triangle square: the only non-boundary entity is
    // the diagonal midpoint, so exactly one dof stays free
    auto p2z = build_dofmap(m, SpaceKind::LagrangeP2C, BoundaryCondition::zero_trace);
    REQUIRE(p2z->n_free_per_row == 1);
}

TEST_CASE("Lagrange evaluation", "[fem]") {
    const TriangleMesh m = refine_all(unit_square_mesh());
    std::mt19937 rng(7u);
    std::uniform_real_distribution<double> U(0.0, 1.0);

    SECTION("P2 interpolant reproduces x^2") {
        auto dm = build_dofmap(m, SpaceKind::LagrangeP2C);
        const Field f = interpolate_lagrange(dm, [](const Vec2& x) { return x.x * x.x; });
        for (int i = 0; i < 10; ++i) {
            const int t = static_cast<int>(rng() % m.n_triangles());
            Vec2 r{U(rng), U(rng)};
            if (r.x + r.y > 1.0) r = {1.0 - r.x, 1.0 - r.y};
            const Vec2 x = m.affine(t).to_physical(r);
            REQUIRE(std::abs(eval_scalar(f, t, r) - x.x * x.x) < 1e-13);
            const Vec2 g = eval_gradient(f, t, r);
            REQUIRE(std::abs(g.x - 2.0 * x.x) < 1e-12);
            REQUIRE(std::abs(g.y) < 1e-12);
        }
    }
    SECTION("P3 interpolant reproduces x^3 - 2 x y^2") {
        auto dm = build_dofmap(m, SpaceKind::LagrangeP3C);
        const auto fn = [](const Vec2& x) { return x.x * x.x * x.x - 2.0 * x.x * x.y * x.y; };
        const Field f = interpolate_lagrange(dm, fn);
        for (int i = 0; i < 10; ++i) {
            const int t = static_cast<int>(rng() % m.n_triangles());
            Vec2 r{U(rng), U(rng)};
            if (r.x + r.y > 1.0) r = {1.0 - r.x, 1.0 - r.y};
            const Vec2 x = m.affine(t).to_physical(r);
            REQUIRE(std::abs(eval_scalar(f, t, r) - fn(x)) < 1e-13);
            const Vec2 g = eval_gradient(f, t, r);
            REQUIRE(std::abs(g.x - (3.0 * x.x * x.x - 2.0 * x.y * x.y)) < 1e-12);
            REQUIRE(std::abs(g.y - (-4.0 * x.x * x.y)) < 1e-12);
        }
    }
    SECTION("hat functions at a barycenter sum to 1") {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += hat_value(m, m.triangles[4][k], 4, {1.0 / 3.0, 1.0 / 3.0});
        REQUIRE(std::abs(s - 1.0) < 1e-15);
    }
    SECTION("element id out of range") {
        auto dm = build_dofmap(m, SpaceKind::LagrangeP2C);
        const Field f = Field::zeros(dm);
        REQUIRE_THROWS_AS(eval_scalar(f, m.n_triangles(), Vec2{0.3, 0.3}), std::out_of_range);
    }
}

TEST_CASE("RT1 element", "[fem]") {
    const TriangleMesh m = refine_all(unit_square_mesh());

    SECTION("interpolant of (x, y) has divergence 2") {
        auto dm = build_dofmap(m, SpaceKind::RT1);
        const Field f =
            interpolate_rt(dm, [&](int t, const Vec2& r) { return m.affine(t).to_physical(r); });
        const QuadratureRule q = quadrature(3);
        for (int t = 0; t < m.n_triangles(); ++t)
            for (const auto& qp : q.points) {
                REQUIRE(std::abs(eval_rt_divergence(f, t, qp.ref) - 2.0) < 1e-12);
                const Vec2 x = m.affine(t).to_physical(qp.ref);
                const Vec2 v = eval_rt(f, t, qp.ref);
                REQUIRE(std::abs(v.x - x.x) < 1e-12);
                REQUIRE(std::abs(v.y - x.y) < 1e-12);
            }
    }

    SECTION("normal continuity of a conforming interpolant of a quadratic field") {
        auto dm = build_dofmap(m, SpaceKind::RT1);
        const Field f = interpolate_rt(dm, [&](int t, const Vec2& r) {
            const Vec2 x = m.affine(t).to_physical(r);
            return Vec2{x.x * x.x - x.y, 3.0 * x.x * x.y};
        });
        for (int e = 0; e < m.n_edges(); ++e) {
            if (m.edge_is_boundary(e)) continue;
            const auto mom = jump_moments(f, e);
            REQUIRE(std::abs(mom[0]) < 1e-13);
            REQUIRE(std::abs(mom[1]) < 1e-13);
        }
    }

    SECTION("commuting interpolation: div(Pi v) = P1(div v) for cubic v") {
        auto dm = build_dofmap(m, SpaceKind::BrokenRT1);
        auto p1dm = build_dofmap(m, SpaceKind::DiscontinuousP1);
        const auto v = [&](int t, const Vec2& r) {
            const Vec2 x = m.affine(t).to_physical(r);
            return Vec2{x.x * x.x * x.x + x.y * x.y, x.y * x.y * x.y - 2.0 * x.x * x.y};
        };
        const auto div_v = [&](int t, const Vec2& r) {
            const Vec2 x = m.affine(t).to_physical(r);
            return 3.0 * x.x * x.x + 3.0 * x.y * x.y - 2.0 * x.x;
        };
        const Field fi = interpolate_rt(dm, v);
        const Field pdiv = project_P1(p1dm, div_v);
        const QuadratureRule q = quadrature(4);
        for (int t = 0; t < m.n_triangles(); ++t)
            for (const auto& qp : q.points)
                REQUIRE(std::abs(eval_rt_divergence(fi, t, qp.ref) - eval_scalar(pdiv, t, qp.ref)) <
                        1e-12);
    }
}

TEST_CASE("P1 projection", "[fem]") {
    SECTION("idempotent on piecewise P1 input") {
        const TriangleMesh m = refine_all(unit_square_mesh());
        auto dm = build_dofmap(m, SpaceKind::DiscontinuousP1);
        const Field f = project_P1(dm, [&](int t, const Vec2& r) {
            const Vec2 x = m.affine(t).to_physical(r);
            return 3.0 * x.x - 2.0 * x.y + 1.0;
        });
        const Field g = project_P1_of_field(dm, f);
        REQUIRE((f.coeffs - g.coeffs).lpNorm<Eigen::Infinity>() < 1e-13);
    }
    SECTION("mean preservation of x^2 on the reference triangle") {
        const TriangleMesh m = build_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}});
        auto dm = build_dofmap(m, SpaceKind::DiscontinuousP1);
        const Field f = project_P1(dm, [&](int t, const Vec2& r) {
            const Vec2 x = m.affine(t).to_physical(r);
            return x.x * x.x;
        });
        const QuadratureRule q = quadrature(4);
        double integral = 0.0;
        const AffineMap F = m.affine(0);
        for (const auto& qp : q.points)
            integral += qp.weight * std::abs(F.detB) * eval_scalar(f, 0, qp.ref);
        REQUIRE(std::abs(integral - 1.0 / 12.0) < 1e-14);
    }
    SECTION("projection of a continuous P2 edge bubble is discontinuous") {
        const TriangleMesh m = unit_square_mesh();
        auto p2 = build_dofmap(m, SpaceKind::LagrangeP2C);
        Field bubble = Field::zeros(p2);
        int diag = -1;
        for (int e = 0; e < m.n_edges(); ++e)
            if (!m.edge_is_boundary(e)) diag = e;
        bubble.coeffs[m.n_vertices() + diag] = 1.0;
        auto p1dm = build_dofmap(m, SpaceKind::DiscontinuousP1);
        const Field proj = project_P1_of_field(p1dm, bubble);
        double jump2 = 0.0;
        const EdgeRule ge = edge_quadrature(3);
        const int tm = m.edge_tris[diag][0], tp = m.edge_tris[diag][1];
        const int lo = m.edges[diag][0], hi = m.edges[diag][1];
        for (std::size_t k = 0; k < ge.t.size(); ++k) {
            const auto ref_on = [&](int t) {
                const int llo = m.local_vertex_index(t, lo), lhi = m.local_vertex_index(t, hi);
                return shapes::ref_corners[llo] * (1.0 - ge.t[k]) + shapes::ref_corners[lhi] * ge.t[k];
            };
            const double d = eval_scalar(proj, tm, ref_on(tm)) - eval_scalar(proj, tp, ref_on(tp));
            jump2 += ge.w[k] * d * d;
        }
        REQUIRE(jump2 > 1e-4);
    }
}

TEST_CASE("mass matrices are symmetric positive definite", "[fem]") {
    const TriangleMesh m = unit_square_mesh();
    for (const SpaceKind k :
         {SpaceKind::LagrangeP1C, SpaceKind::LagrangeP2C, SpaceKind::LagrangeP3C,
          SpaceKind::DiscontinuousP1, SpaceKind::RT1, SpaceKind::BrokenRT1}) {
        auto dm = build_dofmap(m, k);
        const Eigen::MatrixXd M = dense_mass(m, *dm);
        REQUIRE((M - M.transpose()).lpNorm<Eigen::Infinity>() < 1e-13);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
        REQUIRE(eig.eigenvalues().minCoeff() > 0.0);
    }
}
