#include <catch_amalgamated.hpp>

#include "biot/bench.hpp"
#include "biot/io.hpp"

using namespace biot;

TEST_CASE("unit square split by one diagonal", "[mesh]") {
    const TriangleMesh m = unit_square_mesh();
    REQUIRE(m.n_vertices() == 4);
    REQUIRE(m.n_triangles() == 2);
    REQUIRE(m.n_edges() == 5);
    int ninterior = 0;
    for (int e = 0; e < m.n_edges(); ++e)
        if (!m.edge_is_boundary(e)) ++ninterior;
    REQUIRE(ninterior == 1);
    int nbv = 0;
    for (int v = 0; v < m.n_vertices(); ++v)
        if (m.vertex_on_boundary[v]) ++nbv;
    REQUIRE(nbv == 4);
}

TEST_CASE("single reference triangle", "[mesh]") {
    const TriangleMesh m = build_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}});
    REQUIRE(m.n_edges() == 3);
    for (int e = 0; e < 3; ++e) REQUIRE(m.edge_is_boundary(e));
    REQUIRE(m.n_vertices() - m.n_edges() + m.n_triangles() == 1);
}

TEST_CASE("L-shape fan combinatorics", "[mesh]") {
    const TriangleMesh m = lshape_fan_mesh();
    REQUIRE(m.n_vertices() == 8);
    REQUIRE(m.n_triangles() == 6);
    REQUIRE(m.n_edges() == 13);
    int ninterior = 0;
    for (int e = 0; e < m.n_edges(); ++e)
        if (!m.edge_is_boundary(e)) ++ninterior;
    REQUIRE(ninterior == 5);
    // all interior edges contain the reentrant corner (vertex 4 at the origin)
    for (int e = 0; e < m.n_edges(); ++e)
        if (!m.edge_is_boundary(e)) REQUIRE((m.edges[e][0] == 4 || m.edges[e][1] == 4));
}

TEST_CASE("build_mesh rejects bad input and fixes orientation", "[mesh]") {
    REQUIRE_THROWS_AS(build_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 3}}}), std::invalid_argument);
    REQUIRE_THROWS_AS(build_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}, {{2, 1, 0}}}),
                      std::invalid_argument);
    // hanging vertex: (0.5, 0.5) sits on the diagonal of the left triangle
    REQUIRE_THROWS_AS(
        build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}},
                   {{{0, 1, 2}}, {{0, 4, 3}}, {{4, 2, 3}}}),
        std::invalid_argument);
    // inverted triangle is auto-fixed
    const TriangleMesh m = build_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 2, 1}}});
    REQUIRE(m.signed_area(0) > 0.0);
}

TEST_CASE("edge normal convention", "[mesh]") {
    const TriangleMesh m = unit_square_mesh();
    for (int e = 0; e < m.n_edges(); ++e) {
        const Vec2 d = m.vertices[m.edges[e][1]] - m.vertices[m.edges[e][0]];
        const Vec2 n = m.edge_normals[e];
        REQUIRE(std::abs(n.dot(d)) < 1e-14);        // perpendicular
        REQUIRE(d.rot90().dot(n) > 0.0);            // counterclockwise rotation
        REQUIRE(std::abs(n.norm() - 1.0) < 1e-14);  // unit
        if (!m.edge_is_boundary(e)) {
            // n points from T- into T+
            const auto centroid = [&](int t) {
                const auto& tri = m.triangles[t];
                return (m.vertices[tri[0]] + m.vertices[tri[1]] + m.vertices[tri[2]]) / 3.0;
            };
            const Vec2 mid = (m.vertices[m.edges[e][0]] + m.vertices[m.edges[e][1]]) * 0.5;
            REQUIRE((centroid(m.edge_tris[e][0]) - mid).dot(n) < 0.0);
            REQUIRE((centroid(m.edge_tris[e][1]) - mid).dot(n) > 0.0);
        }
    }
}

TEST_CASE("vertex patches", "[mesh]") {
    const TriangleMesh sq = unit_square_mesh();
    const auto patches = vertex_patches(sq);
    // the two diagonal-end vertices (0 and 2) have 2-element patches
    REQUIRE(patches[0].elements.size() == 2);
    REQUIRE(patches[2].elements.size() == 2);
    REQUIRE(patches[1].elements.size() == 1);
    REQUIRE(patches[3].elements.size() == 1);

    const TriangleMesh one = build_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}});
    const auto p1 = vertex_patches(one);
    REQUIRE(p1.size() == 3);
    for (const auto& p : p1) REQUIRE(p.elements == std::vector<int>{0});

    const TriangleMesh fine = refine_all(refine_all(sq));
    const auto pf = vertex_patches(fine);
    std::size_t total = 0;
    for (const auto& p : pf) total += p.elements.size();
    REQUIRE(total == 3u * fine.n_triangles());
}

TEST_CASE("refinement", "[mesh]") {
    const TriangleMesh sq = unit_square_mesh();

    SECTION("empty mark set returns an identical mesh") {
        const TriangleMesh r = refine(sq, {});
        REQUIRE(r.n_triangles() == sq.n_triangles());
        REQUIRE(r.n_vertices() == sq.n_vertices());
        for (int t = 0; t < r.n_triangles(); ++t) REQUIRE(r.triangles[t] == sq.triangles[t]);
    }

    SECTION("mark-all quadrisects: 2 -> 8 -> 32") {
        const TriangleMesh r1 = refine_all(sq);
        REQUIRE(r1.n_triangles() == 8);
        const TriangleMesh r2 = refine_all(r1);
        REQUIRE(r2.n_triangles() == 32);
    }

    SECTION("surviving vertex coordinates are bit-identical") {
        TriangleMesh r = refine(sq, {0});
        for (int v = 0; v < sq.n_vertices(); ++v) {
            REQUIRE(r.vertices[v].x == sq.vertices[v].x);
            REQUIRE(r.vertices[v].y == sq.vertices[v].y);
        }
        REQUIRE(r.n_triangles() > sq.n_triangles());
        // conformity after a partial mark
        for (int e = 0; e < r.n_edges(); ++e)
            REQUIRE((r.edge_tris[e][1] >= 0 || r.edge_is_boundary(e)));
        REQUIRE(r.n_vertices() - r.n_edges() + r.n_triangles() == 1);
    }

    SECTION("single marked element in a larger mesh stays conforming") {
        TriangleMesh m = refine_all(refine_all(sq));
        const TriangleMesh r = refine(m, {5});
        REQUIRE(r.n_vertices() - r.n_edges() + r.n_triangles() == 1);
        REQUIRE(r.n_triangles() > m.n_triangles());
        double amin = min_interior_angle(r);
        REQUIRE(amin > 20.0 * M_PI / 180.0);
    }

    SECTION("min angle after 10 mark-all passes stays at 45 degrees") {
        TriangleMesh m = sq;
        for (int i = 0; i < 10; ++i) m = refine_all(m);
        REQUIRE(m.n_triangles() == 2 * (1 << 20));
        const double amin = min_interior_angle(m);
        REQUIRE(amin >= 20.0 * M_PI / 180.0 - 1e-12);
        REQUIRE(std::abs(amin - M_PI / 4.0) < 1e-9);
    }
}

TEST_CASE("mesh text format round-trip", "[mesh][io]") {
    const TriangleMesh m = refine_all(lshape_fan_mesh());
    const std::string text = write_mesh_text(m);
    std::istringstream in(text);
    const TriangleMesh back = read_mesh_text(in);
    REQUIRE(back.n_vertices() == m.n_vertices());
    REQUIRE(back.n_triangles() == m.n_triangles());
    REQUIRE(write_mesh_text(back) == text);
}
