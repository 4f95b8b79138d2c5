#pragma once

// Conforming 2D triangulations with oriented edge topology, vertex patches
// and newest-vertex-bisection refinement.
//
// Conventions:
//  * triangles are stored counterclockwise (positive signed area);
//  * an edge is the sorted vertex pair (lo, hi), its unit normal n is the
//    90-degree counterclockwise rotation of the direction lo -> hi;
//  * for an interior edge, edge_tris = {T-, T+} with n pointing from T-
//    into T+; boundary edges store {T, -1};
//  * tri_edges[t][k] is the edge opposite the local vertex k;
//  * refinement_edge[t] is the local index (opposite vertex) of the NVB
//    bisection edge of triangle t.

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "biot/geometry.hpp"

namespace biot {

struct TriangleMesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;

    std::vector<std::array<int, 2>> edges;      // (lo, hi), lo < hi
    std::vector<Vec2> edge_normals;             // unit normal per edge
    std::vector<std::array<int, 2>> edge_tris;  // {T-, T+} or {T, -1}
    std::vector<std::array<int, 3>> tri_edges;  // edge opposite local vertex k
    std::vector<char> vertex_on_boundary;
    std::vector<int> refinement_edge;           // local index per triangle
    std::vector<int> generation;                // bisection depth
    std::vector<int> parent;                    // element id in the previous mesh, -1 for roots
    std::string tag;

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_triangles() const { return static_cast<int>(triangles.size()); }
    int n_edges() const { return static_cast<int>(edges.size()); }

    bool edge_is_boundary(int e) const { return edge_tris[e][1] < 0; }

    AffineMap affine(int t) const {
        const auto& tri = triangles[t];
        return AffineMap(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    }

    double edge_length(int e) const {
        return (vertices[edges[e][1]] - vertices[edges[e][0]]).norm();
    }

    int local_vertex_index(int t, int v) const {
        for (int k = 0; k < 3; ++k)
            if (triangles[t][k] == v) return k;
        return -1;
    }

    double signed_area(int t) const {
        const auto& tri = triangles[t];
        const Vec2 a = vertices[tri[0]], b = vertices[tri[1]], c = vertices[tri[2]];
        return 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
    }
};

namespace detail {

// Edge table + adjacency + normals. Triangles must already be CCW.
inline void derive_topology(TriangleMesh& m) {
    const int nt = m.n_triangles();
    // collect (lo, hi, tri, local_opposite)
    std::vector<std::array<int, 4>> rec;
    rec.reserve(3 * static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        const auto& tri = m.triangles[t];
        for (int k = 0; k < 3; ++k) {
            int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
            if (a > b) std::swap(a, b);
            rec.push_back({a, b, t, k});
        }
    }
    std::sort(rec.begin(), rec.end(), [](const auto& x, const auto& y) {
        if (x[0] != y[0]) return x[0] < y[0];
        if (x[1] != y[1]) return x[1] < y[1];
        return x[2] < y[2];
    });

    m.edges.clear();
    m.edge_tris.clear();
    m.tri_edges.assign(nt, {-1, -1, -1});
    for (std::size_t i = 0; i < rec.size();) {
        std::size_t j = i;
        while (j < rec.size() && rec[j][0] == rec[i][0] && rec[j][1] == rec[i][1]) ++j;
        const std::size_t count = j - i;
        if (count > 2) {
            throw std::invalid_argument("mesh: edge (" + std::to_string(rec[i][0]) + "," +
                                        std::to_string(rec[i][1]) + ") shared by more than 2 triangles");
        }
        const int e = static_cast<int>(m.edges.size());
        m.edges.push_back({rec[i][0], rec[i][1]});
        m.edge_tris.push_back({rec[i][2], count == 2 ? rec[i + 1][2] : -1});
        for (std::size_t q = i; q < j; ++q) m.tri_edges[rec[q][2]][rec[q][3]] = e;
        i = j;
    }

    // normals and the T-/T+ ordering: n points from T- into T+
    const int ne = m.n_edges();
    m.edge_normals.resize(ne);
    for (int e = 0; e < ne; ++e) {
        const Vec2 a = m.vertices[m.edges[e][0]], b = m.vertices[m.edges[e][1]];
        Vec2 n = (b - a).rot90();
        n = n / n.norm();
        m.edge_normals[e] = n;
        int t0 = m.edge_tris[e][0], t1 = m.edge_tris[e][1];
        const auto side = [&](int t) {
            const auto& tri = m.triangles[t];
            const Vec2 cen = (m.vertices[tri[0]] + m.vertices[tri[1]] + m.vertices[tri[2]]) / 3.0;
            const Vec2 mid = (a + b) * 0.5;
            return (cen - mid).dot(n);
        };
        if (t1 >= 0) {
            // slot 0 must be the triangle the normal points away from
            if (side(t0) > 0.0) {
                std::swap(t0, t1);
                m.edge_tris[e] = {t0, t1};
            }
        }
    }

    m.vertex_on_boundary.assign(m.n_vertices(), 0);
    for (int e = 0; e < ne; ++e) {
        if (m.edge_is_boundary(e)) {
            m.vertex_on_boundary[m.edges[e][0]] = 1;
            m.vertex_on_boundary[m.edges[e][1]] = 1;
        }
    }
}

inline int longest_edge_local(const TriangleMesh& m, int t) {
    const auto& tri = m.triangles[t];
    int best = 0;
    double best_len = -1.0;
    int best_opp = -1;
    for (int k = 0; k < 3; ++k) {
        const Vec2 a = m.vertices[tri[(k + 1) % 3]], b = m.vertices[tri[(k + 2) % 3]];
        const double len = (b - a).norm();
        // tie-break by the smallest opposite-vertex (global) index
        if (len > best_len + 1e-14 * (len + best_len) ||
            (std::abs(len - best_len) <= 1e-14 * (len + best_len) && tri[k] < best_opp)) {
            best = k;
            best_len = len;
            best_opp = tri[k];
        }
    }
    return best;
}

} // namespace detail

inline TriangleMesh build_mesh(std::vector<Vec2> raw_vertices,
                               std::vector<std::array<int, 3>> raw_triangles,
                               std::string domain_tag = {}) {
    TriangleMesh m;
    m.vertices = std::move(raw_vertices);
    m.triangles = std::move(raw_triangles);
    m.tag = std::move(domain_tag);

    const int nv = m.n_vertices();
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        for (int k = 0; k < 3; ++k) {
            const int v = m.triangles[t][k];
            if (v < 0 || v >= nv)
                throw std::invalid_argument("mesh: triangle " + std::to_string(t) +
                                            " references invalid vertex " + std::to_string(v));
        }
    }

    // duplicate detection on sorted vertex triples
    {
        std::map<std::array<int, 3>, int> seen;
        for (std::size_t t = 0; t < m.triangles.size(); ++t) {
            std::array<int, 3> key = m.triangles[t];
            std::sort(key.begin(), key.end());
            if (key[0] == key[1] || key[1] == key[2])
                throw std::invalid_argument("mesh: degenerate triangle " + std::to_string(t));
            auto [it, inserted] = seen.emplace(key, static_cast<int>(t));
            if (!inserted)
                throw std::invalid_argument("mesh: triangle " + std::to_string(t) +
                                            " duplicates triangle " + std::to_string(it->second));
        }
    }

    // orientation fix-up
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const double area = m.signed_area(static_cast<int>(t));
        if (area == 0.0)
            throw std::invalid_argument("mesh: triangle " + std::to_string(t) + " has zero area");
        if (area < 0.0) {
            std::swap(m.triangles[t][1], m.triangles[t][2]);
            std::fprintf(stderr, "[mesh] warning: fixed inverted orientation of triangle %zu\n", t);
        }
    }

    detail::derive_topology(m);

    // hanging-vertex (conformity) check; raw inputs only, so O(T*V) is fine
    if (static_cast<long long>(m.n_triangles()) * m.n_vertices() <= 20000000LL) {
        for (int e = 0; e < m.n_edges(); ++e) {
            const Vec2 a = m.vertices[m.edges[e][0]], b = m.vertices[m.edges[e][1]];
            const double len2 = (b - a).dot(b - a);
            for (int v = 0; v < nv; ++v) {
                if (v == m.edges[e][0] || v == m.edges[e][1]) continue;
                const Vec2 p = m.vertices[v];
                const double t = (p - a).dot(b - a) / len2;
                if (t <= 1e-12 || t >= 1.0 - 1e-12) continue;
                const Vec2 proj = a + (b - a) * t;
                if ((p - proj).norm() < 1e-12 * std::sqrt(len2))
                    throw std::invalid_argument("mesh: hanging vertex " + std::to_string(v) +
                                                " on edge " + std::to_string(e));
            }
        }
    }

    // Euler relation for simply connected polygonal domains
    if (m.n_vertices() - m.n_edges() + m.n_triangles() != 1)
        throw std::invalid_argument("mesh: Euler relation V-E+T=1 violated (non simply-connected input?)");

    m.refinement_edge.resize(m.n_triangles());
    for (int t = 0; t < m.n_triangles(); ++t)
        m.refinement_edge[t] = detail::longest_edge_local(m, t);
    m.generation.assign(m.n_triangles(), 0);
    m.parent.assign(m.n_triangles(), -1);
    return m;
}

// ---------------------------------------------------------------------------
// vertex patches

struct VertexPatch {
    int center = -1;
    bool is_boundary_vertex = false;
    std::vector<int> elements;        // sorted
    std::vector<int> interior_edges;  // mesh-interior edges incident to the center
};

inline std::vector<VertexPatch> vertex_patches(const TriangleMesh& m) {
    std::vector<VertexPatch> patches(m.n_vertices());
    for (int v = 0; v < m.n_vertices(); ++v) {
        patches[v].center = v;
        patches[v].is_boundary_vertex = m.vertex_on_boundary[v] != 0;
    }
    for (int t = 0; t < m.n_triangles(); ++t)
        for (int k = 0; k < 3; ++k) patches[m.triangles[t][k]].elements.push_back(t);
    for (int e = 0; e < m.n_edges(); ++e) {
        if (m.edge_is_boundary(e)) continue;
        patches[m.edges[e][0]].interior_edges.push_back(e);
        patches[m.edges[e][1]].interior_edges.push_back(e);
    }
    return patches; // element lists are already ascending by construction
}

// Hat function of vertex z on triangle t at a reference point.
inline double hat_value(const TriangleMesh& m, int z, int t, const Vec2& ref) {
    const int k = m.local_vertex_index(t, z);
    if (k < 0) return 0.0;
    const double lambda[3] = {1.0 - ref.x - ref.y, ref.x, ref.y};
    return lambda[k];
}

// ---------------------------------------------------------------------------
// newest-vertex bisection

// Refine: every marked element has all three edges cut (two rounds of NVB,
// i.e. four children), followed by conformity closure. Unmarked elements are
// bisected as needed by the closure. Existing vertex coordinates are reused
// verbatim.
inline TriangleMesh refine(const TriangleMesh& m, const std::vector<int>& marked_elements) {
    if (marked_elements.empty()) {
        TriangleMesh copy = m;
        copy.parent.resize(copy.n_triangles());
        for (int t = 0; t < copy.n_triangles(); ++t) copy.parent[t] = t;
        return copy;
    }

    std::vector<char> cut(m.n_edges(), 0);
    for (int t : marked_elements) {
        if (t < 0 || t >= m.n_triangles())
            throw std::invalid_argument("refine: invalid element id " + std::to_string(t));
        for (int k = 0; k < 3; ++k) cut[m.tri_edges[t][k]] = 1;
    }

    // closure: a triangle with any cut edge must have its refinement edge cut
    for (bool changed = true; changed;) {
        changed = false;
        for (int t = 0; t < m.n_triangles(); ++t) {
            const auto& te = m.tri_edges[t];
            if (!(cut[te[0]] || cut[te[1]] || cut[te[2]])) continue;
            const int re = te[m.refinement_edge[t]];
            if (!cut[re]) {
                cut[re] = 1;
                changed = true;
            }
        }
    }

    TriangleMesh out;
    out.vertices = m.vertices;
    out.tag = m.tag;

    // midpoints, created in ascending edge order
    std::vector<int> midpoint(m.n_edges(), -1);
    for (int e = 0; e < m.n_edges(); ++e) {
        if (!cut[e]) continue;
        midpoint[e] = out.n_vertices();
        out.vertices.push_back((m.vertices[m.edges[e][0]] + m.vertices[m.edges[e][1]]) * 0.5);
    }

    struct WorkTri {
        std::array<int, 3> v;
        int refedge; // local index
        int gen;
        int root;                 // element id in the input mesh
        std::array<int, 3> orig;  // full original edge per local edge, -1 otherwise
    };

    std::vector<WorkTri> result;
    // bisect at the refinement edge; a child needs further bisection only if
    // its refinement edge is still a cut original edge
    const auto bisect = [&](const WorkTri& w, const auto& self) -> void {
        const int k = w.refedge;
        const int e = w.orig[k];
        const int peak = w.v[k], vi = w.v[(k + 1) % 3], vj = w.v[(k + 2) % 3];
        const int mid = midpoint[e];
        WorkTri c1{{peak, vi, mid}, 2, w.gen + 1, w.root, {-1, -1, w.orig[(k + 2) % 3]}};
        WorkTri c2{{peak, mid, vj}, 1, w.gen + 1, w.root, {-1, w.orig[(k + 1) % 3], -1}};
        if (c1.orig[2] >= 0 && cut[c1.orig[2]]) self(c1, self); else result.push_back(c1);
        if (c2.orig[1] >= 0 && cut[c2.orig[1]]) self(c2, self); else result.push_back(c2);
    };

    result.reserve(2 * m.triangles.size());
    for (int t = 0; t < m.n_triangles(); ++t) {
        const auto& te = m.tri_edges[t];
        WorkTri w{m.triangles[t], m.refinement_edge[t], m.generation[t], t, te};
        if (cut[te[0]] || cut[te[1]] || cut[te[2]]) {
            bisect(w, bisect);
        } else {
            result.push_back(w);
        }
    }

    out.triangles.reserve(result.size());
    out.refinement_edge.reserve(result.size());
    out.generation.reserve(result.size());
    out.parent.reserve(result.size());
    for (const auto& w : result) {
        out.triangles.push_back(w.v);
        out.refinement_edge.push_back(w.refedge);
        out.generation.push_back(w.gen);
        out.parent.push_back(w.root);
    }

    detail::derive_topology(out);
    return out;
}

inline TriangleMesh refine_all(const TriangleMesh& m) {
    std::vector<int> all(m.n_triangles());
    for (int t = 0; t < m.n_triangles(); ++t) all[t] = t;
    return refine(m, all);
}

// ---------------------------------------------------------------------------
// metrics

inline double max_diameter(const TriangleMesh& m) {
    double h = 0.0;
    for (int e = 0; e < m.n_edges(); ++e) h = std::max(h, m.edge_length(e));
    return h;
}

inline double min_interior_angle(const TriangleMesh& m) {
    double amin = M_PI;
    for (int t = 0; t < m.n_triangles(); ++t) {
        const auto& tri = m.triangles[t];
        for (int k = 0; k < 3; ++k) {
            const Vec2 a = m.vertices[tri[k]];
            const Vec2 u = m.vertices[tri[(k + 1) % 3]] - a;
            const Vec2 v = m.vertices[tri[(k + 2) % 3]] - a;
            const double c = u.dot(v) / (u.norm() * v.norm());
            amin = std::min(amin, std::acos(std::max(-1.0, std::min(1.0, c))));
        }
    }
    return amin;
}

inline double domain_diameter(const TriangleMesh& m) {
    // all target domains realize their diameter on the vertex bounding box
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& v : m.vertices) {
        xmin = std::min(xmin, v.x);
        xmax = std::max(xmax, v.x);
        ymin = std::min(ymin, v.y);
        ymax = std::max(ymax, v.y);
    }
    return std::sqrt((xmax - xmin) * (xmax - xmin) + (ymax - ymin) * (ymax - ymin));
}

} // namespace biot
