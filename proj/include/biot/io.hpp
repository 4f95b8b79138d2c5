#pragma once

// Plain-text mesh format, convergence-history CSV and legacy-ASCII VTK
// export. All numeric formatting is locale-independent and deterministic;
// doubles are printed with %.17g so write -> read -> write round-trips
// byte-exactly.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "biot/adapt.hpp"

namespace biot {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// --------------------------------------------------------------------------
// mesh text format:  VERTICES n / n lines "x y" / TRIANGLES m / m lines "i j k"

inline std::string write_mesh_text(const TriangleMesh& m) {
    std::string out;
    out += "VERTICES " + std::to_string(m.n_vertices()) + "\n";
    for (const auto& v : m.vertices) out += format_double(v.x) + " " + format_double(v.y) + "\n";
    out += "TRIANGLES " + std::to_string(m.n_triangles()) + "\n";
    for (const auto& t : m.triangles)
        out += std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]) + "\n";
    return out;
}

inline void write_mesh_file(const std::string& path, const TriangleMesh& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open mesh file for writing: " + path);
    f << write_mesh_text(m);
}

inline TriangleMesh read_mesh_text(std::istream& in, const std::string& tag = {}) {
    std::string kw;
    int n = 0;
    if (!(in >> kw >> n) || kw != "VERTICES")
        throw std::invalid_argument("mesh format: expected 'VERTICES n'");
    std::vector<Vec2> verts(n);
    for (int i = 0; i < n; ++i)
        if (!(in >> verts[i].x >> verts[i].y))
            throw std::invalid_argument("mesh format: bad vertex line " + std::to_string(i));
    int m = 0;
    if (!(in >> kw >> m) || kw != "TRIANGLES")
        throw std::invalid_argument("mesh format: expected 'TRIANGLES m'");
    std::vector<std::array<int, 3>> tris(m);
    for (int i = 0; i < m; ++i)
        if (!(in >> tris[i][0] >> tris[i][1] >> tris[i][2]))
            throw std::invalid_argument("mesh format: bad triangle line " + std::to_string(i));
    return build_mesh(std::move(verts), std::move(tris), tag);
}

inline TriangleMesh read_mesh_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open mesh file: " + path);
    return read_mesh_text(f, path);
}

// --------------------------------------------------------------------------
// convergence history CSV

inline const char* history_csv_header() {
    return "level,N,h,eta_S,eta_A,eta_C,eta_F,eta_P,bound,err_u,err_p,err_phi,err_total,"
           "effectivity,marked,seconds";
}

inline std::string write_history_csv(const ConvergenceHistory& h) {
    std::string out = history_csv_header();
    out += "\n";
    const auto num = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
    for (const auto& r : h.levels) {
        out += std::to_string(r.level) + "," + std::to_string(r.N) + "," + format_double(r.h) + ",";
        out += format_double(r.eta_S) + "," + format_double(r.eta_A) + "," + format_double(r.eta_C) +
               "," + format_double(r.eta_F) + "," + format_double(r.eta_P) + ",";
        out += format_double(r.bound) + ",";
        out += num(r.err_u) + "," + num(r.err_p) + "," + num(r.err_phi) + "," + num(r.err_total) +
               "," + num(r.effectivity) + ",";
        out += std::to_string(r.marked) + ",";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", r.seconds);
        out += buf;
        out += "\n";
    }
    return out;
}

inline void write_history_file(const std::string& path, const ConvergenceHistory& h) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open history file for writing: " + path);
    f << write_history_csv(h);
}

inline ConvergenceHistory read_history_csv(std::istream& in) {
    ConvergenceHistory h;
    std::string line;
    if (!std::getline(in, line) || line != history_csv_header())
        throw std::invalid_argument("history csv: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t pos = 0;
        while (true) {
            const std::size_t c = line.find(',', pos);
            cols.push_back(line.substr(pos, c == std::string::npos ? c : c - pos));
            if (c == std::string::npos) break;
            pos = c + 1;
        }
        if (cols.size() != 16) throw std::invalid_argument("history csv: bad row: " + line);
        const auto num = [](const std::string& s) {
            return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
        };
        LevelRecord r;
        r.level = std::stoi(cols[0]);
        r.N = std::stol(cols[1]);
        r.h = num(cols[2]);
        r.eta_S = num(cols[3]);
        r.eta_A = num(cols[4]);
        r.eta_C = num(cols[5]);
        r.eta_F = num(cols[6]);
        r.eta_P = num(cols[7]);
        r.bound = num(cols[8]);
        r.err_u = num(cols[9]);
        r.err_p = num(cols[10]);
        r.err_phi = num(cols[11]);
        r.err_total = num(cols[12]);
        r.effectivity = num(cols[13]);
        r.marked = std::stol(cols[14]);
        r.seconds = num(cols[15]);
        h.levels.push_back(r);
    }
    return h;
}

inline ConvergenceHistory read_history_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open history file: " + path);
    return read_history_csv(f);
}

// --------------------------------------------------------------------------
// legacy ASCII VTK: u, p, phi at vertices; indicator, eta components and the
// reconstructed fields sampled at element midpoints as cell data

inline void write_vtk(const std::string& path, const TriangleMesh& m, const BiotSolution& sol,
                      const EstimatorBreakdown& est, const FluxReconstruction& flux,
                      const StressReconstruction& stress) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open vtk file for writing: " + path);
    f << "# vtk DataFile Version 3.0\nbiot-estimate fields\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    f << "POINTS " << m.n_vertices() << " double\n";
    for (const auto& v : m.vertices) f << format_double(v.x) << " " << format_double(v.y) << " 0\n";
    f << "CELLS " << m.n_triangles() << " " << 4 * m.n_triangles() << "\n";
    for (const auto& t : m.triangles) f << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    f << "CELL_TYPES " << m.n_triangles() << "\n";
    for (int t = 0; t < m.n_triangles(); ++t) f << "5\n";

    f << "POINT_DATA " << m.n_vertices() << "\n";
    f << "VECTORS displacement double\n";
    // vertex dofs come first in every Lagrange map, so read them directly
    for (int v = 0; v < m.n_vertices(); ++v) {
        const double ux = sol.u.coeffs[v];
        const double uy = sol.u.coeffs[sol.u.dofmap->dofs_per_row + v];
        f << format_double(ux) << " " << format_double(uy) << " 0\n";
    }
    f << "SCALARS total_pressure double 1\nLOOKUP_TABLE default\n";
    for (int v = 0; v < m.n_vertices(); ++v) f << format_double(sol.p.coeffs[v]) << "\n";
    f << "SCALARS fluid_pressure double 1\nLOOKUP_TABLE default\n";
    for (int v = 0; v < m.n_vertices(); ++v) f << format_double(sol.phi.coeffs[v]) << "\n";

    const Vec2 mid{1.0 / 3.0, 1.0 / 3.0};
    f << "CELL_DATA " << m.n_triangles() << "\n";
    f << "SCALARS indicator double 1\nLOOKUP_TABLE default\n";
    for (int t = 0; t < m.n_triangles(); ++t) f << format_double(est.indicator[t]) << "\n";
    const struct {
        const char* name;
        const std::vector<double>* data;
    } comps[] = {{"eta_S2", &est.eta_S2}, {"eta_A2", &est.eta_A2}, {"eta_C2", &est.eta_C2},
                 {"eta_F2", &est.eta_F2}, {"eta_P2", &est.eta_P2}};
    for (const auto& c : comps) {
        f << "SCALARS " << c.name << " double 1\nLOOKUP_TABLE default\n";
        for (int t = 0; t < m.n_triangles(); ++t) f << format_double((*c.data)[t]) << "\n";
    }
    f << "VECTORS flux_reconstruction double\n";
    for (int t = 0; t < m.n_triangles(); ++t) {
        const Vec2 w = eval_rt(flux.w_R, t, mid);
        f << format_double(w.x) << " " << format_double(w.y) << " 0\n";
    }
    for (int r = 0; r < 2; ++r) {
        f << "VECTORS stress_reconstruction_row" << r << " double\n";
        for (int t = 0; t < m.n_triangles(); ++t) {
            const Vec2 w = eval_rt(stress.theta_R, t, mid, r);
            f << format_double(w.x) << " " << format_double(w.y) << " 0\n";
        }
    }
}

inline void write_indicator_dump(const std::string& path, const EstimatorBreakdown& est) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open indicator dump for writing: " + path);
    f << "element,indicator,eta_S2,eta_A2,eta_C2,eta_F2,eta_P2\n";
    for (std::size_t t = 0; t < est.indicator.size(); ++t)
        f << t << "," << format_double(est.indicator[t]) << "," << format_double(est.eta_S2[t]) << ","
          << format_double(est.eta_A2[t]) << "," << format_double(est.eta_C2[t]) << ","
          << format_double(est.eta_F2[t]) << "," << format_double(est.eta_P2[t]) << "\n";
}

} // namespace biot
