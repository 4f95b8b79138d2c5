#pragma once

// Quadrature on the reference triangle {(0,0),(1,0),(0,1)} and on [0,1].
//
// Triangle rules are conical products: a Duffy transform of a tensor
// Gauss-Legendre grid, x = xi, y = eta*(1-xi), weight (1-xi). With
// n_xi = ceil((d+2)/2) and n_eta = ceil((d+1)/2) points per direction the
// rule is exact for all polynomials of total degree d.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "biot/geometry.hpp"

namespace biot {

struct QuadraturePoint {
    Vec2 ref;      // reference coordinates
    double weight; // weights sum to 1/2 (reference-triangle area)
};

struct QuadratureRule {
    std::vector<QuadraturePoint> points;
    int exactness_degree = 0;
};

// Gauss-Legendre nodes/weights on [0,1]; Newton iteration on P_n.
inline void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        // initial guess on [-1,1]
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            // Legendre recurrence
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = 0.5 * (1.0 - x); // descending cos -> ascending node
        weights[i] = 1.0 / ((1.0 - x * x) * pp * pp);
    }
}

inline QuadratureRule quadrature(int degree) {
    if (degree < 1 || degree > 10) {
        throw std::invalid_argument("quadrature: unsupported degree " + std::to_string(degree));
    }
    const int n_xi = (degree + 3) / 2;  // ceil((degree+2)/2)
    const int n_eta = (degree + 2) / 2; // ceil((degree+1)/2)
    std::vector<double> nx, wx, ne, we;
    gauss_legendre_01(n_xi, nx, wx);
    gauss_legendre_01(n_eta, ne, we);

    QuadratureRule rule;
    rule.exactness_degree = degree;
    rule.points.reserve(static_cast<std::size_t>(n_xi) * n_eta);
    for (int i = 0; i < n_xi; ++i) {
        for (int j = 0; j < n_eta; ++j) {
            QuadraturePoint qp;
            qp.ref = {nx[i], ne[j] * (1.0 - nx[i])};
            qp.weight = wx[i] * we[j] * (1.0 - nx[i]);
            rule.points.push_back(qp);
        }
    }
    return rule;
}

// Gauss-Legendre rule on [0,1] for edge integrals (exact to degree 2n-1).
struct EdgeRule {
    std::vector<double> t;
    std::vector<double> w; // weights sum to 1
};

inline EdgeRule edge_quadrature(int npoints) {
    EdgeRule r;
    gauss_legendre_01(npoints, r.t, r.w);
    return r;
}

} // namespace biot
