#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "qnd/errors.hpp"

namespace qnd {

// Uniform 1-D coordinate grid, endpoints included.
struct Grid1D {
    double x_min = -10.0;
    double x_max = 10.0;
    int n = 2001;

    Grid1D() = default;
    Grid1D(double xmin, double xmax, int points) : x_min(xmin), x_max(xmax), n(points) {
        if (n < 3) throw invalid_input("Grid1D: need at least 3 points, got " + std::to_string(n));
        if (!(x_max > x_min)) throw invalid_input("Grid1D: x_max must exceed x_min");
        if (!std::isfinite(x_min) || !std::isfinite(x_max))
            throw invalid_input("Grid1D: non-finite bounds");
    }

    double spacing() const { return (x_max - x_min) / (n - 1); }
    double point(int i) const { return x_min + spacing() * i; }

    Eigen::VectorXd points() const {
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x[i] = point(i);
        return x;
    }

    // Trapezoid quadrature weights (half spacing at the endpoints).
    Eigen::VectorXd quadrature_weights() const {
        const double h = spacing();
        Eigen::VectorXd w = Eigen::VectorXd::Constant(n, h);
        w[0] = w[n - 1] = 0.5 * h;
        return w;
    }
};

inline bool operator==(const Grid1D& a, const Grid1D& b) {
    return a.x_min == b.x_min && a.x_max == b.x_max && a.n == b.n;
}

// Trapezoid integral of sampled values on the grid.
inline double integrate(const Grid1D& g, const Eigen::VectorXd& f) {
    return g.quadrature_weights().dot(f);
}

}  // namespace qnd
