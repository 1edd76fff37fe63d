#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fc2t2/kernel.hpp"
#include "fc2t2/types.hpp"

// Slow reference implementations. Nothing here touches the expansion
// machinery; everything runs in double precision.
namespace fc2t2::oracle {

// y(m, c) = sum_n psi(q_m - p_n) w(n, c).
Values naive_sum(const Points& q, const Points& p, const Values& w, const KernelModel& k, int threads = 1);

struct NaiveGrads {
    Points q_bar;  // M x 3, summed over channels
    Points p_bar;  // N x 3
    Values w_bar;  // N x C
};

// Gradients of <y_bar, naive_sum(q, p, w)> with respect to q, p and w.
NaiveGrads naive_grads(const Points& q, const Points& p, const Values& w, const Values& y_bar,
                       const KernelModel& k, int threads = 1);

struct Quadrature {
    std::vector<double> nodes, weights;
};

// n-point Gauss-Legendre rule on [a, b].
Quadrature gauss_legendre(int n, double a = -1.0, double b = 1.0);

// Density (index 0) and colour (1..3) at a point.
using RadianceField = std::function<std::array<double, 4>(const Vec3&)>;

struct QuadratureRender {
    Vec3 rgb = Vec3::Zero();
    double t_inf = 1.0;
};

// Midpoint rule with n samples over the ray interval [t0, t1]: each sample
// sees the exact exponential of the optical depth accumulated up to it.
QuadratureRender quadrature_render(const RadianceField& field, const Vec3& origin, const Vec3& dir, double t0,
                                   double t1, int n_samples, const Vec3& background);

// First sign change of f on [t0, t1], located by a scan with the given step
// and refined by bisection to tol. Empty when f never changes sign.
std::optional<double> bisect_root(const std::function<double(double)>& f, double t0, double t1, double step,
                                  double tol);

struct OracleReport {
    std::string name;
    double max_error = 0.0;
    double mean_error = 0.0;
    long samples = 0;
    double tolerance = 0.0;
    bool pass = false;

    // name, max error, tolerance, PASS/FAIL; tab separated.
    std::string line() const;
};

// Builds a report from per-sample errors; pass iff the max is within tol.
OracleReport make_report(std::string name, const std::vector<double>& errors, double tolerance);

} // namespace fc2t2::oracle
