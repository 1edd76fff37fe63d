#include "fc2t2/poly1d.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "fc2t2/error.hpp"

namespace fc2t2 {

namespace {

void check_degree(int d) {
    if (d > Poly1D::kMaxDegree)
        throw ContractError("polynomial degree " + std::to_string(d) + " exceeds the cap of " +
                            std::to_string(Poly1D::kMaxDegree));
}

} // namespace

Poly1D::Poly1D(std::initializer_list<double> a) {
    check_degree(static_cast<int>(a.size()) - 1);
    c_.resize(std::max<int>(1, static_cast<int>(a.size())));
    c_.setZero();
    int i = 0;
    for (double v : a) c_[i++] = v;
}

Poly1D::Poly1D(const Coeffs& a) : c_(a) {
    if (c_.size() == 0) c_ = Coeffs::Zero(1);
}

Poly1D Poly1D::derivative() const {
    if (degree() == 0) return zero();
    Coeffs d(degree());
    for (int i = 1; i <= degree(); ++i) d[i - 1] = i * c_[i];
    return Poly1D(d);
}

Poly1D Poly1D::integrate() const {
    check_degree(degree() + 1);
    Coeffs r(degree() + 2);
    r[0] = 0.0;
    for (int i = 0; i <= degree(); ++i) r[i + 1] = c_[i] / (i + 1);
    return Poly1D(r);
}

Poly1D Poly1D::trimmed(double rel_tol) const {
    const double cut = rel_tol * c_.cwiseAbs().maxCoeff();
    int d = degree();
    while (d > 0 && std::abs(c_[d]) <= cut) --d;
    return Poly1D(Coeffs(c_.head(d + 1)));
}

Poly1D& Poly1D::operator+=(const Poly1D& o) {
    if (o.degree() > degree()) {
        const int old = static_cast<int>(c_.size());
        c_.conservativeResize(o.degree() + 1);
        c_.tail(c_.size() - old).setZero();
    }
    c_.head(o.degree() + 1) += o.c_;
    return *this;
}

Poly1D operator+(const Poly1D& a, const Poly1D& b) {
    Poly1D r = a;
    r += b;
    return r;
}

Poly1D operator-(const Poly1D& a, const Poly1D& b) { return a + (-1.0) * b; }

Poly1D operator*(const Poly1D& a, const Poly1D& b) {
    const int d = a.degree() + b.degree();
    check_degree(d);
    Poly1D::Coeffs r = Poly1D::Coeffs::Zero(d + 1);
    for (int i = 0; i <= a.degree(); ++i) {
        if (a[i] == 0.0) continue;
        for (int j = 0; j <= b.degree(); ++j) r[i + j] += a[i] * b[j];
    }
    return Poly1D(r);
}

Poly1D operator*(double s, Poly1D a) {
    a *= s;
    return a;
}

Poly1D poly_compose(const Poly1D& outer, const Poly1D& inner) {
    check_degree(outer.degree() * inner.degree());
    Poly1D r = Poly1D::constant(outer[outer.degree()]);
    for (int i = outer.degree() - 1; i >= 0; --i) {
        r = r * inner;
        r[0] += outer[i];
    }
    return r;
}

namespace {

// a x^2 + b x + c with a != 0. A slightly negative discriminant (rounding
// around a double root) is read as zero.
void quadratic(double a, double b, double c, std::vector<double>& out) {
    double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) {
        if (disc < -1e-14 * (b * b + std::abs(4.0 * a * c))) return;
        disc = 0.0;
    }
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    if (q == 0.0) {
        out.push_back(0.0);
        out.push_back(0.0);
        return;
    }
    out.push_back(q / a);
    out.push_back(c / q);
}

// x^3 + a x^2 + b x + c.
void cubic(double a, double b, double c, std::vector<double>& out) {
    const double Q = (a * a - 3.0 * b) / 9.0;
    const double R = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    const double shift = a / 3.0;
    if (R * R < Q * Q * Q) {
        const double theta = std::acos(std::clamp(R / std::sqrt(Q * Q * Q), -1.0, 1.0));
        const double m = -2.0 * std::sqrt(Q);
        constexpr double two_pi = 2.0 * std::numbers::pi;
        out.push_back(m * std::cos(theta / 3.0) - shift);
        out.push_back(m * std::cos((theta + two_pi) / 3.0) - shift);
        out.push_back(m * std::cos((theta - two_pi) / 3.0) - shift);
        return;
    }
    const double A = -std::copysign(std::cbrt(std::abs(R) + std::sqrt(R * R - Q * Q * Q)), R);
    const double B = A == 0.0 ? 0.0 : Q / A;
    out.push_back(A + B - shift);
    // The complex pair collapses onto a real double root when A ~ B.
    if (std::abs(A - B) <= 1e-9 * std::max(std::abs(A) + std::abs(B), 1e-300)) {
        out.push_back(-0.5 * (A + B) - shift);
        out.push_back(-0.5 * (A + B) - shift);
    }
}

// Largest real root of x^3 + a x^2 + b x + c.
double cubic_max_root(double a, double b, double c) {
    std::vector<double> r;
    cubic(a, b, c, r);
    return *std::max_element(r.begin(), r.end());
}

// x^4 + a x^3 + b x^2 + c x + d by Ferrari's reduction.
void quartic(double a, double b, double c, double d, std::vector<double>& out) {
    const double a2 = a * a;
    const double p = b - 3.0 * a2 / 8.0;
    const double q = c - a * b / 2.0 + a2 * a / 8.0;
    const double r = d - a * c / 4.0 + a2 * b / 16.0 - 3.0 * a2 * a2 / 256.0;
    const double shift = a / 4.0;
    std::vector<double> y;
    const double scale = std::max({std::abs(p) * std::abs(p), std::abs(r), 1e-300});
    if (std::abs(q) <= 1e-14 * std::sqrt(scale) * std::sqrt(std::sqrt(scale))) {
        // Biquadratic in y^2.
        std::vector<double> z;
        quadratic(1.0, p, r, z);
        for (double v : z) {
            if (v > 0.0) {
                y.push_back(std::sqrt(v));
                y.push_back(-std::sqrt(v));
            } else if (v > -1e-14 * std::sqrt(scale)) {
                y.push_back(0.0);
                y.push_back(0.0);
            }
        }
    } else {
        // (y^2 + p/2 + m)^2 = 2m (y - q / (4m))^2 for the positive resolvent
        // root m of 8m^3 + 8p m^2 + (2p^2 - 8r) m - q^2.
        const double b2 = p * p / 4.0 - r, b3 = -q * q / 8.0;
        double m = cubic_max_root(p, b2, b3);
        // A tiny m comes out of the closed form with an absolute error only;
        // Newton steps on the resolvent restore its relative accuracy.
        for (int it = 0; it < 4 && m > 0.0; ++it) {
            const double g = ((m + p) * m + b2) * m + b3, dg = (3.0 * m + 2.0 * p) * m + b2;
            if (dg <= 0.0) break;
            const double next = m - g / dg;
            if (!(next > 0.0) || next == m) break;
            m = next;
        }
        if (m > 0.0) {
            const double s = std::sqrt(2.0 * m);
            quadratic(1.0, -s, p / 2.0 + m + q / (2.0 * s), y);
            quadratic(1.0, s, p / 2.0 + m - q / (2.0 * s), y);
        }
    }
    for (double v : y) out.push_back(v - shift);
}

} // namespace

std::vector<double> quartic_roots(const Poly1D& poly) {
    if (poly.degree() > 4) throw ContractError("quartic_roots takes degree <= 4");
    const Poly1D p = poly.trimmed(1e-12);
    if (p.degree() == 0 && p[0] == 0.0) throw ContractError("quartic_roots of the zero polynomial");
    std::vector<double> roots;
    const double lead = p[p.degree()];
    switch (p.degree()) {
    case 0: break;
    case 1: roots.push_back(-p[0] / p[1]); break;
    case 2: quadratic(p[2], p[1], p[0], roots); break;
    case 3:
    case 4: {
        // Solve for y = x / S with S bounding the root magnitudes, so the
        // reduced coefficients stay of order one.
        const int n = p.degree();
        double S = 0.0;
        for (int i = 1; i <= n; ++i) S = std::max(S, std::pow(std::abs(p[n - i] / lead), 1.0 / i));
        if (!(S > 0.0) || !std::isfinite(S)) S = 1.0;
        double c[4];
        double Si = 1.0;
        for (int i = 1; i <= n; ++i) c[i - 1] = p[n - i] / lead / (Si *= S);
        if (n == 3) cubic(c[0], c[1], c[2], roots);
        else quartic(c[0], c[1], c[2], c[3], roots);
        for (double& x : roots) x *= S;
        break;
    }
    }
    const Poly1D dp = p.derivative();
    for (double& x : roots) {
        const double f = p(x), g = dp(x);
        if (g == 0.0 || !std::isfinite(f)) continue;
        const double x1 = x - f / g;
        if (std::isfinite(x1) && std::abs(p(x1)) < std::abs(f)) x = x1;
    }
    // Candidates that do not come close to vanishing relative to the size
    // of the terms are artifacts of the reduction.
    std::erase_if(roots, [&](double x) {
        if (!std::isfinite(x)) return true;
        double mag = 0.0, xp = 1.0;
        for (int i = 0; i <= p.degree(); ++i, xp *= x) mag += std::abs(p[i] * xp);
        return std::abs(p(x)) > 1e-6 * mag;
    });
    std::sort(roots.begin(), roots.end());
    return roots;
}

ExpPolyFit fit_exp_poly(int degree, double range, int nodes) {
    // Unknowns a_1..a_d with a_0 = 1: minimize sum (1 + sum a_i x^i - e^-x)^2.
    Eigen::MatrixXd A(nodes, degree);
    Eigen::VectorXd rhs(nodes);
    for (int j = 0; j < nodes; ++j) {
        const double x = 0.5 * range * (1.0 - std::cos(std::numbers::pi * (j + 0.5) / nodes));
        double xp = 1.0;
        for (int i = 0; i < degree; ++i) A(j, i) = (xp *= x);
        rhs[j] = std::exp(-x) - 1.0;
    }
    const Eigen::VectorXd a = (A.transpose() * A).fullPivLu().solve(A.transpose() * rhs);
    Poly1D::Coeffs c(degree + 1);
    c[0] = 1.0;
    c.tail(degree) = a;
    ExpPolyFit fit{Poly1D(c), 0.0, range};
    for (int j = 0; j <= 20000; ++j) {
        const double x = range * j / 20000.0;
        fit.max_error = std::max(fit.max_error, std::abs(fit.poly(x) - std::exp(-x)));
    }
    return fit;
}

const ExpPolyFit& mexp_fit() {
    static const ExpPolyFit fit = fit_exp_poly();
    return fit;
}

} // namespace fc2t2
