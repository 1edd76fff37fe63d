#pragma once

#include <initializer_list>
#include <vector>

#include <Eigen/Core>

namespace fc2t2 {

// Dense univariate polynomial, coefficients in ascending powers. Storage is
// inline (no heap) up to kMaxDegree, which covers the transmittance
// compositions built during volumetric rendering.
class Poly1D {
public:
    static constexpr int kMaxDegree = 32;
    using Coeffs = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDegree + 1, 1>;

    Poly1D() : c_(Coeffs::Zero(1)) {}
    Poly1D(std::initializer_list<double> a);
    explicit Poly1D(const Coeffs& a);
    static Poly1D zero(int degree = 0) { return Poly1D(Coeffs::Zero(degree + 1)); }
    static Poly1D constant(double v) { return Poly1D({v}); }

    // Highest stored index; trailing zeros are kept.
    int degree() const { return static_cast<int>(c_.size()) - 1; }
    double operator[](int i) const { return c_[i]; }
    double& operator[](int i) { return c_[i]; }
    const Coeffs& coeffs() const { return c_; }

    double operator()(double x) const {
        double y = c_[degree()];
        for (int i = degree() - 1; i >= 0; --i) y = y * x + c_[i];
        return y;
    }

    Poly1D derivative() const;
    // Antiderivative with zero constant term.
    Poly1D integrate() const;
    // Drops trailing coefficients with |a_d| <= tol * max |a_i|.
    Poly1D trimmed(double rel_tol = 0.0) const;

    Poly1D& operator+=(const Poly1D& o);
    Poly1D& operator*=(double s) {
        c_ *= s;
        return *this;
    }

private:
    Coeffs c_;
};

Poly1D operator+(const Poly1D& a, const Poly1D& b);
Poly1D operator-(const Poly1D& a, const Poly1D& b);
Poly1D operator*(const Poly1D& a, const Poly1D& b);
Poly1D operator*(double s, Poly1D a);

inline double poly_eval(const Poly1D& p, double x) { return p(x); }
inline Poly1D poly_integrate(const Poly1D& p) { return p.integrate(); }
inline Poly1D poly_add(const Poly1D& a, const Poly1D& b) { return a + b; }
inline Poly1D poly_mul(const Poly1D& a, const Poly1D& b) { return a * b; }
// outer(inner(x)).
Poly1D poly_compose(const Poly1D& outer, const Poly1D& inner);

// Real roots of a polynomial of degree <= 4, ascending, repeated roots
// listed with multiplicity. Closed forms per degree after dropping leading
// coefficients below 1e-12 of the largest; every root then takes one
// Newton step, kept only if it lowers |p|.
std::vector<double> quartic_roots(const Poly1D& p);

struct ExpPolyFit {
    Poly1D poly;
    double max_error = 0.0;  // over a dense sweep of [0, range]
    double range = 5.0;
};

// Least-squares quartic for exp(-x) on [0, 5] over Chebyshev nodes, with
// the constant term pinned to 1 so an empty ray transmits everything.
ExpPolyFit fit_exp_poly(int degree = 4, double range = 5.0, int nodes = 64);

// The cached default fit used by the volumetric layer.
const ExpPolyFit& mexp_fit();
inline const Poly1D& mexp_poly() { return mexp_fit().poly; }

} // namespace fc2t2
