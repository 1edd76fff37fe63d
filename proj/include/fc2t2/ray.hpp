#pragma once

#include <algorithm>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "fc2t2/error.hpp"
#include "fc2t2/multiindex.hpp"
#include "fc2t2/poly1d.hpp"
#include "fc2t2/types.hpp"

namespace fc2t2 {

struct Camera {
    Vec3 eye = Vec3(0, 0, 3);
    Vec3 gaze = Vec3(0, 0, -1);
    Vec3 up = Vec3(0, 1, 0);
    double fov_y = 0.6;  // radians
    int width = 64, height = 64;

    // Normalizes gaze and up; throws InputError on degenerate vectors or
    // an out-of-range field of view.
    void validate();
    Vec3 right() const { return gaze.cross(up).normalized(); }
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 dir = Vec3::UnitX();  // unit length
    Vec3 at(double t) const { return origin + t * dir; }
};

// Row-major pixel order; pixel (i, j) is row i from the top, column j from
// the left, sampled at its center.
std::vector<Ray> generate_rays(const Camera& c);

// Parameter interval of the ray inside the domain cube, starting no earlier
// than the origin. False when the ray misses.
bool clip_to_domain(const Ray& r, double& t_enter, double& t_exit);

struct Segment {
    Vec3i box;
    double x1 = 0.0, x2 = 0.0;  // ray parameters, x1 < x2
    double length() const { return x2 - x1; }
};

// Boxes of a level-`level` grid pierced by the ray, in ray order, with the
// parameter interval spent in each. Pieces shorter than 1e-12 are dropped.
std::vector<Segment> traverse(const Ray& r, int level);

// Offset of the segment's entry point from its box center.
Vec3 segment_entry_offset(const Ray& r, const Segment& s, int level);

// Tally of multiplications and additions for the line restriction.
struct FlopTally {
    long muls = 0, adds = 0;
    long total() const { return muls + adds; }
};

// Per-axis tables A[a][m][j] = d_a^(m-j)/(m-j)! * r_a^j/j!, so that
// (d_a + t r_a)^m / m! = sum_j A[a][m][j] t^j.
struct LineBasis {
    static constexpr int kMax = 5;
    double A[3][kMax][kMax];

    LineBasis(const Vec3& d, const Vec3& r, int rho, FlopTally* tally = nullptr) {
        for (int a = 0; a < 3; ++a) {
            double dp[kMax], rp[kMax];
            dp[0] = rp[0] = 1.0;
            dp[1] = d[a];
            rp[1] = r[a];
            // One multiply by the base and one by the reciprocal factorial.
            for (int i = 2; i <= rho; ++i) {
                dp[i] = dp[i - 1] * d[a] * (1.0 / i);
                rp[i] = rp[i - 1] * r[a] * (1.0 / i);
            }
            for (int m = 0; m <= rho; ++m)
                for (int j = 0; j <= m; ++j) A[a][m][j] = dp[m - j] * rp[j];
            if (tally) tally->muls += 4 * std::max(0, rho - 1) + rho * (rho - 1) / 2;
        }
    }
};

// Restriction of a box's Taylor polynomial, sum_k L_k x^k / k!, to the line
// x = d + t r: an exact univariate polynomial of degree rho in t. With a
// tally, every multiplication and addition performed is counted.
template <class Scalar>
Poly1D line2poly(const MultiIndexTable& t, const Scalar* L, const Vec3& d, const Vec3& r, FlopTally* tally = nullptr);

// The same for `count` coefficient vectors spaced `stride` apart, sharing
// the per-axis tables and the axis-1/2 products. At most 8 channels.
template <class Scalar>
void line2poly_channels(const MultiIndexTable& t, const Scalar* L, long stride, int count, const Vec3& d, const Vec3& r,
                        Poly1D* out, FlopTally* tally = nullptr);

// Moments of a unit-weight segment d + x r, x in [0, s]:
// out[n] = int_0^s prod_a (x r_a + d_a)^{n_a} dx / n!.
void line2taylor(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s, double* out);
Eigen::VectorXd line2taylor(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s);

// Same with a weight polynomial h(x) under the integral.
void line2taylor_h(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s, const Poly1D& h, double* out);
Eigen::VectorXd line2taylor_h(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s, const Poly1D& h);
// Several weight polynomials over one segment; out holds count blocks of
// t.size() moments.
void line2taylor_hs(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s, const Poly1D* h, int count,
                    double* out);

// H[j] = integral over [0, s] of x^j h(x), for j = 0..rho.
void weighted_powers(int rho, double s, const Poly1D& h, double* H);

// ---------------------------------------------------------------------------

template <class Scalar>
Poly1D line2poly(const MultiIndexTable& t, const Scalar* L, const Vec3& d, const Vec3& r, FlopTally* tally) {
    Poly1D out;
    line2poly_channels(t, L, 0, 1, d, r, &out, tally);
    return out;
}

template <class Scalar>
void line2poly_channels(const MultiIndexTable& t, const Scalar* L, long stride, int count, const Vec3& d, const Vec3& r,
                        Poly1D* out, FlopTally* tally) {
    const int rho = t.rho();
    constexpr int K = LineBasis::kMax;
    const LineBasis B(d, r, rho, tally);
    long muls = 0, adds = 0;
    Poly1D::Coeffs acc[8];
    if (count > 8) throw ContractError("line2poly_channels handles at most 8 channels");
    for (int c = 0; c < count; ++c) acc[c] = Poly1D::Coeffs::Zero(rho + 1);
    // Group by (k1, k2): inner(t) = sum_k3 L_k A3[k3](t) has degree
    // rho - k1 - k2 and is then multiplied by the axis-1 and axis-2 factors.
    double inner[K], a12[K];
    for (int k1 = 0; k1 <= rho; ++k1)
        for (int k2 = 0; k1 + k2 <= rho; ++k2) {
            const int top = rho - k1 - k2, deg12 = k1 + k2;
            if (deg12 > 0) {
                for (int j = 0; j <= deg12; ++j) a12[j] = 0.0;
                for (int i = 0; i <= k1; ++i)
                    for (int j = 0; j <= k2; ++j) a12[i + j] += B.A[0][k1][i] * B.A[1][k2][j];
                muls += (k1 + 1) * (k2 + 1);
                adds += (k1 + 1) * (k2 + 1) - (deg12 + 1);
            }
            for (int c = 0; c < count; ++c) {
                const Scalar* Lc = L + c * stride;
                inner[0] = static_cast<double>(Lc[t.find(k1, k2, 0)]);
                for (int j = 1; j <= top; ++j) inner[j] = 0.0;
                for (int k3 = 1; k3 <= top; ++k3) {
                    const double v = static_cast<double>(Lc[t.find(k1, k2, k3)]);
                    for (int j = 0; j <= k3; ++j) inner[j] += v * B.A[2][k3][j];
                    muls += k3 + 1;
                    adds += k3 + 1;
                }
                Poly1D::Coeffs& o = acc[c];
                if (deg12 == 0) {
                    for (int j = 0; j <= top; ++j) o[j] += inner[j];
                    adds += top + 1;
                    continue;
                }
                for (int i = 0; i <= deg12; ++i)
                    for (int j = 0; j <= top; ++j) o[i + j] += a12[i] * inner[j];
                muls += (deg12 + 1) * (top + 1);
                adds += (deg12 + 1) * (top + 1);
            }
        }
    for (int c = 0; c < count; ++c) out[c] = Poly1D(acc[c]);
    if (tally) {
        tally->muls += muls;
        tally->adds += adds;
    }
}

} // namespace fc2t2
