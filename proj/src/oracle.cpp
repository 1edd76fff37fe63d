#include "fc2t2/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fc2t2/error.hpp"
#include "fc2t2/parallel.hpp"

namespace fc2t2::oracle {

Values naive_sum(const Points& q, const Points& p, const Values& w, const KernelModel& k, int threads) {
    if (p.rows() != w.rows()) throw ContractError("naive_sum: weights and sources disagree in count");
    Values y = Values::Zero(q.rows(), w.cols());
    parallel_for(q.rows(), threads, [&](long m0, long m1, int) {
        for (long m = m0; m < m1; ++m) {
            const Vec3 x = q.row(m).transpose();
            for (Eigen::Index n = 0; n < p.rows(); ++n) y.row(m) += k.value(x - p.row(n).transpose()) * w.row(n);
        }
    });
    return y;
}

NaiveGrads naive_grads(const Points& q, const Points& p, const Values& w, const Values& y_bar,
                       const KernelModel& k, int threads) {
    if (y_bar.rows() != q.rows() || y_bar.cols() != w.cols()) throw ContractError("naive_grads: y_bar shape");
    NaiveGrads g{Points::Zero(q.rows(), 3), Points::Zero(p.rows(), 3), Values::Zero(w.rows(), w.cols())};
    auto grad_psi = [&](const Vec3& x) {
        return Vec3(eval_kernel_partial(k, {1, 0, 0}, x), eval_kernel_partial(k, {0, 1, 0}, x),
                    eval_kernel_partial(k, {0, 0, 1}, x));
    };
    // Target-side and source-side loops are kept separate so each output row
    // is owned by one worker.
    parallel_for(q.rows(), threads, [&](long m0, long m1, int) {
        for (long m = m0; m < m1; ++m)
            for (Eigen::Index n = 0; n < p.rows(); ++n) {
                const double s = y_bar.row(m).dot(w.row(n));
                g.q_bar.row(m) += s * grad_psi(q.row(m).transpose() - p.row(n).transpose()).transpose();
            }
    });
    parallel_for(p.rows(), threads, [&](long n0, long n1, int) {
        for (long n = n0; n < n1; ++n)
            for (Eigen::Index m = 0; m < q.rows(); ++m) {
                const Vec3 x = q.row(m).transpose() - p.row(n).transpose();
                g.w_bar.row(n) += k.value(x) * y_bar.row(m);
                const double s = y_bar.row(m).dot(w.row(n));
                g.p_bar.row(n) -= s * grad_psi(x).transpose();
            }
    });
    return g;
}

Quadrature gauss_legendre(int n, double a, double b) {
    if (n < 1) throw ContractError("gauss_legendre needs at least one node");
    Quadrature r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5)), dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
            }
            dp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = r.weights[n - 1 - i] = w;
    }
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int i = 0; i < n; ++i) {
        r.nodes[i] = mid + half * r.nodes[i];
        r.weights[i] *= half;
    }
    return r;
}

QuadratureRender quadrature_render(const RadianceField& field, const Vec3& origin, const Vec3& dir, double t0,
                                   double t1, int n_samples, const Vec3& background) {
    if (n_samples < 2) throw ContractError("quadrature_render needs at least two samples");
    QuadratureRender out;
    const double dt = (t1 - t0) / n_samples;
    double depth = 0.0;
    if (dt > 0.0) {
        for (int i = 0; i < n_samples; ++i) {
            const auto s = field(origin + (t0 + (i + 0.5) * dt) * dir);
            const double T = std::exp(-(depth + 0.5 * s[0] * dt));
            out.rgb += Vec3(s[1], s[2], s[3]) * (s[0] * T * dt);
            depth += s[0] * dt;
        }
    }
    out.t_inf = std::exp(-depth);
    out.rgb += background * out.t_inf;
    return out;
}

std::optional<double> bisect_root(const std::function<double(double)>& f, double t0, double t1, double step,
                                  double tol) {
    if (!(step > 0.0)) throw ContractError("bisect_root needs a positive step");
    double a = t0, fa = f(a);
    if (fa == 0.0) return a;
    while (a < t1) {
        const double b = std::min(t1, a + step), fb = f(b);
        if (fb == 0.0) return b;
        if ((fa < 0.0) != (fb < 0.0)) {
            double lo = a, hi = b, flo = fa;
            while (hi - lo > tol) {
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                const double fm = f(mid);
                if (fm == 0.0) return mid;
                if ((fm < 0.0) == (flo < 0.0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        a = b;
        fa = fb;
    }
    return std::nullopt;
}

std::string OracleReport::line() const {
    char buf[64];
    std::string s = name + "\t";
    std::snprintf(buf, sizeof buf, "%.3e\t%.3e\t", max_error, tolerance);
    return s + buf + (pass ? "PASS" : "FAIL");
}

OracleReport make_report(std::string name, const std::vector<double>& errors, double tolerance) {
    OracleReport r;
    r.name = std::move(name);
    r.samples = static_cast<long>(errors.size());
    r.tolerance = tolerance;
    bool finite = true;
    for (double e : errors) {
        finite = finite && std::isfinite(e);
        r.max_error = std::max(r.max_error, std::abs(e));
        r.mean_error += std::abs(e);
    }
    if (!errors.empty()) r.mean_error /= static_cast<double>(errors.size());
    r.pass = finite && r.max_error <= tolerance;
    return r;
}

} // namespace fc2t2::oracle
