#include "fc2t2/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/LU>

#include "fc2t2/error.hpp"

namespace fc2t2 {

GaussianKernel::GaussianKernel(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("gaussian alpha must be positive and finite");
}

bool GaussianKernel::axis_derivatives(double t, int max_order, double* out) const {
    // d^m exp(-a t^2): g_{m+1} = -2a (t g_m + m g_{m-1})
    out[0] = std::exp(-alpha_ * t * t);
    if (max_order >= 1) out[1] = -2.0 * alpha_ * t * out[0];
    for (int m = 1; m < max_order; ++m) out[m + 1] = -2.0 * alpha_ * (t * out[m] + m * out[m - 1]);
    return true;
}

double GaussianKernel::partial(const MultiIndex& n, const Vec3& x) const {
    double buf[3][32];
    double r = 1.0;
    for (int a = 0; a < 3; ++a) {
        axis_derivatives(x[a], n[a], buf[a]);
        r *= buf[a][n[a]];
    }
    return r;
}

KernelModel KernelModel::gaussian(double alpha, int rho) {
    KernelModel k;
    k.family = KernelFamily::gaussian;
    k.alpha = alpha;
    k.rho = rho;
    k.fn = std::make_shared<GaussianKernel>(alpha);
    return k;
}

KernelModel KernelModel::custom(std::shared_ptr<const KernelFunction> fn, int rho) {
    KernelModel k;
    k.family = KernelFamily::custom;
    k.rho = rho;
    k.fn = std::move(fn);
    return k;
}

KernelModel KernelModel::from_name(const std::string& family, double alpha, int rho) {
    if (family == "gaussian") return gaussian(alpha, rho);
    throw ConfigError("unsupported kernel family '" + family + "'");
}

double eval_kernel_partial(const KernelModel& k, const MultiIndex& order, const Vec3& x) {
    if (!k.fn) throw ConfigError("kernel model has no evaluator");
    if (order.order() > 2 * k.rho) throw ContractError("kernel partial order exceeds 2*rho");
    return k.fn->partial(order, x);
}

void eval_kernel_partials(const KernelModel& k, const Vec3& x, int max_order, std::vector<double>& out) {
    const int side = max_order + 1;
    out.assign(side * side * side, 0.0);
    double axis[3][32];
    const bool separable = k.fn->axis_derivatives(x[0], max_order, axis[0]) &&
                           k.fn->axis_derivatives(x[1], max_order, axis[1]) &&
                           k.fn->axis_derivatives(x[2], max_order, axis[2]);
    for (int a = 0; a <= max_order; ++a)
        for (int b = 0; a + b <= max_order; ++b)
            for (int c = 0; a + b + c <= max_order; ++c)
                out[(a * side + b) * side + c] =
                    separable ? axis[0][a] * axis[1][b] * axis[2][c] : k.fn->partial({a, b, c}, x);
}

namespace {

// Design matrix of the scaled monomials prod (x_i/h)^{k_i} on the tensor
// Chebyshev grid, and the normal-equation solve operator mapping samples to
// coefficients.
struct FitBasis {
    int m = 0;
    std::vector<double> nodes;
    Eigen::MatrixXd design;  // m^3 x P
    Eigen::MatrixXd solve;   // P x m^3
};

FitBasis make_basis(const MultiIndexTable& t, int m) {
    FitBasis b;
    b.m = m;
    for (int j = 0; j < m; ++j) b.nodes.push_back(std::cos(M_PI * (2.0 * j + 1.0) / (2.0 * m)));
    const int P = t.size();
    b.design.resize(m * m * m, P);
    for (int j1 = 0; j1 < m; ++j1)
        for (int j2 = 0; j2 < m; ++j2)
            for (int j3 = 0; j3 < m; ++j3) {
                const int row = (j1 * m + j2) * m + j3;
                for (int k = 0; k < P; ++k)
                    b.design(row, k) = std::pow(b.nodes[j1], t[k].n1) * std::pow(b.nodes[j2], t[k].n2) *
                                       std::pow(b.nodes[j3], t[k].n3);
            }
    const Eigen::MatrixXd gram = b.design.transpose() * b.design;
    b.solve = gram.fullPivLu().solve(b.design.transpose());
    return b;
}

// Samples of every derivative slice d^n psi(c + h u) over the fit nodes,
// one column per n.
Eigen::MatrixXd sample_slices(const KernelModel& k, const MultiIndexTable& t, const FitBasis& b, const Vec3& c,
                              double h) {
    const int m = b.m, P = t.size(), rho = t.rho();
    Eigen::MatrixXd g(m * m * m, P);
    std::vector<std::vector<double>> axis(3, std::vector<double>(m * (rho + 1)));
    bool separable = true;
    for (int a = 0; a < 3 && separable; ++a)
        for (int j = 0; j < m && separable; ++j)
            separable = k.fn->axis_derivatives(c[a] + h * b.nodes[j], rho, &axis[a][j * (rho + 1)]);
    for (int j1 = 0; j1 < m; ++j1)
        for (int j2 = 0; j2 < m; ++j2)
            for (int j3 = 0; j3 < m; ++j3) {
                const int row = (j1 * m + j2) * m + j3;
                const Vec3 x = c + h * Vec3(b.nodes[j1], b.nodes[j2], b.nodes[j3]);
                for (int n = 0; n < P; ++n)
                    g(row, n) = separable ? axis[0][j1 * (rho + 1) + t[n].n1] * axis[1][j2 * (rho + 1) + t[n].n2] *
                                                axis[2][j3 * (rho + 1) + t[n].n3]
                                          : k.fn->partial(t[n], x);
            }
    return g;
}

// Returns the P x P map (rows k, cols n) for one displacement c of box
// centers, with h the box half-width. residual receives the max fit
// residual over the nodes.
Eigen::MatrixXd offset_coeffs(const KernelModel& k, const MultiIndexTable& t, const FitBasis* b, const Vec3& c,
                              double h, bool symmetrize, double& residual) {
    const int P = t.size();
    Eigen::MatrixXd a(P, P);  // a(n, k): coefficient of x^k/k! in the expansion of d^n psi(c + x)
    if (!b) {
        const int K = 2 * t.rho(), side = K + 1;
        std::vector<double> d;
        eval_kernel_partials(k, c, K, d);
        for (int n = 0; n < P; ++n)
            for (int q = 0; q < P; ++q)
                a(n, q) = d[((t[n].n1 + t[q].n1) * side + t[n].n2 + t[q].n2) * side + t[n].n3 + t[q].n3];
    } else {
        const Eigen::MatrixXd g = sample_slices(k, t, *b, c, h);
        const Eigen::MatrixXd coef = b->solve * g;  // rows k, cols n
        const double gmax = std::max(g.cwiseAbs().maxCoeff(), 1e-300);
        residual = std::max(residual, (b->design * coef - g).cwiseAbs().maxCoeff() / gmax);
        for (int q = 0; q < P; ++q) {
            const double scale = 1.0 / (t.inv_factorial(q) * std::pow(h, t[q].order()));
            for (int n = 0; n < P; ++n) a(n, q) = coef(q, n) * scale;
        }
        if (symmetrize) a = (0.5 * (a + a.transpose())).eval();
    }
    Eigen::MatrixXd out(P, P);
    for (int q = 0; q < P; ++q)
        for (int n = 0; n < P; ++n) out(q, n) = t.parity_sign(n) * a(n, q);
    return out;
}

void fill_table(M2LTable& tab, const KernelModel& k, const MultiIndexTable& t, const FitBasis* b, bool symmetrize,
                bool hole) {
    const double bw = level_box_width(tab.level), h = 0.5 * bw;
    const int R = tab.radius, w = 2 * R + 1, P = t.size();
    tab.offsets.resize(w * w * w);
    tab.coeffs.assign(w * w * w, Eigen::MatrixXd::Zero(P, P));
    tab.mask.assign(w * w * w, 0);
    Eigen::VectorXd sign(P);
    for (int i = 0; i < P; ++i) sign[i] = t.parity_sign(i);
    for (int x = -R; x <= R; ++x)
        for (int y = -R; y <= R; ++y)
            for (int z = -R; z <= R; ++z) {
                const Vec3i d(x, y, z);
                const int s = tab.slot(d);
                tab.offsets[s] = d;
                if (hole && d.cwiseAbs().maxCoeff() <= 1) continue;
                tab.mask[s] = 1;
                const int mirror = tab.slot(-d);
                if (mirror < s) {
                    // psi is even, so the fit at -c is the sign-conjugated fit at c.
                    tab.coeffs[s] = sign.asDiagonal() * tab.coeffs[mirror] * sign.asDiagonal();
                    continue;
                }
                tab.coeffs[s] = offset_coeffs(k, t, b, bw * d.cast<double>(), h, symmetrize, tab.fit_residual);
            }
}

double probe_table(const M2LTable& tab, const KernelModel& k, const MultiIndexTable& t,
                   const std::vector<Vec3i>& probes) {
    const double h = 0.5 * level_box_width(tab.level);
    const double peak = std::max(std::abs(k.value(Vec3::Zero())), 1e-300);
    std::mt19937_64 rng(0x5eedULL + tab.level);
    std::uniform_real_distribution<double> u(-h, h);
    const int P = t.size();
    Eigen::VectorXd lb(P), mb(P);
    double worst = 0.0;
    for (const Vec3i& d : probes) {
        const int s = tab.slot(d);
        if (s < 0 || !tab.mask[s]) continue;
        for (int trial = 0; trial < 32; ++trial) {
            const Vec3 dq(u(rng), u(rng), u(rng)), dp(u(rng), u(rng), u(rng));
            for (int i = 0; i < P; ++i) {
                lb[i] = std::pow(dq.x(), t[i].n1) * std::pow(dq.y(), t[i].n2) * std::pow(dq.z(), t[i].n3) *
                        t.inv_factorial(i);
                mb[i] = std::pow(dp.x(), t[i].n1) * std::pow(dp.y(), t[i].n2) * std::pow(dp.z(), t[i].n3) *
                        t.inv_factorial(i);
            }
            const double approx = lb.dot(tab.coeffs[s] * mb);
            const double exact = k.value(level_box_width(tab.level) * d.cast<double>() + dq - dp);
            worst = std::max(worst, std::abs(approx - exact) / peak);
        }
    }
    return worst;
}

} // namespace

M2LTables fit_m2l_tables(const KernelModel& k, int levels, const FitOptions& opts) {
    if (!k.fn) throw ConfigError("kernel model has no evaluator");
    if (levels < 2) throw ConfigError("levels must be >= 2");
    const MultiIndexTable t(k.rho);
    const int m = opts.nodes_per_axis > 0 ? opts.nodes_per_axis : k.rho + 2;
    const FitBasis basis = opts.lsq ? make_basis(t, m) : FitBasis{};
    const FitBasis* b = opts.lsq ? &basis : nullptr;

    M2LTables out;
    out.levels = levels;
    for (int l = 2; l <= levels; ++l) {
        M2LTable tab;
        tab.level = l;
        tab.radius = (l == 2) ? level_resolution(2) - 1 : 3;
        fill_table(tab, k, t, b, opts.symmetrize, true);
        out.far.push_back(std::move(tab));
    }
    out.near.level = levels;
    out.near.nearfield = true;
    out.near.radius = 1;
    fill_table(out.near, k, t, b, opts.symmetrize, false);

    const std::vector<Vec3i> near_probes{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {1, 1, 1}};
    const std::vector<Vec3i> far_probes{{2, 0, 0}, {2, 2, 0}, {2, 2, 2}};
    out.near.probe_error = probe_table(out.near, k, t, near_probes);
    for (auto& tab : out.far) tab.probe_error = probe_table(tab, k, t, far_probes);
    if (opts.check_admissibility) {
        auto check = [&](const M2LTable& tab, const char* what) {
            if (tab.probe_error > opts.admissibility_tol) {
                std::ostringstream os;
                os << "kernel not admissible at level " << tab.level << " (" << what
                   << "): worst probe error " << tab.probe_error << " exceeds tolerance " << opts.admissibility_tol;
                throw ConfigError(os.str());
            }
        };
        check(out.near, "near field");
        for (const auto& tab : out.far) check(tab, "far field");
    }
    return out;
}

} // namespace fc2t2
