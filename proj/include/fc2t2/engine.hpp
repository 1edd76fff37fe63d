#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fc2t2/expansion.hpp"

namespace fc2t2 {

// One axis of a grid query: explicit coordinates, typically built from a
// scalar, a list, or a linspace-like slice.
struct AxisSpec {
    std::vector<double> values;

    static AxisSpec scalar(double v) { return {{v}}; }
    static AxisSpec list(std::vector<double> v) { return {std::move(v)}; }
    // n points from a to b inclusive.
    static AxisSpec linspace(double a, double b, int n) {
        AxisSpec s;
        for (int i = 0; i < n; ++i) s.values.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
        return s;
    }
    // Spans the whole domain; the closed endpoints are nudged one ulp inward.
    static AxisSpec full(int n) {
        return linspace(std::nextafter(-1.0, 0.0), std::nextafter(1.0, 0.0), n);
    }
    // "x", "a:b:n" or "::n".
    static AxisSpec parse(const std::string& text);

    int size() const { return static_cast<int>(values.size()); }
};

inline AxisSpec AxisSpec::parse(const std::string& text) {
    const auto c1 = text.find(':');
    if (c1 == std::string::npos) return scalar(std::stod(text));
    const auto c2 = text.find(':', c1 + 1);
    if (c2 == std::string::npos) throw InputError("slice '" + text + "' needs the form a:b:n");
    const std::string a = text.substr(0, c1), b = text.substr(c1 + 1, c2 - c1 - 1), n = text.substr(c2 + 1);
    const int count = std::stoi(n);
    if (count < 1) throw InputError("slice '" + text + "' has no points");
    if (a.empty() && b.empty()) return full(count);
    if (a.empty() || b.empty()) throw InputError("slice '" + text + "' needs both endpoints or neither");
    return linspace(std::stod(a), std::stod(b), count);
}

// Channel-major dense volume, C x nx x ny x nz.
struct Volume {
    int channels = 0, nx = 0, ny = 0, nz = 0;
    std::vector<double> data;
    double& at(int c, int i, int j, int k) { return data[((static_cast<long>(c) * nx + i) * ny + j) * nz + k]; }
    double at(int c, int i, int j, int k) const { return data[((static_cast<long>(c) * nx + i) * ny + j) * nz + k]; }
};

// Read-only view of a finest-level local grid: evaluates the box Taylor
// polynomial and its first and second partials anywhere in the domain.
template <class Scalar>
class Accessor {
public:
    Accessor() = default;
    Accessor(std::shared_ptr<const ExpansionGrid<Scalar>> grid, std::shared_ptr<const MultiIndexTable> table,
             std::shared_ptr<FlopCounter> flops = nullptr)
        : grid_(std::move(grid)), table_(std::move(table)), flops_(std::move(flops)) {
        if (grid_->kind != GridKind::locals) throw ContractError("accessor needs a local grid");
    }

    const ExpansionGrid<Scalar>& grid() const { return *grid_; }
    const MultiIndexTable& table() const { return *table_; }
    int channels() const { return grid_->channels; }
    bool valid() const { return static_cast<bool>(grid_); }

    const Scalar* coeffs(long box, int channel) const { return grid_->data.row(box * grid_->channels + channel).data(); }

    // Value, gradient (optional) and second partials xx,yy,zz,xy,xz,yz
    // (optional) of one channel at q.
    double eval(const Vec3& q, int channel, Vec3* grad = nullptr, double* hess = nullptr) const {
        const Vec3i b = grid_->find_box(q);
        return eval_in_box(grid_->box_id(b), q - grid_->center(b), channel, grad, hess);
    }

    // Same, for a known box and offset from its center.
    double eval_in_box(long box, const Vec3& d, int channel, Vec3* grad = nullptr, double* hess = nullptr) const {
        const MultiIndexTable& t = *table_;
        double basis[35];
        monomial_basis(t, d, basis);
        const Scalar* L = coeffs(box, channel);
        double v = 0.0;
        for (int i = 0; i < t.size(); ++i) v += static_cast<double>(L[i]) * basis[i];
        if (grad) {
            for (int a = 0; a < 3; ++a) {
                double g = 0.0;
                for (int i = 0; i < t.size(); ++i) {
                    const int up = t.raise(i, a);
                    if (up >= 0) g += static_cast<double>(L[up]) * basis[i];
                }
                (*grad)[a] = g;
            }
        }
        if (hess) {
            static constexpr int pairs[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
            for (int s = 0; s < 6; ++s) {
                double h = 0.0;
                for (int i = 0; i < t.size(); ++i) {
                    const int u1 = t.raise(i, pairs[s][0]);
                    const int u2 = u1 >= 0 ? t.raise(u1, pairs[s][1]) : -1;
                    if (u2 >= 0) h += static_cast<double>(L[u2]) * basis[i];
                }
                hess[s] = h;
            }
        }
        return v;
    }

    double value(const Vec3& q, int channel = 0) const { return eval(q, channel); }

    // M x C values.
    Values values(const Points& q) const {
        Values out(q.rows(), channels());
        for (Eigen::Index m = 0; m < q.rows(); ++m) {
            const Vec3 x = q.row(m).transpose();
            const Vec3i b = grid_->find_box(x);
            for (int c = 0; c < channels(); ++c) out(m, c) = eval_in_box(grid_->box_id(b), x - grid_->center(b), c);
        }
        if (flops_) flops_->l2p += q.rows() * channels() * l2p_flops_per_target(table_->rho());
        return out;
    }

    // M x 3C, column c*3 + axis.
    Values partials(const Points& q) const {
        Values out(q.rows(), 3 * channels());
        Vec3 g;
        for (Eigen::Index m = 0; m < q.rows(); ++m)
            for (int c = 0; c < channels(); ++c) {
                eval(q.row(m).transpose(), c, &g);
                out.row(m).segment(3 * c, 3) = g.transpose();
            }
        return out;
    }

    // M x 6C, column c*6 + {xx,yy,zz,xy,xz,yz}.
    Values partials2(const Points& q) const {
        Values out(q.rows(), 6 * channels());
        double h[6];
        for (Eigen::Index m = 0; m < q.rows(); ++m)
            for (int c = 0; c < channels(); ++c) {
                eval(q.row(m).transpose(), c, nullptr, h);
                for (int s = 0; s < 6; ++s) out(m, 6 * c + s) = h[s];
            }
        return out;
    }

    // Broadcast query: each axis has length 1 or a common length n.
    Values query(const AxisSpec& x, const AxisSpec& y, const AxisSpec& z) const {
        int n = 1;
        for (const AxisSpec* s : {&x, &y, &z}) {
            if (s->size() == 0) throw InputError("empty query axis");
            if (s->size() != 1) {
                if (n != 1 && n != s->size()) throw InputError("query axes do not broadcast");
                n = s->size();
            }
        }
        Points q(n, 3);
        for (int i = 0; i < n; ++i)
            q.row(i) << x.values[x.size() == 1 ? 0 : i], y.values[y.size() == 1 ? 0 : i], z.values[z.size() == 1 ? 0 : i];
        return values(q);
    }

    // Meshgrid query over the outer product of the axes.
    Volume vol(const AxisSpec& x, const AxisSpec& y, const AxisSpec& z) const {
        Volume v{channels(), x.size(), y.size(), z.size(), {}};
        v.data.resize(static_cast<std::size_t>(v.channels) * v.nx * v.ny * v.nz);
        for (int i = 0; i < v.nx; ++i)
            for (int j = 0; j < v.ny; ++j)
                for (int k = 0; k < v.nz; ++k) {
                    const Vec3 q(x.values[i], y.values[j], z.values[k]);
                    for (int c = 0; c < v.channels; ++c) v.at(c, i, j, k) = eval(q, c);
                }
        return v;
    }

private:
    std::shared_ptr<const ExpansionGrid<Scalar>> grid_;
    std::shared_ptr<const MultiIndexTable> table_;
    std::shared_ptr<FlopCounter> flops_;
};

struct EngineConfig {
    int levels = 4;
    int rho = 4;
    std::string family = "gaussian";
    double alpha = 200.0;
    bool lsq = true;
    int threads = 1;
    FitOptions fit;
    bool dense_m2l = false;      // never take the source-major M2L path
    bool flip_l2l_sign = false;  // verification hook only
};

// Kernel sharpness used when none is configured, per finest level.
inline double default_alpha(int levels) {
    switch (levels) {
    case 2: return 12.0;
    case 3: return 50.0;
    case 4: return 200.0;
    case 5: return 1000.0;
    default: return 4000.0 * std::pow(4.0, levels - 6);
    }
}

struct StageTimes {
    double p2m = 0, m2m = 0, m2l = 0, l2l = 0;
};

template <class Scalar>
class Engine {
public:
    explicit Engine(const EngineConfig& cfg)
        : Engine(cfg, KernelModel::from_name(cfg.family, cfg.alpha, cfg.rho)) {}

    Engine(const EngineConfig& cfg, KernelModel kernel)
        : cfg_(cfg), kernel_(std::move(kernel)), table_(std::make_shared<MultiIndexTable>(cfg.rho)),
          flops_(std::make_shared<FlopCounter>()) {
        if (cfg.levels < 2 || cfg.levels > 8) throw ConfigError("levels must be in [2,8]");
        if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
        kernel_.rho = cfg.rho;
        FitOptions fit = cfg.fit;
        fit.lsq = cfg.lsq;
        tables_ = fit_m2l_tables(kernel_, cfg.levels, fit);
        for (const auto& t : tables_.far) plans_.emplace_back(t);
        near_plan_ = M2LPlan<Scalar>(tables_.near);
    }

    const EngineConfig& config() const { return cfg_; }
    const KernelModel& kernel() const { return kernel_; }
    const MultiIndexTable& table() const { return *table_; }
    const M2LTables& tables() const { return tables_; }
    int levels() const { return cfg_.levels; }
    int threads() const { return cfg_.threads; }
    void set_threads(int n) { cfg_.threads = std::max(1, n); }

    FlopCounter& flops() const { return *flops_; }
    long expansions() const { return expansions_; }
    const StageTimes& times() const { return times_; }

    ExpansionGrid<Scalar> empty_moments(int channels) const {
        return ExpansionGrid<Scalar>(cfg_.levels, channels, table_->size(), GridKind::moments);
    }

    ExpansionGrid<Scalar> p2m(const Points& at, const Values& charges, const Values* dipoles = nullptr) const {
        return fc2t2::p2m<Scalar>(*table_, cfg_.levels, at, charges, dipoles, cfg_.threads, flops_.get());
    }

    Accessor<Scalar> expand(const SourceSet& s) const { return expand(s.p, s.w); }

    Accessor<Scalar> expand(const Points& p, const Values& w, const Values* dipoles = nullptr,
                            const BoxMask* targets = nullptr) const {
        const auto t0 = clock::now();
        ExpansionGrid<Scalar> M = p2m(p, w, dipoles);
        times_.p2m += seconds_since(t0);
        return expand_moments(std::move(M), targets);
    }

    // Runs everything after P2M on a caller-assembled finest moment grid.
    // With `targets`, locals are only computed in the flagged finest boxes
    // and the rest of the returned grid stays zero.
    Accessor<Scalar> expand_moments(ExpansionGrid<Scalar> finest, const BoxMask* targets = nullptr) const {
        if (finest.kind != GridKind::moments || finest.level != cfg_.levels)
            throw ContractError("expand_moments needs a finest-level moment grid");
        if (targets && static_cast<long>(targets->size()) != finest.boxes())
            throw ContractError("expand_moments: target mask does not match the finest grid");
        ++expansions_;
        const int L = cfg_.levels, T = cfg_.threads;
        FlopCounter* f = flops_.get();
        std::vector<BoxMask> need(L + 1);
        if (targets) {
            need[L] = *targets;
            for (int l = L; l > 2; --l) need[l - 1] = coarsen(need[l], l);
        }
        auto mask = [&](int l) { return targets ? &need[l] : nullptr; };

        std::vector<ExpansionGrid<Scalar>> M(L + 1);
        M[L] = std::move(finest);
        auto t0 = clock::now();
        for (int l = L; l > 2; --l) M[l - 1] = m2m(M[l], *table_, T, f);
        times_.m2m += seconds_since(t0);

        ExpansionGrid<Scalar> local(2, M[L].channels, table_->size(), GridKind::locals);
        t0 = clock::now();
        plans_[0].apply(M[2], local, T, f, nullptr, cfg_.dense_m2l);
        times_.m2l += seconds_since(t0);
        for (int l = 3; l <= L; ++l) {
            ExpansionGrid<Scalar> finer(l, M[L].channels, table_->size(), GridKind::locals);
            t0 = clock::now();
            l2l_accumulate(local, finer, *table_, T, f, cfg_.flip_l2l_sign, mask(l));
            times_.l2l += seconds_since(t0);
            t0 = clock::now();
            plans_[l - 2].apply(M[l], finer, T, f, mask(l), cfg_.dense_m2l);
            times_.m2l += seconds_since(t0);
            M[l - 1] = ExpansionGrid<Scalar>();
            local = std::move(finer);
        }
        t0 = clock::now();
        near_plan_.apply(M[L], local, T, f, mask(L), cfg_.dense_m2l);
        times_.m2l += seconds_since(t0);
        return Accessor<Scalar>(std::make_shared<const ExpansionGrid<Scalar>>(std::move(local)), table_, flops_);
    }

    // Wraps a hand-built local grid, e.g. a synthetic field.
    Accessor<Scalar> accessor(ExpansionGrid<Scalar> locals) const {
        return Accessor<Scalar>(std::make_shared<const ExpansionGrid<Scalar>>(std::move(locals)), table_, flops_);
    }

    const M2LPlan<Scalar>& plan(int level) const { return plans_.at(level - 2); }
    const M2LPlan<Scalar>& near_plan() const { return near_plan_; }

private:
    using clock = std::chrono::steady_clock;
    static double seconds_since(clock::time_point t0) {
        return std::chrono::duration<double>(clock::now() - t0).count();
    }

    EngineConfig cfg_;
    KernelModel kernel_;
    std::shared_ptr<const MultiIndexTable> table_;
    M2LTables tables_;
    std::vector<M2LPlan<Scalar>> plans_;
    M2LPlan<Scalar> near_plan_;
    std::shared_ptr<FlopCounter> flops_;
    mutable long expansions_ = 0;
    mutable StageTimes times_;
};

} // namespace fc2t2
