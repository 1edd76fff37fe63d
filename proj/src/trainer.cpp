#include "fc2t2/trainer.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "fc2t2/error.hpp"

namespace fc2t2 {

namespace {

constexpr double kEdge = 1.0 - 1e-6;

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

template <class M>
void require_finite(const M& m, const char* what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (!std::isfinite(m(i, j))) {
                std::ostringstream os;
                os << "non-finite " << what << " at row " << i << ", column " << j << ": " << m(i, j);
                throw NumericError(os.str());
            }
}

void finish(Objective& o, const Params& x, const TrainConfig& cfg) {
    o.l1 = add_l1(x.s, cfg.l1_weight, o.grad);
    o.loss += o.l1;
}

} // namespace

void TrainConfig::validate(bool allow_zero_epochs) const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    int last = -1;
    for (const LrStep& s : lr_steps) {
        if (!(s.lr > 0.0)) throw ConfigError("scheduled learning rates must be positive");
        if (s.epoch <= last) throw ConfigError("learning rate schedule epochs must be strictly ascending");
        last = s.epoch;
    }
    if (epochs < (allow_zero_epochs ? 0 : 1)) throw ConfigError("epochs must be at least 1");
    if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
    if (l1_weight < 0.0) throw ConfigError("l1 weight must be non-negative");
    if (init_scale < 0.0) throw ConfigError("init scale must be non-negative");
    if (position_lr_scale < 0.0 || bias_lr_scale < 0.0) throw ConfigError("learning rate scales must be non-negative");
    if (batch_rays < 0) throw ConfigError("batch size must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0))
        throw ConfigError("adam parameters out of range");
}

double TrainConfig::lr_at(int epoch) const {
    double r = lr;
    for (const LrStep& s : lr_steps)
        if (s.epoch <= epoch) r = s.lr;
    return r;
}

Params init_params(long n, int channels, InitScheme scheme, double scale, std::uint64_t seed, double bias) {
    if (n < 1) throw ConfigError("need at least one source");
    if (channels < 1) throw ConfigError("need at least one channel");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(-1.0, 1.0);
    Params x{{Points(n, 3), Values::Zero(n, channels)}, bias};
    for (long i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) x.s.p(i, a) = std::clamp(pos(rng), -kEdge, kEdge);
    if (scale == 0.0 || scheme == InitScheme::zero) return x;
    if (scheme == InitScheme::uniform) {
        std::uniform_real_distribution<double> u(-scale, scale);
        for (long i = 0; i < n; ++i)
            for (int c = 0; c < channels; ++c) x.s.w(i, c) = u(rng);
    } else {
        std::normal_distribution<double> g(0.0, scale);
        for (long i = 0; i < n; ++i)
            for (int c = 0; c < channels; ++c) x.s.w(i, c) = g(rng);
    }
    return x;
}

LossValue data_loss(const Values& pred, const Values& target, LossKind kind, const std::vector<std::uint8_t>* valid) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ContractError("loss: prediction and target shapes differ");
    if (valid && static_cast<Eigen::Index>(valid->size()) != pred.rows())
        throw ContractError("loss: validity mask does not match the predictions");
    LossValue out;
    out.y_bar = Values::Zero(pred.rows(), pred.cols());
    for (Eigen::Index m = 0; m < pred.rows(); ++m)
        if (!valid || (*valid)[m]) ++out.valid;
    if (out.valid == 0) {
        out.empty = true;
        return out;
    }
    const double inv = 1.0 / (static_cast<double>(out.valid) * pred.cols());
    for (Eigen::Index m = 0; m < pred.rows(); ++m) {
        if (valid && !(*valid)[m]) continue;
        for (Eigen::Index c = 0; c < pred.cols(); ++c) {
            const double r = pred(m, c) - target(m, c);
            if (kind == LossKind::mae) {
                out.loss += std::abs(r) * inv;
                out.y_bar(m, c) = sign0(r) * inv;
            } else {
                out.loss += r * r * inv;
                out.y_bar(m, c) = 2.0 * r * inv;
            }
        }
    }
    return out;
}

double add_l1(const SourceSet& s, double lambda, LayerGradients& g) {
    if (lambda == 0.0) return 0.0;
    double total = 0.0;
    for (long n = 0; n < s.size(); ++n)
        for (int c = 0; c < s.channels(); ++c) {
            total += std::abs(s.w(n, c));
            g.w_bar(n, c) += lambda * sign0(s.w(n, c));
        }
    return lambda * total;
}

template <class Scalar>
Objective explicit_objective(const Engine<Scalar>& e, const Params& x, const Points& q, const Values& target,
                             const TrainConfig& cfg) {
    const auto fwd = explicit_forward(e, q, x.s);
    LossValue L = data_loss(fwd.y, target, cfg.loss);
    Objective o;
    o.loss = o.data = L.loss;
    o.valid = L.valid;
    o.empty = L.empty;
    o.grad = L.empty ? LayerGradients::zeros(x.s) : explicit_jvp(e, fwd, q, L.y_bar, x.s, false);
    finish(o, x, cfg);
    return o;
}

template <class Scalar>
Objective depth_objective(const Engine<Scalar>& e, const Params& x, const std::vector<Ray>& rays,
                          const std::vector<double>& target, const std::vector<std::uint8_t>& target_hit,
                          const TrainConfig& cfg) {
    const long M = static_cast<long>(rays.size());
    if (static_cast<long>(target.size()) != M || static_cast<long>(target_hit.size()) != M)
        throw ContractError("depth objective: targets and rays disagree in count");
    if (x.s.channels() != 1) throw ContractError("depth objective needs single-channel sources");
    const auto fwd = depth_forward(e, rays, x.s, x.bias);
    const RootResult& r = fwd.roots;

    Values pred(M, 1), goal(M, 1);
    std::vector<std::uint8_t> valid(M, 0);
    std::vector<long> pull;
    for (long m = 0; m < M; ++m) {
        pred(m, 0) = r.length[m];
        goal(m, 0) = target[m];
        const bool hit = r.hit[m] && !r.degenerate[m];
        if (hit && target_hit[m]) {
            valid[m] = 1;
        } else if (hit) {
            double t0, t1;
            clip_to_domain(rays[m], t0, t1);
            goal(m, 0) = t1;
            valid[m] = 1;
        } else if (target_hit[m] && !r.hit[m]) {
            pull.push_back(m);
        }
    }
    LossValue L = data_loss(pred, goal, cfg.loss, &valid);
    Objective o;
    o.data = L.loss;
    o.valid = L.valid;
    o.excluded = M - L.valid;
    o.empty = L.empty;
    std::vector<double> y_bar(M, 0.0);
    for (long m = 0; m < M; ++m) y_bar[m] = L.y_bar(m, 0);
    o.grad = depth_jvp(e, y_bar, r, rays, x.s);

    if (cfg.miss_penalty > 0.0 && !pull.empty()) {
        const double each = cfg.miss_penalty / static_cast<double>(M);
        std::vector<Vec3> at;
        for (long m : pull) {
            Vec3 q = rays[m].at(target[m]);
            if (!in_domain(q)) continue;
            const double v = fwd.field.value(q) + x.bias;
            if (v <= 0.0) continue;
            o.loss += each * v;
            at.push_back(q);
        }
        if (!at.empty()) {
            Points q(static_cast<Eigen::Index>(at.size()), 3);
            for (std::size_t k = 0; k < at.size(); ++k) q.row(k) = at[k].transpose();
            const Values yb = Values::Constant(q.rows(), 1, each);
            const ExplicitForward<Scalar> ef{Values(), fwd.field};
            const LayerGradients gp = explicit_jvp(e, ef, q, yb, x.s, false);
            o.grad.p_bar += gp.p_bar;
            o.grad.w_bar += gp.w_bar;
            o.grad.bias_bar += each * static_cast<double>(at.size());
        }
    }
    o.loss += o.data;
    finish(o, x, cfg);
    return o;
}

template <class Scalar>
Objective radiance_objective(const Engine<Scalar>& e, const Params& x, const std::vector<Ray>& rays,
                             const Points& target, const RenderOptions& opt, const TrainConfig& cfg) {
    if (target.rows() != static_cast<Eigen::Index>(rays.size()))
        throw ContractError("radiance objective: targets and rays disagree in count");
    const auto fwd = volumetric_forward(e, rays, x.s, opt);
    LossValue L = data_loss(fwd.render.rgb, target, cfg.loss);
    Objective o;
    o.loss = o.data = L.loss;
    o.valid = L.valid;
    o.empty = L.empty;
    o.grad = L.empty ? LayerGradients::zeros(x.s) : volumetric_jvp(e, fwd, Points(L.y_bar), rays, x.s, opt);
    finish(o, x, cfg);
    return o;
}

namespace {

// Sample points of every ray, n per ray inside the domain; rays that miss
// the domain get none.
struct SamplePlan {
    std::vector<long> first;  // rays + 1 offsets into the sample rows
    std::vector<double> dt;
    Points at;
};

SamplePlan plan_samples(const std::vector<Ray>& rays, int n) {
    SamplePlan sp;
    sp.first.assign(rays.size() + 1, 0);
    sp.dt.assign(rays.size(), 0.0);
    std::vector<std::pair<double, double>> span(rays.size(), {0.0, 0.0});
    for (std::size_t m = 0; m < rays.size(); ++m) {
        double t0, t1;
        long k = 0;
        if (clip_to_domain(rays[m], t0, t1) && t1 > t0) {
            span[m] = {t0, t1};
            sp.dt[m] = (t1 - t0) / n;
            k = n;
        }
        sp.first[m + 1] = sp.first[m] + k;
    }
    sp.at.resize(sp.first.back(), 3);
    for (std::size_t m = 0; m < rays.size(); ++m)
        for (long j = 0; j < sp.first[m + 1] - sp.first[m]; ++j) {
            Vec3 x = rays[m].at(span[m].first + (j + 0.5) * sp.dt[m]);
            sp.at.row(sp.first[m] + j) = x.cwiseMax(-kEdge).cwiseMin(kEdge).transpose();
        }
    return sp;
}

} // namespace

template <class Scalar>
Points render_quadrature(const Accessor<Scalar>& field, const std::vector<Ray>& rays, int samples,
                         const Vec3& background) {
    if (samples < 2) throw ConfigError("quadrature rendering needs at least two samples");
    const SamplePlan sp = plan_samples(rays, samples);
    const Values f = field.values(sp.at);
    Points rgb(static_cast<Eigen::Index>(rays.size()), 3);
    for (std::size_t m = 0; m < rays.size(); ++m) {
        const double dt = sp.dt[m];
        double depth = 0.0;
        Vec3 c = Vec3::Zero();
        for (long j = sp.first[m]; j < sp.first[m + 1]; ++j) {
            const double T = std::exp(-(depth + 0.5 * f(j, 0) * dt));
            c += Vec3(f(j, 1), f(j, 2), f(j, 3)) * (f(j, 0) * T * dt);
            depth += f(j, 0) * dt;
        }
        rgb.row(m) = (c + background * std::exp(-depth)).transpose();
    }
    return rgb;
}

template <class Scalar>
Objective radiance_quadrature_objective(const Engine<Scalar>& e, const Params& x, const std::vector<Ray>& rays,
                                        const Points& target, const RenderOptions& opt, int samples,
                                        const TrainConfig& cfg) {
    if (target.rows() != static_cast<Eigen::Index>(rays.size()))
        throw ContractError("radiance objective: targets and rays disagree in count");
    if (samples < 2) throw ConfigError("quadrature rendering needs at least two samples");
    const SourceSet eff{x.s.p, clip_density(x.s.w)};
    const ExplicitForward<Scalar> fwd{Values(), e.expand(eff)};
    const SamplePlan sp = plan_samples(rays, samples);
    const Values f = fwd.field.values(sp.at);
    const long M = static_cast<long>(rays.size());

    Points rgb(M, 3);
    std::vector<double> Tend(M);
    for (long m = 0; m < M; ++m) {
        const double dt = sp.dt[m];
        double depth = 0.0;
        Vec3 c = Vec3::Zero();
        for (long j = sp.first[m]; j < sp.first[m + 1]; ++j) {
            const double T = std::exp(-(depth + 0.5 * f(j, 0) * dt));
            c += Vec3(f(j, 1), f(j, 2), f(j, 3)) * (f(j, 0) * T * dt);
            depth += f(j, 0) * dt;
        }
        Tend[m] = std::exp(-depth);
        rgb.row(m) = (c + opt.background * Tend[m]).transpose();
    }
    LossValue L = data_loss(rgb, target, cfg.loss);
    Objective o;
    o.loss = o.data = L.loss;
    o.valid = L.valid;
    o.empty = L.empty;
    if (L.empty) {
        o.grad = LayerGradients::zeros(x.s);
        finish(o, x, cfg);
        return o;
    }

    // d/d sigma_j sees its own emission and dims everything behind it.
    Values yb(sp.at.rows(), 4);
    for (long m = 0; m < M; ++m) {
        const double dt = sp.dt[m];
        const Vec3 y = L.y_bar.row(m).transpose();
        const long j0 = sp.first[m], j1 = sp.first[m + 1];
        std::vector<double> T(j1 - j0);
        double depth = 0.0;
        for (long j = j0; j < j1; ++j) {
            T[j - j0] = std::exp(-(depth + 0.5 * f(j, 0) * dt));
            depth += f(j, 0) * dt;
        }
        double behind = y.dot(opt.background) * Tend[m];
        for (long j = j1 - 1; j >= j0; --j) {
            const double s = f(j, 0), Tj = T[j - j0];
            const double a = y.x() * f(j, 1) + y.y() * f(j, 2) + y.z() * f(j, 3);
            yb(j, 0) = a * dt * Tj * (1.0 - 0.5 * s * dt) - dt * behind;
            for (int k = 0; k < 3; ++k) yb(j, 1 + k) = y[k] * s * dt * Tj;
            behind += a * s * dt * Tj;
        }
    }
    o.grad = explicit_jvp(e, fwd, sp.at, yb, eff, false);
    for (long n = 0; n < x.s.size(); ++n)
        if (!(x.s.w(n, 0) > 0.0)) o.grad.w_bar(n, 0) = 0.0;
    finish(o, x, cfg);
    return o;
}

void step(const TrainConfig& cfg, int epoch, Params& x, const LayerGradients& g, OptimizerState& st) {
    require_finite(g.p_bar, "position gradient");
    require_finite(g.w_bar, "weight gradient");
    if (!std::isfinite(g.bias_bar)) throw NumericError("non-finite bias gradient");
    const double lr = cfg.lr_at(epoch);
    const double lr_p = lr * cfg.position_lr_scale, lr_b = cfg.train_bias ? lr * cfg.bias_lr_scale : 0.0;
    ++st.t;
    if (cfg.optimizer == OptimizerKind::sgd) {
        x.s.p -= lr_p * g.p_bar;
        x.s.w -= lr * g.w_bar;
        x.bias -= lr_b * g.bias_bar;
    } else {
        if (st.mp.rows() != x.s.p.rows()) {
            st.mp = st.vp = Points::Zero(x.s.p.rows(), 3);
            st.mw = st.vw = Values::Zero(x.s.w.rows(), x.s.w.cols());
            st.mb = st.vb = 0.0;
        }
        const double b1 = cfg.beta1, b2 = cfg.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
        auto update = [&](auto& param, auto& m, auto& v, const auto& grad, double rate) {
            m = b1 * m + (1.0 - b1) * grad;
            v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
            param.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
        };
        update(x.s.p, st.mp, st.vp, g.p_bar, lr_p);
        update(x.s.w, st.mw, st.vw, g.w_bar, lr);
        st.mb = b1 * st.mb + (1.0 - b1) * g.bias_bar;
        st.vb = b2 * st.vb + (1.0 - b2) * g.bias_bar * g.bias_bar;
        x.bias -= lr_b * (st.mb / c1) / (std::sqrt(st.vb / c2) + cfg.adam_eps);
    }
    x.s.p = x.s.p.cwiseMax(-kEdge).cwiseMin(kEdge);
}

std::vector<EpochLog> train(const TrainConfig& cfg, Params& x, const std::function<Objective(const Params&, int)>& objective,
                            const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate(true);
    std::vector<EpochLog> log;
    OptimizerState st;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        const Objective o = objective(x, ep);
        if (!std::isfinite(o.loss)) throw NumericError("non-finite loss at epoch " + std::to_string(ep));
        EpochLog rec{ep, o.loss, o.data, o.l1, cfg.lr_at(ep), o.valid, o.excluded};
        log.push_back(rec);
        if (on_epoch) on_epoch(rec);
        step(cfg, ep, x, o.grad, st);
    }
    return log;
}

#define FC2T2_TRAINER(S)                                                                                               \
    template Objective explicit_objective(const Engine<S>&, const Params&, const Points&, const Values&,             \
                                          const TrainConfig&);                                                         \
    template Objective depth_objective(const Engine<S>&, const Params&, const std::vector<Ray>&,                     \
                                       const std::vector<double>&, const std::vector<std::uint8_t>&,                  \
                                       const TrainConfig&);                                                            \
    template Objective radiance_objective(const Engine<S>&, const Params&, const std::vector<Ray>&, const Points&,   \
                                          const RenderOptions&, const TrainConfig&);                                  \
    template Points render_quadrature(const Accessor<S>&, const std::vector<Ray>&, int, const Vec3&);                \
    template Objective radiance_quadrature_objective(const Engine<S>&, const Params&, const std::vector<Ray>&,       \
                                                     const Points&, const RenderOptions&, int, const TrainConfig&);

FC2T2_TRAINER(double)
FC2T2_TRAINER(float)

#undef FC2T2_TRAINER

} // namespace fc2t2
