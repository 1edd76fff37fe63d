#include "fc2t2/layers.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fc2t2/error.hpp"

namespace fc2t2 {

namespace {

Vec3 nudge_inside(Vec3 x) {
    for (int a = 0; a < 3; ++a) x[a] = std::clamp(x[a], std::nextafter(-1.0, 0.0), std::nextafter(1.0, 0.0));
    return x;
}

// Reads a backward field at the sources: channel b of the field lands in
// source column first_col + b. The position gradient weighs each channel's
// field gradient by the weight that produced the forward field.
template <class Scalar>
void read_back(const Accessor<Scalar>& B, const SourceSet& s, const Values& w_eff, int first_col, LayerGradients& g,
               int threads) {
    const auto& grid = B.grid();
    parallel_for(s.size(), threads, [&](long n0, long n1, int) {
        Vec3 grad;
        for (long n = n0; n < n1; ++n) {
            const Vec3 x = s.p.row(n).transpose();
            const Vec3i b = grid.find_box(x);
            const long id = grid.box_id(b);
            const Vec3 d = x - grid.center(b);
            for (int c = 0; c < B.channels(); ++c) {
                g.w_bar(n, first_col + c) = B.eval_in_box(id, d, c, &grad);
                g.p_bar.row(n) += w_eff(n, first_col + c) * grad.transpose();
            }
        }
    });
}

// Per-worker moment grids filled by insert(ray, grid), combined by a
// pairwise tree in worker order.
template <class Scalar, class Fn>
ExpansionGrid<Scalar> ray_moments(const Engine<Scalar>& e, int channels, long n, Fn&& insert) {
    const int workers = static_cast<int>(std::max<long>(1, std::min<long>(e.threads(), n)));
    std::vector<ExpansionGrid<Scalar>> parts(workers);
    parallel_for(n, workers, [&](long m0, long m1, int w) {
        parts[w] = e.empty_moments(channels);
        for (long m = m0; m < m1; ++m) insert(m, parts[w]);
    });
    for (int stride = 1; stride < workers; stride *= 2)
        for (int i = 0; i + stride < workers; i += 2 * stride) parts[i].data += parts[i + stride].data;
    if (parts[0].data.size() == 0) parts[0] = e.empty_moments(channels);
    return std::move(parts[0]);
}

template <class Scalar>
void add_moments(ExpansionGrid<Scalar>& M, long box, int channel, const double* mom, double scale) {
    if (scale == 0.0) return;
    auto row = M.data.row(box * M.channels + channel);
    for (int k = 0; k < M.P; ++k) row[k] += static_cast<Scalar>(scale * mom[k]);
}

void require_rows(const char* what, Eigen::Index got, Eigen::Index want) {
    if (got != want)
        throw ContractError(std::string(what) + ": expected " + std::to_string(want) + " rows, got " +
                            std::to_string(got));
}

} // namespace

Values clip_density(const Values& w) {
    if (w.cols() != 4) throw ContractError("volumetric sources need 4 channels (density, r, g, b)");
    Values out = w;
    out.col(0) = w.col(0).cwiseMax(0.0);
    return out;
}

// ------------------------------------------------------------------ explicit

template <class Scalar>
ExplicitForward<Scalar> explicit_forward(const Engine<Scalar>& e, const Points& q, const SourceSet& s) {
    require_in_domain(q, "target");
    ExplicitForward<Scalar> f{Values(), e.expand(s.p, s.w)};
    f.y = f.field.values(q);
    return f;
}

template <class Scalar>
LayerGradients explicit_jvp(const Engine<Scalar>& e, const ExplicitForward<Scalar>& fwd, const Points& q,
                            const Values& y_bar, const SourceSet& s, bool with_q) {
    require_rows("explicit_jvp y_bar", y_bar.rows(), q.rows());
    if (y_bar.cols() != s.channels()) throw ContractError("explicit_jvp: y_bar has the wrong channel count");
    LayerGradients g = LayerGradients::zeros(s);
    if (with_q) {
        Points qb = Points::Zero(q.rows(), 3);
        parallel_for(q.rows(), e.threads(), [&](long m0, long m1, int) {
            Vec3 grad;
            for (long m = m0; m < m1; ++m)
                for (int c = 0; c < s.channels(); ++c) {
                    fwd.field.eval(q.row(m).transpose(), c, &grad);
                    qb.row(m) += y_bar(m, c) * grad.transpose();
                }
        });
        g.q_bar = std::move(qb);
    }
    const BoxMask at_sources = boxes_holding(s.p, e.levels());
    const Accessor<Scalar> back = e.expand(q, y_bar, nullptr, &at_sources);
    read_back(back, s, s.w, 0, g, e.threads());
    return g;
}

// --------------------------------------------------------------------- roots

template <class Scalar>
RootResult find_roots(const Accessor<Scalar>& field, const std::vector<Ray>& rays, double bias,
                      const RootOptions& opt, int threads) {
    const auto& grid = field.grid();
    const MultiIndexTable& t = field.table();
    if (opt.channel < 0 || opt.channel >= field.channels()) throw ContractError("find_roots: channel out of range");
    const long M = static_cast<long>(rays.size());
    RootResult R;
    R.hit.assign(M, 0);
    R.length.assign(M, 0.0);
    R.grad = Points::Zero(M, 3);
    R.denom.assign(M, 0.0);
    R.point = Points::Zero(M, 3);
    R.hess = Values::Zero(opt.hessian ? M : 0, 6);
    R.box.assign(M, -1);
    R.degenerate.assign(M, 0);
    R.jumped.assign(M, 0);

    const int workers = static_cast<int>(std::max<long>(1, std::min<long>(threads, M)));
    std::vector<std::array<long, 3>> tally(workers, {0, 0, 0});
    parallel_for(M, workers, [&](long m0, long m1, int w) {
        for (long m = m0; m < m1; ++m) {
            const Ray& ray = rays[m];
            const auto segs = traverse(ray, grid.level);
            double prev_end = 0.0;
            for (std::size_t i = 0; i < segs.size(); ++i) {
                const Segment& seg = segs[i];
                const long id = grid.box_id(seg.box);
                const Vec3 d = segment_entry_offset(ray, seg, grid.level);
                Poly1D f = line2poly(t, field.coeffs(id, opt.channel), d, ray.dir);
                f[0] += bias;
                const double len = seg.length();
                const double start = f(0.0);
                if (i == 0 && !(start > 0.0)) {
                    ++tally[w][0];
                    break;
                }
                if (i > 0 && (start > 0.0) != (prev_end > 0.0) && !R.jumped[m]) {
                    R.jumped[m] = 1;
                    ++tally[w][1];
                }
                prev_end = f(len);
                if (f.coeffs().cwiseAbs().maxCoeff() == 0.0) continue;
                double root = -1.0;
                for (double x : quartic_roots(f))
                    if (x >= -opt.boundary_eps && x <= len + opt.boundary_eps) {
                        root = std::clamp(x, 0.0, len);
                        break;
                    }
                if (root < 0.0) continue;

                Vec3 grad;
                double h[6];
                field.eval_in_box(id, d + root * ray.dir, opt.channel, &grad, opt.hessian ? h : nullptr);
                R.hit[m] = 1;
                R.length[m] = seg.x1 + root;
                R.point.row(m) = ray.at(R.length[m]).transpose();
                R.grad.row(m) = grad.transpose();
                R.denom[m] = ray.dir.dot(grad);
                R.box[m] = id;
                if (opt.hessian)
                    for (int k = 0; k < 6; ++k) R.hess(m, k) = h[k];
                if (!(std::abs(R.denom[m]) >= opt.tangent_tol * grad.norm()) || R.denom[m] == 0.0) {
                    R.degenerate[m] = 1;
                    ++tally[w][2];
                }
                break;
            }
        }
    });
    for (const auto& c : tally) {
        R.dead += c[0];
        R.sign_jumps += c[1];
        R.degenerate_count += c[2];
    }
    return R;
}

template <class Scalar>
RootForward<Scalar> depth_forward(const Engine<Scalar>& e, const std::vector<Ray>& rays, const SourceSet& s,
                                  double bias, int channel) {
    if (channel < 0 || channel >= s.channels()) throw ContractError("depth_forward: channel out of range");
    const Values w = s.w.col(channel);
    RootForward<Scalar> f{RootResult(), e.expand(s.p, w)};
    f.roots = find_roots(f.field, rays, bias, RootOptions{}, e.threads());
    return f;
}

template <class Scalar>
RootForward<Scalar> surface_gradient_forward(const Engine<Scalar>& e, const std::vector<Ray>& rays,
                                             const SourceSet& s, double bias, int channel) {
    if (channel < 0 || channel >= s.channels()) throw ContractError("surface_gradient_forward: channel out of range");
    const Values w = s.w.col(channel);
    RootForward<Scalar> f{RootResult(), e.expand(s.p, w)};
    RootOptions opt;
    opt.hessian = true;
    f.roots = find_roots(f.field, rays, bias, opt, e.threads());
    return f;
}

namespace {

// Hits that carry gradient, in ray order.
std::vector<long> usable_hits(const RootResult& R, long& clamped) {
    std::vector<long> out;
    clamped = 0;
    for (std::size_t m = 0; m < R.hit.size(); ++m) {
        if (!R.hit[m]) continue;
        if (R.degenerate[m]) {
            ++clamped;
            continue;
        }
        out.push_back(static_cast<long>(m));
    }
    return out;
}

Eigen::Matrix3d unpack_hessian(const Values& hess, long m) {
    Eigen::Matrix3d H;
    H << hess(m, 0), hess(m, 3), hess(m, 4), hess(m, 3), hess(m, 1), hess(m, 5), hess(m, 4), hess(m, 5), hess(m, 2);
    return H;
}

} // namespace

template <class Scalar>
LayerGradients depth_jvp(const Engine<Scalar>& e, const std::vector<double>& y_bar, const RootResult& roots,
                         const std::vector<Ray>& rays, const SourceSet& s, int channel) {
    if (y_bar.size() != roots.hit.size() || rays.size() != roots.hit.size())
        throw ContractError("depth_jvp: rays, roots and y_bar disagree in count");
    LayerGradients g = LayerGradients::zeros(s);
    const std::vector<long> idx = usable_hits(roots, g.clamped);
    Points at(idx.size(), 3);
    Values charge(idx.size(), 1);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const long m = idx[k];
        at.row(k) = nudge_inside(roots.point.row(m).transpose()).transpose();
        charge(k, 0) = -y_bar[m] / roots.denom[m];
        g.bias_bar += charge(k, 0);
    }
    const BoxMask at_sources = boxes_holding(s.p, e.levels());
    const Accessor<Scalar> back = e.expand(at, charge, nullptr, &at_sources);
    read_back(back, s, s.w, channel, g, e.threads());
    return g;
}

template <class Scalar>
LayerGradients surface_gradient_jvp(const Engine<Scalar>& e, const Points& y_bar, const RootResult& roots,
                                    const std::vector<Ray>& rays, const SourceSet& s, int channel,
                                    SurfaceJvpMode mode) {
    const long M = static_cast<long>(roots.hit.size());
    require_rows("surface_gradient_jvp y_bar", y_bar.rows(), M);
    if (static_cast<long>(rays.size()) != M) throw ContractError("surface_gradient_jvp: rays and roots disagree");
    if (roots.hess.rows() != M) throw ContractError("surface_gradient_jvp needs roots found with second partials");
    LayerGradients g = LayerGradients::zeros(s);
    const std::vector<long> idx = usable_hits(roots, g.clamped);
    const long K = static_cast<long>(idx.size());
    Points at(K, 3);
    Values proj(K, 1), dip(K, 3);
    for (long k = 0; k < K; ++k) {
        const long m = idx[k];
        at.row(k) = nudge_inside(roots.point.row(m).transpose()).transpose();
        const Vec3 yg = y_bar.row(m).transpose();
        const Vec3 Hr = unpack_hessian(roots.hess, m) * rays[m].dir;
        proj(k, 0) = -yg.dot(Hr) / roots.denom[m];
        dip.row(k) = yg.transpose();
        g.bias_bar += proj(k, 0);
    }
    const BoxMask at_sources = boxes_holding(s.p, e.levels());

    if (mode == SurfaceJvpMode::dipole) {
        const Accessor<Scalar> back = e.expand(at, proj, &dip, &at_sources);
        read_back(back, s, s.w, channel, g, e.threads());
        return g;
    }

    Values four(K, 4);
    four.col(0) = proj.col(0);
    four.rightCols(3) = dip;
    const Accessor<Scalar> back = e.expand(at, four, nullptr, &at_sources);
    const auto& grid = back.grid();
    parallel_for(s.size(), e.threads(), [&](long n0, long n1, int) {
        Vec3 grad;
        double h[6];
        for (long n = n0; n < n1; ++n) {
            const Vec3 x = s.p.row(n).transpose();
            const Vec3i b = grid.find_box(x);
            const long id = grid.box_id(b);
            const Vec3 d = x - grid.center(b);
            double wb = back.eval_in_box(id, d, 0, &grad);
            Vec3 pb = grad;
            Values hv(1, 6);
            for (int a = 0; a < 3; ++a) {
                back.eval_in_box(id, d, 1 + a, &grad, h);
                for (int k = 0; k < 6; ++k) hv(0, k) = h[k];
                wb -= grad[a];
                pb -= unpack_hessian(hv, 0).col(a);
            }
            g.w_bar(n, channel) = wb;
            g.p_bar.row(n) = s.w(n, channel) * pb.transpose();
        }
    });
    return g;
}

// ----------------------------------------------------------------- integrals

template <class Scalar>
Values integrate_rays(const Accessor<Scalar>& field, const std::vector<Ray>& rays, int threads) {
    const auto& grid = field.grid();
    const MultiIndexTable& t = field.table();
    const int C = field.channels();
    Values y = Values::Zero(static_cast<Eigen::Index>(rays.size()), C);
    parallel_for(static_cast<long>(rays.size()), threads, [&](long m0, long m1, int) {
        for (long m = m0; m < m1; ++m) {
            const Ray& ray = rays[m];
            for (const Segment& seg : traverse(ray, grid.level)) {
                const long id = grid.box_id(seg.box);
                const Vec3 d = segment_entry_offset(ray, seg, grid.level);
                for (int c = 0; c < C; ++c)
                    y(m, c) += line2poly(t, field.coeffs(id, c), d, ray.dir).integrate()(seg.length());
            }
        }
    });
    return y;
}

template <class Scalar>
LineForward<Scalar> line_integral_forward(const Engine<Scalar>& e, const std::vector<Ray>& rays, const SourceSet& s) {
    LineForward<Scalar> f{Values(), e.expand(s.p, s.w)};
    f.y = integrate_rays(f.field, rays, e.threads());
    return f;
}

template <class Scalar>
LayerGradients line_integral_jvp(const Engine<Scalar>& e, const Values& y_bar, const std::vector<Ray>& rays,
                                 const SourceSet& s) {
    require_rows("line_integral_jvp y_bar", y_bar.rows(), static_cast<Eigen::Index>(rays.size()));
    if (y_bar.cols() != s.channels()) throw ContractError("line_integral_jvp: y_bar has the wrong channel count");
    const MultiIndexTable& t = e.table();
    const int level = e.levels(), C = s.channels();
    ExpansionGrid<Scalar> M = ray_moments(e, C, static_cast<long>(rays.size()), [&](long m, ExpansionGrid<Scalar>& G) {
        if (y_bar.row(m).isZero(0.0)) return;
        const Ray& ray = rays[m];
        double mom[35];
        for (const Segment& seg : traverse(ray, level)) {
            line2taylor(t, segment_entry_offset(ray, seg, level), ray.dir, seg.length(), mom);
            const long id = G.box_id(seg.box);
            for (int c = 0; c < C; ++c) add_moments(G, id, c, mom, y_bar(m, c));
        }
    });
    LayerGradients g = LayerGradients::zeros(s);
    const BoxMask at_sources = boxes_holding(s.p, e.levels());
    read_back(e.expand_moments(std::move(M), &at_sources), s, s.w, 0, g, e.threads());
    return g;
}

// ---------------------------------------------------------------- volumetric

namespace {

struct SegmentPolys {
    Vec3 d;
    double len = 0.0;
    long box = 0;
    Poly1D sigma, T;
    std::array<Poly1D, 3> color;
};

// Transmittance left for the background after an optical depth D: one for
// a net negative depth and zero past the fit range.
double background_transmittance(double D) {
    const ExpPolyFit& fit = mexp_fit();
    return D >= fit.range ? 0.0 : fit.poly(std::max(D, 0.0));
}

double background_slope(double D, DensityAdjoint mode) {
    const ExpPolyFit& fit = mexp_fit();
    if (D <= 0.0 || D >= fit.range) return 0.0;
    return mode == DensityAdjoint::exact ? fit.poly.derivative()(D) : -fit.poly(D);
}

// Walks one ray up to the early exit, handing each segment's density,
// colour and transmittance polynomials to visit(seg, depth_at_entry).
template <class Scalar, class Visit>
double walk_ray(const Accessor<Scalar>& field, const Ray& ray, double exit_depth, int& walked, Visit&& visit) {
    const auto& grid = field.grid();
    const MultiIndexTable& t = field.table();
    const Poly1D& mexp = mexp_poly();
    double D = 0.0;
    walked = 0;
    SegmentPolys sp;
    for (const Segment& seg : traverse(ray, grid.level)) {
        sp.box = grid.box_id(seg.box);
        sp.d = segment_entry_offset(ray, seg, grid.level);
        sp.len = seg.length();
        Poly1D ch[4];
        const Scalar* base = field.coeffs(sp.box, 0);
        line2poly_channels(t, base, field.coeffs(sp.box, 1) - base, 4, sp.d, ray.dir, ch);
        sp.sigma = ch[0];
        Poly1D Sig = sp.sigma.integrate();
        Sig[0] += D;
        sp.T = poly_compose(mexp, Sig);
        for (int k = 0; k < 3; ++k) sp.color[k] = ch[1 + k];
        visit(sp, Sig);
        D = Sig(sp.len);
        ++walked;
        if (D > exit_depth) break;
    }
    return D;
}

} // namespace

template <class Scalar>
RenderResult render_rays(const Accessor<Scalar>& field, const std::vector<Ray>& rays, const RenderOptions& opt,
                         int threads) {
    if (field.channels() != 4) throw ContractError("render_rays needs a 4-channel field");
    const long M = static_cast<long>(rays.size());
    RenderResult R{Points::Zero(M, 3), std::vector<double>(M), std::vector<double>(M), std::vector<int>(M)};
    const int rho = field.table().rho();
    parallel_for(M, threads, [&](long m0, long m1, int) {
        for (long m = m0; m < m1; ++m) {
            Vec3 C = Vec3::Zero();
            const double D = walk_ray(field, rays[m], opt.exit_depth, R.segments[m], [&](const SegmentPolys& sp, const Poly1D&) {
                double H[LineBasis::kMax];
                weighted_powers(rho, sp.len, sp.sigma * sp.T, H);
                for (int k = 0; k < 3; ++k)
                    for (int i = 0; i <= sp.color[k].degree(); ++i) C[k] += sp.color[k][i] * H[i];
            });
            R.depth[m] = D;
            R.t_inf[m] = background_transmittance(D);
            R.rgb.row(m) = (C + opt.background * R.t_inf[m]).transpose();
        }
    });
    return R;
}

template <class Scalar>
RenderForward<Scalar> volumetric_forward(const Engine<Scalar>& e, const std::vector<Ray>& rays, const SourceSet& s,
                                         const RenderOptions& opt) {
    RenderForward<Scalar> f{RenderResult(), e.expand(s.p, clip_density(s.w))};
    f.render = render_rays(f.field, rays, opt, e.threads());
    return f;
}

template <class Scalar>
LayerGradients volumetric_jvp(const Engine<Scalar>& e, const RenderForward<Scalar>& fwd, const Points& y_bar,
                              const std::vector<Ray>& rays, const SourceSet& s, const RenderOptions& opt,
                              DensityAdjoint mode) {
    require_rows("volumetric_jvp y_bar", y_bar.rows(), static_cast<Eigen::Index>(rays.size()));
    const Values w_eff = clip_density(s.w);
    const MultiIndexTable& t = e.table();
    const Poly1D& mexp = mexp_poly();
    const Poly1D dmexp = mexp.derivative();

    ExpansionGrid<Scalar> M = ray_moments(e, 4, static_cast<long>(rays.size()), [&](long m, ExpansionGrid<Scalar>& G) {
        const Vec3 yb = y_bar.row(m).transpose();
        if (yb.isZero(0.0)) return;
        struct Cached {
            SegmentPolys sp;
            Poly1D sT;
            Poly1D colour;  // yb-weighted colour
            Poly1D acc;     // running yb-weighted colour-side integral within the segment
        };
        std::vector<Cached> segs;
        double total = 0.0;
        int walked = 0;
        const double D = walk_ray(fwd.field, rays[m], opt.exit_depth, walked, [&](const SegmentPolys& sp, const Poly1D& Sig) {
            Cached c{sp, sp.sigma * sp.T, yb[0] * sp.color[0], {}};
            for (int k = 1; k < 3; ++k) c.colour += yb[k] * sp.color[k];
            const Poly1D weight = mode == DensityAdjoint::exact ? sp.sigma * poly_compose(dmexp, Sig) : c.sT;
            c.acc = (c.colour * weight).integrate();
            total += c.acc(sp.len);
            segs.push_back(std::move(c));
        });

        // Contribution of everything downstream of a point, as a constant
        // plus a polynomial in the in-segment parameter.
        const double sign = mode == DensityAdjoint::exact ? 1.0 : -1.0;
        double tail = sign * total + yb.dot(opt.background) * background_slope(D, mode);
        double mom[2 * 35];
        Poly1D weights[2];
        for (const Cached& c : segs) {
            const SegmentPolys& sp = c.sp;
            Poly1D& h = weights[1];
            h = c.colour * sp.T;
            h[0] += tail;
            h += (-sign) * c.acc;
            weights[0] = c.sT;
            line2taylor_hs(t, sp.d, rays[m].dir, sp.len, weights, 2, mom);
            for (int k = 0; k < 3; ++k) add_moments(G, sp.box, 1 + k, mom, yb[k]);
            add_moments(G, sp.box, 0, mom + t.size(), 1.0);
            tail -= sign * c.acc(sp.len);
        }
    });

    LayerGradients g = LayerGradients::zeros(s);
    const BoxMask at_sources = boxes_holding(s.p, e.levels());
    read_back(e.expand_moments(std::move(M), &at_sources), s, w_eff, 0, g, e.threads());
    for (long n = 0; n < s.size(); ++n)
        if (!(s.w(n, 0) > 0.0)) g.w_bar(n, 0) = 0.0;
    return g;
}

// ------------------------------------------------------------ instantiations

#define FC2T2_LAYERS(S)                                                                                                \
    template ExplicitForward<S> explicit_forward(const Engine<S>&, const Points&, const SourceSet&);                  \
    template LayerGradients explicit_jvp(const Engine<S>&, const ExplicitForward<S>&, const Points&, const Values&,   \
                                         const SourceSet&, bool);                                                     \
    template RootResult find_roots(const Accessor<S>&, const std::vector<Ray>&, double, const RootOptions&, int);     \
    template RootForward<S> depth_forward(const Engine<S>&, const std::vector<Ray>&, const SourceSet&, double, int); \
    template RootForward<S> surface_gradient_forward(const Engine<S>&, const std::vector<Ray>&, const SourceSet&,    \
                                                     double, int);                                                    \
    template LayerGradients depth_jvp(const Engine<S>&, const std::vector<double>&, const RootResult&,              \
                                      const std::vector<Ray>&, const SourceSet&, int);                               \
    template LayerGradients surface_gradient_jvp(const Engine<S>&, const Points&, const RootResult&,                \
                                                 const std::vector<Ray>&, const SourceSet&, int, SurfaceJvpMode);    \
    template Values integrate_rays(const Accessor<S>&, const std::vector<Ray>&, int);                                \
    template LineForward<S> line_integral_forward(const Engine<S>&, const std::vector<Ray>&, const SourceSet&);      \
    template LayerGradients line_integral_jvp(const Engine<S>&, const Values&, const std::vector<Ray>&,             \
                                              const SourceSet&);                                                      \
    template RenderResult render_rays(const Accessor<S>&, const std::vector<Ray>&, const RenderOptions&, int);        \
    template RenderForward<S> volumetric_forward(const Engine<S>&, const std::vector<Ray>&, const SourceSet&,        \
                                                 const RenderOptions&);                                               \
    template LayerGradients volumetric_jvp(const Engine<S>&, const RenderForward<S>&, const Points&,                \
                                           const std::vector<Ray>&, const SourceSet&, const RenderOptions&,           \
                                           DensityAdjoint);

FC2T2_LAYERS(double)
FC2T2_LAYERS(float)

#undef FC2T2_LAYERS

} // namespace fc2t2
