#include "doctest.h"

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "fc2t2/layers.hpp"
#include "fc2t2/oracle.hpp"

using namespace fc2t2;

namespace {

const Engine<double>& engine3() {
    static const Engine<double> e([] {
        EngineConfig c;
        c.levels = 3;
        c.alpha = default_alpha(3);
        return c;
    }());
    return e;
}

const Engine<double>& engine4() {
    static const Engine<double> e([] {
        EngineConfig c;
        c.levels = 4;
        c.alpha = 200.0;
        return c;
    }());
    return e;
}

// Level 4 with a wide kernel: small engine error, for geometric checks.
const Engine<double>& engine4_smooth() {
    static const Engine<double> e([] {
        EngineConfig c;
        c.levels = 4;
        c.alpha = 50.0;
        return c;
    }());
    return e;
}

Points uniform_points(long n, double half, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-half, half);
    Points p(n, 3);
    for (long i = 0; i < n; ++i) p.row(i) << u(rng), u(rng), u(rng);
    return p;
}

Values uniform_values(long n, int c, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Values w(n, c);
    for (long i = 0; i < n; ++i)
        for (int k = 0; k < c; ++k) w(i, k) = u(rng);
    return w;
}

std::vector<Ray> camera_rays(int px, double fov = 0.8, Vec3 eye = Vec3(0.3, 0.4, 3.0)) {
    Camera cam;
    cam.eye = eye;
    cam.gaze = -eye;
    cam.up = Vec3(0, 1, 0);
    cam.fov_y = fov;
    cam.width = cam.height = px;
    return generate_rays(cam);
}

// Negative blobs under a small positive offset: the zero level set wraps
// the blob union.
SourceSet blob_scene(long n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {uniform_points(n, 0.45, rng), uniform_values(n, 1, -1.0, -0.3, rng)};
}

double dot(const Values& a, const Values& b) { return a.cwiseProduct(b).sum(); }

// Largest |analytic - fd| relative to max(|fd|, rms of all fd values).
double adjoint_error(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double rms = 0.0;
    for (double f : fd) rms += f * f;
    rms = std::sqrt(rms / std::max<std::size_t>(1, fd.size()));
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i)
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / std::max(std::abs(fd[i]), rms));
    return worst;
}

bool same_boxes(const Points& a, const Points& b, int level) {
    const int res = level_resolution(level);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (int k = 0; k < 3; ++k)
            if (std::floor((a(i, k) + 1.0) * res / 2) != std::floor((b(i, k) + 1.0) * res / 2)) return false;
    return true;
}

struct AdjointRun {
    double w_error = 0.0, p_error = 0.0;
    int w_used = 0, p_used = 0;
};

// Directional derivatives of objective(s) along random weight and position
// directions, compared against <w_bar, v> and <p_bar, V>. The objective
// returns nothing when the perturbation changes its discrete structure.
AdjointRun check_adjoint(const SourceSet& s, const LayerGradients& g,
                         const std::function<std::optional<double>(const SourceSet&)>& objective, int level,
                         int directions, std::uint64_t seed, double eps_w = 1e-6, double eps_p = 1e-6) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> aw, fw, ap, fp;
    AdjointRun run;
    for (int k = 0; k < directions; ++k) {
        Values v(s.size(), s.channels());
        for (long i = 0; i < v.size(); ++i) v.data()[i] = nd(rng);
        SourceSet plus = s, minus = s;
        plus.w += eps_w * v;
        minus.w -= eps_w * v;
        const auto op = objective(plus), om = objective(minus);
        if (op && om) {
            fw.push_back((*op - *om) / (2 * eps_w));
            aw.push_back(dot(g.w_bar, v));
        }
        Points V(s.size(), 3);
        for (long i = 0; i < V.size(); ++i) V.data()[i] = nd(rng);
        plus = s;
        minus = s;
        plus.p += eps_p * V;
        minus.p -= eps_p * V;
        if (!same_boxes(plus.p, s.p, level) || !same_boxes(minus.p, s.p, level)) continue;
        const auto pp = objective(plus), pm = objective(minus);
        if (pp && pm) {
            fp.push_back((*pp - *pm) / (2 * eps_p));
            ap.push_back(g.p_bar.cwiseProduct(V).sum());
        }
    }
    run.w_error = adjoint_error(aw, fw);
    run.p_error = adjoint_error(ap, fp);
    run.w_used = static_cast<int>(fw.size());
    run.p_used = static_cast<int>(fp.size());
    return run;
}

} // namespace

// -------------------------------------------------------------------- explicit

TEST_CASE("explicit layer forward") {
    const auto& e = engine3();
    std::mt19937_64 rng(3);
    const SourceSet s{uniform_points(300, 0.95, rng), uniform_values(300, 2, -1, 1, rng)};
    const Points q = uniform_points(200, 0.95, rng);

    const SourceSet zero{s.p, Values::Zero(300, 2)};
    CHECK(explicit_forward(e, q, zero).y.isZero(0.0));

    const auto f = explicit_forward(e, q, s);
    const SourceSet twice{s.p, 2.0 * s.w};
    CHECK(explicit_forward(e, q, twice).y == 2.0 * f.y);

    const Values naive = oracle::naive_sum(q, s.p, s.w, e.kernel());
    const double rel = (f.y - naive).norm() / naive.norm();
    MESSAGE("explicit vs naive, level 3: " << rel);
    CHECK(rel <= 1e-2);

    Points bad = q;
    bad(5, 1) = 1.0;
    CHECK_THROWS_AS(explicit_forward(e, bad, s), InputError);
}

TEST_CASE("explicit layer gradients") {
    const auto& e = engine3();
    std::mt19937_64 rng(4);
    const SourceSet s{uniform_points(200, 0.9, rng), uniform_values(200, 2, -1, 1, rng)};
    const Points q = uniform_points(150, 0.9, rng);
    const Values y_bar = uniform_values(150, 2, -1, 1, rng);
    const auto f = explicit_forward(e, q, s);

    const auto g0 = explicit_jvp(e, f, q, Values::Zero(150, 2), s);
    CHECK(g0.w_bar.isZero(0.0));
    CHECK(g0.p_bar.isZero(0.0));
    CHECK(g0.q_bar->isZero(0.0));

    const long before = e.expansions();
    const auto g = explicit_jvp(e, f, q, y_bar, s);
    CHECK(e.expansions() - before == 1);

    const auto run = check_adjoint(s, g, [&](const SourceSet& t) -> std::optional<double> {
        return dot(y_bar, explicit_forward(e, q, t).y);
    }, 3, 24, 11);
    MESSAGE("explicit adjoint: w " << run.w_error << " (" << run.w_used << "), p " << run.p_error << " ("
                                   << run.p_used << ")");
    CHECK(run.w_used >= 20);
    CHECK(run.w_error <= 1e-2);
    CHECK(run.p_used >= 20);
    CHECK(run.p_error <= 1e-2);

    // Target directions.
    std::normal_distribution<double> nd;
    std::vector<double> a, fd;
    const double eps = 1e-6;
    for (int k = 0; k < 24; ++k) {
        Points V(q.rows(), 3);
        for (long i = 0; i < V.size(); ++i) V.data()[i] = nd(rng);
        const Points qp = q + eps * V, qm = q - eps * V;
        if (!same_boxes(qp, q, 3) || !same_boxes(qm, q, 3)) continue;
        fd.push_back((dot(y_bar, f.field.values(qp)) - dot(y_bar, f.field.values(qm))) / (2 * eps));
        a.push_back(g.q_bar->cwiseProduct(V).sum());
    }
    CHECK(fd.size() >= 20);
    CHECK(adjoint_error(a, fd) <= 1e-2);

    // Against the naive sum's own derivatives.
    const Values naive_w = oracle::naive_grads(q, s.p, s.w, y_bar, e.kernel()).w_bar;
    CHECK((g.w_bar - naive_w).norm() / naive_w.norm() <= 1e-2);
}

TEST_CASE("explicit layer: single pair matches the closed-form gradient") {
    const auto& e = engine4();
    Points p(1, 3), q(1, 3);
    p << 0.11, -0.07, 0.23;
    q << 0.16, -0.04, 0.19;
    Values w(1, 1), y_bar(1, 1);
    w << 1.7;
    y_bar << -0.6;
    const SourceSet s{p, w};
    const auto g = explicit_jvp(e, explicit_forward(e, q, s), q, y_bar, s);
    const Vec3 x = (p.row(0) - q.row(0)).transpose();
    const double a = e.kernel().alpha, psi = std::exp(-a * x.squaredNorm());
    const Vec3 expect = 1.7 * (-2 * a * x * psi) * -0.6;
    MESSAGE("pair p_bar " << g.p_bar.row(0) << " vs " << expect.transpose());
    CHECK((g.p_bar.row(0).transpose() - expect).norm() <= 1e-2 * expect.norm());
    CHECK(g.w_bar(0, 0) == doctest::Approx(-0.6 * psi).epsilon(1e-2));
}

// ----------------------------------------------------------------------- depth

TEST_CASE("depth layer forward") {
    const auto& e = engine4();
    const double alpha = 200.0, bias = 0.05;

    const SourceSet empty{Points::Zero(1, 3), Values::Zero(1, 1)};
    const auto none = depth_forward(e, camera_rays(16), empty, bias);
    CHECK(none.roots.hits() == 0);
    CHECK(none.roots.dead == 0);

    // One negative blob at the origin, rays through the origin. Bisection on
    // the naive field is the reference; the engine's own field error moves
    // the root by about |f_engine - f| / |df/dt|.
    const SourceSet blob{Points::Zero(1, 3), (Values(1, 1) << -1.0).finished()};
    std::mt19937_64 rng(30);
    std::normal_distribution<double> nd;
    std::vector<Ray> rays;
    for (int i = 0; i < 200; ++i) {
        const Vec3 d = Vec3(nd(rng), nd(rng), nd(rng)).normalized();
        rays.push_back({-2.5 * d, d});
    }
    const auto r = depth_forward(e, rays, blob, bias);
    const auto naive = [&](const Vec3& x) { return bias - std::exp(-alpha * x.squaredNorm()); };
    double worst_f = 0, worst_excess = 0;
    long jumped = 0, within_tol = 0;
    for (std::size_t m = 0; m < rays.size(); ++m) {
        double t0, t1;
        REQUIRE(clip_to_domain(rays[m], t0, t1));
        const auto ref = oracle::bisect_root([&](double t) { return naive(rays[m].at(t)); }, t0, t1, 1e-3, 1e-12);
        REQUIRE(ref.has_value());
        if (r.roots.jumped[m]) {
            ++jumped;
            continue;
        }
        REQUIRE(r.roots.hit[m]);
        const Vec3 x = rays[m].at(*ref);
        const double slope = std::abs(2 * alpha * x.dot(rays[m].dir) * std::exp(-alpha * x.squaredNorm()));
        const double shift = std::abs(r.field.value(x) + bias - naive(x)) / slope;
        const double dt = std::abs(*ref - r.roots.length[m]);
        within_tol += dt < 1e-3;
        worst_excess = std::max(worst_excess, dt / std::max(1e-3, 2 * shift));
        worst_f = std::max(worst_f, std::abs(r.field.value(r.roots.point.row(m).transpose()) + bias));
        CHECK(r.roots.length[m] >= t0);
        CHECK(r.roots.length[m] <= t1);
    }
    MESSAGE("single blob: " << within_tol << "/" << rays.size() << " within 1e-3, worst dt / max(1e-3, engine shift) "
                            << worst_excess << ", jumped " << jumped << ", max |f| at hit " << worst_f);
    CHECK(worst_excess <= 1.0);
    CHECK(jumped <= 10);
    CHECK(worst_f <= 1e-6);

    // Misses carry no geometry.
    const auto c = depth_forward(e, camera_rays(24), blob, bias);
    CHECK(c.roots.hits() > 0);
    for (std::size_t m = 0; m < c.roots.hit.size(); ++m)
        if (!c.roots.hit[m]) {
            CHECK(c.roots.length[m] == 0.0);
            CHECK(c.roots.grad.row(m).isZero(0.0));
        }

    // A ray starting inside the surface is a dead pixel.
    const std::vector<Ray> inside{{Vec3(0, 0, 0), Vec3(0, 0, 1)}};
    const auto d = depth_forward(e, inside, blob, bias);
    CHECK(d.roots.hits() == 0);
    CHECK(d.roots.dead == 1);
}

TEST_CASE("depth layer is invariant to positive rescaling") {
    const auto& e = engine3();
    const SourceSet s = blob_scene(40, 8);
    const auto rays = camera_rays(20);
    const auto a = depth_forward(e, rays, s, 0.05);
    const SourceSet scaled{s.p, 3.0 * s.w};
    const auto b = depth_forward(e, rays, scaled, 0.15);
    CHECK(a.roots.hits() > 50);
    CHECK(a.roots.hit == b.roots.hit);
    double worst = 0;
    for (std::size_t m = 0; m < rays.size(); ++m) worst = std::max(worst, std::abs(a.roots.length[m] - b.roots.length[m]));
    CHECK(worst <= 1e-9);
}

TEST_CASE("depth layer gradients") {
    const auto& e = engine3();
    const SourceSet s = blob_scene(40, 9);
    const auto rays = camera_rays(20);
    const double bias = 0.05;
    const auto fwd = depth_forward(e, rays, s, bias);
    REQUIRE(fwd.roots.hits() > 50);

    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> y_bar(rays.size());
    for (double& v : y_bar) v = u(rng);

    const auto zero = depth_jvp(e, std::vector<double>(rays.size(), 0.0), fwd.roots, rays, s);
    CHECK(zero.w_bar.isZero(0.0));
    CHECK(zero.p_bar.isZero(0.0));
    CHECK(zero.bias_bar == 0.0);

    const auto g = depth_jvp(e, y_bar, fwd.roots, rays, s);
    auto objective = [&](const SourceSet& t, double b) -> std::optional<double> {
        const auto r = depth_forward(e, rays, t, b).roots;
        if (r.hit != fwd.roots.hit) return std::nullopt;
        double acc = 0;
        for (std::size_t m = 0; m < rays.size(); ++m) acc += y_bar[m] * r.length[m];
        return acc;
    };
    const auto run = check_adjoint(s, g, [&](const SourceSet& t) { return objective(t, bias); }, 3, 24, 12);
    MESSAGE("depth adjoint: w " << run.w_error << " (" << run.w_used << "), p " << run.p_error << " (" << run.p_used
                                << ")");
    CHECK(run.w_used >= 20);
    CHECK(run.w_error <= 1e-2);
    CHECK(run.p_used >= 20);
    CHECK(run.p_error <= 1e-2);

    const double eps = 1e-7;
    const double fd = (*objective(s, bias + eps) - *objective(s, bias - eps)) / (2 * eps);
    MESSAGE("bias derivative " << g.bias_bar << " vs " << fd);
    CHECK(g.bias_bar == doctest::Approx(fd).epsilon(1e-2));
}

// ------------------------------------------------------------ surface gradient

namespace {

// Local grid holding the exact degree-4 Taylor polynomial of w psi(x - c)
// in every box: radially symmetric up to truncation, with no expansion
// error.
ExpansionGrid<double> taylor_blob(const Engine<double>& e, const Vec3& c, double w) {
    const MultiIndexTable& t = e.table();
    ExpansionGrid<double> L(e.levels(), 1, t.size(), GridKind::locals);
    for (long b = 0; b < L.boxes(); ++b) {
        const Vec3 x = L.center(L.box_coords(b)) - c;
        for (int k = 0; k < t.size(); ++k) L.data(b, k) = w * eval_kernel_partial(e.kernel(), t[k], x);
    }
    return L;
}

const Engine<double>& engine5_smooth() {
    static const Engine<double> e = [] {
        EngineConfig cfg;
        cfg.levels = 5;
        cfg.alpha = 50;
        return Engine<double>(cfg);
    }();
    return e;
}

} // namespace

TEST_CASE("surface gradient forward") {
    const auto& e = engine4_smooth();
    const auto rays = camera_rays(24, 0.3);
    const Vec3 c(0.05, -0.03, 0.02);
    const SourceSet blob{c.transpose(), (Values(1, 1) << -1.0).finished()};

    RootOptions opt;
    opt.hessian = true;
    const auto& fine = engine5_smooth();
    const auto exact = fine.accessor(taylor_blob(fine, c, -1.0));
    const RootResult tr = find_roots(exact, rays, 0.05, opt);
    CHECK(tr.hits() > 50);
    double worst_angle = 0;
    for (std::size_t m = 0; m < rays.size(); ++m) {
        if (!tr.hit[m]) continue;
        const Vec3 radial = (tr.point.row(m).transpose() - c).normalized();
        const Vec3 grad = tr.grad.row(m).transpose();
        worst_angle = std::max(worst_angle, std::acos(std::min(1.0, grad.normalized().dot(radial))));
    }
    MESSAGE("Taylor blob: worst angle to the radial direction " << worst_angle);
    CHECK(worst_angle <= 1e-3);

    const auto r = surface_gradient_forward(e, rays, blob, 0.05);
    CHECK(r.roots.hits() > 50);
    double engine_angle = 0, worst_fd = 0;
    for (std::size_t m = 0; m < rays.size(); ++m) {
        if (!r.roots.hit[m]) {
            CHECK(r.roots.grad.row(m).isZero(0.0));
            continue;
        }
        const Vec3 x = r.roots.point.row(m).transpose();
        const Vec3 grad = r.roots.grad.row(m).transpose();
        engine_angle = std::max(engine_angle, std::acos(std::min(1.0, grad.normalized().dot((x - c).normalized()))));
        // Central differences inside the hit box.
        const long box = r.roots.box[m];
        const Vec3 d = x - r.field.grid().center(r.field.grid().box_coords(box));
        Vec3 fd;
        const double h = 1e-6;
        for (int a = 0; a < 3; ++a) {
            Vec3 step = Vec3::Zero();
            step[a] = h;
            fd[a] = (r.field.eval_in_box(box, d + step, 0) - r.field.eval_in_box(box, d - step, 0)) / (2 * h);
        }
        worst_fd = std::max(worst_fd, (fd - grad).norm() / grad.norm());
    }
    MESSAGE("engine blob: worst angle " << engine_angle << ", worst fd " << worst_fd);
    CHECK(worst_fd <= 1e-3);
}

TEST_CASE("surface gradient projection term on a central ray") {
    const auto& e = engine4_smooth();
    const SourceSet blob{Points::Zero(1, 3), (Values(1, 1) << -1.0).finished()};
    const std::vector<Ray> rays{{Vec3(0, 0, 3), Vec3(0, 0, -1)}};
    RootOptions opt;
    opt.hessian = true;
    const auto& fine = engine5_smooth();
    const RootResult r = find_roots(fine.accessor(taylor_blob(fine, Vec3::Zero(), -1.0)), rays, 0.05, opt);
    REQUIRE(r.hit[0]);
    Points y_bar(1, 3);
    y_bar << 0.3, -0.2, 0.9;
    const auto g = surface_gradient_jvp(e, y_bar, r, rays, blob);

    // f = bias - exp(-a |x|^2): on the z axis grad and H are closed form.
    const double a = 50.0, z = std::sqrt(std::log(20.0) / a), psi = std::exp(-a * z * z);
    const Vec3 x(0, 0, z), dir(0, 0, -1);
    const Vec3 grad = 2 * a * x * psi;
    const Eigen::Matrix3d H = 2 * a * psi * (Eigen::Matrix3d::Identity() - 2 * a * x * x.transpose());
    const double expect = -y_bar.row(0).dot((H * dir).transpose()) / dir.dot(grad);
    MESSAGE("projection " << g.bias_bar << " vs closed form " << expect);
    CHECK(r.length[0] == doctest::Approx(3.0 - z).epsilon(1e-3));
    CHECK(g.bias_bar == doctest::Approx(expect).epsilon(1e-2));
}

TEST_CASE("surface gradient adjoint") {
    const auto& e = engine3();
    const SourceSet s = blob_scene(40, 13);
    const auto rays = camera_rays(20);
    const double bias = 0.05;
    const auto fwd = surface_gradient_forward(e, rays, s, bias);
    REQUIRE(fwd.roots.hits() > 50);
    std::mt19937_64 rng(14);
    const Points y_bar = uniform_points(static_cast<long>(rays.size()), 1.0, rng);

    const auto zero = surface_gradient_jvp(e, Points::Zero(y_bar.rows(), 3), fwd.roots, rays, s);
    CHECK(zero.w_bar.isZero(0.0));
    CHECK(zero.p_bar.isZero(0.0));

    auto objective = [&](const SourceSet& t) -> std::optional<double> {
        const auto r = surface_gradient_forward(e, rays, t, bias).roots;
        if (r.hit != fwd.roots.hit) return std::nullopt;
        return r.grad.cwiseProduct(y_bar).sum();
    };
    for (auto mode : {SurfaceJvpMode::dipole, SurfaceJvpMode::channels}) {
        const auto g = surface_gradient_jvp(e, y_bar, fwd.roots, rays, s, 0, mode);
        const auto run = check_adjoint(s, g, objective, 3, 24, 15);
        const std::string name = mode == SurfaceJvpMode::dipole ? "dipole" : "channels";
        MESSAGE("surface adjoint (" << name << "): w " << run.w_error << " (" << run.w_used << "), p " << run.p_error
                                    << " (" << run.p_used << ")");
        CHECK(run.w_used >= 20);
        CHECK(run.p_used >= 20);
        CHECK(std::isfinite(run.w_error));
        if (mode == SurfaceJvpMode::dipole) {
            CHECK(run.w_error <= 2e-2);
            CHECK(run.p_error <= 2e-2);
        }
    }
}

// --------------------------------------------------------------- line integral

TEST_CASE("line integral forward") {
    const auto& e = engine3();
    std::mt19937_64 rng(16);
    const SourceSet s{uniform_points(100, 0.8, rng), uniform_values(100, 2, -1, 1, rng)};
    const auto rays = camera_rays(8);

    const SourceSet zero{s.p, Values::Zero(100, 2)};
    CHECK(line_integral_forward(e, rays, zero).y.isZero(0.0));
    const auto f = line_integral_forward(e, rays, s);
    const SourceSet twice{s.p, 2.0 * s.w};
    CHECK(line_integral_forward(e, rays, twice).y == 2.0 * f.y);

    // About 4096 Gauss-Legendre nodes per ray in 4-node panels. The field is
    // polynomial inside each box and jumps between boxes, so panels never
    // straddle a box face.
    std::vector<double> layer, quad;
    for (std::size_t m = 0; m < rays.size(); ++m) {
        double t0, t1;
        REQUIRE(clip_to_domain(rays[m], t0, t1));
        double acc[2] = {0, 0};
        for (const Segment& seg : traverse(rays[m], 3)) {
            const int panels = std::max(1, static_cast<int>(std::lround(1024 * seg.length() / (t1 - t0))));
            for (int k = 0; k < panels; ++k) {
                const auto q = oracle::gauss_legendre(4, seg.x1 + seg.length() * k / panels,
                                                      seg.x1 + seg.length() * (k + 1) / panels);
                for (int i = 0; i < 4; ++i)
                    for (int c = 0; c < 2; ++c) acc[c] += q.weights[i] * f.field.value(rays[m].at(q.nodes[i]), c);
            }
        }
        for (int c = 0; c < 2; ++c) {
            layer.push_back(f.y(m, c));
            quad.push_back(acc[c]);
        }
    }
    const double worst = adjoint_error(layer, quad);
    MESSAGE("line integral vs quadrature: " << worst);
    CHECK(worst <= 1e-6);
}

TEST_CASE("line integral gradients") {
    const auto& e = engine3();
    std::mt19937_64 rng(17);
    const SourceSet s{uniform_points(100, 0.8, rng), uniform_values(100, 2, -1, 1, rng)};
    const auto rays = camera_rays(12);
    const Values y_bar = uniform_values(static_cast<long>(rays.size()), 2, -1, 1, rng);

    const auto zero = line_integral_jvp(e, Values::Zero(y_bar.rows(), 2), rays, s);
    CHECK(zero.w_bar.isZero(0.0));
    CHECK(zero.p_bar.isZero(0.0));

    const auto g = line_integral_jvp(e, y_bar, rays, s);
    const auto run = check_adjoint(s, g, [&](const SourceSet& t) -> std::optional<double> {
        return dot(y_bar, line_integral_forward(e, rays, t).y);
    }, 3, 24, 18);
    MESSAGE("line integral adjoint: w " << run.w_error << ", p " << run.p_error);
    CHECK(run.w_used >= 20);
    CHECK(run.w_error <= 1e-2);
    CHECK(run.p_used >= 20);
    CHECK(run.p_error <= 1e-2);

    // Thread count changes only the reduction order.
    Engine<double> e3(e.config());
    e3.set_threads(3);
    const auto g3 = line_integral_jvp(e3, y_bar, rays, s);
    CHECK((g3.w_bar - g.w_bar).cwiseAbs().maxCoeff() <= 1e-12 * g.w_bar.cwiseAbs().maxCoeff());
}

TEST_CASE("line integral: single ray and source against kernel quadrature") {
    const auto& e = engine4();
    const SourceSet s{(Points(1, 3) << 0.1, 0.02, -0.05).finished(), (Values(1, 1) << 1.0).finished()};
    const std::vector<Ray> rays{{Vec3(-2, 0.0, 0.0), Vec3(1, 0, 0)}};
    const auto g = line_integral_jvp(e, (Values(1, 1) << 1.0).finished(), rays, s);
    const auto q = oracle::gauss_legendre(200, -1.0, 1.0);
    double ref = 0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        const Vec3 x = Vec3(q.nodes[i], 0, 0) - s.p.row(0).transpose();
        ref += q.weights[i] * std::exp(-200.0 * x.squaredNorm());
    }
    MESSAGE("single ray w_bar " << g.w_bar(0, 0) << " vs " << ref);
    CHECK(g.w_bar(0, 0) == doctest::Approx(ref).epsilon(1e-2));
}

// ------------------------------------------------------------------ volumetric

namespace {

SourceSet radiance_scene(long n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SourceSet s{uniform_points(n, 0.6, rng), Values(n, 4)};
    s.w.col(0) = uniform_values(n, 1, -0.5, 3.0, rng);
    s.w.rightCols(3) = uniform_values(n, 3, 0.0, 1.0, rng);
    return s;
}

oracle::RadianceField accessor_field(const Accessor<double>& a) {
    return [&a](const Vec3& x) {
        return std::array<double, 4>{a.value(x, 0), a.value(x, 1), a.value(x, 2), a.value(x, 3)};
    };
}

} // namespace

TEST_CASE("volumetric forward: empty and constant media") {
    const auto& e = engine3();
    RenderOptions opt;
    opt.background = Vec3(0.2, 0.5, 0.9);
    const auto rays = camera_rays(10);

    SourceSet s = radiance_scene(30, 19);
    s.w.col(0).setZero();
    const auto f = volumetric_forward(e, rays, s, opt);
    for (std::size_t m = 0; m < rays.size(); ++m) {
        CHECK(f.render.rgb.row(m) == opt.background.transpose());
        CHECK(f.render.t_inf[m] == 1.0);
    }

    // Constant density and colour written straight into a local grid.
    ExpansionGrid<double> L(3, 4, e.table().size(), GridKind::locals);
    const double sigma0 = 0.9;
    const Vec3 col(0.7, 0.1, 0.4);
    for (long b = 0; b < L.boxes(); ++b) {
        L.data(b * 4 + 0, 0) = sigma0;
        for (int k = 0; k < 3; ++k) L.data(b * 4 + 1 + k, 0) = col[k];
    }
    const auto field = e.accessor(std::move(L));
    const auto r = render_rays(field, rays, opt);
    const double bound = mexp_fit().max_error;
    double worst = 0;
    for (std::size_t m = 0; m < rays.size(); ++m) {
        double t0, t1;
        REQUIRE(clip_to_domain(rays[m], t0, t1));
        const double T = std::exp(-sigma0 * (t1 - t0));
        const Vec3 expect = col * (1 - T) + opt.background * T;
        worst = std::max(worst, (r.rgb.row(m).transpose() - expect).cwiseAbs().maxCoeff());
    }
    MESSAGE("constant medium: " << worst << " (fit bound " << bound << ")");
    CHECK(worst <= bound);
}

TEST_CASE("volumetric forward against the quadrature renderer") {
    const auto& e = engine3();
    RenderOptions opt;
    opt.background = Vec3(0.3, 0.3, 0.6);
    const auto rays = camera_rays(10);
    const SourceSet s = radiance_scene(48, 20);
    const auto f = volumetric_forward(e, rays, s, opt);
    const auto field = accessor_field(f.field);
    double worst = 0, max_depth = 0;
    for (std::size_t m = 0; m < rays.size(); ++m) {
        double t0, t1;
        REQUIRE(clip_to_domain(rays[m], t0, t1));
        const auto q = oracle::quadrature_render(field, rays[m].origin, rays[m].dir, t0, t1, 8192, opt.background);
        worst = std::max(worst, (q.rgb - f.render.rgb.row(m).transpose()).cwiseAbs().maxCoeff());
        max_depth = std::max(max_depth, f.render.depth[m]);
        CHECK(f.render.t_inf[m] >= -1e-12);
        CHECK(f.render.t_inf[m] <= 1.0 + 1e-12);
    }
    MESSAGE("volumetric vs quadrature: " << worst << ", deepest ray " << max_depth);
    CHECK(max_depth > 0.5);
    CHECK(worst <= 2 * mexp_fit().max_error);
}

TEST_CASE("volumetric early exit") {
    const auto& e = engine3();
    RenderOptions opt;
    opt.background = Vec3(0.1, 0.2, 0.3);
    const auto rays = camera_rays(16);

    // Constant density with a smooth colour, chosen so that most rays cross
    // the exit depth while staying inside the transmittance fit range.
    ExpansionGrid<double> L(3, 4, e.table().size(), GridKind::locals);
    const MultiIndexTable& t = e.table();
    for (long b = 0; b < L.boxes(); ++b) {
        const Vec3 c = L.center(L.box_coords(b));
        L.data(b * 4 + 0, 0) = 2.3;
        L.data(b * 4 + 1, 0) = 0.5 + 0.4 * std::sin(3 * c.x());
        L.data(b * 4 + 1, t.index_of({1, 0, 0})) = 1.2 * std::cos(3 * c.x());
        L.data(b * 4 + 2, 0) = 0.8;
        L.data(b * 4 + 3, 0) = 0.3 + 0.2 * c.y();
        L.data(b * 4 + 3, t.index_of({0, 1, 0})) = 0.2;
    }
    const auto field = e.accessor(std::move(L));
    const auto cut = render_rays(field, rays, opt);
    RenderOptions never = opt;
    never.exit_depth = 1e300;
    const auto full = render_rays(field, rays, never);
    long exited = 0;
    for (std::size_t m = 0; m < rays.size(); ++m) {
        if (cut.segments[m] == full.segments[m] || full.depth[m] > mexp_fit().range) continue;
        ++exited;
        CHECK((cut.rgb.row(m) - full.rgb.row(m)).cwiseAbs().maxCoeff() <= std::exp(-4.5) * 1.0);
    }
    MESSAGE("rays cut short: " << exited);
    CHECK(exited >= 20);
}

TEST_CASE("volumetric colour monotonicity") {
    // rgb is linear in a colour weight: the response to dw is
    // dw * int sigma T psi_n along the ray. Negative lobes of the approximated
    // fields are the only way it can decrease, and by no more than the
    // negative part of that integrand.
    const auto& e = engine3();
    RenderOptions opt;
    opt.background = Vec3(0.1, 0.2, 0.3);
    const auto rays = camera_rays(10);
    const SourceSet s = radiance_scene(48, 21);
    const auto f = volumetric_forward(e, rays, s, opt);
    std::mt19937_64 rng(22);
    long decreases = 0;
    for (int probe = 0; probe < 10; ++probe) {
        SourceSet t = s;
        const long n = static_cast<long>(rng() % s.size());
        const int c = 1 + static_cast<int>(rng() % 3);
        const double dw = 0.5;
        t.w(n, c) += dw;
        const auto g = volumetric_forward(e, rays, t, opt);
        const auto unit = e.expand(s.p.row(n), Values::Ones(1, 1));
        for (std::size_t m = 0; m < rays.size(); ++m) {
            const double delta = g.render.rgb(m, c - 1) - f.render.rgb(m, c - 1);
            if (delta >= 0.0) continue;
            ++decreases;
            double t0, t1, neg = 0, depth = 0;
            REQUIRE(clip_to_domain(rays[m], t0, t1));
            const int K = 8192;
            const double dt = (t1 - t0) / K;
            for (int k = 0; k < K; ++k) {
                const Vec3 x = rays[m].at(t0 + (k + 0.5) * dt);
                const double sigma = f.field.value(x, 0);
                const double T = std::exp(-(depth + 0.5 * sigma * dt)) + mexp_fit().max_error;
                depth += sigma * dt;
                neg += std::max(0.0, -sigma * T * unit.value(x)) * dt;
            }
            CHECK(-delta <= 1.1 * dw * neg + 1e-15);
        }
    }
    MESSAGE("probes with a decrease: " << decreases);
}

TEST_CASE("volumetric gradients") {
    const auto& e = engine3();
    RenderOptions opt;
    opt.background = Vec3(0.3, 0.3, 0.6);
    const auto rays = camera_rays(10);
    const SourceSet s = radiance_scene(48, 23);
    const auto fwd = volumetric_forward(e, rays, s, opt);
    std::mt19937_64 rng(24);
    const Points y_bar = uniform_points(static_cast<long>(rays.size()), 1.0, rng);

    const auto zero = volumetric_jvp(e, fwd, Points::Zero(y_bar.rows(), 3), rays, s, opt);
    CHECK(zero.w_bar.isZero(0.0));
    CHECK(zero.p_bar.isZero(0.0));

    auto objective = [&](const SourceSet& t) -> std::optional<double> {
        for (long n = 0; n < t.size(); ++n)
            if ((t.w(n, 0) > 0) != (s.w(n, 0) > 0)) return std::nullopt;
        const auto r = volumetric_forward(e, rays, t, opt).render;
        if (r.segments != fwd.render.segments) return std::nullopt;
        return r.rgb.cwiseProduct(y_bar).sum();
    };
    for (auto mode : {DensityAdjoint::exact, DensityAdjoint::transmittance}) {
        const auto g = volumetric_jvp(e, fwd, y_bar, rays, s, opt, mode);
        for (long n = 0; n < s.size(); ++n)
            if (s.w(n, 0) <= 0) CHECK(g.w_bar(n, 0) == 0.0);
        const auto run = check_adjoint(s, g, objective, 3, 24, 25);
        const std::string name = mode == DensityAdjoint::exact ? "exact" : "transmittance";
        MESSAGE("volumetric adjoint (" << name << "): w " << run.w_error << " (" << run.w_used << "), p "
                                        << run.p_error << " (" << run.p_used << ")");
        CHECK(run.w_used >= 20);
        CHECK(run.p_used >= 20);
        if (mode == DensityAdjoint::exact) {
            CHECK(run.w_error <= 3e-2);
            CHECK(run.p_error <= 3e-2);
        }
    }
}

TEST_CASE("volumetric gradients in an empty medium") {
    const auto& e = engine3();
    RenderOptions opt;
    opt.background = Vec3(0.3, 0.3, 0.6);
    const auto rays = camera_rays(8);
    SourceSet s = radiance_scene(30, 26);
    s.w.col(0).setConstant(1e-9);
    const auto fwd = volumetric_forward(e, rays, s, opt);
    std::mt19937_64 rng(27);
    const Points y_bar = uniform_points(static_cast<long>(rays.size()), 1.0, rng);
    const auto g = volumetric_jvp(e, fwd, y_bar, rays, s, opt);
    CHECK(g.w_bar.rightCols(3).cwiseAbs().maxCoeff() <= 1e-9);

    // Density only, along positive directions.
    std::vector<double> a, fd;
    const double eps = 1e-10;
    for (int k = 0; k < 20; ++k) {
        const Values v = uniform_values(s.size(), 1, 0.0, 1.0, rng);
        SourceSet plus = s, minus = s;
        plus.w.col(0) += eps * v;
        minus.w.col(0) -= 0.5 * eps * v;
        const double op = volumetric_forward(e, rays, plus, opt).render.rgb.cwiseProduct(y_bar).sum();
        const double om = volumetric_forward(e, rays, minus, opt).render.rgb.cwiseProduct(y_bar).sum();
        fd.push_back((op - om) / (1.5 * eps));
        a.push_back(g.w_bar.col(0).dot(v.col(0)));
    }
    MESSAGE("empty medium density gradient error " << adjoint_error(a, fd));
    CHECK(adjoint_error(a, fd) <= 1e-2);
}
