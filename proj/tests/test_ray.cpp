#include "doctest.h"

#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "fc2t2/engine.hpp"
#include "fc2t2/error.hpp"
#include "fc2t2/oracle.hpp"
#include "fc2t2/ray.hpp"

using namespace fc2t2;

namespace {

double monomial(const MultiIndex& n, const Vec3& x) {
    return std::pow(x.x(), n.n1) * std::pow(x.y(), n.n2) * std::pow(x.z(), n.n3) /
           (std::tgamma(n.n1 + 1.0) * std::tgamma(n.n2 + 1.0) * std::tgamma(n.n3 + 1.0));
}

Ray random_ray(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    Vec3 o(3 * u(rng), 3 * u(rng), 3 * u(rng));
    Vec3 target(0.8 * u(rng), 0.8 * u(rng), 0.8 * u(rng));
    return {o, (target - o).normalized()};
}

} // namespace

TEST_CASE("pinhole rays") {
    Camera c;
    c.width = 5;
    c.height = 3;
    c.gaze = Vec3(0, 0, -2);
    const auto rays = generate_rays(c);
    CHECK(rays.size() == 15);
    CHECK((rays[1 * 5 + 2].dir - Vec3(0, 0, -1)).norm() < 1e-15);
    for (const Ray& r : rays) CHECK(std::abs(r.dir.norm() - 1.0) < 1e-12);
    // Top-left pixel looks up and to the left.
    CHECK(rays[0].dir.y() > 0);
    CHECK(rays[0].dir.x() < 0);

    Camera bad;
    bad.up = Vec3(0, 0, 1);
    CHECK_THROWS_AS(generate_rays(bad), InputError);
    bad = Camera{};
    bad.fov_y = 4.0;
    CHECK_THROWS_AS(generate_rays(bad), InputError);
}

TEST_CASE("axis-aligned traversal visits every box along the axis") {
    const Ray r{Vec3(-1.5, 0.01, 0.02), Vec3(1, 0, 0)};
    const auto segs = traverse(r, 4);
    REQUIRE(segs.size() == 32);
    for (int i = 0; i < 32; ++i) {
        CHECK(segs[i].box.x() == i);
        CHECK(segs[i].length() == doctest::Approx(2.0 / 32).epsilon(1e-12));
    }
    CHECK(segs.front().x1 == doctest::Approx(0.5));
    CHECK(traverse(Ray{Vec3(2, 2, 2), Vec3(1, 0, 0)}, 4).empty());
    CHECK(traverse(Ray{Vec3(0, 1.5, 0), Vec3(1, 0, 0)}, 3).empty());
}

TEST_CASE("random traversals tile the clipped interval") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 500; ++trial) {
        const Ray r = random_ray(rng);
        const int level = 2 + trial % 3, res = level_resolution(level);
        double t0, t1;
        REQUIRE(clip_to_domain(r, t0, t1));
        const auto segs = traverse(r, level);
        REQUIRE(!segs.empty());
        CHECK(static_cast<int>(segs.size()) <= 3 * res);
        CHECK(segs.front().x1 == doctest::Approx(t0).epsilon(1e-12));
        CHECK(segs.back().x2 == doctest::Approx(t1).epsilon(1e-12));
        std::set<std::tuple<int, int, int>> seen;
        const double w = level_box_width(level);
        for (std::size_t i = 0; i < segs.size(); ++i) {
            if (i > 0) CHECK(std::abs(segs[i].x1 - segs[i - 1].x2) < 1e-12);
            CHECK(segs[i].x2 > segs[i].x1);
            CHECK(seen.insert({segs[i].box.x(), segs[i].box.y(), segs[i].box.z()}).second);
            const Vec3 mid = r.at(0.5 * (segs[i].x1 + segs[i].x2));
            for (int a = 0; a < 3; ++a) {
                CHECK(mid[a] >= -1.0 + segs[i].box[a] * w - 1e-12);
                CHECK(mid[a] <= -1.0 + (segs[i].box[a] + 1) * w + 1e-12);
            }
        }
    }
}

TEST_CASE("line restriction of a Taylor polynomial") {
    MultiIndexTable t(4);
    std::vector<double> L(t.size(), 0.0);
    L[0] = 2.5;
    const Vec3 d(0.01, -0.02, 0.03), r = Vec3(1, 2, -2).normalized();
    Poly1D p = line2poly(t, L.data(), d, r);
    CHECK(p[0] == 2.5);
    for (int j = 1; j <= 4; ++j) CHECK(p[j] == 0.0);

    std::fill(L.begin(), L.end(), 0.0);
    const Vec3 g(0.3, -1.1, 0.7);
    for (int a = 0; a < 3; ++a) L[t.index_of(unit_index(a))] = g[a];
    p = line2poly(t, L.data(), d, r);
    CHECK(p[0] == doctest::Approx(g.dot(d)).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(g.dot(r)).epsilon(1e-15));
    for (int j = 2; j <= 4; ++j) CHECK(p[j] == 0.0);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1, 1);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        for (double& v : L) v = u(rng);
        const Vec3 dd = 0.06 * Vec3(u(rng), u(rng), u(rng));
        const Vec3 rr = Vec3(u(rng), u(rng), u(rng)).normalized();
        p = line2poly(t, L.data(), dd, rr);
        for (int k = 0; k < 20; ++k) {
            const double s = 0.1 * u(rng);
            double direct = 0;
            for (int i = 0; i < t.size(); ++i) direct += L[i] * monomial(t[i], dd + s * rr);
            worst = std::max(worst, std::abs(p(s) - direct));
        }
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("line restriction stays within the naive operation budget") {
    MultiIndexTable t(4);
    std::vector<double> L(t.size(), 1.0);
    FlopTally tally;
    line2poly(t, L.data(), Vec3(0.01, 0.02, 0.03), Vec3(0, 0.6, 0.8), &tally);
    MESSAGE("line2poly operations: " << tally.total() << " (" << tally.muls << " mul, " << tally.adds << " add)");
    CHECK(tally.total() <= 1465);
    CHECK(tally.total() > 0);
}

TEST_CASE("segment moments") {
    MultiIndexTable t(4);
    const Eigen::VectorXd m0 = line2taylor(t, Vec3(0.1, 0.2, 0.3), Vec3(0, 0, 1), 0.7);
    CHECK(m0[0] == doctest::Approx(0.7).epsilon(1e-15));
    const Eigen::VectorXd m1 = line2taylor(t, Vec3::Zero(), Vec3(1, 0, 0), 0.3);
    CHECK(m1[t.index_of({1, 0, 0})] == doctest::Approx(0.045).epsilon(1e-14));

    const Eigen::VectorXd same = line2taylor_h(t, Vec3(0.1, 0.2, 0.3), Vec3(0, 0, 1), 0.7, Poly1D{1.0});
    CHECK((same - m0).cwiseAbs().maxCoeff() <= 1e-16);
    const Eigen::VectorXd lin = line2taylor_h(t, Vec3(0.1, 0.2, 0.3), Vec3(0, 0, 1), 0.7, Poly1D{0.0, 1.0});
    CHECK(lin[0] == doctest::Approx(0.245).epsilon(1e-14));

    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1, 1);
    double worst = 0, worst_h = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 d = 0.06 * Vec3(u(rng), u(rng), u(rng));
        const Vec3 r = Vec3(u(rng), u(rng), u(rng)).normalized();
        const double s = 0.05 + 0.1 * std::abs(u(rng));
        Poly1D::Coeffs hc(11);
        for (int i = 0; i <= 10; ++i) hc[i] = u(rng);
        const Poly1D h(hc);
        const Eigen::VectorXd a = line2taylor(t, d, r, s), b = line2taylor_h(t, d, r, s, h);
        const auto q = oracle::gauss_legendre(64, 0.0, s);
        for (int i = 0; i < t.size(); ++i) {
            double qa = 0, qb = 0;
            for (std::size_t k = 0; k < q.nodes.size(); ++k) {
                const double m = monomial(t[i], d + q.nodes[k] * r);
                qa += q.weights[k] * m;
                qb += q.weights[k] * m * h(q.nodes[k]);
            }
            worst = std::max(worst, std::abs(a[i] - qa));
            worst_h = std::max(worst_h, std::abs(b[i] - qb));
        }
    }
    CHECK(worst <= 1e-12);
    CHECK(worst_h <= 1e-12);
}

TEST_CASE("segment insertion is the limit of dense point insertion") {
    EngineConfig cfg;
    cfg.levels = 3;
    cfg.alpha = default_alpha(3);
    cfg.lsq = false;
    const Engine<double> e(cfg);
    const MultiIndexTable& t = e.table();
    const Ray ray{Vec3(-0.9, -0.3, 0.2), Vec3(1, 0.2, -0.1).normalized()};
    const auto segs = traverse(ray, 3);
    REQUIRE(segs.size() > 3);
    const Segment& seg = segs[2];
    const Vec3 d = segment_entry_offset(ray, seg, 3);

    ExpansionGrid<double> M = e.empty_moments(1);
    const long box = M.box_id(seg.box);
    const Eigen::VectorXd mom = line2taylor(t, d, ray.dir, seg.length());
    M.rows(box) = mom.transpose();
    const auto exact = e.expand_moments(M);
    const Vec3 far = M.center(seg.box) + Vec3(0.5, 0.5, -0.5);

    double prev_err = INFINITY;
    for (int n : {4, 16, 64}) {
        Points p(n, 3);
        Values w(n, 1);
        for (int i = 0; i < n; ++i) {
            p.row(i) = ray.at(seg.x1 + (i + 0.5) * seg.length() / n).transpose();
            w(i, 0) = seg.length() / n;
        }
        const double err = std::abs(e.expand(p, w).value(far) - exact.value(far));
        CHECK(err < prev_err);
        prev_err = err;
    }
    CHECK(prev_err <= 1e-6 * std::abs(exact.value(far)) + 1e-15);
}
