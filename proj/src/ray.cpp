#include "fc2t2/ray.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "fc2t2/error.hpp"
#include "fc2t2/kernel.hpp"

namespace fc2t2 {

void Camera::validate() {
    if (!(gaze.norm() > 1e-12) || !std::isfinite(gaze.norm())) throw InputError("camera gaze is not normalizable");
    if (!(up.norm() > 1e-12) || !std::isfinite(up.norm())) throw InputError("camera up is not normalizable");
    gaze.normalize();
    up.normalize();
    if (gaze.cross(up).norm() < 1e-9) throw InputError("camera gaze and up are parallel");
    if (!(fov_y > 0.0 && fov_y < std::numbers::pi)) throw InputError("camera fov_y must lie in (0, pi)");
    if (width < 1 || height < 1) throw InputError("camera resolution must be positive");
}

std::vector<Ray> generate_rays(const Camera& cam) {
    Camera c = cam;
    c.validate();
    const Vec3 right = c.right();
    const Vec3 up = right.cross(c.gaze);
    const double ty = std::tan(0.5 * c.fov_y), tx = ty * c.width / c.height;
    std::vector<Ray> rays;
    rays.reserve(static_cast<std::size_t>(c.width) * c.height);
    for (int i = 0; i < c.height; ++i)
        for (int j = 0; j < c.width; ++j) {
            const double u = (2.0 * (j + 0.5) / c.width - 1.0) * tx;
            const double v = (1.0 - 2.0 * (i + 0.5) / c.height) * ty;
            rays.push_back({c.eye, (c.gaze + u * right + v * up).normalized()});
        }
    return rays;
}

bool clip_to_domain(const Ray& r, double& t_enter, double& t_exit) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (r.dir[a] == 0.0) {
            if (r.origin[a] <= -1.0 || r.origin[a] >= 1.0) return false;
            continue;
        }
        double ta = (-1.0 - r.origin[a]) / r.dir[a], tb = (1.0 - r.origin[a]) / r.dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    t_enter = t0;
    t_exit = t1;
    return t1 > t0;
}

std::vector<Segment> traverse(const Ray& r, int level) {
    std::vector<Segment> out;
    double t, t_exit;
    if (!clip_to_domain(r, t, t_exit)) return out;
    const int res = level_resolution(level);
    const double w = 2.0 / res;
    const Vec3 entry = r.at(t);
    Vec3i box, step;
    for (int a = 0; a < 3; ++a) {
        box[a] = std::clamp(static_cast<int>(std::floor((entry[a] + 1.0) / w)), 0, res - 1);
        step[a] = r.dir[a] > 0.0 ? 1 : (r.dir[a] < 0.0 ? -1 : 0);
    }
    // Parameter at which the ray leaves the current box through axis a.
    auto next_crossing = [&](int a) {
        if (step[a] == 0) return std::numeric_limits<double>::infinity();
        const double face = -1.0 + (box[a] + (step[a] > 0 ? 1 : 0)) * w;
        return (face - r.origin[a]) / r.dir[a];
    };
    while (true) {
        double cross[3] = {next_crossing(0), next_crossing(1), next_crossing(2)};
        int axis = 0;
        for (int a = 1; a < 3; ++a)
            if (cross[a] < cross[axis]) axis = a;
        const double t_next = std::min(cross[axis], t_exit);
        if (t_next - t > 1e-12) out.push_back({box, t, t_next});
        t = std::max(t, t_next);
        if (t >= t_exit) break;
        box[axis] += step[axis];
        if (box[axis] < 0 || box[axis] >= res) break;
    }
    return out;
}

Vec3 segment_entry_offset(const Ray& r, const Segment& s, int level) {
    const double w = level_box_width(level);
    const Vec3 center = (s.box.cast<double>().array() + 0.5).matrix() * w - Vec3::Ones();
    return r.at(s.x1) - center;
}

namespace {

// out[k][n] = sum_j c_j H[k][j] for k < count, where c is the coefficient
// list of prod_a (d_a + x r_a)^{n_a} / n_a! and H[k][j] = int_0^s x^j h_k.
// Grouped by (n1, n2): correlate H with the axis-1/2 factor once, then
// finish each n3 with the axis-3 factor.
void segment_moments(const MultiIndexTable& t, const Vec3& d, const Vec3& r, const double (*H)[LineBasis::kMax],
                     int count, double* out) {
    const int rho = t.rho(), P = t.size();
    constexpr int K = LineBasis::kMax;
    const LineBasis B(d, r, rho);
    double a12[K], g[K];
    for (int n1 = 0; n1 <= rho; ++n1)
        for (int n2 = 0; n1 + n2 <= rho; ++n2) {
            const int deg12 = n1 + n2, top = rho - deg12;
            for (int j = 0; j <= deg12; ++j) a12[j] = 0.0;
            for (int i = 0; i <= n1; ++i)
                for (int j = 0; j <= n2; ++j) a12[i + j] += B.A[0][n1][i] * B.A[1][n2][j];
            for (int k = 0; k < count; ++k) {
                for (int l = 0; l <= top; ++l) {
                    double v = 0.0;
                    for (int i = 0; i <= deg12; ++i) v += a12[i] * H[k][i + l];
                    g[l] = v;
                }
                for (int n3 = 0; n3 <= top; ++n3) {
                    double v = 0.0;
                    for (int l = 0; l <= n3; ++l) v += B.A[2][n3][l] * g[l];
                    out[k * P + t.find(n1, n2, n3)] = v;
                }
            }
        }
}


} // namespace

void weighted_powers(int rho, double s, const Poly1D& h, double* H) {
    // H[j] = sum_m h_m s^(j+m+1) / (j+m+1).
    const int top = rho + h.degree() + 1;
    double spow[Poly1D::kMaxDegree + LineBasis::kMax + 2];
    spow[0] = 1.0;
    for (int i = 1; i <= top; ++i) spow[i] = spow[i - 1] * s;
    for (int j = 0; j <= rho; ++j) {
        double v = 0.0;
        for (int m = 0; m <= h.degree(); ++m) v += h[m] * spow[j + m + 1] / (j + m + 1);
        H[j] = v;
    }
}

void line2taylor(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s, double* out) {
    double H[1][LineBasis::kMax];
    double sp = s;
    for (int j = 0; j <= t.rho(); ++j, sp *= s) H[0][j] = sp / (j + 1);
    segment_moments(t, d, r, H, 1, out);
}

Eigen::VectorXd line2taylor(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s) {
    Eigen::VectorXd v(t.size());
    line2taylor(t, d, r, s, v.data());
    return v;
}

void line2taylor_h(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s, const Poly1D& h, double* out) {
    line2taylor_hs(t, d, r, s, &h, 1, out);
}

void line2taylor_hs(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s, const Poly1D* h, int count,
                    double* out) {
    constexpr int kBatch = 4;
    double H[kBatch][LineBasis::kMax];
    for (int k0 = 0; k0 < count; k0 += kBatch) {
        const int n = std::min(kBatch, count - k0);
        for (int k = 0; k < n; ++k) weighted_powers(t.rho(), s, h[k0 + k], H[k]);
        segment_moments(t, d, r, H, n, out + static_cast<long>(k0) * t.size());
    }
}

Eigen::VectorXd line2taylor_h(const MultiIndexTable& t, const Vec3& d, const Vec3& r, double s, const Poly1D& h) {
    Eigen::VectorXd v(t.size());
    line2taylor_h(t, d, r, s, h, v.data());
    return v;
}

} // namespace fc2t2
