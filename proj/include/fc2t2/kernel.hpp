#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fc2t2/multiindex.hpp"
#include "fc2t2/types.hpp"

namespace fc2t2 {

// A radially symmetric kernel psi with analytic partial derivatives.
class KernelFunction {
public:
    virtual ~KernelFunction() = default;
    virtual std::string name() const = 0;
    virtual double partial(const MultiIndex& n, const Vec3& x) const = 0;
    // Product kernels psi(x) = g(x1) g(x2) g(x3) fill out[m] = g^(m)(t) for
    // m = 0..max_order and return true. Others return false.
    virtual bool axis_derivatives(double t, int max_order, double* out) const { return false; }
};

// psi(x) = exp(-alpha |x|^2).
class GaussianKernel final : public KernelFunction {
public:
    explicit GaussianKernel(double alpha);
    std::string name() const override { return "gaussian"; }
    double partial(const MultiIndex& n, const Vec3& x) const override;
    bool axis_derivatives(double t, int max_order, double* out) const override;
    double alpha() const { return alpha_; }

private:
    double alpha_;
};

enum class KernelFamily { gaussian, custom };

struct KernelModel {
    KernelFamily family = KernelFamily::gaussian;
    double alpha = 0.0;
    int rho = 4;
    std::shared_ptr<const KernelFunction> fn;

    static KernelModel gaussian(double alpha, int rho);
    static KernelModel custom(std::shared_ptr<const KernelFunction> fn, int rho);
    static KernelModel from_name(const std::string& family, double alpha, int rho);

    double value(const Vec3& x) const { return fn->partial({0, 0, 0}, x); }
};

double eval_kernel_partial(const KernelModel& k, const MultiIndex& order, const Vec3& x);

// Every partial with |m| <= max_order at x. out is indexed by the cube
// position (m1 * (max_order + 1) + m2) * (max_order + 1) + m3.
void eval_kernel_partials(const KernelModel& k, const Vec3& x, int max_order, std::vector<double>& out);

struct FitOptions {
    bool lsq = true;
    // Chebyshev nodes per axis of the fit window; 0 picks rho + 2.
    int nodes_per_axis = 0;
    // Average the target-side fit with its source-side transpose so the
    // operator stays self-adjoint and backward passes are exact adjoints.
    bool symmetrize = true;
    // Worst |expansion - psi| / psi(0) over random probe pairs at the closest
    // displacements each pass resolves.
    bool check_admissibility = true;
    double admissibility_tol = 5e-2;
};

// Moment-to-local coefficients for one level. Offsets span the cube
// [-radius, radius]^3 in x-major order; coeffs[s](k, n) maps moment n of a
// source box to local coefficient k of the target box at offset
// target - source = offsets[s]. Inactive slots (the hole) hold zeros.
struct M2LTable {
    int level = 0;
    bool nearfield = false;
    int radius = 0;
    std::vector<Vec3i> offsets;
    std::vector<Eigen::MatrixXd> coeffs;
    std::vector<std::uint8_t> mask;
    double fit_residual = 0.0;  // max over nodes, relative to the slice's max
    double probe_error = 0.0;

    int slot(const Vec3i& d) const {
        const int w = 2 * radius + 1;
        if ((d.array().abs() > radius).any()) return -1;
        return ((d.x() + radius) * w + (d.y() + radius)) * w + (d.z() + radius);
    }
};

struct M2LTables {
    int levels = 0;
    std::vector<M2LTable> far;  // far[l - 2] for level l = 2..levels
    M2LTable near;              // finest level, 3x3x3 including self

    const M2LTable& at_level(int level) const { return far.at(level - 2); }
};

// Box geometry shared by every module: level l has 2^(l+1) boxes per axis
// over (-1, 1).
inline int level_resolution(int level) { return 1 << (level + 1); }
inline double level_box_width(int level) { return 2.0 / level_resolution(level); }

M2LTables fit_m2l_tables(const KernelModel& k, int levels, const FitOptions& opts = {});

} // namespace fc2t2
