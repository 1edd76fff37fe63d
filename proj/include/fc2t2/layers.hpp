#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fc2t2/engine.hpp"
#include "fc2t2/poly1d.hpp"
#include "fc2t2/ray.hpp"

namespace fc2t2 {

struct LayerGradients {
    Points p_bar;                 // N x 3
    Values w_bar;                 // N x C
    std::optional<Points> q_bar;  // M x 3, explicit layer only
    double bias_bar = 0.0;        // root layers only
    long clamped = 0;             // rays dropped for a near-tangent hit

    static LayerGradients zeros(const SourceSet& s) {
        return {Points::Zero(s.size(), 3), Values::Zero(s.size(), s.channels()), std::nullopt, 0.0, 0};
    }
};

// ---------------------------------------------------------------- explicit

template <class Scalar>
struct ExplicitForward {
    Values y;              // M x C
    Accessor<Scalar> field;
};

template <class Scalar>
ExplicitForward<Scalar> explicit_forward(const Engine<Scalar>& e, const Points& q, const SourceSet& s);

// Gradients of <y_bar, y>. The target gradient comes from the cached
// field; source gradients take one extra expansion seeded at the targets.
template <class Scalar>
LayerGradients explicit_jvp(const Engine<Scalar>& e, const ExplicitForward<Scalar>& fwd, const Points& q,
                            const Values& y_bar, const SourceSet& s, bool with_q = true);

// ------------------------------------------------------------------ roots

struct RootResult {
    std::vector<std::uint8_t> hit;
    std::vector<double> length;    // ray parameter from the origin; 0 on a miss
    Points grad;                   // gradient of the field at the hit
    std::vector<double> denom;     // <dir, grad>
    Points point;                  // hit location
    Values hess;                   // M x 6 {xx,yy,zz,xy,xz,yz}; empty unless requested
    std::vector<long> box;         // finest box holding the hit, -1 on a miss
    std::vector<std::uint8_t> degenerate;  // hit with |denom| < 1e-8 |grad|
    // The field changed sign across a box boundary, where no root is
    // reported, before the walk ended. A later hit is then a crossing in
    // the opposite direction or another surface.
    std::vector<std::uint8_t> jumped;

    long dead = 0;        // rays starting inside the surface
    long sign_jumps = 0;  // rays flagged in `jumped`
    long degenerate_count = 0;

    long hits() const {
        long n = 0;
        for (auto h : hit) n += h;
        return n;
    }
};

struct RootOptions {
    int channel = 0;
    bool hessian = false;
    double boundary_eps = 1e-10;
    double tangent_tol = 1e-8;
};

// First root of field(channel) + bias along each ray, walking boxes in ray
// order. Rays whose field is not positive where they enter the domain miss.
template <class Scalar>
RootResult find_roots(const Accessor<Scalar>& field, const std::vector<Ray>& rays, double bias,
                      const RootOptions& opt = {}, int threads = 1);

template <class Scalar>
struct RootForward {
    RootResult roots;
    Accessor<Scalar> field;
};

template <class Scalar>
RootForward<Scalar> depth_forward(const Engine<Scalar>& e, const std::vector<Ray>& rays, const SourceSet& s,
                                  double bias, int channel = 0);

// Same walk, with second partials at every hit cached for the backward pass.
template <class Scalar>
RootForward<Scalar> surface_gradient_forward(const Engine<Scalar>& e, const std::vector<Ray>& rays,
                                             const SourceSet& s, double bias, int channel = 0);

template <class Scalar>
LayerGradients depth_jvp(const Engine<Scalar>& e, const std::vector<double>& y_bar, const RootResult& roots,
                         const std::vector<Ray>& rays, const SourceSet& s, int channel = 0);

enum class SurfaceJvpMode {
    // Charges and dipoles inserted together; the exact adjoint of the
    // forward expansion.
    dipole,
    // Four channels (projection plus one per axis) expanded as charges;
    // the axis channels are differentiated after the fact.
    channels,
};

template <class Scalar>
LayerGradients surface_gradient_jvp(const Engine<Scalar>& e, const Points& y_bar, const RootResult& roots,
                                    const std::vector<Ray>& rays, const SourceSet& s, int channel = 0,
                                    SurfaceJvpMode mode = SurfaceJvpMode::dipole);

// --------------------------------------------------------------- integrals

// M x C line integrals of the field over each ray's path through the domain.
template <class Scalar>
Values integrate_rays(const Accessor<Scalar>& field, const std::vector<Ray>& rays, int threads = 1);

template <class Scalar>
struct LineForward {
    Values y;
    Accessor<Scalar> field;
};

template <class Scalar>
LineForward<Scalar> line_integral_forward(const Engine<Scalar>& e, const std::vector<Ray>& rays, const SourceSet& s);

template <class Scalar>
LayerGradients line_integral_jvp(const Engine<Scalar>& e, const Values& y_bar, const std::vector<Ray>& rays,
                                 const SourceSet& s);

struct RenderResult {
    Points rgb;                  // M x 3, background included
    std::vector<double> t_inf;   // remaining transmittance, taken at max(depth, 0)
    std::vector<double> depth;   // optical depth where the walk stopped
    std::vector<int> segments;   // segments walked before the early exit
};

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    double exit_depth = 4.5;
};

// Density in channel 0, colour in channels 1..3. Polynomial transmittance
// throughout; no sampling.
template <class Scalar>
RenderResult render_rays(const Accessor<Scalar>& field, const std::vector<Ray>& rays, const RenderOptions& opt,
                         int threads = 1);

template <class Scalar>
struct RenderForward {
    RenderResult render;
    Accessor<Scalar> field;
};

// Source weights with the density column clipped at zero.
Values clip_density(const Values& w);

template <class Scalar>
RenderForward<Scalar> volumetric_forward(const Engine<Scalar>& e, const std::vector<Ray>& rays, const SourceSet& s,
                                         const RenderOptions& opt);

enum class DensityAdjoint {
    // Differentiates the polynomial transmittance as written.
    exact,
    // Treats the transmittance derivative as -T, reusing the forward colour
    // integrals.
    transmittance,
};

template <class Scalar>
LayerGradients volumetric_jvp(const Engine<Scalar>& e, const RenderForward<Scalar>& fwd, const Points& y_bar,
                              const std::vector<Ray>& rays, const SourceSet& s, const RenderOptions& opt,
                              DensityAdjoint mode = DensityAdjoint::exact);

} // namespace fc2t2
