#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fc2t2/layers.hpp"

namespace fc2t2 {

enum class OptimizerKind { sgd, adam };
enum class LossKind { mae, mse };
enum class InitScheme { uniform, normal, zero };

struct LrStep {
    int epoch = 0;  // first epoch the rate applies to
    double lr = 0.0;
};

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-2;
    std::vector<LrStep> lr_steps;  // piecewise-constant overrides, ascending epochs
    double position_lr_scale = 1.0;  // position updates use lr * this
    double bias_lr_scale = 1.0;
    bool train_bias = false;
    int epochs = 100;
    double l1_weight = 0.0;
    InitScheme init = InitScheme::uniform;
    double init_scale = 1e-2;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::mae;
    int precision = 64;
    double miss_penalty = 1.0;  // depth fitting only
    long batch_rays = 0;        // 0 = full batch
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    // Throws ConfigError on a non-positive rate, zero epochs or an unknown
    // precision. Zero epochs are allowed when `allow_zero_epochs` is set.
    void validate(bool allow_zero_epochs = false) const;
    double lr_at(int epoch) const;
};

struct Params {
    SourceSet s;
    double bias = 0.0;
};

// Positions uniform in (-1,1)^3 (strictly inside); weights uniform in
// [-scale, scale], normal with deviation scale, or zero. Bit-identical for a
// given seed.
Params init_params(long n, int channels, InitScheme scheme, double scale, std::uint64_t seed, double bias = 0.0);

struct LossValue {
    double loss = 0.0;
    Values y_bar;     // derivative of loss with respect to each prediction
    long valid = 0;   // rows that entered the mean
    bool empty = false;
};

// Mean absolute or squared error over the rows flagged in `valid` (all rows
// when null), averaged over rows times channels. The MAE derivative at a
// zero residual is 0. An empty valid set gives zero loss with `empty` set.
LossValue data_loss(const Values& pred, const Values& target, LossKind kind,
                    const std::vector<std::uint8_t>* valid = nullptr);

// Adds lambda * sum |w| to the objective and lambda * sign(w) to w_bar.
double add_l1(const SourceSet& s, double lambda, LayerGradients& g);

struct Objective {
    double loss = 0.0;       // data term plus penalties
    double data = 0.0;       // data term alone
    double l1 = 0.0;
    long valid = 0;
    long excluded = 0;       // outputs left out of the data term (misses)
    bool empty = false;
    LayerGradients grad;
};

// Explicit layer: predictions at sample points against target values.
template <class Scalar>
Objective explicit_objective(const Engine<Scalar>& e, const Params& x, const Points& q, const Values& target,
                             const TrainConfig& cfg);

// Depth layer. Rays hit in both prediction and target enter the data term.
// Rays the target hits but the prediction misses add
// miss_penalty * max(0, field + bias) at the target point, pulling a
// surface toward it. Rays the prediction hits but the target misses are
// fit to the depth where the ray leaves the domain.
template <class Scalar>
Objective depth_objective(const Engine<Scalar>& e, const Params& x, const std::vector<Ray>& rays,
                          const std::vector<double>& target, const std::vector<std::uint8_t>& target_hit,
                          const TrainConfig& cfg);

// Volumetric layer on a ray batch against target colours (rows x 3).
template <class Scalar>
Objective radiance_objective(const Engine<Scalar>& e, const Params& x, const std::vector<Ray>& rays,
                             const Points& target, const RenderOptions& opt, const TrainConfig& cfg);

// Midpoint-rule rendering of the expanded field with the exact exponential,
// sample for sample the reference renderer's arithmetic.
template <class Scalar>
Points render_quadrature(const Accessor<Scalar>& field, const std::vector<Ray>& rays, int samples,
                         const Vec3& background);

// The volumetric objective on that quadrature path, with its own adjoint.
// Densities are clipped the same way as on the polynomial path.
template <class Scalar>
Objective radiance_quadrature_objective(const Engine<Scalar>& e, const Params& x, const std::vector<Ray>& rays,
                                        const Points& target, const RenderOptions& opt, int samples,
                                        const TrainConfig& cfg);

struct OptimizerState {
    long t = 0;
    Points mp, vp;
    Values mw, vw;
    double mb = 0.0, vb = 0.0;
};

// One update. Positions are clipped back into (-1 + 1e-6, 1 - 1e-6).
// Throws NumericError naming the first non-finite gradient entry.
void step(const TrainConfig& cfg, int epoch, Params& x, const LayerGradients& g, OptimizerState& state);

struct EpochLog {
    int epoch = 0;
    double loss = 0.0, data = 0.0, l1 = 0.0, lr = 0.0;
    long valid = 0, excluded = 0;
};

// Runs cfg.epochs rounds of objective(x, epoch) followed by step(). The
// callback sees each epoch's objective before the update.
std::vector<EpochLog> train(const TrainConfig& cfg, Params& x, const std::function<Objective(const Params&, int)>& objective,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

} // namespace fc2t2
