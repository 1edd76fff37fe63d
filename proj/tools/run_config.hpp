#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fc2t2/engine.hpp"
#include "fc2t2/trainer.hpp"

namespace fc2t2::app {

using nlohmann::json;

struct CameraSpec {
    std::string file;       // cameras JSON; empty = orbit
    std::string test_file;  // held-out cameras JSON
    int views = 8;
    int test_views = 2;
    double radius = 3.0;
    double height = 0.8;
    double fov_y = 0.75;
    double test_phase = 0.4;
};

struct RunConfig {
    std::string command;

    int levels = 4;
    int rho = 4;
    std::optional<double> alpha;  // default_alpha(levels) when unset
    bool lsq = true;
    int precision = 64;
    int threads = 1;
    std::string m2l = "auto";  // "auto" or "dense"

    TrainConfig train;
    long sources = 10000;
    int eval_every = 10;

    // explicit layer
    std::string points;
    bool normalize = false;
    std::string sdf = "sphere:0,0,0:0.5";
    long samples = 100000;
    long holdout = 10000;
    double band = 0.1;
    double uniform_fraction = 0.2;
    bool render_normals = false;

    // root layers
    double bias = 0.0;
    std::string depth_target = "sdf";  // "sdf", "cameras" or "self"

    // volumetric layer
    std::string scene = "three_blobs";
    int truth_samples = 512;
    std::string path = "analytic";  // or "quadrature"
    int quadrature_samples = 64;
    double exit_depth = 4.5;
    bool positive_density_init = true;

    // render
    std::string checkpoint;
    std::string mode = "auto";  // radiance, depth, normals, rgbd
    double density_threshold = 1.0;  // rgbd depth: first point where density reaches this

    // verify
    bool flip_l2l = false;

    // bench
    std::vector<int> bench_levels{4, 5, 6};
    std::vector<long> bench_sources{0, 10000, 100000};
    std::vector<long> bench_targets{0, 100000};
    int bench_camera = 64;

    CameraSpec camera;
    int width = 64, height = 64;
    std::array<double, 3> background{1.0, 1.0, 1.0};
    std::string out = "out";

    double effective_alpha() const { return alpha ? *alpha : default_alpha(levels); }
    EngineConfig engine() const;

    // Throws ConfigError naming the first bad field.
    void validate() const;
};

// Defaults that differ between commands, before any file or flag.
RunConfig defaults_for(const std::string& command);

// Overlays the keys present in `j`; unknown keys are errors.
void apply_json(RunConfig& cfg, const json& j);

json to_json(const RunConfig& cfg);

// Flag value, then config file, then FC2T2_THREADS, then 1.
int resolve_threads(std::optional<int> flag, std::optional<int> from_file);

} // namespace fc2t2::app
