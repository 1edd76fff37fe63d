#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "commands.hpp"
#include "fc2t2/error.hpp"

using namespace fc2t2;
using namespace fc2t2::app;

namespace {

struct Flags {
    std::optional<std::string> config;
    std::optional<int> levels, rho, precision, threads, epochs, views, width, height, eval_every;
    std::optional<double> alpha, lr, bias;
    std::optional<std::string> lsq, out, points, sdf, checkpoint, cameras, test_cameras, mode, path, m2l, depth_target;
    std::optional<std::uint64_t> seed;
    std::optional<long> sources, samples, batch;
    std::optional<std::vector<int>> bench_levels;
    std::optional<std::vector<long>> bench_sources, bench_targets;
    bool normalize = false, render_normals = false, flip_l2l = false;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--levels", f.levels, "finest grid level");
    sub->add_option("--rho", f.rho, "expansion order");
    sub->add_option("--alpha", f.alpha, "Gaussian kernel sharpness");
    sub->add_option("--lsq", f.lsq, "least-squares M2L tables")->check(CLI::IsMember({"on", "off"}));
    sub->add_option("--seed", f.seed, "random seed");
    sub->add_option("--threads", f.threads, "worker threads (fallback: FC2T2_THREADS)");
    sub->add_option("--precision", f.precision, "grid scalar width")->check(CLI::IsMember({32, 64}));
    sub->add_option("--out", f.out, "output directory");
}

void add_training(CLI::App* sub, Flags& f) {
    sub->add_option("--epochs", f.epochs, "training epochs");
    sub->add_option("--lr", f.lr, "learning rate");
    sub->add_option("--sources", f.sources, "number of source points");
    sub->add_option("--eval-every", f.eval_every, "epochs between held-out evaluations");
}

void apply_flags(RunConfig& c, const Flags& f) {
    if (f.levels) c.levels = *f.levels;
    if (f.rho) c.rho = *f.rho;
    if (f.alpha) c.alpha = *f.alpha;
    if (f.lsq) c.lsq = *f.lsq == "on";
    if (f.seed) c.train.seed = *f.seed;
    if (f.precision) c.precision = *f.precision;
    if (f.out) c.out = *f.out;
    if (f.epochs) c.train.epochs = *f.epochs;
    if (f.lr) c.train.lr = *f.lr;
    if (f.sources) c.sources = *f.sources;
    if (f.eval_every) c.eval_every = *f.eval_every;
    if (f.bias) c.bias = *f.bias;
    if (f.points) c.points = *f.points;
    if (f.sdf) c.sdf = *f.sdf;
    if (f.samples) c.samples = *f.samples;
    if (f.normalize) c.normalize = true;
    if (f.render_normals) c.render_normals = true;
    if (f.checkpoint) c.checkpoint = *f.checkpoint;
    if (f.cameras) c.camera.file = *f.cameras;
    if (f.test_cameras) c.camera.test_file = *f.test_cameras;
    if (f.views) c.camera.views = *f.views;
    if (f.width) c.width = *f.width;
    if (f.height) c.height = *f.height;
    if (f.mode) c.mode = *f.mode;
    if (f.path) c.path = *f.path;
    if (f.batch) c.train.batch_rays = *f.batch;
    if (f.depth_target) c.depth_target = *f.depth_target;
    if (f.m2l) c.m2l = *f.m2l;
    if (f.flip_l2l) c.flip_l2l = true;
    if (f.bench_levels) c.bench_levels = *f.bench_levels;
    if (f.bench_sources) c.bench_sources = *f.bench_sources;
    if (f.bench_targets) c.bench_targets = *f.bench_targets;
}

RunConfig build_config(const std::string& command, const Flags& f) {
    RunConfig c = defaults_for(command);
    std::optional<int> file_threads;
    if (f.config) {
        json j;
        try {
            std::ifstream in(*f.config);
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(*f.config + ": " + e.what());
        }
        if (j.contains("command") && j["command"] != command) {
            const std::string other = j["command"].is_string() ? j["command"].get<std::string>() : j["command"].dump();
            throw ConfigError(*f.config + " is a configuration for '" + other + "', not '" + command + "'");
        }
        apply_json(c, j);
        if (j.contains("threads")) file_threads = c.threads;
    }
    apply_flags(c, f);
    c.command = command;
    c.threads = resolve_threads(f.threads, file_threads);
    c.validate();
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilevel Taylor-expansion fast summation for 3D continuous convolution"};
    app.require_subcommand(1);
    Flags f;

    auto* fit_sdf = app.add_subcommand("fit-sdf", "fit a signed distance field with the explicit layer");
    add_common(fit_sdf, f);
    add_training(fit_sdf, f);
    fit_sdf->add_option("--points", f.points, "points file (.csv or binary)");
    fit_sdf->add_option("--sdf", f.sdf, "analytic SDF, e.g. sphere:0,0,0:0.5");
    fit_sdf->add_option("--samples", f.samples, "training samples drawn from the analytic SDF");
    fit_sdf->add_flag("--normalize", f.normalize, "fit the points into the domain first");
    fit_sdf->add_flag("--render-normals", f.render_normals, "write a normal-shaded image");

    auto* fit_depth = app.add_subcommand("fit-depth", "fit a surface to depth maps with the depth layer");
    add_common(fit_depth, f);
    add_training(fit_depth, f);
    fit_depth->add_option("--bias", f.bias, "initial level-set bias");
    fit_depth->add_option("--target", f.depth_target, "sdf, cameras or self")
        ->check(CLI::IsMember({"sdf", "cameras", "self"}));
    fit_depth->add_option("--sdf", f.sdf, "analytic SDF for synthetic targets");
    fit_depth->add_option("--cameras", f.cameras, "cameras JSON with depth images");
    fit_depth->add_option("--test-cameras", f.test_cameras, "held-out cameras JSON");
    fit_depth->add_option("--views", f.views, "orbit views");
    fit_depth->add_option("--width", f.width, "image width");
    fit_depth->add_option("--height", f.height, "image height");

    auto* fit_radiance = app.add_subcommand("fit-radiance", "fit a radiance field to posed images");
    add_common(fit_radiance, f);
    add_training(fit_radiance, f);
    fit_radiance->add_option("--batch", f.batch, "rays per iteration (0 = all)");
    fit_radiance->add_option("--path", f.path, "analytic or quadrature")->check(CLI::IsMember({"analytic", "quadrature"}));
    fit_radiance->add_option("--cameras", f.cameras, "cameras JSON with images");
    fit_radiance->add_option("--test-cameras", f.test_cameras, "held-out cameras JSON");
    fit_radiance->add_option("--views", f.views, "orbit views of the synthetic scene");
    fit_radiance->add_option("--width", f.width, "image width");
    fit_radiance->add_option("--height", f.height, "image height");

    auto* render = app.add_subcommand("render", "render a checkpoint");
    add_common(render, f);
    render->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
    render->add_option("--mode", f.mode, "auto, radiance, depth, normals or rgbd")
        ->check(CLI::IsMember({"auto", "radiance", "depth", "normals", "rgbd"}));
    render->add_option("--path", f.path, "analytic or quadrature")->check(CLI::IsMember({"analytic", "quadrature"}));
    render->add_option("--cameras", f.cameras, "cameras JSON");
    render->add_option("--views", f.views, "orbit views when no cameras file is given");
    render->add_option("--width", f.width, "image width");
    render->add_option("--height", f.height, "image height");

    auto* verify = app.add_subcommand("verify", "run the self-check suite");
    add_common(verify, f);
    verify->add_flag("--flip-l2l", f.flip_l2l, "negate the L2L translation (mutation check)");

    auto* bench = app.add_subcommand("bench", "time and count the expansion, queries and renders");
    add_common(bench, f);
    bench->add_option("--bench-levels", f.bench_levels, "levels to measure");
    bench->add_option("--bench-sources", f.bench_sources, "source counts");
    bench->add_option("--bench-targets", f.bench_targets, "target counts");
    bench->add_option("--m2l", f.m2l, "dense or auto")->check(CLI::IsMember({"dense", "auto"}));

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const RunConfig cfg = build_config(command, f);
        return run_command(cfg, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitBadInput;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitBadInput;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitBadInput;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
