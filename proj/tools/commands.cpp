#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "fc2t2/dataio.hpp"
#include "fc2t2/error.hpp"
#include "fc2t2/layers.hpp"
#include "fc2t2/trainer.hpp"
#include "fc2t2/verify.hpp"

namespace fc2t2::app {

namespace fs = std::filesystem;

namespace {

using steady = std::chrono::steady_clock;

double seconds_since(steady::time_point t0) { return std::chrono::duration<double>(steady::now() - t0).count(); }

// Round-trippable and locale independent, so metrics files compare byte for byte.
std::string num(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

std::string indexed(const std::string& stem, int i, const std::string& ext) {
    char b[16];
    std::snprintf(b, sizeof b, "_%02d", i);
    return stem + b + ext;
}

// One run's output directory. Inputs are hashed when registered; every file
// handed out by file() is hashed into the manifest at finish().
class RunDir {
public:
    explicit RunDir(const RunConfig& cfg) : cfg_(cfg), root_(cfg.out), start_(steady::now()) {
        fs::create_directories(root_);
    }

    std::string file(const std::string& name) {
        outputs_.insert(name);
        return (root_ / name).string();
    }
    void input(const std::string& path) { inputs_[path] = file_hash(path); }
    void time(const std::string& stage, double s) { timing_[stage] = s; }

    void finish(const json& summary) {
        write_file(file("summary.json"), summary.dump(2) + "\n");
        write_file(file("config.json"), to_json(cfg_).dump(2) + "\n");
        json outputs = json::object();
        for (const auto& name : outputs_) outputs[name] = file_hash((root_ / name).string());
        const json manifest = {{"command", cfg_.command}, {"config", to_json(cfg_)}, {"inputs", inputs_}, {"outputs", outputs}};
        timing_["total"] = seconds_since(start_);
        write_file((root_ / "timing.json").string(), timing_.dump(2) + "\n");
        write_file((root_ / "manifest.json").string(), manifest.dump(2) + "\n");
    }

private:
    const RunConfig& cfg_;
    fs::path root_;
    steady::time_point start_;
    std::map<std::string, std::string> inputs_;
    std::set<std::string> outputs_;
    json timing_ = json::object();
};

Vec3 background_of(const RunConfig& cfg) { return Vec3(cfg.background[0], cfg.background[1], cfg.background[2]); }

std::vector<Camera> orbit(const RunConfig& cfg, int n, double phase) {
    return orbit_cameras(n, cfg.camera.radius, cfg.camera.height, cfg.camera.fov_y, cfg.width, cfg.height, phase);
}

std::string resolve_beside(const std::string& anchor, const std::string& rel) {
    fs::path p(rel);
    if (p.is_relative()) p = fs::path(anchor).parent_path() / p;
    return p.string();
}

Points stack_rows(const Points& a, const Points& b) {
    Points out(a.rows() + b.rows(), 3);
    out << a, b;
    return out;
}

double mean_abs(const Values& a, const Values& b) { return (a - b).cwiseAbs().mean(); }
double mean_sq(const Points& a, const Points& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

double positive_fraction(const Params& x) {
    long n = 0;
    for (Eigen::Index i = 0; i < x.s.w.rows(); ++i) n += x.s.w(i, 0) > 0.0;
    return static_cast<double>(n) / static_cast<double>(x.s.w.rows());
}

Checkpoint checkpoint_of(const RunConfig& cfg, const Params& x) {
    Checkpoint ck;
    ck.levels = cfg.levels;
    ck.rho = cfg.rho;
    ck.alpha = cfg.effective_alpha();
    ck.params = x;
    return ck;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig tc = cfg.train;
    tc.precision = cfg.precision;
    return tc;
}

DepthMap depth_map(const RootResult& r, int width, int height) {
    DepthMap d{width, height, std::vector<double>(r.hit.size())};
    for (std::size_t m = 0; m < r.hit.size(); ++m)
        d.depth[m] = r.hit[m] ? r.length[m] : std::numeric_limits<double>::quiet_NaN();
    return d;
}

// Unit normal mapped to [0,1]^3 per pixel; misses show the background.
Image shade_normals(const RootResult& r, int width, int height, const Vec3& bg) {
    Image img(width, height);
    for (std::size_t m = 0; m < r.hit.size(); ++m) {
        Vec3 c = bg;
        const Vec3 g = r.grad.row(m).transpose();
        if (r.hit[m] && g.norm() > 0.0) c = 0.5 * (g.normalized() + Vec3::Ones());
        for (int k = 0; k < 3; ++k) img.rgb[m * 3 + k] = c[k];
    }
    return img;
}

void save_depth_pair(RunDir& run, const std::string& stem, const DepthMap& d, const Vec3& bg) {
    save_depth(run.file(stem + ".pfm"), d);
    save_image(run.file(stem + ".ppm"), depth_image(d, bg));
}

// ------------------------------------------------------------------ fit-sdf

template <class S>
int fit_sdf(const RunConfig& cfg, std::ostream& out) {
    RunDir run(cfg);
    const TrainConfig tc = train_config(cfg);
    PointSampleSet train_set, held;
    std::optional<Normalization> norm;
    if (!cfg.points.empty()) {
        run.input(cfg.points);
        PointSampleSet all = load_points(cfg.points, point_format_for(cfg.points), !cfg.normalize);
        if (cfg.normalize) {
            norm = fit_normalization(all.locations);
            normalize(all, *norm, true);
        }
        const long m = all.size();
        if (m < 2) throw InputError(cfg.points + ": at least two points are needed to hold some out");
        const long h = std::clamp(std::min(cfg.holdout, m / 5), 1L, m - 1);
        std::vector<long> order(m);
        std::iota(order.begin(), order.end(), 0L);
        std::mt19937_64 rng(tc.seed + 11);
        std::shuffle(order.begin(), order.end(), rng);
        auto take = [&](long from, long to) {
            PointSampleSet s{Points(to - from, 3), Values(to - from, all.values.cols())};
            for (long i = from; i < to; ++i) {
                s.locations.row(i - from) = all.locations.row(order[i]);
                s.values.row(i - from) = all.values.row(order[i]);
            }
            return s;
        };
        held = take(0, h);
        train_set = take(h, m);
    } else {
        const AnalyticSdf sdf = AnalyticSdf::parse(cfg.sdf);
        train_set = sample_sdf(sdf, cfg.samples, cfg.band, cfg.uniform_fraction, tc.seed + 1);
        held = sample_sdf(sdf, cfg.holdout, cfg.band, cfg.uniform_fraction, tc.seed + 2);
    }
    const int channels = static_cast<int>(train_set.values.cols());
    if (cfg.render_normals && channels != 1) throw ConfigError("normal rendering needs single-channel values");

    Engine<S> e(cfg.engine());
    Params x = init_params(cfg.sources, channels, tc.init, tc.init_scale, tc.seed, cfg.bias);
    auto mae_on = [&](const PointSampleSet& set, const Params& p) {
        return mean_abs(explicit_forward(e, set.locations, p.s).y, set.values);
    };

    std::ofstream metrics(run.file("metrics.csv"));
    metrics << "epoch,loss,data,l1,lr,holdout_mae\n";
    std::map<int, double> held_at;
    const auto t0 = steady::now();
    train(
        tc, x,
        [&](const Params& p, int epoch) {
            if (epoch % cfg.eval_every == 0) held_at[epoch] = mae_on(held, p);
            return explicit_objective(e, p, train_set.locations, train_set.values, tc);
        },
        [&](const EpochLog& l) {
            const auto h = held_at.find(l.epoch);
            metrics << l.epoch << ',' << num(l.loss) << ',' << num(l.data) << ',' << num(l.l1) << ',' << num(l.lr) << ','
                    << (h == held_at.end() ? "" : num(h->second)) << '\n';
            if (h != held_at.end())
                out << "epoch " << l.epoch << "  loss " << l.loss << "  holdout mae " << h->second << std::endl;
        });
    metrics.close();
    run.time("train", seconds_since(t0));

    const double train_mae = mae_on(train_set, x), held_mae = mae_on(held, x);
    Checkpoint ck = checkpoint_of(cfg, x);
    ck.normalization = norm;
    save_checkpoint(run.file("model.fcck"), ck);
    if (cfg.render_normals) {
        const Camera cam = orbit(cfg, 1, 0.0)[0];
        const auto f = depth_forward(e, generate_rays(cam), x.s, x.bias);
        save_image(run.file("normals.ppm"), shade_normals(f.roots, cam.width, cam.height, background_of(cfg)));
    }
    out << "final mae  train " << train_mae << "  holdout " << held_mae << std::endl;
    run.finish({{"epochs", tc.epochs},
                {"sources", cfg.sources},
                {"samples", train_set.size()},
                {"holdout", held.size()},
                {"final_train_mae", train_mae},
                {"final_holdout_mae", held_mae}});
    return kExitOk;
}

// ---------------------------------------------------------------- fit-depth

struct DepthView {
    Camera cam;
    std::vector<Ray> rays;
    DepthMap target;
};

struct DepthScore {
    double mae = 0.0;  // over pixels both hit
    long both = 0, target_only = 0, predicted_only = 0;
};

DepthScore score_depth(const RootResult& r, const std::vector<double>& target, const std::vector<std::uint8_t>& hit) {
    DepthScore s;
    double sum = 0.0;
    for (std::size_t m = 0; m < hit.size(); ++m) {
        if (hit[m] && r.hit[m]) {
            sum += std::abs(r.length[m] - target[m]);
            ++s.both;
        } else if (hit[m]) {
            ++s.target_only;
        } else if (r.hit[m]) {
            ++s.predicted_only;
        }
    }
    s.mae = s.both ? sum / static_cast<double>(s.both) : 0.0;
    return s;
}

json score_json(const DepthScore& s) {
    return {{"mae", s.mae}, {"both_hit", s.both}, {"target_only", s.target_only}, {"predicted_only", s.predicted_only}};
}

void flatten(const std::vector<DepthView>& views, std::vector<Ray>& rays, std::vector<double>& target,
             std::vector<std::uint8_t>& hit) {
    for (const auto& v : views) {
        rays.insert(rays.end(), v.rays.begin(), v.rays.end());
        for (double d : v.target.depth) {
            hit.push_back(std::isfinite(d));
            target.push_back(std::isfinite(d) ? d : 0.0);
        }
    }
}

template <class S>
int fit_depth(const RunConfig& cfg, std::ostream& out) {
    RunDir run(cfg);
    const TrainConfig tc = train_config(cfg);
    const Vec3 bg = background_of(cfg);
    Engine<S> e(cfg.engine());
    Params x = init_params(cfg.sources, 1, tc.init, tc.init_scale, tc.seed, cfg.bias);

    std::vector<DepthView> train_views, test_views;
    if (cfg.depth_target == "cameras") {
        if (cfg.camera.file.empty()) throw ConfigError("depth_target cameras needs camera.file");
        auto load = [&](const std::string& path, std::vector<DepthView>& views) {
            run.input(path);
            for (const auto& f : load_cameras(path)) {
                if (!f.image) throw InputError(path + ": every frame needs a depth image");
                const std::string img = resolve_beside(path, *f.image);
                run.input(img);
                DepthMap d = load_depth(img);
                if (d.width != f.camera.width || d.height != f.camera.height)
                    throw InputError(img + ": size does not match its camera");
                views.push_back({f.camera, generate_rays(f.camera), std::move(d)});
            }
        };
        load(cfg.camera.file, train_views);
        if (!cfg.camera.test_file.empty()) load(cfg.camera.test_file, test_views);
    } else {
        std::optional<AnalyticSdf> sdf;
        if (cfg.depth_target == "sdf") sdf = AnalyticSdf::parse(cfg.sdf);
        auto make = [&](const std::vector<Camera>& cams, std::vector<DepthView>& views, const std::string& stem) {
            for (std::size_t i = 0; i < cams.size(); ++i) {
                DepthView v{cams[i], generate_rays(cams[i]), {}};
                if (sdf) {
                    v.target = {cams[i].width, cams[i].height, {}};
                    for (const Ray& r : v.rays)
                        v.target.depth.push_back(trace_sdf(*sdf, r).value_or(std::numeric_limits<double>::quiet_NaN()));
                } else {
                    v.target = depth_map(depth_forward(e, v.rays, x.s, x.bias).roots, cams[i].width, cams[i].height);
                }
                save_depth_pair(run, indexed(stem, static_cast<int>(i), ""), v.target, bg);
                views.push_back(std::move(v));
            }
        };
        make(orbit(cfg, cfg.camera.views, 0.0), train_views, "target");
        make(orbit(cfg, cfg.camera.test_views, cfg.camera.test_phase), test_views, "test_target");
    }

    std::vector<Ray> rays, test_rays;
    std::vector<double> target, test_target;
    std::vector<std::uint8_t> hit, test_hit;
    flatten(train_views, rays, target, hit);
    flatten(test_views, test_rays, test_target, test_hit);

    const auto init = depth_forward(e, rays, x.s, x.bias);
    long entering = 0;
    for (const Ray& r : rays) {
        double t0, t1;
        entering += clip_to_domain(r, t0, t1);
    }
    if (entering > 0 && init.roots.dead == entering)
        throw ConfigError("every training ray starts inside the surface at initialization; raise the bias or shrink "
                          "train.init_scale");
    out << "init: " << init.roots.hits() << " of " << rays.size() << " rays hit, " << init.roots.dead << " dead"
        << std::endl;

    std::ofstream metrics(run.file("metrics.csv"));
    metrics << "epoch,loss,data,lr,valid,excluded,bias,heldout_mae\n";
    std::map<int, double> held_at;
    std::map<int, double> bias_at;
    const auto t0 = steady::now();
    train(
        tc, x,
        [&](const Params& p, int epoch) {
            bias_at[epoch] = p.bias;
            if (!test_rays.empty() && epoch % cfg.eval_every == 0)
                held_at[epoch] = score_depth(depth_forward(e, test_rays, p.s, p.bias).roots, test_target, test_hit).mae;
            return depth_objective(e, p, rays, target, hit, tc);
        },
        [&](const EpochLog& l) {
            const auto h = held_at.find(l.epoch);
            metrics << l.epoch << ',' << num(l.loss) << ',' << num(l.data) << ',' << num(l.lr) << ',' << l.valid << ','
                    << l.excluded << ',' << num(bias_at[l.epoch]) << ',' << (h == held_at.end() ? "" : num(h->second))
                    << '\n';
            if (l.epoch % cfg.eval_every == 0)
                out << "epoch " << l.epoch << "  loss " << l.loss << "  misses " << l.excluded << std::endl;
        });
    metrics.close();
    run.time("train", seconds_since(t0));

    auto finish_views = [&](const std::vector<DepthView>& views, const std::vector<Ray>& all, const std::vector<double>& t,
                            const std::vector<std::uint8_t>& h, const std::string& stem) {
        const auto f = depth_forward(e, all, x.s, x.bias);
        std::size_t offset = 0;
        for (std::size_t i = 0; i < views.size(); ++i) {
            const Camera& c = views[i].cam;
            DepthMap d{c.width, c.height, {}};
            for (std::size_t k = 0; k < views[i].rays.size(); ++k) {
                const std::size_t m = offset + k;
                d.depth.push_back(f.roots.hit[m] ? f.roots.length[m] : std::numeric_limits<double>::quiet_NaN());
            }
            offset += views[i].rays.size();
            save_depth_pair(run, indexed(stem, static_cast<int>(i), ""), d, bg);
        }
        return score_depth(f.roots, t, h);
    };
    const DepthScore train_score = finish_views(train_views, rays, target, hit, "pred");
    const DepthScore test_score =
        test_rays.empty() ? DepthScore{} : finish_views(test_views, test_rays, test_target, test_hit, "test_pred");
    save_checkpoint(run.file("model.fcck"), checkpoint_of(cfg, x));
    out << "final depth mae  train " << train_score.mae << "  heldout " << test_score.mae << std::endl;
    run.finish({{"epochs", tc.epochs},
                {"rays", rays.size()},
                {"bias", x.bias},
                {"train", score_json(train_score)},
                {"heldout", score_json(test_score)}});
    return kExitOk;
}

// ------------------------------------------------------------- fit-radiance

struct RaySet {
    std::vector<Camera> cams;
    std::vector<Ray> rays;
    Points target = Points(0, 3);
};

// Cameras whose frames name an image each; images are read back from disk,
// so targets carry the 8-bit quantization.
RaySet load_posed_images(const std::string& path, RunDir* run) {
    RaySet set;
    if (run) run->input(path);
    for (const auto& f : load_cameras(path)) {
        if (!f.image) throw InputError(path + ": every frame needs an image");
        const std::string img_path = resolve_beside(path, *f.image);
        if (run) run->input(img_path);
        const Image img = load_image(img_path);
        if (img.width != f.camera.width || img.height != f.camera.height)
            throw InputError(img_path + ": size does not match its camera");
        const auto r = generate_rays(f.camera);
        set.cams.push_back(f.camera);
        set.rays.insert(set.rays.end(), r.begin(), r.end());
        set.target = stack_rows(set.target, image_rows(img));
    }
    return set;
}

template <class S>
Points render_path(const RunConfig& cfg, const Engine<S>& e, const SourceSet& s, const std::vector<Ray>& rays,
                   const RenderOptions& opt) {
    if (cfg.path == "analytic") return volumetric_forward(e, rays, s, opt).render.rgb;
    return render_quadrature(e.expand(s.p, clip_density(s.w)), rays, cfg.quadrature_samples, opt.background);
}

void save_views(RunDir& run, const std::vector<Camera>& cams, const Points& rgb, const std::string& stem) {
    long offset = 0;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const long n = static_cast<long>(cams[i].width) * cams[i].height;
        save_image(run.file(indexed(stem, static_cast<int>(i), ".ppm")),
                   image_from_rows(rgb.middleRows(offset, n), cams[i].width, cams[i].height));
        offset += n;
    }
}

template <class S>
int fit_radiance(const RunConfig& cfg, std::ostream& out) {
    RunDir run(cfg);
    const TrainConfig tc = train_config(cfg);
    const Vec3 bg = background_of(cfg);
    const RenderOptions opt{bg, cfg.exit_depth};

    RaySet train_set, test_set;
    if (cfg.camera.file.empty()) {
        BlobScene scene = BlobScene::three_blobs();
        scene.background = bg;
        auto write = [&](const std::vector<Camera>& cams, const std::string& stem, const std::string& index) {
            std::vector<CameraFrame> frames;
            for (std::size_t i = 0; i < cams.size(); ++i) {
                const std::string name = indexed(stem, static_cast<int>(i), ".ppm");
                save_image(run.file(name), render_truth(scene, cams[i], cfg.truth_samples));
                frames.push_back({cams[i], name});
            }
            const std::string path = run.file(index);
            save_cameras(path, frames);
            return path;
        };
        const auto t0 = steady::now();
        train_set = load_posed_images(write(orbit(cfg, cfg.camera.views, 0.0), "train", "cameras.json"), nullptr);
        if (cfg.camera.test_views > 0)
            test_set = load_posed_images(
                write(orbit(cfg, cfg.camera.test_views, cfg.camera.test_phase), "test", "test_cameras.json"), nullptr);
        run.time("ground_truth", seconds_since(t0));
    } else {
        train_set = load_posed_images(cfg.camera.file, &run);
        if (!cfg.camera.test_file.empty()) test_set = load_posed_images(cfg.camera.test_file, &run);
    }

    Engine<S> e(cfg.engine());
    Params x = init_params(cfg.sources, 4, tc.init, tc.init_scale, tc.seed, 0.0);
    if (cfg.positive_density_init) x.s.w.col(0) = x.s.w.col(0).cwiseAbs();

    // One pass visits every training ray once in shuffled batches.
    const long R = static_cast<long>(train_set.rays.size());
    const long B = tc.batch_rays > 0 ? std::min(tc.batch_rays, R) : R;
    const int per_pass = static_cast<int>((R + B - 1) / B);
    TrainConfig inner = tc;
    inner.epochs = tc.epochs * per_pass;
    for (auto& s : inner.lr_steps) s.epoch *= per_pass;

    std::vector<long> order(R);
    std::iota(order.begin(), order.end(), 0L);
    std::mt19937_64 rng(tc.seed + 7);
    auto heldout_mse = [&](const Params& p) { return mean_sq(render_path(cfg, e, p.s, test_set.rays, opt), test_set.target); };

    std::ofstream metrics(run.file("metrics.csv"));
    metrics << "iteration,pass,loss,data,l1,lr,heldout_mse,positive_fraction\n";
    std::map<int, std::pair<double, double>> held_at;
    const auto t0 = steady::now();
    train(
        inner, x,
        [&](const Params& p, int it) {
            const int pass = it / per_pass, k = it % per_pass;
            if (k == 0) {
                std::shuffle(order.begin(), order.end(), rng);
                if (!test_set.rays.empty() && pass % cfg.eval_every == 0)
                    held_at[it] = {heldout_mse(p), positive_fraction(p)};
            }
            const long from = k * B, n = std::min(R, from + B) - from;
            std::vector<Ray> rays(n);
            Points target(n, 3);
            for (long i = 0; i < n; ++i) {
                rays[i] = train_set.rays[order[from + i]];
                target.row(i) = train_set.target.row(order[from + i]);
            }
            if (cfg.path == "analytic") return radiance_objective(e, p, rays, target, opt, inner);
            return radiance_quadrature_objective(e, p, rays, target, opt, cfg.quadrature_samples, inner);
        },
        [&](const EpochLog& l) {
            const auto h = held_at.find(l.epoch);
            metrics << l.epoch << ',' << l.epoch / per_pass << ',' << num(l.loss) << ',' << num(l.data) << ','
                    << num(l.l1) << ',' << num(l.lr) << ',';
            if (h != held_at.end()) metrics << num(h->second.first) << ',' << num(h->second.second);
            else metrics << ',';
            metrics << '\n';
            if (h != held_at.end())
                out << "iteration " << l.epoch << "  batch mse " << l.data << "  heldout mse " << h->second.first
                    << std::endl;
        });
    metrics.close();
    run.time("train", seconds_since(t0));

    const auto t1 = steady::now();
    const Points train_rgb = render_path(cfg, e, x.s, train_set.rays, opt);
    const double train_mse = mean_sq(train_rgb, train_set.target);
    save_views(run, train_set.cams, train_rgb, "pred_train");
    json summary = {{"iterations", inner.epochs},
                    {"passes", tc.epochs},
                    {"batch_rays", B},
                    {"path", cfg.path},
                    {"final_train_mse", train_mse},
                    {"positive_fraction", positive_fraction(x)}};
    const std::vector<Ray>& probe = test_set.rays.empty() ? train_set.rays : test_set.rays;
    const auto probe_render = volumetric_forward(e, probe, x.s, opt).render;
    summary["mean_transmittance"] =
        std::accumulate(probe_render.t_inf.begin(), probe_render.t_inf.end(), 0.0) / static_cast<double>(probe.size());
    if (!test_set.rays.empty()) {
        const Points test_rgb = render_path(cfg, e, x.s, test_set.rays, opt);
        summary["heldout_mse"] = mean_sq(test_rgb, test_set.target);
        save_views(run, test_set.cams, test_rgb, "pred_test");
    }
    run.time("render", seconds_since(t1));
    save_checkpoint(run.file("model.fcck"), checkpoint_of(cfg, x));
    out << "final  train mse " << train_mse;
    if (summary.contains("heldout_mse")) out << "  heldout mse " << summary["heldout_mse"].get<double>();
    out << "  positive density " << summary["positive_fraction"].get<double>() << std::endl;
    run.finish(summary);
    return kExitOk;
}

// ------------------------------------------------------------------- render

template <class S>
int render(const RunConfig& cfg, std::ostream& out) {
    RunDir run(cfg);
    if (cfg.checkpoint.empty()) throw ConfigError("render needs a checkpoint");
    run.input(cfg.checkpoint);
    const Checkpoint ck = load_checkpoint(cfg.checkpoint);
    EngineConfig ec = cfg.engine();
    ec.levels = ck.levels;
    ec.rho = ck.rho;
    ec.alpha = ck.alpha;
    ec.family = ck.kernel;
    Engine<S> e(ec);
    const SourceSet& s = ck.params.s;
    const int C = s.channels();
    const std::string mode = cfg.mode != "auto" ? cfg.mode : C == 4 ? "radiance" : "normals";
    const bool colour = mode == "radiance" || mode == "rgbd";
    if (colour && C != 4)
        throw ConfigError("channel mismatch: " + mode + " rendering needs a 4-channel checkpoint, this one has " +
                          std::to_string(C));
    if (!colour && C != 1)
        throw ConfigError("channel mismatch: " + mode + " rendering needs a 1-channel checkpoint, this one has " +
                          std::to_string(C));

    std::vector<CameraFrame> frames;
    if (!cfg.camera.file.empty()) {
        run.input(cfg.camera.file);
        frames = load_cameras(cfg.camera.file);
    } else {
        for (const auto& c : orbit(cfg, cfg.camera.views, 0.0)) frames.push_back({c, std::nullopt});
    }

    const Vec3 bg = background_of(cfg);
    const RenderOptions opt{bg, cfg.exit_depth};
    const auto t0 = steady::now();
    Accessor<S> field, density;
    if (colour) {
        const Values clipped = clip_density(s.w);
        field = e.expand(s.p, clipped);
        if (mode == "rgbd") density = e.expand(s.p, Values(-clipped.col(0)));
    } else {
        field = e.expand(s);
    }

    std::ofstream metrics(run.file("metrics.csv"));
    metrics << "view,mse\n";
    double sq = 0.0;
    long compared = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Camera& cam = frames[i].camera;
        const auto rays = generate_rays(cam);
        const int v = static_cast<int>(i);
        if (colour) {
            const Points rgb = cfg.path == "analytic" ? render_rays(field, rays, opt, e.threads()).rgb
                                                      : render_quadrature(field, rays, cfg.quadrature_samples, bg);
            save_image(run.file(indexed("rgb", v, ".ppm")), image_from_rows(rgb, cam.width, cam.height));
            if (frames[i].image && !cfg.camera.file.empty()) {
                const std::string img_path = resolve_beside(cfg.camera.file, *frames[i].image);
                run.input(img_path);
                const Points target = image_rows(load_image(img_path));
                if (target.rows() != rgb.rows()) throw InputError(img_path + ": size does not match its camera");
                const double mse = mean_sq(rgb, target);
                metrics << v << ',' << num(mse) << '\n';
                sq += mse * static_cast<double>(rgb.size());
                compared += rgb.size();
            }
        }
        if (mode == "rgbd") {
            const auto roots = find_roots(density, rays, cfg.density_threshold, RootOptions{}, e.threads());
            save_depth_pair(run, indexed("depth", v, ""), depth_map(roots, cam.width, cam.height), bg);
        } else if (!colour) {
            const auto roots = find_roots(field, rays, ck.params.bias, RootOptions{}, e.threads());
            if (mode == "depth") save_depth_pair(run, indexed("depth", v, ""), depth_map(roots, cam.width, cam.height), bg);
            else save_image(run.file(indexed("normals", v, ".ppm")), shade_normals(roots, cam.width, cam.height, bg));
        }
        out << "view " << v << " rendered" << std::endl;
    }
    metrics.close();
    run.time("render", seconds_since(t0));
    json summary = {{"mode", mode}, {"views", frames.size()}, {"channels", C}};
    if (compared > 0) {
        summary["mse"] = sq / static_cast<double>(compared);
        out << "mse " << summary["mse"].get<double>() << std::endl;
    }
    run.finish(summary);
    return kExitOk;
}

// -------------------------------------------------------------------- bench

template <class S>
int bench(const RunConfig& cfg, std::ostream& out) {
    RunDir run(cfg);
    std::ofstream csv(run.file("bench.csv"));
    csv << "level,sources,targets,expand_s,query_s,render_s,p2m_flops,m2m_flops,m2l_flops,l2l_flops,l2p_flops,"
           "render_flops,expand_flops,m2l_share\n";
    json checks = json::array();
    bool ok = true;
    auto check = [&](const std::string& name, bool pass) {
        checks.push_back({{"name", name}, {"pass", pass}});
        if (!pass) {
            ok = false;
            out << "FAIL " << name << std::endl;
        }
    };
    std::uniform_real_distribution<double> coord(-0.999, 0.999), weight(-1.0, 1.0);
    auto random_points = [&](long n, std::mt19937_64& rng) {
        Points p(n, 3);
        for (long i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a) p(i, a) = coord(rng);
        return p;
    };

    for (int level : cfg.bench_levels) {
        EngineConfig ec = cfg.engine();
        ec.levels = level;
        ec.alpha = cfg.alpha ? *cfg.alpha : default_alpha(level);
        Engine<S> e(ec);
        const long long per_source = p2m_flops_per_source(cfg.rho), per_target = l2p_flops_per_target(cfg.rho);
        Camera cam = orbit(cfg, 1, 0.0)[0];
        cam.width = cam.height = cfg.bench_camera;
        const auto rays = generate_rays(cam);
        long segments = 0;
        for (const Ray& r : rays) segments += static_cast<long>(traverse(r, level).size());

        for (long n : cfg.bench_sources) {
            std::mt19937_64 rng(cfg.train.seed * 1000003 + static_cast<std::uint64_t>(level) * 7919 + n);
            const Points p = random_points(n, rng);
            Values w(n, 1);
            for (long i = 0; i < n; ++i) w(i, 0) = weight(rng);

            e.flops().reset();
            auto t0 = steady::now();
            const Accessor<S> field = e.expand(p, w);
            const double expand_s = seconds_since(t0);
            const FlopCounter fl = e.flops();
            const long long expand_flops = fl.p2m + fl.m2m + fl.m2l + fl.l2l;
            const double share = expand_flops > 0 ? static_cast<double>(fl.m2l) / static_cast<double>(expand_flops) : 0.0;

            FlopTally tally;
            const Vec3 probe(0.1, 0.2, 0.3);
            line2poly(e.table(), field.coeffs(0, 0), probe, probe, &tally);
            t0 = steady::now();
            find_roots(field, rays, 0.0, RootOptions{}, e.threads());
            const double render_s = seconds_since(t0);
            const long long render_flops = static_cast<long long>(segments) * tally.total();

            const std::string tag = "level " + std::to_string(level) + " N " + std::to_string(n);
            check(tag + ": p2m flops = " + std::to_string(per_source) + " N", fl.p2m == per_source * n);
            check(tag + ": m2l >= 50% of expansion flops", share >= 0.5);
            check(tag + ": expansion cost > 0", expand_flops > 0);

            for (long m : cfg.bench_targets) {
                const Points q = random_points(m, rng);
                e.flops().reset();
                t0 = steady::now();
                field.values(q);
                const double query_s = seconds_since(t0);
                const long long l2p = e.flops().l2p;
                check(tag + " M " + std::to_string(m) + ": l2p flops = " + std::to_string(per_target) + " M",
                      l2p == per_target * m);
                csv << level << ',' << n << ',' << m << ',' << num(expand_s) << ',' << num(query_s) << ','
                    << num(render_s) << ',' << fl.p2m << ',' << fl.m2m << ',' << fl.m2l << ',' << fl.l2l << ',' << l2p
                    << ',' << render_flops << ',' << expand_flops << ',' << num(share) << '\n';
                out << "level " << level << "  N " << n << "  M " << m << "  expand " << expand_s << " s  query "
                    << query_s << " s  render " << render_s << " s  m2l share " << share << std::endl;
            }
        }
    }
    csv.close();
    run.finish({{"checks", checks}, {"pass", ok}});
    return ok ? kExitOk : kExitCheckFailed;
}

} // namespace

int cmd_fit_sdf(const RunConfig& cfg, std::ostream& out) {
    return cfg.precision == 32 ? fit_sdf<float>(cfg, out) : fit_sdf<double>(cfg, out);
}

int cmd_fit_depth(const RunConfig& cfg, std::ostream& out) {
    return cfg.precision == 32 ? fit_depth<float>(cfg, out) : fit_depth<double>(cfg, out);
}

int cmd_fit_radiance(const RunConfig& cfg, std::ostream& out) {
    return cfg.precision == 32 ? fit_radiance<float>(cfg, out) : fit_radiance<double>(cfg, out);
}

int cmd_render(const RunConfig& cfg, std::ostream& out) {
    return cfg.precision == 32 ? render<float>(cfg, out) : render<double>(cfg, out);
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
    return cfg.precision == 32 ? bench<float>(cfg, out) : bench<double>(cfg, out);
}

int cmd_verify(const RunConfig& cfg, std::ostream& out) {
    RunDir run(cfg);
    verify::Options opt;
    opt.seed = cfg.train.seed;
    opt.threads = cfg.threads;
    opt.flip_l2l_sign = cfg.flip_l2l;
    const auto t0 = steady::now();
    const auto reports = verify::run_all(opt);
    run.time("verify", seconds_since(t0));
    std::ofstream tsv(run.file("report.tsv"));
    long failed = 0;
    for (const auto& r : reports) {
        out << r.line() << '\n';
        tsv << r.line() << '\n';
        failed += !r.pass;
    }
    out.flush();
    tsv.close();
    run.finish({{"checks", reports.size()}, {"failed", failed}});
    return failed == 0 ? kExitOk : kExitCheckFailed;
}

int run_command(const RunConfig& cfg, std::ostream& out) {
    if (cfg.command == "fit-sdf") return cmd_fit_sdf(cfg, out);
    if (cfg.command == "fit-depth") return cmd_fit_depth(cfg, out);
    if (cfg.command == "fit-radiance") return cmd_fit_radiance(cfg, out);
    if (cfg.command == "render") return cmd_render(cfg, out);
    if (cfg.command == "verify") return cmd_verify(cfg, out);
    if (cfg.command == "bench") return cmd_bench(cfg, out);
    throw ConfigError("unknown command '" + cfg.command + "'");
}

} // namespace fc2t2::app
