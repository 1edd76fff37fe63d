#include "run_config.hpp"

#include <cstdlib>
#include <set>
#include <type_traits>

#include "fc2t2/error.hpp"

namespace fc2t2::app {

namespace {

template <class E>
struct EnumNames;

template <>
struct EnumNames<OptimizerKind> {
    static constexpr std::pair<OptimizerKind, const char*> table[] = {{OptimizerKind::sgd, "sgd"},
                                                                      {OptimizerKind::adam, "adam"}};
};
template <>
struct EnumNames<LossKind> {
    static constexpr std::pair<LossKind, const char*> table[] = {{LossKind::mae, "mae"}, {LossKind::mse, "mse"}};
};
template <>
struct EnumNames<InitScheme> {
    static constexpr std::pair<InitScheme, const char*> table[] = {
        {InitScheme::uniform, "uniform"}, {InitScheme::normal, "normal"}, {InitScheme::zero, "zero"}};
};

template <class T>
constexpr bool is_enum_v = std::is_enum_v<T>;

template <class T>
json encode(const T& v) {
    if constexpr (is_enum_v<T>) {
        for (const auto& [e, name] : EnumNames<T>::table)
            if (e == v) return name;
        return nullptr;
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
        return v ? json(*v) : json(nullptr);
    } else if constexpr (std::is_same_v<T, std::vector<LrStep>>) {
        json a = json::array();
        for (const auto& s : v) a.push_back({s.epoch, s.lr});
        return a;
    } else {
        return v;
    }
}

template <class T>
void decode(const json& j, const std::string& key, T& v) {
    try {
        if constexpr (is_enum_v<T>) {
            const std::string name = j.get<std::string>();
            for (const auto& [e, n] : EnumNames<T>::table)
                if (name == n) {
                    v = e;
                    return;
                }
            throw ConfigError(key + ": unknown value '" + name + "'");
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            v = j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
        } else if constexpr (std::is_same_v<T, std::vector<LrStep>>) {
            v.clear();
            for (const auto& s : j) {
                if (!s.is_array() || s.size() != 2) throw ConfigError(key + ": each step is [epoch, lr]");
                v.push_back({s[0].get<int>(), s[1].get<double>()});
            }
        } else {
            v = j.get<T>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

// Every configurable field with its JSON pointer.
template <class Cfg, class F>
void for_each_field(Cfg& c, F&& f) {
    f("/command", c.command);
    f("/levels", c.levels);
    f("/rho", c.rho);
    f("/alpha", c.alpha);
    f("/lsq", c.lsq);
    f("/precision", c.precision);
    f("/threads", c.threads);
    f("/m2l", c.m2l);
    f("/sources", c.sources);
    f("/eval_every", c.eval_every);
    f("/points", c.points);
    f("/normalize", c.normalize);
    f("/sdf", c.sdf);
    f("/samples", c.samples);
    f("/holdout", c.holdout);
    f("/band", c.band);
    f("/uniform_fraction", c.uniform_fraction);
    f("/render_normals", c.render_normals);
    f("/bias", c.bias);
    f("/depth_target", c.depth_target);
    f("/scene", c.scene);
    f("/truth_samples", c.truth_samples);
    f("/path", c.path);
    f("/quadrature_samples", c.quadrature_samples);
    f("/exit_depth", c.exit_depth);
    f("/positive_density_init", c.positive_density_init);
    f("/checkpoint", c.checkpoint);
    f("/mode", c.mode);
    f("/density_threshold", c.density_threshold);
    f("/flip_l2l", c.flip_l2l);
    f("/bench_levels", c.bench_levels);
    f("/bench_sources", c.bench_sources);
    f("/bench_targets", c.bench_targets);
    f("/bench_camera", c.bench_camera);
    f("/width", c.width);
    f("/height", c.height);
    f("/background", c.background);
    f("/out", c.out);

    f("/train/optimizer", c.train.optimizer);
    f("/train/lr", c.train.lr);
    f("/train/lr_steps", c.train.lr_steps);
    f("/train/position_lr_scale", c.train.position_lr_scale);
    f("/train/bias_lr_scale", c.train.bias_lr_scale);
    f("/train/train_bias", c.train.train_bias);
    f("/train/epochs", c.train.epochs);
    f("/train/l1_weight", c.train.l1_weight);
    f("/train/init", c.train.init);
    f("/train/init_scale", c.train.init_scale);
    f("/train/seed", c.train.seed);
    f("/train/loss", c.train.loss);
    f("/train/miss_penalty", c.train.miss_penalty);
    f("/train/batch_rays", c.train.batch_rays);
    f("/train/beta1", c.train.beta1);
    f("/train/beta2", c.train.beta2);
    f("/train/adam_eps", c.train.adam_eps);

    f("/camera/file", c.camera.file);
    f("/camera/test_file", c.camera.test_file);
    f("/camera/views", c.camera.views);
    f("/camera/test_views", c.camera.test_views);
    f("/camera/radius", c.camera.radius);
    f("/camera/height", c.camera.height);
    f("/camera/fov_y", c.camera.fov_y);
    f("/camera/test_phase", c.camera.test_phase);
}

void check_known(const json& j, const std::string& prefix, const std::set<std::string>& known) {
    if (!j.is_object()) throw ConfigError((prefix.empty() ? std::string("config") : prefix) + " must be an object");
    for (const auto& [key, value] : j.items()) {
        const std::string ptr = prefix + "/" + key;
        if (known.count(ptr)) continue;
        if (ptr == "/train" || ptr == "/camera") {
            check_known(value, ptr, known);
            continue;
        }
        throw ConfigError("unknown config key '" + ptr.substr(1) + "'");
    }
}

} // namespace

EngineConfig RunConfig::engine() const {
    EngineConfig e;
    e.levels = levels;
    e.rho = rho;
    e.alpha = effective_alpha();
    e.lsq = lsq;
    e.threads = threads;
    e.dense_m2l = m2l == "dense";
    return e;
}

void RunConfig::validate() const {
    if (levels < 2 || levels > 8) throw ConfigError("levels must be in [2,8]");
    if (rho < 1 || rho > 4) throw ConfigError("rho must be in [1,4]");
    if (alpha && !(*alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (m2l != "auto" && m2l != "dense") throw ConfigError("m2l must be auto or dense");
    if (sources < 1) throw ConfigError("sources must be at least 1");
    if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
    if (samples < 1 || holdout < 1) throw ConfigError("samples and holdout must be at least 1");
    if (width < 1 || height < 1) throw ConfigError("render resolution must be positive");
    if (camera.views < 1 || camera.test_views < 0) throw ConfigError("camera views must be positive");
    if (depth_target != "sdf" && depth_target != "cameras" && depth_target != "self")
        throw ConfigError("depth_target must be sdf, cameras or self");
    if (path != "analytic" && path != "quadrature") throw ConfigError("path must be analytic or quadrature");
    if (quadrature_samples < 1 || truth_samples < 1) throw ConfigError("sample counts must be positive");
    if (mode != "auto" && mode != "radiance" && mode != "depth" && mode != "normals" && mode != "rgbd")
        throw ConfigError("mode must be auto, radiance, depth, normals or rgbd");
    if (!(density_threshold > 0.0)) throw ConfigError("density_threshold must be positive");
    if (scene != "three_blobs") throw ConfigError("scene must be three_blobs");
    for (int l : bench_levels)
        if (l < 2 || l > 8) throw ConfigError("bench_levels entries must be in [2,8]");
    for (long n : bench_sources)
        if (n < 0) throw ConfigError("bench_sources entries must be non-negative");
    for (long n : bench_targets)
        if (n < 0) throw ConfigError("bench_targets entries must be non-negative");
    if (bench_camera < 1) throw ConfigError("bench_camera must be positive");
    train.validate(true);
}

RunConfig defaults_for(const std::string& command) {
    RunConfig c;
    c.command = command;
    if (command == "fit-sdf") {
        c.alpha = 100.0;
        c.train.lr = 1e-2;
        c.train.position_lr_scale = 1.0;
        c.train.epochs = 200;
        c.train.loss = LossKind::mae;
    } else if (command == "fit-depth") {
        c.sources = 3000;
        c.bias = 0.05;
        c.train.lr = 2e-2;
        c.train.position_lr_scale = 0.1;
        c.train.epochs = 150;
        c.train.loss = LossKind::mae;
        c.camera.views = 4;
        c.camera.test_views = 1;
        c.width = c.height = 48;
    } else if (command == "fit-radiance") {
        c.sources = 3000;
        c.alpha = 50.0;
        c.train.lr = 2e-2;
        c.train.position_lr_scale = 0.1;
        c.train.epochs = 10;
        c.train.batch_rays = 4096;
        c.train.init_scale = 0.05;
        c.train.loss = LossKind::mse;
    } else if (command == "bench") {
        c.m2l = "dense";
    }
    return c;
}

void apply_json(RunConfig& cfg, const json& j) {
    std::set<std::string> known;
    for_each_field(cfg, [&](const char* ptr, auto&) { known.insert(ptr); });
    check_known(j, "", known);
    for_each_field(cfg, [&](const char* ptr, auto& v) {
        const json::json_pointer p(ptr);
        if (j.contains(p)) decode(j.at(p), std::string(ptr).substr(1), v);
    });
}

json to_json(const RunConfig& cfg) {
    json j = json::object();
    for_each_field(cfg, [&](const char* ptr, const auto& v) { j[json::json_pointer(ptr)] = encode(v); });
    return j;
}

int resolve_threads(std::optional<int> flag, std::optional<int> from_file) {
    if (flag) return *flag;
    if (from_file) return *from_file;
    if (const char* env = std::getenv("FC2T2_THREADS"); env && *env) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (*end != '\0' || n < 1) throw ConfigError("FC2T2_THREADS must be a positive integer");
        return static_cast<int>(n);
    }
    return 1;
}

} // namespace fc2t2::app
