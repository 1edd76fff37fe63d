#include "fc2t2/dataio.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

#include "fc2t2/error.hpp"
#include "fc2t2/oracle.hpp"

namespace fc2t2 {

using nlohmann::json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    if (in.bad()) throw InputError("read failed for " + path);
    return os.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw InputError("write failed for " + path);
}

namespace {

// ------------------------------------------------------------ byte streams

template <class T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

class Writer {
public:
    template <class T>
    void put(T v) {
        v = to_little(v);
        const auto* b = reinterpret_cast<const char*>(&v);
        bytes_.append(b, sizeof(T));
    }
    void raw(const std::string& s) { bytes_ += s; }
    template <class M>
    void matrix(const M& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(m(i, j));
    }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return to_little(v);
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    template <class M>
    void matrix(M& m) {
        need(static_cast<std::size_t>(m.size()) * 8);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
    }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw ParseError(what_ + ": file is truncated");
    }
    const std::string& b_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

double parse_number(const std::string& s, long line) {
    std::size_t used = 0;
    double v;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ParseError("'" + s + "' is not a number", line);
    }
    if (used != s.size()) throw ParseError("'" + s + "' is not a number", line);
    return v;
}

void check_points(const Points& p) {
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        if (!in_domain(p.row(i).transpose()))
            throw InputError("point " + std::to_string(i) + " is not strictly inside (-1,1)^3");
}

PointSampleSet load_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) {
            header = split(trim(line), ',');
            break;
        }
    }
    if (header.empty()) throw ParseError("points file is empty", 1);
    if (header.size() < 4 || header[0] != "x" || header[1] != "y" || header[2] != "z")
        throw ParseError("header must be x,y,z followed by at least one value column", lineno);
    const int C = static_cast<int>(header.size()) - 3;
    std::vector<double> vals;
    long rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (static_cast<int>(cells.size()) != 3 + C)
            throw ParseError("expected " + std::to_string(3 + C) + " columns, found " + std::to_string(cells.size()), lineno);
        for (const auto& c : cells) vals.push_back(parse_number(c, lineno));
        ++rows;
    }
    PointSampleSet set{Points(rows, 3), Values(rows, C)};
    for (long r = 0; r < rows; ++r) {
        for (int a = 0; a < 3; ++a) set.locations(r, a) = vals[r * (3 + C) + a];
        for (int c = 0; c < C; ++c) set.values(r, c) = vals[r * (3 + C) + 3 + c];
    }
    return set;
}

PointSampleSet load_binary(const std::string& bytes) {
    Reader r(bytes, "points");
    if (bytes.empty()) throw ParseError("points file is empty");
    if (r.raw(4) != "FCPT") throw ParseError("points file: bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != 1) throw ParseError("points file: unsupported version " + std::to_string(version));
    const auto M = r.get<std::uint64_t>();
    const auto C = r.get<std::uint32_t>();
    if (C < 1) throw ParseError("points file: no value channels");
    if (r.remaining() != M * (3 + C) * 8) throw ParseError("points file: payload size does not match the header");
    PointSampleSet set{Points(M, 3), Values(M, C)};
    for (std::uint64_t m = 0; m < M; ++m) {
        for (int a = 0; a < 3; ++a) set.locations(m, a) = r.get<double>();
        for (std::uint32_t c = 0; c < C; ++c) set.values(m, c) = r.get<double>();
    }
    return set;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

Vec3 json_vec(const json& frame, const char* key) {
    if (!frame.contains(key)) throw InputError(std::string("camera frame is missing '") + key + "'");
    const json& v = frame.at(key);
    if (!v.is_array() || v.size() != 3) throw InputError(std::string("camera field '") + key + "' needs 3 numbers");
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
        if (!v[a].is_number()) throw InputError(std::string("camera field '") + key + "' needs 3 numbers");
        out[a] = v[a].get<double>();
    }
    return out;
}

template <class T>
T json_field(const json& frame, const char* key) {
    if (!frame.contains(key)) throw InputError(std::string("camera frame is missing '") + key + "'");
    try {
        return frame.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(std::string("camera field '") + key + "' has the wrong type");
    }
}

} // namespace

// ------------------------------------------------------------------ points

PointFormat point_format_for(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return ext == ".csv" ? PointFormat::csv : PointFormat::binary;
}

PointSampleSet load_points(const std::string& path, PointFormat format, bool check_domain) {
    const std::string bytes = read_file(path);
    PointSampleSet set = format == PointFormat::csv ? load_csv(bytes) : load_binary(bytes);
    if (check_domain) check_points(set.locations);
    return set;
}

void save_points(const std::string& path, const PointSampleSet& set, PointFormat format) {
    if (set.values.rows() != set.locations.rows()) throw ContractError("save_points: row counts differ");
    const int C = static_cast<int>(set.values.cols());
    if (format == PointFormat::csv) {
        std::ostringstream os;
        os << "x,y,z";
        for (int c = 1; c <= C; ++c) os << ",v" << c;
        os << '\n';
        for (long m = 0; m < set.size(); ++m) {
            for (int a = 0; a < 3; ++a) os << format_double(set.locations(m, a)) << ',';
            for (int c = 0; c < C; ++c) os << format_double(set.values(m, c)) << (c + 1 < C ? "," : "\n");
        }
        write_file(path, os.str());
        return;
    }
    Writer w;
    w.raw("FCPT");
    w.put<std::uint32_t>(1);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(set.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(C));
    for (long m = 0; m < set.size(); ++m) {
        for (int a = 0; a < 3; ++a) w.put<double>(set.locations(m, a));
        for (int c = 0; c < C; ++c) w.put<double>(set.values(m, c));
    }
    write_file(path, w.bytes());
}

Normalization fit_normalization(const Points& x, double margin) {
    if (x.rows() == 0) throw InputError("cannot normalize an empty point set");
    if (!(margin >= 0.0 && margin < 1.0)) throw ConfigError("normalization margin must be in [0,1)");
    const Vec3 lo = x.colwise().minCoeff().transpose(), hi = x.colwise().maxCoeff().transpose();
    Normalization n;
    n.center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo).maxCoeff();
    n.scale = half > 0.0 ? (1.0 - margin) / half : 1.0;
    return n;
}

void normalize(PointSampleSet& set, const Normalization& n, bool values_are_distances) {
    for (long m = 0; m < set.size(); ++m) set.locations.row(m) = n.apply(set.locations.row(m).transpose()).transpose();
    if (values_are_distances) set.values *= n.scale;
}

// ----------------------------------------------------------------- cameras

std::vector<CameraFrame> load_cameras(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    const json& list = doc.is_object() && doc.contains("frames") ? doc.at("frames") : doc;
    if (!list.is_array()) throw InputError(path + ": expected an array of camera frames");
    std::vector<CameraFrame> frames;
    for (const json& f : list) {
        if (!f.is_object()) throw InputError(path + ": camera frame is not an object");
        CameraFrame cf;
        cf.camera.eye = json_vec(f, "eye");
        cf.camera.gaze = json_vec(f, "gaze");
        cf.camera.up = json_vec(f, "up");
        cf.camera.fov_y = json_field<double>(f, "fov_y");
        cf.camera.width = json_field<int>(f, "width");
        cf.camera.height = json_field<int>(f, "height");
        if (f.contains("image") && !f.at("image").is_null()) cf.image = json_field<std::string>(f, "image");
        cf.camera.validate();
        frames.push_back(std::move(cf));
    }
    return frames;
}

void save_cameras(const std::string& path, const std::vector<CameraFrame>& frames) {
    json list = json::array();
    for (const CameraFrame& f : frames) {
        const Camera& c = f.camera;
        json j = {{"eye", {c.eye.x(), c.eye.y(), c.eye.z()}},
                  {"gaze", {c.gaze.x(), c.gaze.y(), c.gaze.z()}},
                  {"up", {c.up.x(), c.up.y(), c.up.z()}},
                  {"fov_y", c.fov_y},
                  {"width", c.width},
                  {"height", c.height}};
        if (f.image) j["image"] = *f.image;
        list.push_back(std::move(j));
    }
    write_file(path, json{{"frames", list}}.dump(2) + "\n");
}

// ------------------------------------------------------------------ images

Image image_from_rows(const Points& rgb, int width, int height) {
    if (rgb.rows() != static_cast<Eigen::Index>(width) * height) throw ContractError("image rows do not match the size");
    Image img(width, height);
    for (Eigen::Index m = 0; m < rgb.rows(); ++m)
        for (int c = 0; c < 3; ++c) img.rgb[m * 3 + c] = rgb(m, c);
    return img;
}

Points image_rows(const Image& img) {
    Points rows(static_cast<Eigen::Index>(img.width) * img.height, 3);
    for (Eigen::Index m = 0; m < rows.rows(); ++m)
        for (int c = 0; c < 3; ++c) rows(m, c) = img.rgb[m * 3 + c];
    return rows;
}

std::uint8_t quantize(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5));
}

void save_image(const std::string& path, const Image& img) {
    if (img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw ContractError("image buffer does not match its size");
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    const std::size_t head = out.size();
    out.resize(head + img.rgb.size());
    for (std::size_t i = 0; i < img.rgb.size(); ++i) out[head + i] = static_cast<char>(quantize(img.rgb[i]));
    write_file(path, out);
}

Image load_image(const std::string& path) {
    const std::string b = read_file(path);
    std::size_t pos = 0;
    auto token = [&]() {
        for (;;) {
            while (pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
            if (pos < b.size() && b[pos] == '#') {
                while (pos < b.size() && b[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t a = pos;
        while (pos < b.size() && !std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
        if (a == pos) throw ParseError(path + ": truncated image header");
        return b.substr(a, pos - a);
    };
    if (token() != "P6") throw ParseError(path + ": not a binary PPM (P6)");
    int w, h, maxv;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxv = std::stoi(token());
    } catch (const std::invalid_argument&) {
        throw ParseError(path + ": malformed image header");
    }
    if (w <= 0 || h <= 0 || maxv != 255) throw ParseError(path + ": only 8-bit images with positive size are supported");
    ++pos;  // single whitespace before the raster
    const std::size_t n = static_cast<std::size_t>(w) * h * 3;
    if (b.size() < pos + n) throw ParseError(path + ": truncated raster");
    Image img(w, h);
    for (std::size_t i = 0; i < n; ++i) img.rgb[i] = static_cast<unsigned char>(b[pos + i]) / 255.0;
    return img;
}

// -------------------------------------------------------------- depth maps

void save_depth(const std::string& path, const DepthMap& d) {
    if (d.width <= 0 || d.height <= 0 || d.depth.size() != static_cast<std::size_t>(d.width) * d.height)
        throw InputError(path + ": depth map size does not match its pixel count");
    Writer w;
    w.raw("Pf\n" + std::to_string(d.width) + " " + std::to_string(d.height) + "\n-1.0\n");
    for (int row = d.height - 1; row >= 0; --row)
        for (int col = 0; col < d.width; ++col)
            w.put<float>(static_cast<float>(d.depth[static_cast<std::size_t>(row) * d.width + col]));
    write_file(path, w.bytes());
}

DepthMap load_depth(const std::string& path) {
    const std::string b = read_file(path);
    std::istringstream head(b);
    std::string magic;
    DepthMap d;
    double scale = 0.0;
    if (!(head >> magic) || magic != "Pf") throw ParseError(path + ": not a grayscale PFM (Pf)");
    if (!(head >> d.width >> d.height >> scale) || d.width <= 0 || d.height <= 0)
        throw ParseError(path + ": malformed depth header");
    if (scale >= 0.0) throw ParseError(path + ": only little-endian PFM is supported");
    const std::size_t pos = static_cast<std::size_t>(head.tellg()) + 1;
    const std::size_t n = static_cast<std::size_t>(d.width) * d.height;
    if (b.size() != pos + 4 * n) throw ParseError(path + ": raster size does not match the header");
    d.depth.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, b.data() + pos + 4 * i, 4);
        const std::size_t row = d.height - 1 - i / d.width, col = i % d.width;
        d.depth[row * d.width + col] = to_little(v);
    }
    return d;
}

Image depth_image(const DepthMap& d, const Vec3& miss) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : d.depth)
        if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    Image img(d.width, d.height);
    for (int row = 0; row < d.height; ++row)
        for (int col = 0; col < d.width; ++col) {
            const double v = d.depth[static_cast<std::size_t>(row) * d.width + col];
            for (int c = 0; c < 3; ++c)
                img.at(row, col, c) = !std::isfinite(v) ? miss[c] : hi > lo ? (hi - v) / (hi - lo) : 1.0;
        }
    return img;
}

// ------------------------------------------------------------- checkpoints

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const SourceSet& s = ck.params.s;
    if (s.w.rows() != s.p.rows()) throw ContractError("checkpoint: weights and positions disagree in count");
    Writer w;
    w.raw("FCCK");
    w.put<std::uint32_t>(ck.version);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.levels));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.rho));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.kernel.size()));
    w.raw(ck.kernel);
    w.put<double>(ck.alpha);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(s.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.channels()));
    w.put<double>(ck.params.bias);
    w.matrix(s.p);
    w.matrix(s.w);
    w.put<std::uint8_t>(ck.optimizer ? 1 : 0);
    if (ck.optimizer) {
        const OptimizerState& o = *ck.optimizer;
        const bool filled = o.mp.rows() == s.p.rows();
        w.put<std::int64_t>(o.t);
        w.put<std::uint8_t>(filled ? 1 : 0);
        if (filled) {
            w.matrix(o.mp);
            w.matrix(o.vp);
            w.matrix(o.mw);
            w.matrix(o.vw);
        }
        w.put<double>(o.mb);
        w.put<double>(o.vb);
    }
    w.put<std::uint8_t>(ck.normalization ? 1 : 0);
    if (ck.normalization) {
        for (int a = 0; a < 3; ++a) w.put<double>(ck.normalization->center[a]);
        w.put<double>(ck.normalization->scale);
    }
    write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string bytes = read_file(path);
    Reader r(bytes, path);
    if (r.raw(4) != "FCCK") throw ParseError(path + ": not a checkpoint (bad magic)");
    Checkpoint ck;
    ck.version = r.get<std::uint32_t>();
    if (ck.version > Checkpoint::kVersion)
        throw ParseError(path + ": checkpoint version " + std::to_string(ck.version) + " is newer than supported (" +
                         std::to_string(Checkpoint::kVersion) + ")");
    if (ck.version == 0) throw ParseError(path + ": invalid checkpoint version 0");
    ck.levels = static_cast<int>(r.get<std::uint32_t>());
    ck.rho = static_cast<int>(r.get<std::uint32_t>());
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > 256) throw ParseError(path + ": implausible kernel name length");
    ck.kernel = r.raw(name_len);
    ck.alpha = r.get<double>();
    const auto N = r.get<std::uint64_t>();
    const auto C = r.get<std::uint32_t>();
    if (C < 1 || N > r.remaining() / 8) throw ParseError(path + ": implausible source counts");
    ck.params.bias = r.get<double>();
    ck.params.s.p.resize(static_cast<Eigen::Index>(N), 3);
    ck.params.s.w.resize(static_cast<Eigen::Index>(N), C);
    r.matrix(ck.params.s.p);
    r.matrix(ck.params.s.w);
    if (r.get<std::uint8_t>()) {
        OptimizerState o;
        o.t = r.get<std::int64_t>();
        if (r.get<std::uint8_t>()) {
            o.mp.resize(N, 3);
            o.vp.resize(N, 3);
            o.mw.resize(N, C);
            o.vw.resize(N, C);
            r.matrix(o.mp);
            r.matrix(o.vp);
            r.matrix(o.mw);
            r.matrix(o.vw);
        }
        o.mb = r.get<double>();
        o.vb = r.get<double>();
        ck.optimizer = std::move(o);
    }
    if (r.get<std::uint8_t>()) {
        Normalization n;
        for (int a = 0; a < 3; ++a) n.center[a] = r.get<double>();
        n.scale = r.get<double>();
        ck.normalization = n;
    }
    if (r.remaining() != 0) throw ParseError(path + ": trailing bytes after the checkpoint");
    return ck;
}

// -------------------------------------------------------------- analytic SDF

double AnalyticSdf::operator()(const Vec3& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (const SdfPrimitive& p : parts) {
        const Vec3 y = x - p.center;
        double v = 0.0;
        switch (p.kind) {
        case SdfPrimitive::Kind::sphere: v = y.norm() - p.size.x(); break;
        case SdfPrimitive::Kind::box: {
            const Vec3 q = y.cwiseAbs() - p.size;
            v = q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
            break;
        }
        case SdfPrimitive::Kind::torus: {
            const double ring = std::hypot(y.x(), y.y()) - p.size.x();
            v = std::hypot(ring, y.z()) - p.size.y();
            break;
        }
        }
        d = std::min(d, v);
    }
    return d;
}

AnalyticSdf AnalyticSdf::parse(const std::string& text) {
    AnalyticSdf sdf;
    for (const std::string& part : split(text, ';')) {
        if (part.empty()) continue;
        const auto f = split(part, ':');
        if (f.size() != 3) throw ConfigError("shape '" + part + "' needs kind:center:size");
        auto numbers = [&](const std::string& s) {
            std::vector<double> v;
            for (const auto& c : split(s, ',')) {
                try {
                    v.push_back(parse_number(c, 0));
                } catch (const ParseError&) {
                    throw ConfigError("shape '" + part + "' has a non-numeric field");
                }
            }
            return v;
        };
        const auto c = numbers(f[1]), z = numbers(f[2]);
        if (c.size() != 3) throw ConfigError("shape '" + part + "' needs a 3D center");
        SdfPrimitive p;
        p.center = Vec3(c[0], c[1], c[2]);
        if (f[0] == "sphere" && z.size() == 1 && z[0] > 0) {
            p.kind = SdfPrimitive::Kind::sphere;
            p.size = Vec3(z[0], 0, 0);
        } else if (f[0] == "box" && z.size() == 3 && z[0] > 0 && z[1] > 0 && z[2] > 0) {
            p.kind = SdfPrimitive::Kind::box;
            p.size = Vec3(z[0], z[1], z[2]);
        } else if (f[0] == "torus" && z.size() == 2 && z[0] > 0 && z[1] > 0) {
            p.kind = SdfPrimitive::Kind::torus;
            p.size = Vec3(z[0], z[1], 0);
        } else {
            throw ConfigError("shape '" + part + "': unknown kind or bad size");
        }
        sdf.parts.push_back(p);
    }
    if (sdf.parts.empty()) throw ConfigError("no shapes given");
    return sdf;
}

std::optional<double> trace_sdf(const AnalyticSdf& sdf, const Ray& ray) {
    double t, t_exit;
    if (!clip_to_domain(ray, t, t_exit)) return std::nullopt;
    if (sdf(ray.origin + t * ray.dir) <= 0.0) return std::nullopt;
    for (int i = 0; i < 100000 && t <= t_exit; ++i) {
        const double d = sdf(ray.origin + t * ray.dir);
        if (d < 1e-12) return t;
        t += d;
    }
    return std::nullopt;
}

PointSampleSet sample_sdf(const AnalyticSdf& sdf, long m, double band, double uniform_fraction, std::uint64_t seed) {
    if (m < 1) throw ConfigError("need at least one sample");
    if (!(band > 0.0)) throw ConfigError("sampling band must be positive");
    if (!(uniform_fraction >= 0.0 && uniform_fraction <= 1.0)) throw ConfigError("uniform fraction must be in [0,1]");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0), coin(0.0, 1.0);
    PointSampleSet set{Points(m, 3), Values(m, 1)};
    long tries = 0;
    for (long i = 0; i < m; ++i) {
        const bool free = coin(rng) < uniform_fraction;
        for (;;) {
            const Vec3 x(u(rng), u(rng), u(rng));
            if (!in_domain(x)) continue;
            const double d = sdf(x);
            if (!free && std::abs(d) >= band) {
                if (++tries > 1000 * m) throw ConfigError("sampling band never meets the surface inside the domain");
                continue;
            }
            set.locations.row(i) = x.transpose();
            set.values(i, 0) = d;
            break;
        }
    }
    return set;
}

// ------------------------------------------------------------ blob scenes

std::array<double, 4> BlobScene::operator()(const Vec3& x) const {
    double sigma = 0.0;
    Vec3 c = Vec3::Zero();
    for (const Blob& b : blobs) {
        const double s = b.density * std::exp(-0.5 * (x - b.center).squaredNorm() / (b.radius * b.radius));
        sigma += s;
        c += s * b.color;
    }
    if (sigma > 0.0) c /= sigma;
    return {sigma, c.x(), c.y(), c.z()};
}

BlobScene BlobScene::three_blobs() {
    BlobScene s;
    s.blobs = {{Vec3(-0.3, -0.1, 0.1), 0.15, 8.0, Vec3(0.9, 0.2, 0.1)},
               {Vec3(0.3, 0.0, -0.15), 0.15, 8.0, Vec3(0.1, 0.8, 0.2)},
               {Vec3(0.0, 0.3, 0.2), 0.12, 10.0, Vec3(0.2, 0.3, 0.9)}};
    s.background = Vec3::Ones();
    return s;
}

std::vector<Camera> orbit_cameras(int n, double radius, double height, double fov_y, int width, int height_px,
                                  double phase) {
    std::vector<Camera> cams;
    for (int i = 0; i < n; ++i) {
        const double a = phase + 2.0 * std::numbers::pi * i / n;
        Camera c;
        c.eye = Vec3(radius * std::sin(a), height, radius * std::cos(a));
        c.gaze = -c.eye;
        c.up = Vec3::UnitY();
        c.fov_y = fov_y;
        c.width = width;
        c.height = height_px;
        c.validate();
        cams.push_back(c);
    }
    return cams;
}

Image render_truth(const BlobScene& scene, const Camera& cam, int samples) {
    const auto rays = generate_rays(cam);
    Image img(cam.width, cam.height);
    const oracle::RadianceField f = [&](const Vec3& x) { return scene(x); };
    for (std::size_t m = 0; m < rays.size(); ++m) {
        double t0, t1;
        Vec3 rgb = scene.background;
        if (clip_to_domain(rays[m], t0, t1))
            rgb = oracle::quadrature_render(f, rays[m].origin, rays[m].dir, t0, t1, samples, scene.background).rgb;
        for (int c = 0; c < 3; ++c) img.rgb[m * 3 + c] = rgb[c];
    }
    return img;
}

// ------------------------------------------------------------------ hashing

std::string content_hash(const std::string& bytes) {
    const std::string blob = "blob " + std::to_string(bytes.size()) + '\0' + bytes;
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) throw InputError("SHA-1 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

std::string file_hash(const std::string& path) { return content_hash(read_file(path)); }

} // namespace fc2t2
