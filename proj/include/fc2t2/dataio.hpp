#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fc2t2/ray.hpp"
#include "fc2t2/trainer.hpp"
#include "fc2t2/types.hpp"

namespace fc2t2 {

struct PointSampleSet {
    Points locations;  // M x 3
    Values values;     // M x C
    long size() const { return static_cast<long>(locations.rows()); }
};

enum class PointFormat { csv, binary };

// ".csv" selects CSV, anything else the binary layout.
PointFormat point_format_for(const std::string& path);

// CSV: header "x,y,z,v1,...,vC" then one row per point.
// Binary, little-endian: "FCPT", u32 version (1), u64 M, u32 C, then M rows
// of 3 + C f64 values.
// Throws ParseError with the line (CSV) on malformed input and InputError
// naming the first point outside (-1,1)^3 unless `check_domain` is off,
// for data that is normalized after loading.
PointSampleSet load_points(const std::string& path, PointFormat format, bool check_domain = true);
void save_points(const std::string& path, const PointSampleSet& set, PointFormat format);

// Affine map x -> (x - center) * scale into (-1,1)^3 with a margin.
struct Normalization {
    Vec3 center = Vec3::Zero();
    double scale = 1.0;
    Vec3 apply(const Vec3& x) const { return (x - center) * scale; }
};

// Fits the bounding box of the points into [-(1 - margin), 1 - margin]^3
// with a uniform scale.
Normalization fit_normalization(const Points& x, double margin = 0.05);

// Maps the locations; values are multiplied by the scale too when they are
// distances.
void normalize(PointSampleSet& set, const Normalization& n, bool values_are_distances);

struct CameraFrame {
    Camera camera;
    std::optional<std::string> image;
};

// JSON: either an array of frames or {"frames": [...]}; a frame holds eye,
// gaze, up (3 numbers each), fov_y, width, height and optionally image.
std::vector<CameraFrame> load_cameras(const std::string& path);
void save_cameras(const std::string& path, const std::vector<CameraFrame>& frames);

struct Image {
    int width = 0, height = 0;
    std::vector<double> rgb;  // row-major, 3 per pixel

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0) {}
    double& at(int row, int col, int c) { return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + c]; }
    double at(int row, int col, int c) const { return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + c]; }
};

// Row-major pixels (H*W rows of rgb) as an image.
Image image_from_rows(const Points& rgb, int width, int height);
Points image_rows(const Image& img);

// Binary PPM (P6), 8 bits per channel. Values are clamped to [0,1] and
// quantized as floor(255 v + 0.5).
std::uint8_t quantize(double v);
void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);

// Single-channel depth map, row-major from the top row. NaN marks a miss.
struct DepthMap {
    int width = 0, height = 0;
    std::vector<double> depth;
};

// Grayscale PFM ("Pf", little-endian scale -1, rows stored bottom-up as
// float32).
void save_depth(const std::string& path, const DepthMap& d);
DepthMap load_depth(const std::string& path);

// Near is white, far is black, misses take `miss`.
Image depth_image(const DepthMap& d, const Vec3& miss);

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    std::uint32_t version = kVersion;
    int levels = 4;
    int rho = 4;
    std::string kernel = "gaussian";
    double alpha = 200.0;
    Params params;
    std::optional<OptimizerState> optimizer;
    std::optional<Normalization> normalization;
};

// Little-endian: "FCCK", u32 version, u32 levels, u32 rho, u32 name length,
// name bytes, f64 alpha, u64 N, u32 C, f64 bias, N*3 f64 positions, N*C f64
// weights, u8 optimizer flag [i64 step, f64 mp, vp (N*3 each), mw, vw (N*C
// each), mb, vb], u8 normalization flag [3 f64 center, f64 scale].
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Analytic signed distance: a union of primitives (minimum of distances).
struct SdfPrimitive {
    enum class Kind { sphere, box, torus } kind = Kind::sphere;
    Vec3 center = Vec3::Zero();
    Vec3 size = Vec3::Constant(0.5);  // sphere: radius in x; box: half extents; torus: major, minor radius (z axis)
};

struct AnalyticSdf {
    std::vector<SdfPrimitive> parts;
    double operator()(const Vec3& x) const;

    // "sphere:cx,cy,cz:r", "box:cx,cy,cz:hx,hy,hz", "torus:cx,cy,cz:R,r",
    // joined by ';' for a union.
    static AnalyticSdf parse(const std::string& text);
};

// Ray length from the origin to the first zero of the SDF inside the
// domain, by sphere tracing. Rays starting inside the surface miss.
std::optional<double> trace_sdf(const AnalyticSdf& sdf, const Ray& ray);

// M samples: a `uniform_fraction` share uniform in the domain, the rest
// uniform within |d| < band by rejection. Each sample is drawn from one pool or the other by a single
// coin flip. Values are the distances.
PointSampleSet sample_sdf(const AnalyticSdf& sdf, long m, double band, double uniform_fraction, std::uint64_t seed);

// Radiance scene of Gaussian density blobs; colour at a point is the
// density-weighted mix of the blob colours.
struct BlobScene {
    struct Blob {
        Vec3 center;
        double radius;   // standard deviation
        double density;  // peak density
        Vec3 color;
    };
    std::vector<Blob> blobs;
    Vec3 background = Vec3::Ones();

    std::array<double, 4> operator()(const Vec3& x) const;
    static BlobScene three_blobs();
};

// n cameras on a horizontal circle of the given radius and height, looking
// at the origin, starting at angle `phase`.
std::vector<Camera> orbit_cameras(int n, double radius, double height, double fov_y, int width, int height_px,
                                  double phase = 0.0);

// Ground truth by midpoint quadrature with the exact exponential.
Image render_truth(const BlobScene& scene, const Camera& cam, int samples);

// Git blob hash ("blob <size>\0" + content, SHA-1) as lowercase hex.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

} // namespace fc2t2
