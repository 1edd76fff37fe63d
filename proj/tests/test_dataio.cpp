#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "fc2t2/dataio.hpp"
#include "fc2t2/error.hpp"

using namespace fc2t2;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fc2t2_dataio_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

template <class T>
void put(std::string& b, T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    b.append(raw, sizeof(T));
}

PointSampleSet sample_set() {
    PointSampleSet s;
    s.locations.resize(3, 3);
    s.locations << 0.1, -0.2, 0.3, -0.9, 0.5, 0.25, 0.0, 0.0, 0.999;
    s.values.resize(3, 2);
    s.values << 1.5, -2.0, 0.125, 1e-9, -3.0, 7.0 / 3.0;
    return s;
}

} // namespace

TEST_CASE("points round trip through both formats") {
    TempDir tmp;
    const PointSampleSet s = sample_set();
    for (const char* name : {"pts.csv", "pts.bin"}) {
        const std::string path = tmp.file(name);
        save_points(path, s, point_format_for(path));
        const PointSampleSet r = load_points(path, point_format_for(path));
        CHECK(r.locations == s.locations);
        CHECK(r.values == s.values);
    }
    CHECK(point_format_for("a.CSV") == PointFormat::csv);
    CHECK(point_format_for("a.fcpt") == PointFormat::binary);
}

TEST_CASE("binary points follow the documented byte layout") {
    TempDir tmp;
    std::string b = "FCPT";
    put<std::uint32_t>(b, 1);
    put<std::uint64_t>(b, 2);
    put<std::uint32_t>(b, 1);
    for (double v : {0.5, -0.25, 0.0, 3.0, -0.5, 0.75, 0.125, -1.0}) put<double>(b, v);
    write_file(tmp.file("fixture.bin"), b);
    const PointSampleSet r = load_points(tmp.file("fixture.bin"), PointFormat::binary);
    REQUIRE(r.size() == 2);
    CHECK(r.values.cols() == 1);
    CHECK(r.locations(0, 1) == -0.25);
    CHECK(r.values(0, 0) == 3.0);
    CHECK(r.locations(1, 2) == 0.125);
    CHECK(r.values(1, 0) == -1.0);

    PointSampleSet s;
    s.locations = r.locations;
    s.values = r.values;
    save_points(tmp.file("again.bin"), s, PointFormat::binary);
    CHECK(read_file(tmp.file("again.bin")) == b);

    write_file(tmp.file("short.bin"), b.substr(0, b.size() - 3));
    CHECK_THROWS_AS(load_points(tmp.file("short.bin"), PointFormat::binary), ParseError);
    std::string v2 = b;
    v2[4] = 2;
    write_file(tmp.file("v2.bin"), v2);
    CHECK_THROWS_AS(load_points(tmp.file("v2.bin"), PointFormat::binary), ParseError);
}

TEST_CASE("malformed point files are rejected") {
    TempDir tmp;
    write_file(tmp.file("empty.csv"), "");
    CHECK_THROWS_AS(load_points(tmp.file("empty.csv"), PointFormat::csv), ParseError);
    write_file(tmp.file("bad.csv"), "x,y,z,v\n0.1,0.2,0.3,1\n0.1,zz,0.3,1\n");
    try {
        load_points(tmp.file("bad.csv"), PointFormat::csv);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
    write_file(tmp.file("cols.csv"), "x,y,z,v\n0.1,0.2,0.3\n");
    CHECK_THROWS_AS(load_points(tmp.file("cols.csv"), PointFormat::csv), ParseError);
    write_file(tmp.file("outside.csv"), "x,y,z,v\n0.1,0.2,1.0,1\n");
    CHECK_THROWS_AS(load_points(tmp.file("outside.csv"), PointFormat::csv), InputError);
    CHECK_THROWS_AS(load_points(tmp.file("missing.csv"), PointFormat::csv), InputError);
}

TEST_CASE("normalization fits the box with a margin") {
    Points x(3, 3);
    x << 10, 20, 30, 14, 21, 31, 12, 22, 35;
    const Normalization n = fit_normalization(x, 0.05);
    double lo = 1, hi = -1;
    for (long i = 0; i < 3; ++i) {
        const Vec3 y = n.apply(x.row(i).transpose());
        lo = std::min(lo, y.minCoeff());
        hi = std::max(hi, y.maxCoeff());
    }
    CHECK(std::max(-lo, hi) == doctest::Approx(0.95));

    PointSampleSet s;
    s.locations = x;
    s.values = Values::Constant(3, 1, 2.0);
    normalize(s, n, true);
    CHECK(s.values(0, 0) == doctest::Approx(2.0 * n.scale));
    CHECK(s.locations.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("camera files") {
    TempDir tmp;
    write_file(tmp.file("cams.json"), R"({"frames": [
        {"eye": [0, 0, 3], "gaze": [0, 0, -1], "up": [0, 1, 0], "fov_y": 0.8, "width": 4, "height": 3, "image": "a.ppm"},
        {"eye": [3, 0, 0], "gaze": [-1, 0, 0], "up": [0, 1, 0], "fov_y": 0.5, "width": 2, "height": 2}
    ]})");
    const auto frames = load_cameras(tmp.file("cams.json"));
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].camera.width == 4);
    CHECK(frames[0].camera.height == 3);
    CHECK(frames[0].image == std::optional<std::string>("a.ppm"));
    CHECK(!frames[1].image);
    CHECK(frames[1].camera.eye.x() == 3.0);

    save_cameras(tmp.file("out.json"), frames);
    const auto again = load_cameras(tmp.file("out.json"));
    REQUIRE(again.size() == 2);
    CHECK(again[1].camera.fov_y == frames[1].camera.fov_y);
    CHECK(again[0].image == frames[0].image);

    write_file(tmp.file("nogaze.json"), R"([{"eye": [0, 0, 3], "up": [0, 1, 0], "fov_y": 0.8, "width": 4, "height": 3}])");
    try {
        load_cameras(tmp.file("nogaze.json"));
        FAIL("expected an input error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("gaze") != std::string::npos);
    }
    write_file(tmp.file("broken.json"), "[{");
    CHECK_THROWS_AS(load_cameras(tmp.file("broken.json")), ParseError);
}

TEST_CASE("images quantize and round trip") {
    TempDir tmp;
    CHECK(quantize(0.5) == 128);
    CHECK(quantize(-1.0) == 0);
    CHECK(quantize(2.0) == 255);
    CHECK(quantize(1.0 / 255.0) == 1);

    Image grey(3, 2);
    for (double& v : grey.rgb) v = 0.5;
    save_image(tmp.file("grey.ppm"), grey);
    const std::string bytes = read_file(tmp.file("grey.ppm"));
    const std::string header = "P6\n3 2\n255\n";
    REQUIRE(bytes.size() == header.size() + 18);
    CHECK(bytes.substr(0, header.size()) == header);
    for (std::size_t i = header.size(); i < bytes.size(); ++i) CHECK(static_cast<unsigned char>(bytes[i]) == 128);

    std::string fixture = "P6\n# comment\n2 2\n255\n";
    for (int v : {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30}) fixture.push_back(static_cast<char>(v));
    write_file(tmp.file("fixture.ppm"), fixture);
    const Image img = load_image(tmp.file("fixture.ppm"));
    CHECK(img.width == 2);
    CHECK(img.at(0, 0, 0) == 1.0);
    CHECK(img.at(0, 1, 1) == 1.0);
    CHECK(img.at(1, 0, 2) == 1.0);
    CHECK(img.at(1, 1, 2) == doctest::Approx(30.0 / 255.0));

    Image ramp(5, 4);
    for (std::size_t i = 0; i < ramp.rgb.size(); ++i) ramp.rgb[i] = static_cast<double>(i) / ramp.rgb.size();
    save_image(tmp.file("ramp.ppm"), ramp);
    const Image back = load_image(tmp.file("ramp.ppm"));
    for (std::size_t i = 0; i < ramp.rgb.size(); ++i) CHECK(std::abs(back.rgb[i] - ramp.rgb[i]) <= 0.5 / 255.0 + 1e-12);

    const Points rows = image_rows(ramp);
    const Image same = image_from_rows(rows, 5, 4);
    CHECK(same.rgb == ramp.rgb);

    write_file(tmp.file("p3.ppm"), "P3\n1 1\n255\n0 0 0\n");
    CHECK_THROWS_AS(load_image(tmp.file("p3.ppm")), ParseError);
    write_file(tmp.file("cut.ppm"), fixture.substr(0, fixture.size() - 2));
    CHECK_THROWS_AS(load_image(tmp.file("cut.ppm")), ParseError);
}

TEST_CASE("checkpoints round trip bit for bit") {
    TempDir tmp;
    Checkpoint ck;
    ck.levels = 5;
    ck.alpha = 123.5;
    ck.params = init_params(17, 3, InitScheme::normal, 0.7, 99, -0.125);
    OptimizerState st;
    st.t = 42;
    st.mp = st.vp = ck.params.s.p * 0.5;
    st.mw = st.vw = ck.params.s.w * 0.25;
    st.mb = 0.1;
    st.vb = 0.2;
    ck.optimizer = st;
    ck.normalization = Normalization{Vec3(1, 2, 3), 0.5};

    save_checkpoint(tmp.file("a.ck"), ck);
    const Checkpoint r = load_checkpoint(tmp.file("a.ck"));
    CHECK(r.levels == 5);
    CHECK(r.alpha == 123.5);
    CHECK(r.kernel == "gaussian");
    CHECK(r.params.s.p == ck.params.s.p);
    CHECK(r.params.s.w == ck.params.s.w);
    CHECK(r.params.bias == -0.125);
    REQUIRE(r.optimizer);
    CHECK(r.optimizer->t == 42);
    CHECK(r.optimizer->vw == st.vw);
    REQUIRE(r.normalization);
    CHECK(r.normalization->center == Vec3(1, 2, 3));

    save_checkpoint(tmp.file("b.ck"), r);
    const std::string bytes = read_file(tmp.file("a.ck"));
    CHECK(read_file(tmp.file("b.ck")) == bytes);

    Checkpoint bare;
    bare.params = init_params(3, 1, InitScheme::zero, 0.0, 1);
    save_checkpoint(tmp.file("bare.ck"), bare);
    const Checkpoint rb = load_checkpoint(tmp.file("bare.ck"));
    CHECK(!rb.optimizer);
    CHECK(!rb.normalization);

    write_file(tmp.file("cut.ck"), bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_checkpoint(tmp.file("cut.ck")), ParseError);
    write_file(tmp.file("tail.ck"), bytes + "x");
    CHECK_THROWS_AS(load_checkpoint(tmp.file("tail.ck")), ParseError);
    std::string future = bytes;
    future[4] = static_cast<char>(Checkpoint::kVersion + 1);
    write_file(tmp.file("future.ck"), future);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("future.ck")), ParseError);
    write_file(tmp.file("magic.ck"), "XXXX" + bytes.substr(4));
    CHECK_THROWS_AS(load_checkpoint(tmp.file("magic.ck")), ParseError);
}

TEST_CASE("content hashes match git blob ids") {
    CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
    TempDir tmp;
    write_file(tmp.file("h.txt"), "hello\n");
    CHECK(file_hash(tmp.file("h.txt")) == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("analytic distance fields") {
    const AnalyticSdf sphere = AnalyticSdf::parse("sphere:0,0,0:0.5");
    CHECK(sphere(Vec3(0.8, 0, 0)) == doctest::Approx(0.3));
    CHECK(sphere(Vec3::Zero()) == doctest::Approx(-0.5));

    const AnalyticSdf u = AnalyticSdf::parse("sphere:-0.5,0,0:0.2;box:0.5,0,0:0.1,0.2,0.3");
    CHECK(u(Vec3(-0.5, 0, 0)) == doctest::Approx(-0.2));
    CHECK(u(Vec3(0.7, 0, 0)) == doctest::Approx(0.1));

    const AnalyticSdf torus = AnalyticSdf::parse("torus:0,0,0:0.5,0.1");
    CHECK(torus(Vec3(0.5, 0, 0)) == doctest::Approx(-0.1));

    CHECK_THROWS_AS(AnalyticSdf::parse("cone:0,0,0:1"), ConfigError);
    CHECK_THROWS_AS(AnalyticSdf::parse("sphere:0,0:1"), ConfigError);
    CHECK_THROWS_AS(AnalyticSdf::parse(""), ConfigError);

    const PointSampleSet s = sample_sdf(sphere, 2000, 0.1, 0.25, 7);
    REQUIRE(s.size() == 2000);
    long near = 0;
    for (long i = 0; i < s.size(); ++i) {
        const Vec3 x = s.locations.row(i).transpose();
        CHECK(s.values(i, 0) == doctest::Approx(sphere(x)));
        near += std::abs(s.values(i, 0)) < 0.1;
    }
    CHECK(near >= 1500);
    const PointSampleSet again = sample_sdf(sphere, 2000, 0.1, 0.25, 7);
    CHECK(again.locations == s.locations);
}

TEST_CASE("synthetic radiance scene") {
    const BlobScene scene = BlobScene::three_blobs();
    REQUIRE(scene.blobs.size() == 3);
    const auto at_red = scene(scene.blobs[0].center);
    CHECK(at_red[0] > 0.9 * scene.blobs[0].density);
    CHECK(at_red[1] > at_red[2]);
    CHECK(at_red[1] > at_red[3]);
    const auto far = scene(Vec3(0.95, 0.95, 0.95));
    CHECK(far[0] < 1e-6);

    const auto cams = orbit_cameras(4, 3.0, 0.5, 0.7, 8, 6);
    REQUIRE(cams.size() == 4);
    for (const Camera& c : cams) {
        CHECK(Vec3(c.eye.x(), 0, c.eye.z()).norm() == doctest::Approx(3.0));
        CHECK(c.eye.y() == 0.5);
        CHECK(c.width == 8);
        CHECK(c.height == 6);
    }
    const Image img = render_truth(scene, cams[0], 64);
    CHECK(img.width == 8);
    CHECK(img.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    double darkest = 3.0;
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 8; ++c) darkest = std::min(darkest, img.at(r, c, 0) + img.at(r, c, 1) + img.at(r, c, 2));
    CHECK(darkest < 2.9);
}

TEST_CASE("depth maps round trip through PFM with misses kept") {
    TempDir tmp;
    DepthMap d{3, 2, {1.0, 2.5, std::nan(""), 0.125, 4.0, 3.0}};
    save_depth(tmp.file("d.pfm"), d);
    const std::string bytes = read_file(tmp.file("d.pfm"));
    CHECK(bytes.rfind("Pf\n3 2\n-1.0\n", 0) == 0);
    CHECK(bytes.size() == 12 + 6 * 4);
    float first;
    std::memcpy(&first, bytes.data() + 12, 4);
    CHECK(first == 0.125f);  // bottom row is stored first
    const DepthMap back = load_depth(tmp.file("d.pfm"));
    REQUIRE(back.width == 3);
    REQUIRE(back.height == 2);
    for (int i = 0; i < 6; ++i) {
        if (std::isnan(d.depth[i])) CHECK(std::isnan(back.depth[i]));
        else CHECK(back.depth[i] == d.depth[i]);
    }
    write_file(tmp.file("bad.pfm"), "Pf\n3 2\n-1.0\n1234");
    CHECK_THROWS_AS(load_depth(tmp.file("bad.pfm")), ParseError);

    const Image img = depth_image(back, Vec3(0, 0, 1));
    CHECK(img.at(1, 0, 0) == doctest::Approx(1.0));   // nearest
    CHECK(img.at(1, 1, 0) == doctest::Approx(0.0));   // farthest
    CHECK(img.at(0, 2, 2) == 1.0);                    // miss colour
}

TEST_CASE("sphere tracing an analytic field finds the first surface") {
    const AnalyticSdf sdf = AnalyticSdf::parse("sphere:0,0,0:0.5");
    Ray r;
    r.origin = Vec3(0, 0, 3);
    r.dir = Vec3(0, 0, -1);
    const auto t = trace_sdf(sdf, r);
    REQUIRE(t.has_value());
    CHECK(*t == doctest::Approx(2.5).epsilon(1e-10));
    r.dir = Vec3(0, 1, -1).normalized();
    CHECK_FALSE(trace_sdf(sdf, r).has_value());
    r.origin = Vec3(0, 0, 0.2);
    r.dir = Vec3(1, 0, 0);
    CHECK_FALSE(trace_sdf(sdf, r).has_value());  // starts inside
}
