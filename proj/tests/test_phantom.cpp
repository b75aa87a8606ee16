#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spade/metrics.hpp"
#include "spade/phantom.hpp"

using namespace spade;

namespace {

std::string temp_csv(const std::string& name, const std::string& contents) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream f(path);
    f << contents;
    return path;
}

}  // namespace

TEST_CASE("a phantom without targets is identically zero") {
    SimConfig cfg = default_sim_config();
    cfg.targets.clear();
    const SpectralImage clean = generate_clean(cfg);
    for (double x : clean.data) CHECK(x == 0.0);
}

TEST_CASE("inside a target the spectrum is proportional to the mixture") {
    SimConfig cfg = default_sim_config();
    cfg.mu_eff_per_mm = 0.0;
    cfg.psf_sigma_axial_mm = 0.0;
    cfg.psf_sigma_lateral_mm = 0.0;
    cfg.targets = {{12.0, 12.0, 3.0, 1.0, {{"agent", 0.6}, {"hbr_like", 0.4}}}};
    const SpectralImage clean = generate_clean(cfg);

    // Expected spectrum from the library.
    const int L = clean.lambda;
    std::vector<double> want(L);
    for (int j = 0; j < L; ++j)
        want[j] = 0.6 * cfg.library.at(j, 0) + 0.4 * cfg.library.at(j, 2);

    const int h = static_cast<int>(12.0 / cfg.pitch_axial_mm);
    const int w = static_cast<int>(12.0 / cfg.pitch_lateral_mm);
    for (int j = 0; j < L; ++j)
        CHECK(clean.at(j, h, w) == Catch::Approx(want[j]).margin(1e-9));
}

TEST_CASE("targets outside the imaged extent are rejected") {
    SimConfig cfg = default_sim_config();
    cfg.targets = {{120.0, 12.0, 0.65, 1.0, {{"agent", 1.0}}}};
    CHECK_THROWS_AS(generate_clean(cfg), TargetOutOfBounds);
}

TEST_CASE("phantom noise is deterministic per seed") {
    SimConfig cfg = default_sim_config();
    cfg.frames = 2;
    const PhantomOutput a = generate_phantom(cfg);
    const PhantomOutput b = generate_phantom(cfg);
    CHECK(a.noisy_frames[0].data == b.noisy_frames[0].data);
    CHECK(a.noisy_frames[0].data != a.noisy_frames[1].data);
    SimConfig other = cfg;
    other.seed = cfg.seed + 1;
    const PhantomOutput c = generate_phantom(other);
    CHECK(a.noisy_frames[0].data != c.noisy_frames[0].data);
}

TEST_CASE("injected noise level follows the peak over the snr target") {
    SpectralImage img(1, 128, 128);
    img.wavelengths_nm = {800.0};
    img.at(0, 64, 64) = 1.0;
    for (double target : {20.0, 40.0}) {
        const double sigma_want = 1.0 / std::pow(10.0, target / 20.0);
        const SpectralImage noisy = inject_noise(img, target, 7);
        double s = 0.0;
        for (std::size_t k = 0; k < img.data.size(); ++k) {
            const double d = noisy.data[k] - img.data[k];
            s += d * d;
        }
        s = std::sqrt(s / static_cast<double>(img.data.size()));
        CHECK(s == Catch::Approx(sigma_want).epsilon(0.03));
    }
    SpectralImage zero(1, 4, 4);
    zero.wavelengths_nm = {800.0};
    CHECK_THROWS_AS(inject_noise(zero, 20.0, 1), ZeroImage);
}

TEST_CASE("measured snr of injected noise lands near the target") {
    SimConfig cfg = default_sim_config();
    cfg.rows = 256;
    cfg.cols = 256;
    const SpectralImage clean = generate_clean(cfg);
    // Measure on the brightest frame with self-resolved auto regions.
    int jbest = 0;
    double best = 0.0;
    for (int j = 0; j < clean.lambda; ++j)
        for (int h = 0; h < clean.rows; ++h)
            for (int w = 0; w < clean.cols; ++w)
                if (std::abs(clean.at(j, h, w)) > best) {
                    best = std::abs(clean.at(j, h, w));
                    jbest = j;
                }
    std::vector<double> measured;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const SpectralImage noisy = inject_noise(clean, 15.0, 900 + seed);
        measured.push_back(snr_db(noisy.frame(jbest), cfg.pitch_lateral_mm).snr_db);
    }
    std::sort(measured.begin(), measured.end());
    const double median = 0.5 * (measured[4] + measured[5]);
    CHECK(median >= 13.5);
    CHECK(median <= 16.5);
}

TEST_CASE("unmixing an identity library returns the pixel spectrum") {
    SpectrumLibrary lib;
    lib.names = {"a", "b"};
    lib.wavelengths_nm = {700.0, 800.0};
    lib.absorption = {1.0, 0.0, 0.0, 1.0};
    SpectralImage img(2, 1, 1);
    img.wavelengths_nm = lib.wavelengths_nm;
    img.data = {0.3, 0.7};
    const ConcentrationMaps maps = unmix(img, lib);
    CHECK(maps.maps[0].at(0, 0) == Catch::Approx(0.3).margin(1e-10));
    CHECK(maps.maps[1].at(0, 0) == Catch::Approx(0.7).margin(1e-10));
    CHECK(maps.residual.at(0, 0) < 1e-10);
}

TEST_CASE("unmixing solves the hand-worked triangular system") {
    SpectrumLibrary lib;
    lib.names = {"a", "b"};
    lib.wavelengths_nm = {700.0, 800.0};
    lib.absorption = {1.0, 1.0, 0.0, 1.0};  // rows [[1,1],[0,1]]
    SpectralImage img(2, 1, 1);
    img.wavelengths_nm = lib.wavelengths_nm;
    img.data = {1.5, 0.5};
    const ConcentrationMaps maps = unmix(img, lib);
    CHECK(maps.maps[0].at(0, 0) == Catch::Approx(1.0).margin(1e-10));
    CHECK(maps.maps[1].at(0, 0) == Catch::Approx(0.5).margin(1e-10));
}

TEST_CASE("unmixing clamps negative components at zero") {
    SpectrumLibrary lib;
    lib.names = {"a", "b"};
    lib.wavelengths_nm = {700.0, 800.0};
    lib.absorption = {1.0, 0.0, 0.0, 1.0};
    SpectralImage img(2, 1, 1);
    img.wavelengths_nm = lib.wavelengths_nm;
    img.data = {-0.1, 0.5};
    const ConcentrationMaps maps = unmix(img, lib);
    CHECK(maps.maps[0].at(0, 0) == 0.0);
    CHECK(maps.maps[1].at(0, 0) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("mix then unmix recovers the weights inside target interiors") {
    SimConfig cfg = default_sim_config();
    cfg.mu_eff_per_mm = 0.0;
    cfg.psf_sigma_axial_mm = 0.0;
    cfg.psf_sigma_lateral_mm = 0.0;
    cfg.targets = {{8.0, 8.0, 4.0, 1.0, {{"agent", 0.5}, {"hbo2_like", 0.25}, {"hbr_like", 0.25}}}};
    const SpectralImage clean = generate_clean(cfg);
    const ConcentrationMaps maps = unmix(clean, cfg.library);
    const int h = static_cast<int>(8.0 / cfg.pitch_axial_mm);
    const int w = static_cast<int>(8.0 / cfg.pitch_lateral_mm);
    CHECK(maps.maps[0].at(h, w) == Catch::Approx(0.5).margin(1e-6));
    CHECK(maps.maps[1].at(h, w) == Catch::Approx(0.25).margin(1e-6));
    CHECK(maps.maps[2].at(h, w) == Catch::Approx(0.25).margin(1e-6));
}

TEST_CASE("unmixing output is non-negative everywhere") {
    SimConfig cfg = default_sim_config();
    cfg.rows = 32;
    cfg.cols = 32;
    const SpectralImage noisy = inject_noise(generate_clean(cfg), 10.0, 3);
    const ConcentrationMaps maps = unmix(noisy, cfg.library);
    for (const Plane& m : maps.maps)
        for (double v : m.v) CHECK(v >= 0.0);
}

TEST_CASE("unmix rejects foreign wavelength grids") {
    SpectrumLibrary lib = synthetic_library({700.0, 750.0, 800.0});
    SpectralImage img(3, 2, 2);
    img.wavelengths_nm = {700.0, 760.0, 800.0};
    img.data.assign(12, 0.1);
    CHECK_THROWS_AS(unmix(img, lib), WavelengthMismatch);
}

TEST_CASE("agent ratio follows its definition and the epsilon floor") {
    ConcentrationMaps maps;
    maps.names = {"agent", "hbo2", "hbr"};
    maps.maps = {Plane(1, 3), Plane(1, 3), Plane(1, 3)};
    // pixel 0: 0.2 / (0.3 + 0.1) = 0.5
    maps.maps[0].at(0, 0) = 0.2;
    maps.maps[1].at(0, 0) = 0.3;
    maps.maps[2].at(0, 0) = 0.1;
    // pixel 1: no hemoglobin, floor kicks in: 0.1 / 1e-9 = 1e8
    maps.maps[0].at(0, 1) = 0.1;
    // pixel 2: zero agent
    maps.maps[1].at(0, 2) = 0.4;

    const Plane ratio = agent_ratio(maps, "agent", {"hbo2", "hbr"});
    CHECK(ratio.at(0, 0) == Catch::Approx(0.5).margin(1e-9));
    CHECK(ratio.at(0, 1) == Catch::Approx(1e8).epsilon(1e-6));
    CHECK(ratio.at(0, 2) == 0.0);
    CHECK_THROWS_AS(agent_ratio(maps, "gold", {"hbo2"}), UnknownChromophore);
}

TEST_CASE("spectra csv round trips") {
    const std::string path = temp_csv("spade_lib.csv",
                                      "wavelength_nm,agent,hb\n"
                                      "700,0.1,0.9\n"
                                      "750,0.5,0.5\n"
                                      "800,1.0,0.2\n");
    const SpectrumLibrary lib = load_spectra_csv(path);
    CHECK(lib.names == std::vector<std::string>{"agent", "hb"});
    CHECK(lib.wavelengths_nm == std::vector<double>{700.0, 750.0, 800.0});
    CHECK(lib.at(1, 0) == 0.5);
    CHECK(lib.at(2, 1) == 0.2);
    std::remove(path.c_str());
}

TEST_CASE("descending wavelengths in a csv are rejected") {
    const std::string path = temp_csv("spade_bad1.csv",
                                      "wavelength_nm,a\n800,0.2\n700,0.4\n");
    CHECK_THROWS_AS(load_spectra_csv(path), NonMonotoneWavelengths);
    std::remove(path.c_str());
}

TEST_CASE("a short csv row reports its row number") {
    const std::string path = temp_csv("spade_bad2.csv",
                                      "wavelength_nm,a,b\n700,0.2,0.3\n750,0.4\n");
    try {
        load_spectra_csv(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("signal roi brackets the brightest target") {
    SimConfig cfg = default_sim_config();
    const SpectralImage clean = generate_clean(cfg);
    const Rect roi = signal_roi(clean);
    // brightest target is at (8mm, 6mm) -> (row ~30, col ~41)
    CHECK(roi.r0 <= 31);
    CHECK(roi.r1 >= 30);
    CHECK(roi.c0 <= 42);
    CHECK(roi.c1 >= 41);
    CHECK(roi.rows() < 30);
    CHECK(roi.cols() < 30);
}
