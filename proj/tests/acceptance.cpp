// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier criteria reuse the bundled benchmark sweep; run with
// --cli <path-to-spade-binary> so the CSV determinism criterion can drive the
// real executable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spade/bench.hpp"
#include "spade/bm3d.hpp"
#include "spade/config.hpp"
#include "spade/dct.hpp"
#include "spade/metrics.hpp"
#include "spade/phantom.hpp"
#include "spade/pipeline.hpp"
#include "spade/rng.hpp"
#include "spade/sddr.hpp"
#include "spade/zsn2n.hpp"

namespace fs = std::filesystem;
using namespace spade;

namespace {

// Desk-scale training settings for the sweep criteria. The library defaults
// (48 channels, 2000 iterations) match the published network but need a GPU
// to sweep in reasonable time; these settings keep the full suite under the
// ten-minute budget on a desktop CPU and are the same ones shipped in the
// example bench specs.
DenoiseConfig sweep_denoise_config() {
    DenoiseConfig cfg;
    cfg.train.channels = 16;
    cfg.train.iterations = 120;
    cfg.train.step_size = 2e-3;
    return cfg;
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, double seconds) {
    std::printf("[%s] %2d. %s (%.1fs)%s%s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), seconds,
                o.detail.empty() ? "" : " -- ", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void run_criterion(int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(id, name, o, secs);
}

std::string fmt(double x, int prec = 2) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, x);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- criteria 1+2

std::vector<BenchRow> g_sweep_rows;

Outcome criterion_snr_trend() {
    BenchSpec spec;
    spec.phantom = default_sim_config();
    spec.input_snr_db = {10.0, 15.0, 20.0, 25.0};
    spec.wavelength_counts = {16};
    spec.seeds = 5;
    spec.base_seed = 20;
    spec.methods = {"noisy", "spade", "bm3d"};
    spec.denoise = sweep_denoise_config();
    g_sweep_rows = bench_run(spec);

    std::map<double, std::vector<double>> spade_out, bm3d_out;
    std::vector<double> spade_delta;
    for (const BenchRow& r : g_sweep_rows) {
        if (r.method == "spade") {
            spade_out[r.input_snr_db].push_back(r.snr_out_db);
            spade_delta.push_back(r.delta_snr_db);
        } else if (r.method == "bm3d") {
            bm3d_out[r.input_snr_db].push_back(r.snr_out_db);
        }
    }
    const double mean_delta = mean_of(spade_delta);
    Outcome o;
    o.pass = mean_delta >= 10.0;
    o.detail = "mean dSNR " + fmt(mean_delta) + " dB (need >= 10)";
    for (double snr : {10.0, 15.0, 20.0}) {
        const double s = mean_of(spade_out[snr]);
        const double b = mean_of(bm3d_out[snr]);
        o.detail += "; @" + fmt(snr, 0) + "dB spade " + fmt(s) + " vs bm3d " + fmt(b);
        if (s < b) o.pass = false;
    }
    return o;
}

Outcome criterion_spectral_preservation() {
    if (g_sweep_rows.empty()) return {false, "sweep did not run"};
    std::map<double, std::vector<double>> spade_r, noisy_r;
    for (const BenchRow& r : g_sweep_rows) {
        if (r.method == "spade") spade_r[r.input_snr_db].push_back(r.pearson_r);
        if (r.method == "noisy") noisy_r[r.input_snr_db].push_back(r.pearson_r);
    }
    Outcome o;
    double worst = 1.0;
    for (auto& [snr, rs] : spade_r) {
        const double med = median_of(rs);
        worst = std::min(worst, med);
        if (med < 0.8) o.pass = false;
    }
    // Sanity from the pipeline contract: denoising should not reduce the
    // median spectral correlation of the sweep.
    std::vector<double> all_spade, all_noisy;
    for (auto& [snr, rs] : spade_r) all_spade.insert(all_spade.end(), rs.begin(), rs.end());
    for (auto& [snr, rs] : noisy_r) all_noisy.insert(all_noisy.end(), rs.begin(), rs.end());
    const double med_spade = median_of(all_spade);
    const double med_noisy = median_of(all_noisy);
    if (med_spade < med_noisy) o.pass = false;
    o.detail = "worst per-SNR median r " + fmt(worst, 3) + " (need >= 0.8); sweep median " +
               fmt(med_spade, 3) + " vs noisy " + fmt(med_noisy, 3);
    return o;
}

Outcome criterion_wavelength_stability() {
    BenchSpec spec;
    spec.phantom = default_sim_config();
    spec.input_snr_db = {15.0};
    spec.wavelength_counts = {2, 4, 8, 16};
    spec.seeds = 3;
    spec.base_seed = 50;
    spec.methods = {"noisy", "spade"};
    spec.denoise = sweep_denoise_config();
    const auto rows = bench_run(spec);

    std::map<int, std::vector<double>> deltas;
    for (const BenchRow& r : rows)
        if (r.method == "spade") deltas[r.lambda].push_back(r.delta_snr_db);
    double lo = 1e9, hi = -1e9;
    std::string per;
    for (auto& [lambda, ds] : deltas) {
        const double m = mean_of(ds);
        lo = std::min(lo, m);
        hi = std::max(hi, m);
        per += " l" + std::to_string(lambda) + "=" + fmt(m);
    }
    Outcome o;
    o.pass = (hi - lo) <= 3.0;
    o.detail = "dSNR spread " + fmt(hi - lo) + " dB (need <= 3):" + per;
    return o;
}

Outcome criterion_averaging_law() {
    const SimConfig cfg = default_sim_config();
    const SpectralImage clean = generate_clean(cfg);
    const Rect roi = signal_roi(clean);

    std::vector<SpectralImage> frames;
    for (int i = 0; i < 64; ++i)
        frames.push_back(inject_noise(clean, 15.0, substream_seed(777, i)));
    const MetricsReport single = evaluate(frames[0], clean, roi);
    const MetricsReport averaged = evaluate(denoise_average(frames), clean, roi);
    const double gain = averaged.snr_db_median - single.snr_db_median;
    Outcome o;
    o.pass = std::abs(gain - 18.06) <= 1.0;
    o.detail = "64-frame gain " + fmt(gain) + " dB (expect 18.06 +- 1)";
    return o;
}

Outcome criterion_sddr_exactness() {
    Rng rng(404);
    int checked = 0;
    for (int lambda : {1, 2, 3, 16})
        for (int rows : {1, 7, 16, 33})
            for (int cols : {1, 5, 24, 41}) {
                SpectralImage img(lambda, rows, cols);
                for (int j = 0; j < lambda; ++j) img.wavelengths_nm.push_back(700.0 + j);
                for (double& x : img.data) x = rng.uniform(-10.0, 10.0);
                const SpectralImage back = sddr_inverse(sddr_forward(img));
                if (back.data != img.data || back.wavelengths_nm != img.wavelengths_nm)
                    return {false, "round trip differs at lambda=" + std::to_string(lambda) +
                                       " " + std::to_string(rows) + "x" + std::to_string(cols)};
                ++checked;
            }
    return {true, std::to_string(checked) + " shapes bit-exact"};
}

Outcome criterion_gradients() {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        NetworkParams p = NetworkParams::zeros(2);
        Rng rng(6000 + i);
        for (auto* f : p.fields())
            for (double& w : *f) w = rng.uniform(-0.5, 0.5);
        Plane y(6, 6);
        for (double& x : y.v) x = rng.uniform(0.0, 2.0);

        NetworkParams g;
        zsn2n_grad(p, y, g);
        auto pf = p.fields();
        auto gf = g.fields();
        const double h = 1e-5;
        for (std::size_t f = 0; f < pf.size(); ++f)
            for (std::size_t k = 0; k < pf[f]->size(); ++k) {
                double& w = (*pf[f])[k];
                const double keep = w;
                w = keep + h;
                const double up = zsn2n_loss(p, y).total;
                w = keep - h;
                const double dn = zsn2n_loss(p, y).total;
                w = keep;
                const double fd = (up - dn) / (2.0 * h);
                const double an = (*gf[f])[k];
                // Relative error with a floor where the FD oracle is pure
                // rounding noise.
                const double err =
                    std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
                worst = std::max(worst, err);
            }
    }
    Outcome o;
    o.pass = worst < 1e-6;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max relative error %.2e (need < 1e-6)", worst);
    o.detail = buf;
    return o;
}

Outcome criterion_transform_fidelity() {
    Rng rng(17);
    double worst_rt = 0.0, worst_energy = 0.0;
    for (auto [br, bc] : {std::pair{8, 8}, {8, 4}, {8, 2}})
        for (int depth : {1, 3, 16, 32}) {
            BlockStack s;
            s.block_rows = br;
            s.block_cols = bc;
            s.positions.assign(depth, {0, 0});
            s.values.resize(static_cast<std::size_t>(depth) * br * bc);
            for (double& v : s.values) v = rng.uniform(-1.0, 1.0);
            const std::vector<double> co = transform_3d(s);
            double ein = 0.0, eco = 0.0;
            for (double v : s.values) ein += v * v;
            for (double v : co) eco += v * v;
            worst_energy = std::max(worst_energy, std::abs(ein - eco));
            const BlockStack back = inverse_transform_3d(co, s);
            for (std::size_t k = 0; k < s.values.size(); ++k)
                worst_rt = std::max(worst_rt, std::abs(back.values[k] - s.values[k]));
        }
    Outcome o;
    o.pass = worst_rt < 1e-10 && worst_energy < 1e-10;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "round trip %.2e, energy drift %.2e (need < 1e-10)", worst_rt,
                  worst_energy);
    o.detail = buf;
    return o;
}

Outcome criterion_bm3d_properties() {
    // constant-image exactness
    const Plane flat(64, 64, 0.37);
    Bm3dParams p;
    p.sigma = 0.1;
    p.block_cols = 8;
    const std::vector<GroupBounds> g{{0, 64}};
    const Plane flat_out = wiener_stage(flat, hard_threshold_stage(flat, g, p), g, p);
    double flat_err = 0.0;
    for (double v : flat_out.v) flat_err = std::max(flat_err, std::abs(v - 0.37));
    if (flat_err >= 1e-10) return {false, "constant image deviates by " + fmt(flat_err, 12)};

    auto stddev = [](const Plane& x) {
        double m = 0.0;
        for (double v : x.v) m += v;
        m /= static_cast<double>(x.v.size());
        double s = 0.0;
        for (double v : x.v) s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(x.v.size()));
    };
    double worst_ratio = 0.0;
    bool wiener_ok = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Plane noisy(128, 128, 0.5);
        Rng rng(3100 + seed);
        for (double& v : noisy.v) v += 0.1 * rng.gaussian();
        Bm3dParams q;
        q.sigma = 0.1;
        q.block_cols = 8;
        const std::vector<GroupBounds> g2{{0, 128}};
        const Plane basic = hard_threshold_stage(noisy, g2, q);
        const Plane fin = wiener_stage(noisy, basic, g2, q);
        worst_ratio = std::max(worst_ratio, stddev(basic) / stddev(noisy));
        if (stddev(fin) > stddev(basic) + 1e-12) wiener_ok = false;
    }
    Outcome o;
    o.pass = worst_ratio <= 0.25 && wiener_ok;
    o.detail = "hard-stage residual ratio " + fmt(worst_ratio, 3) + " (need <= 0.25), wiener " +
               (wiener_ok ? "never regressed" : "REGRESSED");
    return o;
}

Outcome criterion_metric_identities() {
    Outcome o;
    // standard SSIM identity
    Plane x(16, 16);
    Rng rng(5);
    for (double& v : x.v) v = rng.uniform(0.0, 1.0);
    if (ssim(x, x, MetricVariant::standard) != 1.0) {
        return {false, "standard SSIM(x,x) != 1"};
    }
    // Pearson affine invariance
    std::vector<Plane> rf, tf;
    for (int j = 0; j < 5; ++j) {
        const double v = 0.1 + 0.2 * j + 0.05 * ((j * 7) % 3);
        rf.emplace_back(2, 2, v);
        tf.emplace_back(2, 2, 1.7 * v + 0.4);
    }
    SpectralImage ref(5, 2, 2), test(5, 2, 2);
    for (int j = 0; j < 5; ++j) {
        ref.wavelengths_nm.push_back(700.0 + j);
        test.wavelengths_nm.push_back(700.0 + j);
        ref.set_frame(j, rf[j]);
        test.set_frame(j, tf[j]);
    }
    if (std::abs(pearson_spectrum(test, ref, {0, 0, 2, 2}) - 1.0) > 1e-12)
        return {false, "Pearson affine invariance violated"};
    // PSNR printed-vs-standard example
    const Plane ones(8, 8, 1.0), nine(8, 8, 0.9);
    const double aw = psnr_db(nine, ones, MetricVariant::as_written);
    const double st = psnr_db(nine, ones, MetricVariant::standard);
    if (std::abs(aw - 10.0) > 1e-9 || std::abs(st - 20.0) > 1e-9)
        return {false, "PSNR example: as_written " + fmt(aw, 6) + ", standard " + fmt(st, 6)};
    // SNR exact examples via an explicit patch with population std 0.1 / 0.02
    Plane s1(32, 64);
    s1.at(4, 4) = 1.0;
    const Rect rect{10, 30, 12, 40};
    for (int r = rect.r0; r < rect.r1; ++r)
        for (int c = rect.c0; c < rect.c1; ++c) s1.at(r, c) = ((r + c) % 2 ? -0.1 : 0.1);
    const double snr20 = snr_db(s1, 0.195, RegionSpec::explicit_region(rect)).snr_db;
    Plane s2 = s1;
    s2.at(4, 4) = 2.0;
    for (int r = rect.r0; r < rect.r1; ++r)
        for (int c = rect.c0; c < rect.c1; ++c) s2.at(r, c) = ((r + c) % 2 ? -0.02 : 0.02);
    const double snr40 = snr_db(s2, 0.195, RegionSpec::explicit_region(rect)).snr_db;
    if (std::abs(snr20 - 20.0) > 1e-9 || std::abs(snr40 - 40.0) > 1e-9)
        return {false, "SNR examples: " + fmt(snr20, 9) + ", " + fmt(snr40, 9)};
    o.detail = "SSIM/Pearson/PSNR/SNR identities exact";
    return o;
}

Outcome criterion_unmixing() {
    // mix-then-unmix on a noiseless constructed phantom
    SimConfig cfg = default_sim_config();
    cfg.mu_eff_per_mm = 0.0;
    cfg.psf_sigma_axial_mm = 0.0;
    cfg.psf_sigma_lateral_mm = 0.0;
    cfg.targets = {{8.0, 8.0, 4.0, 1.0, {{"agent", 0.5}, {"hbo2_like", 0.3}, {"hbr_like", 0.2}}}};
    const SpectralImage clean = generate_clean(cfg);
    const ConcentrationMaps maps = unmix(clean, cfg.library);
    const int h = static_cast<int>(8.0 / cfg.pitch_axial_mm);
    const int w = static_cast<int>(8.0 / cfg.pitch_lateral_mm);
    const double e0 = std::abs(maps.maps[0].at(h, w) - 0.5);
    const double e1 = std::abs(maps.maps[1].at(h, w) - 0.3);
    const double e2 = std::abs(maps.maps[2].at(h, w) - 0.2);
    if (std::max({e0, e1, e2}) > 1e-6)
        return {false, "recovery error " + fmt(std::max({e0, e1, e2}), 9)};

    // KKT clamping case
    SpectrumLibrary lib;
    lib.names = {"a", "b"};
    lib.wavelengths_nm = {700.0, 800.0};
    lib.absorption = {1.0, 0.0, 0.0, 1.0};
    SpectralImage px(2, 1, 1);
    px.wavelengths_nm = lib.wavelengths_nm;
    px.data = {-0.1, 0.5};
    const ConcentrationMaps m2 = unmix(px, lib);
    if (m2.maps[0].at(0, 0) != 0.0 || std::abs(m2.maps[1].at(0, 0) - 0.5) > 1e-12)
        return {false, "clamping case returned (" + fmt(m2.maps[0].at(0, 0), 6) + ", " +
                           fmt(m2.maps[1].at(0, 0), 6) + ")"};
    return {true, "recovery within 1e-6, clamping exact"};
}

Outcome criterion_bench_determinism(const std::string& cli) {
    if (cli.empty()) return {false, "no --cli path given"};
    const fs::path dir = fs::temp_directory_path() / "spade_acceptance";
    fs::create_directories(dir);
    const fs::path spec = dir / "bench_spec.json";
    {
        std::ofstream f(spec);
        f << R"({
            "phantom": {"grid": {"rows": 48, "cols": 48},
                        "wavelengths_nm": [700, 750, 800, 850],
                        "targets": [{"lateral_mm": 4.0, "depth_mm": 4.0, "diameter_mm": 0.8,
                                     "mix": {"agent": 1.0}}]},
            "input_snr_db": [15, 20],
            "wavelength_counts": [4],
            "seeds": 2,
            "methods": ["noisy", "spade", "bm3d"],
            "denoise": {"train": {"channels": 4, "iterations": 10}}
        })";
    }
    const std::string out1 = (dir / "run1.csv").string();
    const std::string out2 = (dir / "run2.csv").string();
    auto run_once = [&](const std::string& out) {
        const std::string cmd =
            cli + " bench --spec " + spec.string() + " --out " + out + " > /dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    if (!run_once(out1) || !run_once(out2)) return {false, "bench command failed"};
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    const std::string a = slurp(out1), b = slurp(out2);
    if (a.empty() || a != b) return {false, "CSV bytes differ between reruns"};
    return {true, std::to_string(a.size()) + " bytes, byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

    std::printf("spade acceptance suite\n");
    run_criterion(1, "SNR-improvement trend on the 16-wavelength sweep", criterion_snr_trend);
    run_criterion(2, "Spectral preservation (median Pearson r >= 0.8)",
                  criterion_spectral_preservation);
    run_criterion(3, "Wavelength-count stability at 15 dB", criterion_wavelength_stability);
    run_criterion(4, "64-frame averaging law (18.06 +- 1 dB)", criterion_averaging_law);
    run_criterion(5, "SDDR bit-exact round trips", criterion_sddr_exactness);
    run_criterion(6, "Gradient correctness vs finite differences", criterion_gradients);
    run_criterion(7, "3D transform fidelity", criterion_transform_fidelity);
    run_criterion(8, "BM3D stage properties", criterion_bm3d_properties);
    run_criterion(9, "Metric identities", criterion_metric_identities);
    run_criterion(10, "Unmixing oracle", criterion_unmixing);
    run_criterion(11, "Benchmark CSV determinism",
                  [&] { return criterion_bench_determinism(cli); });

    if (failures == 0)
        std::printf("all criteria passed\n");
    else
        std::printf("%d criterion(s) FAILED\n", failures);
    return failures == 0 ? 0 : 1;
}
