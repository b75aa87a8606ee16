// spade -- spectroscopic photoacoustic denoising toolkit.
//
// Subcommands: simulate | denoise | evaluate | unmix | bench.
// Exit codes: 0 success, 2 configuration/validation error, 3 I/O error,
// 4 numerical failure.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spade/bench.hpp"
#include "spade/config.hpp"
#include "spade/io.hpp"
#include "spade/metrics.hpp"
#include "spade/phantom.hpp"
#include "spade/pipeline.hpp"
#include "spade/sddr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

spade::Rect parse_roi(const std::string& s) {
    spade::Rect r;
    if (std::sscanf(s.c_str(), "%d,%d,%d,%d", &r.r0, &r.c0, &r.r1, &r.c1) != 4)
        throw spade::ParseError("--roi expects r0,c0,r1,c1");
    return r;
}

// Max-intensity projection across wavelengths, for quick visual checks.
spade::Plane max_projection(const spade::SpectralImage& img) {
    spade::Plane p(img.rows, img.cols);
    for (int j = 0; j < img.lambda; ++j)
        for (int h = 0; h < img.rows; ++h)
            for (int w = 0; w < img.cols; ++w)
                p.at(h, w) = std::max(p.at(h, w), std::abs(img.at(j, h, w)));
    return p;
}

json shape_json(const spade::SpectralImage& img) {
    return json{{"lambda", img.lambda}, {"rows", img.rows}, {"cols", img.cols}};
}

int cmd_simulate(const std::string& config_path, const std::string& out_path,
                 const std::string& noisy_dir, std::optional<std::uint64_t> seed,
                 const std::string& pgm_path) {
    spade::SimConfig cfg = config_path.empty()
                               ? spade::default_sim_config()
                               : spade::sim_config_from_json(spade::load_json_file(config_path));
    if (seed) cfg.seed = *seed;
    if (!noisy_dir.empty() && cfg.frames < 1) cfg.frames = 1;

    const spade::PhantomOutput phantom = spade::generate_phantom(cfg);
    spade::write_spa(out_path, phantom.clean);

    json summary;
    summary["clean"] = out_path;
    summary["dims"] = shape_json(phantom.clean);
    summary["frames"] = 0;
    summary["target_snr_db"] = cfg.noise_snr_db;

    if (!noisy_dir.empty()) {
        fs::create_directories(noisy_dir);
        for (std::size_t i = 0; i < phantom.noisy_frames.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%03zu.spa", i);
            spade::write_spa((fs::path(noisy_dir) / name).string(), phantom.noisy_frames[i]);
        }
        summary["frames"] = phantom.noisy_frames.size();
        summary["noisy_dir"] = noisy_dir;
        if (!phantom.noisy_frames.empty()) {
            // Achieved SNR on the brightest frame of the first noisy cube.
            const spade::SpectralImage& noisy = phantom.noisy_frames[0];
            int jbest = 0;
            double best = -1.0;
            for (int j = 0; j < noisy.lambda; ++j)
                for (int h = 0; h < noisy.rows; ++h)
                    for (int w = 0; w < noisy.cols; ++w)
                        if (std::abs(phantom.clean.at(j, h, w)) > best) {
                            best = std::abs(phantom.clean.at(j, h, w));
                            jbest = j;
                        }
            const auto reg = spade::resolve_regions(phantom.clean.frame(jbest),
                                                    cfg.pitch_lateral_mm, spade::RegionSpec{});
            summary["achieved_snr_db"] =
                spade::snr_from_regions(noisy.frame(jbest), reg).snr_db;
        }
    }
    if (!pgm_path.empty()) spade::write_pgm(pgm_path, max_projection(phantom.clean));

    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_denoise(const std::string& method_name, const std::string& in_path,
                const std::string& out_path, const std::string& config_path,
                std::optional<std::uint64_t> seed, const std::string& pgm_path) {
    spade::DenoiseConfig cfg;
    if (!config_path.empty())
        cfg = spade::denoise_config_from_json(spade::load_json_file(config_path));
    cfg.method = spade::method_from_string(method_name);
    if (seed) cfg.train.seed = *seed;

    const auto t0 = std::chrono::steady_clock::now();
    spade::SpectralImage out;
    spade::StageStats stats;
    if (cfg.method == spade::Method::average) {
        if (!fs::is_directory(in_path))
            throw spade::FileError("average expects a directory of .spa frames: " + in_path);
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(in_path))
            if (e.path().extension() == ".spa") files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw spade::FileError("no .spa frames in " + in_path);
        std::vector<spade::SpectralImage> frames;
        for (const auto& f : files) frames.push_back(spade::read_spa(f));
        out = spade::denoise_average(frames);
    } else {
        const spade::SpectralImage img = spade::read_spa(in_path);
        switch (cfg.method) {
            case spade::Method::spade:
                out = spade::denoise_spade(img, cfg, &stats);
                break;
            case spade::Method::zsn2n_only: {
                spade::DenoiseConfig z = cfg;
                z.stage_order = spade::StageOrder::zsn2n_only;
                out = spade::denoise_spade(img, z, &stats);
                break;
            }
            case spade::Method::bm3d_vanilla:
                out = spade::denoise_vanilla_bm3d(img, cfg, &stats);
                break;
            default:
                break;
        }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    spade::write_spa(out_path, out);
    if (!pgm_path.empty()) spade::write_pgm(pgm_path, max_projection(out));

    json info;
    info["method"] = method_name;
    info["out"] = out_path;
    info["dims"] = shape_json(out);
    info["seconds"] = seconds;
    if (stats.ran_bm3d) info["sigma_used"] = stats.sigma_used;
    if (stats.ran_zsn2n)
        info["train"] = {{"initial_loss", stats.train.initial.total},
                         {"final_loss", stats.train.final_.total},
                         {"iterations", stats.train.iterations}};
    std::cout << info.dump() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& test_path, const std::string& ref_path,
                 const std::string& roi_str, const std::string& report_path) {
    const spade::SpectralImage test = spade::read_spa(test_path);
    const spade::SpectralImage ref = spade::read_spa(ref_path);
    const spade::Rect roi = roi_str.empty() ? spade::signal_roi(ref) : parse_roi(roi_str);
    const spade::MetricsReport rep = spade::evaluate(test, ref, roi);
    const json j = spade::report_to_json(rep);
    if (!report_path.empty()) {
        std::ofstream f(report_path);
        if (!f) throw spade::FileError("cannot open " + report_path + " for writing");
        f << j.dump(2) << "\n";
    }
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_unmix(const std::string& in_path, const std::string& spectra_path,
              const std::string& out_path, const std::string& agent,
              const std::string& hb_list, const std::string& ratio_path) {
    const spade::SpectralImage img = spade::read_spa(in_path);
    const spade::SpectrumLibrary lib = spade::load_spectra_csv(spectra_path);
    const spade::ConcentrationMaps maps = spade::unmix(img, lib);

    const int K = static_cast<int>(maps.names.size());
    spade::SpectralImage cube(K + 1, img.rows, img.cols);
    cube.pitch_axial_mm = img.pitch_axial_mm;
    cube.pitch_lateral_mm = img.pitch_lateral_mm;
    cube.channels = maps.names;
    cube.channels.push_back("residual");
    for (int k = 0; k <= K; ++k) cube.wavelengths_nm.push_back(k + 1.0);
    for (int k = 0; k < K; ++k) cube.set_frame(k, maps.maps[k]);
    cube.set_frame(K, maps.residual);
    spade::write_spa(out_path, cube);

    json info;
    info["out"] = out_path;
    info["chromophores"] = maps.names;
    info["rank_deficient"] = maps.rank_deficient;

    if (!ratio_path.empty()) {
        if (agent.empty() || hb_list.empty())
            throw spade::ParseError("--ratio-out needs --agent and --hb");
        std::vector<std::string> hbs;
        std::stringstream ss(hb_list);
        std::string name;
        while (std::getline(ss, name, ',')) hbs.push_back(name);
        const spade::Plane ratio = spade::agent_ratio(maps, agent, hbs);
        spade::SpectralImage rimg(1, img.rows, img.cols);
        rimg.pitch_axial_mm = img.pitch_axial_mm;
        rimg.pitch_lateral_mm = img.pitch_lateral_mm;
        rimg.wavelengths_nm = {1.0};
        rimg.channels = {"agent_ratio"};
        rimg.set_frame(0, ratio);
        spade::write_spa(ratio_path, rimg);
        info["ratio_out"] = ratio_path;
    }
    std::cout << info.dump() << "\n";
    return 0;
}

int cmd_bench(const std::string& spec_path, const std::string& out_path) {
    const spade::BenchSpec spec =
        spec_path.empty() ? spade::BenchSpec{}
                          : spade::bench_spec_from_json(spade::load_json_file(spec_path));
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<spade::BenchRow> rows = spade::bench_run(spec);
    spade::write_bench_csv(out_path, rows);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json info;
    info["out"] = out_path;
    info["rows"] = rows.size();
    info["seconds"] = seconds;
    std::cout << info.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spade - spectroscopic photoacoustic denoising toolkit"};
    app.require_subcommand(1);

    std::string config_path, in_path, out_path, noisy_dir, pgm_path;
    std::string method = "spade";
    std::string test_path, ref_path, roi_str, report_path;
    std::string spectra_path, agent, hb_list, ratio_path;
    std::string spec_path;
    std::optional<std::uint64_t> seed;

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic phantom");
    sim->add_option("--config", config_path, "SimConfig JSON");
    sim->add_option("--out", out_path, "Clean cube output (.spa)")->required();
    sim->add_option("--noisy-out", noisy_dir, "Directory for noisy frames");
    sim->add_option("--seed", seed, "Override the config seed");
    sim->add_option("--pgm", pgm_path, "Max-projection PGM of the clean cube");

    auto* den = app.add_subcommand("denoise", "Denoise a spectral cube");
    den->add_option("--method", method, "spade|bm3d|zsn2n|average")->required();
    den->add_option("--in", in_path, "Input .spa (directory for average)")->required();
    den->add_option("--out", out_path, "Output .spa")->required();
    den->add_option("--config", config_path, "DenoiseConfig JSON");
    den->add_option("--seed", seed, "Override the training seed");
    den->add_option("--pgm", pgm_path, "Max-projection PGM of the output");

    auto* eva = app.add_subcommand("evaluate", "Compare a cube against a reference");
    eva->add_option("--test", test_path, "Test .spa")->required();
    eva->add_option("--ref", ref_path, "Reference .spa")->required();
    eva->add_option("--roi", roi_str, "Pearson ROI r0,c0,r1,c1 (default: auto)");
    eva->add_option("--report", report_path, "Write the JSON report here");

    auto* unm = app.add_subcommand("unmix", "Spectral unmixing against a library");
    unm->add_option("--in", in_path, "Input .spa")->required();
    unm->add_option("--spectra", spectra_path, "Library CSV")->required();
    unm->add_option("--out", out_path, "Concentration maps .spa")->required();
    unm->add_option("--agent", agent, "Agent chromophore for the ratio map");
    unm->add_option("--hb", hb_list, "Comma-separated hemoglobin chromophores");
    unm->add_option("--ratio-out", ratio_path, "Agent ratio .spa");

    auto* ben = app.add_subcommand("bench", "Run a benchmark sweep");
    ben->add_option("--spec", spec_path, "BenchSpec JSON (default spec if omitted)");
    ben->add_option("--out", out_path, "Results CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (sim->parsed()) return cmd_simulate(config_path, out_path, noisy_dir, seed, pgm_path);
        if (den->parsed())
            return cmd_denoise(method, in_path, out_path, config_path, seed, pgm_path);
        if (eva->parsed()) return cmd_evaluate(test_path, ref_path, roi_str, report_path);
        if (unm->parsed())
            return cmd_unmix(in_path, spectra_path, out_path, agent, hb_list, ratio_path);
        if (ben->parsed()) return cmd_bench(spec_path, out_path);
    } catch (const spade::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const spade::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const spade::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return 0;
}
