#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "spade/config.hpp"
#include "spade/metrics.hpp"
#include "spade/phantom.hpp"
#include "spade/pipeline.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spade {

// Benchmark sweep over (input SNR x wavelength count x seed x method). Every
// cell draws its noise from an independent substream, so the CSV is a pure
// function of the spec and cells may run concurrently.

struct BenchSpec {
    SimConfig phantom = default_sim_config();
    std::vector<double> input_snr_db = {10.0, 15.0, 20.0, 25.0};
    std::vector<int> wavelength_counts = {16};
    int seeds = 5;
    std::uint64_t base_seed = 1;
    std::vector<std::string> methods = {"noisy", "spade", "bm3d"};
    DenoiseConfig denoise;
    int average_frames = 64;

    void check() const {
        if (input_snr_db.empty()) throw ValidationError("bench: empty SNR sweep");
        if (wavelength_counts.empty()) throw ValidationError("bench: empty wavelength sweep");
        if (seeds < 1) throw ValidationError("bench: seeds must be >= 1");
        if (methods.empty()) throw ValidationError("bench: no methods");
        if (average_frames < 1) throw ValidationError("bench: average_frames must be >= 1");
        for (const auto& m : methods)
            if (m != "noisy") (void)method_from_string(m);
    }
};

inline BenchSpec bench_spec_from_json(const nlohmann::json& j) {
    using detail::field_as;
    detail::reject_unknown(j,
                           {"phantom", "input_snr_db", "wavelength_counts", "seeds", "base_seed",
                            "methods", "denoise", "average_frames"},
                           "bench");
    BenchSpec spec;
    if (j.contains("phantom")) spec.phantom = sim_config_from_json(j.at("phantom"));
    spec.input_snr_db = field_as(j, "input_snr_db", spec.input_snr_db, "bench");
    spec.wavelength_counts = field_as(j, "wavelength_counts", spec.wavelength_counts, "bench");
    spec.seeds = field_as(j, "seeds", spec.seeds, "bench");
    spec.base_seed = field_as(j, "base_seed", spec.base_seed, "bench");
    spec.methods = field_as(j, "methods", spec.methods, "bench");
    if (j.contains("denoise")) spec.denoise = denoise_config_from_json(j.at("denoise"));
    spec.average_frames = field_as(j, "average_frames", spec.average_frames, "bench");
    spec.check();
    return spec;
}

struct BenchRow {
    double input_snr_db = 0.0;
    int lambda = 0;
    int seed = 0;
    std::string method;
    double snr_out_db = 0.0;
    double delta_snr_db = 0.0;
    double psnr_db = 0.0;
    double psnr_db_standard = 0.0;
    double ssim = 0.0;
    double ssim_standard = 0.0;
    double pearson_r = 0.0;
};

// Wavelength subsets are taken evenly across the full list (always keeping
// the first and last band), mirroring how reduced-band images are derived
// from a full acquisition.
inline std::vector<int> wavelength_subset_indices(int full, int want) {
    if (want < 1 || want > full) throw ValidationError("bench: wavelength count out of range");
    std::vector<int> idx;
    if (want == 1) {
        idx.push_back(0);
        return idx;
    }
    for (int i = 0; i < want; ++i)
        idx.push_back(static_cast<int>(std::lround(static_cast<double>(i) * (full - 1) /
                                                   (want - 1))));
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

inline SpectralImage take_wavelengths(const SpectralImage& img, const std::vector<int>& idx) {
    SpectralImage out(static_cast<int>(idx.size()), img.rows, img.cols);
    out.pitch_axial_mm = img.pitch_axial_mm;
    out.pitch_lateral_mm = img.pitch_lateral_mm;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out.wavelengths_nm.push_back(img.wavelengths_nm[idx[k]]);
        const double* src = img.data.data() + img.index(idx[k], 0, 0);
        double* dst = out.data.data() + out.index(static_cast<int>(k), 0, 0);
        std::copy(src, src + static_cast<std::size_t>(img.rows) * img.cols, dst);
    }
    return out;
}

namespace detail {

struct BenchCell {
    int snr_index = 0;
    int lambda_index = 0;
    int seed_index = 0;
};

inline BenchRow make_row(const BenchSpec& spec, const BenchCell& cell, const std::string& method,
                         const MetricsReport& rep, double noisy_snr) {
    BenchRow row;
    row.input_snr_db = spec.input_snr_db[cell.snr_index];
    row.lambda = spec.wavelength_counts[cell.lambda_index];
    row.seed = cell.seed_index;
    row.method = method;
    row.snr_out_db = rep.snr_db_median;
    row.delta_snr_db = rep.snr_db_median - noisy_snr;
    row.psnr_db = rep.psnr_db_median;
    row.psnr_db_standard = rep.psnr_db_standard_median;
    row.ssim = rep.ssim_median;
    row.ssim_standard = rep.ssim_standard_median;
    row.pearson_r = rep.pearson_r;
    return row;
}

}  // namespace detail

inline std::vector<BenchRow> bench_run(const BenchSpec& spec) {
    spec.check();
    SimConfig phantom_cfg = spec.phantom;
    phantom_cfg.frames = 0;
    const SpectralImage clean_full = generate_clean(phantom_cfg);
    const int full = clean_full.lambda;

    // Pre-derive each wavelength subset once.
    std::vector<SpectralImage> cleans;
    std::vector<Rect> rois;
    for (int want : spec.wavelength_counts) {
        cleans.push_back(take_wavelengths(clean_full, wavelength_subset_indices(full, want)));
        rois.push_back(signal_roi(cleans.back()));
    }

    std::vector<detail::BenchCell> cells;
    for (int si = 0; si < static_cast<int>(spec.input_snr_db.size()); ++si)
        for (int li = 0; li < static_cast<int>(spec.wavelength_counts.size()); ++li)
            for (int ki = 0; ki < spec.seeds; ++ki) cells.push_back({si, li, ki});

    std::vector<std::vector<BenchRow>> cell_rows(cells.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const detail::BenchCell& cell = cells[ci];
        const SpectralImage& clean = cleans[cell.lambda_index];
        const Rect& roi = rois[cell.lambda_index];
        const double snr_in = spec.input_snr_db[cell.snr_index];

        std::uint64_t cell_seed = substream_seed(spec.base_seed, cell.lambda_index);
        cell_seed = substream_seed(cell_seed, cell.snr_index);
        cell_seed = substream_seed(cell_seed, cell.seed_index);

        const SpectralImage noisy = inject_noise(clean, snr_in, substream_seed(cell_seed, 0));
        const MetricsReport noisy_rep = evaluate(noisy, clean, roi);

        for (const std::string& method : spec.methods) {
            MetricsReport rep;
            if (method == "noisy") {
                rep = noisy_rep;
            } else if (method == "spade") {
                DenoiseConfig cfg = spec.denoise;
                cfg.method = Method::spade;
                cfg.train.seed = substream_seed(cell_seed, 1);
                rep = evaluate(denoise_spade(noisy, cfg), clean, roi);
            } else if (method == "zsn2n" || method == "zsn2n_only") {
                DenoiseConfig cfg = spec.denoise;
                cfg.method = Method::zsn2n_only;
                cfg.stage_order = StageOrder::zsn2n_only;
                cfg.train.seed = substream_seed(cell_seed, 1);
                rep = evaluate(denoise_spade(noisy, cfg), clean, roi);
            } else if (method == "bm3d" || method == "bm3d_vanilla") {
                rep = evaluate(denoise_vanilla_bm3d(noisy, spec.denoise), clean, roi);
            } else if (method == "average") {
                std::vector<SpectralImage> frames{noisy};
                for (int i = 1; i < spec.average_frames; ++i)
                    frames.push_back(inject_noise(clean, snr_in, substream_seed(cell_seed, i)));
                rep = evaluate(denoise_average(frames), clean, roi);
            } else {
                throw ValidationError("bench: unknown method '" + method + "'");
            }
            cell_rows[ci].push_back(
                detail::make_row(spec, cell, method, rep, noisy_rep.snr_db_median));
        }
    }

    std::vector<BenchRow> rows;
    for (auto& r : cell_rows) rows.insert(rows.end(), r.begin(), r.end());
    std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
        if (a.input_snr_db != b.input_snr_db) return a.input_snr_db < b.input_snr_db;
        if (a.lambda != b.lambda) return a.lambda < b.lambda;
        if (a.seed != b.seed) return a.seed < b.seed;
        return a.method < b.method;
    });
    return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    auto num = [](double x) {
        if (std::isinf(x)) return std::string(x > 0 ? "inf" : "-inf");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", x);
        return std::string(buf);
    };
    std::string out =
        "input_snr_db,lambda,seed,method,snr_out_db,delta_snr_db,psnr_db,psnr_db_standard,"
        "ssim,ssim_standard,pearson_r\n";
    for (const BenchRow& r : rows) {
        out += num(r.input_snr_db) + "," + std::to_string(r.lambda) + "," +
               std::to_string(r.seed) + "," + r.method + "," + num(r.snr_out_db) + "," +
               num(r.delta_snr_db) + "," + num(r.psnr_db) + "," + num(r.psnr_db_standard) + "," +
               num(r.ssim) + "," + num(r.ssim_standard) + "," + num(r.pearson_r) + "\n";
    }
    return out;
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open " + path + " for writing");
    const std::string csv = bench_csv(rows);
    f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    if (!f) throw FileError("short write to " + path);
}

}  // namespace spade
