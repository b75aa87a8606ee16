#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "spade/errors.hpp"
#include "spade/phantom.hpp"
#include "spade/pipeline.hpp"

namespace spade {

// JSON views of the run configurations. Every field has a default, so a
// config file only states what it changes; unknown keys are rejected to catch
// typos early.

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot open " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

namespace detail {

template <typename T>
T field_as(const nlohmann::json& j, const std::string& key, const T& fallback,
           const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(where + "." + key + ": wrong type");
    }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) ok = true;
        if (!ok) throw ParseError(where + ": unknown field '" + key + "'");
    }
}

}  // namespace detail

inline Method method_from_string(const std::string& s) {
    if (s == "spade") return Method::spade;
    if (s == "bm3d" || s == "bm3d_vanilla") return Method::bm3d_vanilla;
    if (s == "zsn2n" || s == "zsn2n_only") return Method::zsn2n_only;
    if (s == "average") return Method::average;
    throw ParseError("method: unknown value '" + s + "'");
}

inline StageOrder stage_order_from_string(const std::string& s) {
    if (s == "bm3d_then_zsn2n") return StageOrder::bm3d_then_zsn2n;
    if (s == "zsn2n_then_bm3d") return StageOrder::zsn2n_then_bm3d;
    if (s == "bm3d_only") return StageOrder::bm3d_only;
    if (s == "zsn2n_only") return StageOrder::zsn2n_only;
    throw ParseError("stage_order: unknown value '" + s + "'");
}

inline Bm3dParams bm3d_params_from_json(const nlohmann::json& j, Bm3dParams base = {}) {
    using detail::field_as;
    detail::reject_unknown(j,
                           {"block_rows", "block_cols", "step", "search_radius_rows",
                            "max_matches_hard", "max_matches_wiener", "match_threshold",
                            "hard_lambda", "sigma"},
                           "bm3d");
    base.block_rows = field_as(j, "block_rows", base.block_rows, "bm3d");
    base.block_cols = field_as(j, "block_cols", base.block_cols, "bm3d");
    base.step = field_as(j, "step", base.step, "bm3d");
    base.search_radius_rows = field_as(j, "search_radius_rows", base.search_radius_rows, "bm3d");
    base.max_matches_hard = field_as(j, "max_matches_hard", base.max_matches_hard, "bm3d");
    base.max_matches_wiener = field_as(j, "max_matches_wiener", base.max_matches_wiener, "bm3d");
    base.match_threshold = field_as(j, "match_threshold", base.match_threshold, "bm3d");
    base.hard_lambda = field_as(j, "hard_lambda", base.hard_lambda, "bm3d");
    base.sigma = field_as(j, "sigma", base.sigma, "bm3d");
    base.check();
    return base;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    using detail::field_as;
    detail::reject_unknown(
        j, {"channels", "iterations", "step_size", "leaky_slope", "seed", "beta1", "beta2",
            "epsilon"},
        "train");
    base.channels = field_as(j, "channels", base.channels, "train");
    base.iterations = field_as(j, "iterations", base.iterations, "train");
    base.step_size = field_as(j, "step_size", base.step_size, "train");
    base.leaky_slope = field_as(j, "leaky_slope", base.leaky_slope, "train");
    base.seed = field_as(j, "seed", base.seed, "train");
    base.beta1 = field_as(j, "beta1", base.beta1, "train");
    base.beta2 = field_as(j, "beta2", base.beta2, "train");
    base.epsilon = field_as(j, "epsilon", base.epsilon, "train");
    base.check();
    return base;
}

inline DenoiseConfig denoise_config_from_json(const nlohmann::json& j, DenoiseConfig base = {}) {
    using detail::field_as;
    detail::reject_unknown(j,
                           {"method", "stage_order", "bm3d", "train", "clamp_nonnegative",
                            "sigma_override"},
                           "denoise");
    if (j.contains("method")) base.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("stage_order"))
        base.stage_order = stage_order_from_string(j.at("stage_order").get<std::string>());
    if (j.contains("bm3d")) base.bm3d = bm3d_params_from_json(j.at("bm3d"), base.bm3d);
    if (j.contains("train")) base.train = train_config_from_json(j.at("train"), base.train);
    base.clamp_nonnegative = field_as(j, "clamp_nonnegative", base.clamp_nonnegative, "denoise");
    if (j.contains("sigma_override") && !j.at("sigma_override").is_null())
        base.sigma_override = j.at("sigma_override").get<double>();
    return base;
}

inline SpectrumLibrary spectra_from_json(const nlohmann::json& j,
                                         const std::vector<double>& wavelengths) {
    detail::reject_unknown(j, {"builtin", "csv", "names", "matrix"}, "spectra");
    if (j.contains("builtin")) {
        const std::string name = j.at("builtin").get<std::string>();
        if (name != "synthetic3") throw ParseError("spectra.builtin: unknown '" + name + "'");
        return synthetic_library(wavelengths);
    }
    if (j.contains("csv")) return load_spectra_csv(j.at("csv").get<std::string>());
    SpectrumLibrary lib;
    lib.wavelengths_nm = wavelengths;
    lib.names = detail::field_as(j, "names", std::vector<std::string>{}, "spectra");
    const auto rows = detail::field_as(j, "matrix", std::vector<std::vector<double>>{}, "spectra");
    if (rows.size() != wavelengths.size())
        throw ParseError("spectra.matrix: need one row per wavelength");
    for (const auto& row : rows) {
        if (row.size() != lib.names.size())
            throw ParseError("spectra.matrix: row width differs from names");
        lib.absorption.insert(lib.absorption.end(), row.begin(), row.end());
    }
    validate(lib);
    return lib;
}

inline SimConfig sim_config_from_json(const nlohmann::json& j,
                                      SimConfig base = default_sim_config()) {
    using detail::field_as;
    detail::reject_unknown(j,
                           {"grid", "pitch_mm", "extent_mm", "wavelengths_nm", "spectra",
                            "targets", "psf_mm", "mu_eff_per_mm", "noise_snr_db", "frames",
                            "seed"},
                           "sim");
    if (j.contains("grid")) {
        base.rows = field_as(j.at("grid"), "rows", base.rows, "sim.grid");
        base.cols = field_as(j.at("grid"), "cols", base.cols, "sim.grid");
    }
    if (j.contains("pitch_mm")) {
        base.pitch_axial_mm = field_as(j.at("pitch_mm"), "axial", base.pitch_axial_mm, "sim.pitch_mm");
        base.pitch_lateral_mm =
            field_as(j.at("pitch_mm"), "lateral", base.pitch_lateral_mm, "sim.pitch_mm");
    }
    if (j.contains("extent_mm")) {
        base.extent_axial_mm =
            field_as(j.at("extent_mm"), "axial", base.extent_axial_mm, "sim.extent_mm");
        base.extent_lateral_mm =
            field_as(j.at("extent_mm"), "lateral", base.extent_lateral_mm, "sim.extent_mm");
    }
    bool bands_changed = false;
    if (j.contains("wavelengths_nm")) {
        base.wavelengths_nm = j.at("wavelengths_nm").get<std::vector<double>>();
        bands_changed = true;
    }
    if (j.contains("spectra"))
        base.library = spectra_from_json(j.at("spectra"), base.wavelengths_nm);
    else if (bands_changed)
        base.library = synthetic_library(base.wavelengths_nm);
    if (j.contains("targets")) {
        base.targets.clear();
        for (const auto& t : j.at("targets")) {
            detail::reject_unknown(
                t, {"lateral_mm", "depth_mm", "diameter_mm", "amplitude", "mix"}, "sim.target");
            TargetSpec spec;
            spec.center_lateral_mm = field_as(t, "lateral_mm", 0.0, "sim.target");
            spec.center_depth_mm = field_as(t, "depth_mm", 0.0, "sim.target");
            spec.diameter_mm = field_as(t, "diameter_mm", 0.65, "sim.target");
            spec.amplitude = field_as(t, "amplitude", 1.0, "sim.target");
            if (!t.contains("mix")) throw ParseError("sim.target: missing mix");
            for (const auto& [name, w] : t.at("mix").items())
                spec.mix.push_back({name, w.get<double>()});
            base.targets.push_back(spec);
        }
    }
    if (j.contains("psf_mm")) {
        base.psf_sigma_axial_mm =
            field_as(j.at("psf_mm"), "axial", base.psf_sigma_axial_mm, "sim.psf_mm");
        base.psf_sigma_lateral_mm =
            field_as(j.at("psf_mm"), "lateral", base.psf_sigma_lateral_mm, "sim.psf_mm");
    }
    base.mu_eff_per_mm = field_as(j, "mu_eff_per_mm", base.mu_eff_per_mm, "sim");
    base.noise_snr_db = field_as(j, "noise_snr_db", base.noise_snr_db, "sim");
    base.frames = field_as(j, "frames", base.frames, "sim");
    base.seed = field_as(j, "seed", base.seed, "sim");
    if (base.frames < 0) throw ParseError("sim.frames: must be >= 0");
    return base;
}

}  // namespace spade
