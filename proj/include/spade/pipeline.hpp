#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spade/bm3d.hpp"
#include "spade/errors.hpp"
#include "spade/sddr.hpp"
#include "spade/tensor.hpp"
#include "spade/zsn2n.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spade {

enum class Method { spade, bm3d_vanilla, zsn2n_only, average };

enum class StageOrder { bm3d_then_zsn2n, zsn2n_then_bm3d, bm3d_only, zsn2n_only };

struct DenoiseConfig {
    Method method = Method::spade;
    StageOrder stage_order = StageOrder::bm3d_then_zsn2n;
    Bm3dParams bm3d;
    TrainConfig train;
    bool clamp_nonnegative = false;
    std::optional<double> sigma_override;
};

struct StageStats {
    double sigma_used = -1.0;
    bool ran_bm3d = false;
    bool ran_zsn2n = false;
    TrainStats train;
};

// Full flow: normalize to [0,1], reassemble to the 2D plane, run the
// configured stages, reassemble back and undo the normalization. The noise
// level for the collaborative-filter stage is estimated on the normalized
// plane unless overridden.
inline SpectralImage denoise_spade(const SpectralImage& img, const DenoiseConfig& cfg,
                                   StageStats* stats = nullptr) {
    validate(img);
    auto [norm, rec] = normalize(img);
    SddrImage s = sddr_forward(norm);

    Bm3dParams bp = cfg.bm3d;
    if (cfg.sigma_override) bp.sigma = *cfg.sigma_override;
    const bool wants_bm3d = cfg.stage_order != StageOrder::zsn2n_only;
    const bool wants_zsn2n = cfg.stage_order != StageOrder::bm3d_only;

    if (wants_bm3d && bp.sigma < 0.0) bp.sigma = estimate_sigma(s.plane);
    if (stats) {
        stats->sigma_used = bp.sigma;
        stats->ran_bm3d = wants_bm3d;
        stats->ran_zsn2n = wants_zsn2n;
    }

    auto run_zsn2n = [&](SddrImage& im) {
        im.plane = denoise_zsn2n(im.plane, cfg.train, stats ? &stats->train : nullptr);
    };
    switch (cfg.stage_order) {
        case StageOrder::bm3d_then_zsn2n:
            s = denoise_bm3d(s, bp);
            run_zsn2n(s);
            break;
        case StageOrder::zsn2n_then_bm3d:
            run_zsn2n(s);
            s = denoise_bm3d(s, bp);
            break;
        case StageOrder::bm3d_only:
            s = denoise_bm3d(s, bp);
            break;
        case StageOrder::zsn2n_only:
            run_zsn2n(s);
            break;
    }

    SpectralImage out = denormalize(sddr_inverse(s), rec);
    if (cfg.clamp_nonnegative)
        for (double& x : out.data) x = std::max(0.0, x);
    return out;
}

// Baseline: each wavelength frame denoised independently with whole-plane
// matching. Sigma is estimated per frame unless overridden.
inline SpectralImage denoise_vanilla_bm3d(const SpectralImage& img, const DenoiseConfig& cfg,
                                          StageStats* stats = nullptr) {
    validate(img);
    auto [norm, rec] = normalize(img);
    SpectralImage out = norm;
    if (stats) stats->ran_bm3d = true;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int j = 0; j < norm.lambda; ++j) {
        Bm3dParams bp = cfg.bm3d;
        if (cfg.sigma_override) bp.sigma = *cfg.sigma_override;
        Plane frame = norm.frame(j);
        frame = denoise_bm3d(frame, bp);
        out.set_frame(j, frame);
    }
    out = denormalize(out, rec);
    if (cfg.clamp_nonnegative)
        for (double& x : out.data) x = std::max(0.0, x);
    return out;
}

// Elementwise mean across repeated acquisitions of the same scene.
inline SpectralImage denoise_average(const std::vector<SpectralImage>& frames) {
    if (frames.empty()) throw EmptyInput("average: no frames");
    const SpectralImage& first = frames.front();
    validate(first, "average frame 0");
    SpectralImage out = first;
    for (std::size_t i = 1; i < frames.size(); ++i) {
        const SpectralImage& f = frames[i];
        if (f.lambda != first.lambda || f.rows != first.rows || f.cols != first.cols)
            throw ShapeMismatch("average: frame " + std::to_string(i) + " shape differs");
        if (f.wavelengths_nm != first.wavelengths_nm)
            throw WavelengthMismatch("average: frame " + std::to_string(i) +
                                     " wavelengths differ");
        for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += f.data[k];
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (double& x : out.data) x *= inv;
    return out;
}

}  // namespace spade
