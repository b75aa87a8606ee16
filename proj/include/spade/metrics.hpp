#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "spade/errors.hpp"
#include "spade/tensor.hpp"

namespace spade {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Half-open pixel rectangle [r0,r1) x [c0,c1).
struct Rect {
    int r0 = 0, c0 = 0, r1 = 0, c1 = 0;
    int rows() const { return r1 - r0; }
    int cols() const { return c1 - c0; }
    bool valid_in(int rows_, int cols_) const {
        return r0 >= 0 && c0 >= 0 && r1 > r0 && c1 > c0 && r1 <= rows_ && c1 <= cols_;
    }
};

enum class MetricVariant {
    as_written,  // formulas exactly as the framework documents print them
    standard     // textbook definitions
};

// How to pick the peak and background-noise region for the SNR measurement.
// In auto mode the noise patch sits in the peak's row band, offset laterally
// by at least lateral_offset_mm (never less than 10 pixels) toward the farther
// image edge.
struct RegionSpec {
    enum class Kind { auto_select, explicit_rect } kind = Kind::auto_select;
    Rect noise_rect;  // used when explicit
    double lateral_offset_mm = 1.0;
    double depth_halfband_mm = 0.5;
    int patch_rows = 20;
    int patch_cols = 20;

    static RegionSpec explicit_region(Rect r) {
        RegionSpec s;
        s.kind = Kind::explicit_rect;
        s.noise_rect = r;
        return s;
    }
};

struct ResolvedRegions {
    int peak_row = 0;
    int peak_col = 0;
    Rect noise_rect;
};

struct SnrResult {
    double snr_db = 0.0;
    bool zero_noise = false;  // sigma was exactly 0; snr_db holds +inf
    int peak_row = 0;
    int peak_col = 0;
    Rect noise_rect;
};

namespace detail {

inline std::pair<int, int> argmax_abs(const Plane& x) {
    int pr = 0, pc = 0;
    double best = -1.0;
    for (int r = 0; r < x.rows; ++r) {
        const double* row = x.row(r);
        for (int c = 0; c < x.cols; ++c) {
            const double a = std::abs(row[c]);
            if (a > best) {
                best = a;
                pr = r;
                pc = c;
            }
        }
    }
    return {pr, pc};
}

inline double patch_stddev(const Plane& x, const Rect& rect) {
    double sum = 0.0, sq = 0.0;
    const double n = static_cast<double>(rect.rows()) * rect.cols();
    for (int r = rect.r0; r < rect.r1; ++r) {
        const double* row = x.row(r);
        for (int c = rect.c0; c < rect.c1; ++c) {
            sum += row[c];
            sq += row[c] * row[c];
        }
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sq / n - mean * mean);
    return std::sqrt(var);
}

}  // namespace detail

// Locate the peak and the noise patch on `x` (typically the reference image
// when comparisons across methods must share regions).
inline ResolvedRegions resolve_regions(const Plane& x, double pitch_lateral_mm,
                                       const RegionSpec& spec) {
    validate(x, "snr input");
    ResolvedRegions out;
    auto [pr, pc] = detail::argmax_abs(x);
    out.peak_row = pr;
    out.peak_col = pc;

    if (spec.kind == RegionSpec::Kind::explicit_rect) {
        if (!spec.noise_rect.valid_in(x.rows, x.cols))
            throw ValidationError("snr: explicit noise rect out of bounds");
        out.noise_rect = spec.noise_rect;
        return out;
    }

    if (pitch_lateral_mm <= 0.0) throw ValidationError("snr: pitch must be positive");
    const int offset_px =
        std::max(static_cast<int>(std::ceil(spec.lateral_offset_mm / pitch_lateral_mm)), 10);
    const int band_px = static_cast<int>(std::ceil(spec.depth_halfband_mm / pitch_lateral_mm));
    const int patch_rows = std::min(std::max(spec.patch_rows, 2 * band_px + 1), x.rows);
    const int patch_cols = spec.patch_cols;

    Rect rect;
    rect.r0 = std::clamp(pr - patch_rows / 2, 0, x.rows - patch_rows);
    rect.r1 = rect.r0 + patch_rows;
    const bool go_right = (x.cols - 1 - pc) >= pc;
    if (go_right) {
        rect.c0 = pc + offset_px;
        rect.c1 = rect.c0 + patch_cols;
        if (rect.c1 > x.cols)
            throw NoRoom("snr: no noise patch fits " + std::to_string(offset_px) +
                         "px right of the peak");
    } else {
        rect.c1 = pc - offset_px + 1;
        rect.c0 = rect.c1 - patch_cols;
        if (rect.c0 < 0)
            throw NoRoom("snr: no noise patch fits " + std::to_string(offset_px) +
                         "px left of the peak");
    }
    out.noise_rect = rect;
    return out;
}

inline SnrResult snr_from_regions(const Plane& x, const ResolvedRegions& reg) {
    SnrResult res;
    res.peak_row = reg.peak_row;
    res.peak_col = reg.peak_col;
    res.noise_rect = reg.noise_rect;
    const double peak = std::abs(x.at(reg.peak_row, reg.peak_col));
    const double sigma = detail::patch_stddev(x, reg.noise_rect);
    if (sigma == 0.0) {
        res.zero_noise = true;
        res.snr_db = kInf;
        return res;
    }
    res.snr_db = 20.0 * std::log10(peak / sigma);
    return res;
}

// SNR = 20*log10(|peak| / sigma_background), regions resolved on x itself.
inline SnrResult snr_db(const Plane& x, double pitch_lateral_mm,
                        const RegionSpec& spec = RegionSpec{}) {
    return snr_from_regions(x, resolve_regions(x, pitch_lateral_mm, spec));
}

// Peak SNR against a reference. The as_written variant divides peak^2 by the
// root of the mean squared error, matching the framework's printed formula;
// the standard variant divides by the mean squared error itself.
inline double psnr_db(const Plane& test, const Plane& ref,
                      MetricVariant variant = MetricVariant::as_written) {
    if (test.rows != ref.rows || test.cols != ref.cols)
        throw ShapeMismatch("psnr: test and reference shapes differ");
    double peak = 0.0, mse = 0.0;
    bool identical = true;
    for (std::size_t k = 0; k < ref.v.size(); ++k) {
        peak = std::max(peak, std::abs(ref.v[k]));
        const double d = ref.v[k] - test.v[k];
        if (d != 0.0) identical = false;
        mse += d * d;
    }
    if (identical) return kInf;
    mse /= static_cast<double>(ref.v.size());
    const double denom = variant == MetricVariant::as_written ? std::sqrt(mse) : mse;
    return 10.0 * std::log10(peak * peak / denom);
}

// Single-window SSIM over global statistics (population standard deviations).
// The as_written variant roots the denominator, so as_written SSIM(x,x) != 1
// in general; the identity holds for the standard variant. Pass c1/c2 < 0 to
// use the defaults (0.01*L)^2 and (0.03*L)^2 with L = max |ref|.
inline double ssim(const Plane& test, const Plane& ref,
                   MetricVariant variant = MetricVariant::as_written, double c1 = -1.0,
                   double c2 = -1.0) {
    if (test.rows != ref.rows || test.cols != ref.cols)
        throw ShapeMismatch("ssim: test and reference shapes differ");
    const double n = static_cast<double>(ref.v.size());
    double mr = 0.0, mt = 0.0, L = 0.0;
    for (std::size_t k = 0; k < ref.v.size(); ++k) {
        mr += ref.v[k];
        mt += test.v[k];
        L = std::max(L, std::abs(ref.v[k]));
    }
    mr /= n;
    mt /= n;
    double vr = 0.0, vt = 0.0, cov = 0.0;
    for (std::size_t k = 0; k < ref.v.size(); ++k) {
        const double dr = ref.v[k] - mr;
        const double dt = test.v[k] - mt;
        vr += dr * dr;
        vt += dt * dt;
        cov += dr * dt;
    }
    vr /= n;
    vt /= n;
    cov /= n;
    if (c1 < 0.0) c1 = 0.01 * L * 0.01 * L;
    if (c2 < 0.0) c2 = 0.03 * L * 0.03 * L;
    const double num = (2.0 * mr * mt + c1) * (2.0 * cov + c2);
    const double den = (mr * mr + mt * mt + c1) * (vr + vt + c2);
    return variant == MetricVariant::as_written ? num / std::sqrt(den) : num / den;
}

// Non-default option: mean of standard SSIM over sliding win x win windows.
inline double ssim_windowed(const Plane& test, const Plane& ref, int win = 8) {
    if (test.rows != ref.rows || test.cols != ref.cols)
        throw ShapeMismatch("ssim: test and reference shapes differ");
    if (ref.rows < win || ref.cols < win) return ssim(test, ref, MetricVariant::standard);
    double L = 0.0;
    for (double x : ref.v) L = std::max(L, std::abs(x));
    const double c1 = 0.01 * L * 0.01 * L, c2 = 0.03 * L * 0.03 * L;
    double acc = 0.0;
    std::size_t count = 0;
    const double n = static_cast<double>(win) * win;
    for (int r0 = 0; r0 + win <= ref.rows; ++r0)
        for (int c0 = 0; c0 + win <= ref.cols; ++c0) {
            double mr = 0.0, mt = 0.0;
            for (int r = r0; r < r0 + win; ++r)
                for (int c = c0; c < c0 + win; ++c) {
                    mr += ref.at(r, c);
                    mt += test.at(r, c);
                }
            mr /= n;
            mt /= n;
            double vr = 0.0, vt = 0.0, cov = 0.0;
            for (int r = r0; r < r0 + win; ++r)
                for (int c = c0; c < c0 + win; ++c) {
                    const double dr = ref.at(r, c) - mr;
                    const double dt = test.at(r, c) - mt;
                    vr += dr * dr;
                    vt += dt * dt;
                    cov += dr * dt;
                }
            acc += (2.0 * mr * mt + c1) * (2.0 * cov / n + c2) /
                   ((mr * mr + mt * mt + c1) * (vr / n + vt / n + c2));
            ++count;
        }
    return acc / static_cast<double>(count);
}

namespace detail {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cov += (a[i] - ma) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw ZeroVariance("pearson: constant spectrum");
    return cov / std::sqrt(va * vb);
}

inline std::vector<double> roi_mean_spectrum(const SpectralImage& img, const Rect& roi) {
    std::vector<double> s(img.lambda, 0.0);
    const double n = static_cast<double>(roi.rows()) * roi.cols();
    for (int j = 0; j < img.lambda; ++j) {
        double acc = 0.0;
        for (int r = roi.r0; r < roi.r1; ++r)
            for (int c = roi.c0; c < roi.c1; ++c) acc += img.at(j, r, c);
        s[j] = acc / n;
    }
    return s;
}

}  // namespace detail

// Pearson correlation between the ROI-mean spectra of test and reference.
inline double pearson_spectrum(const SpectralImage& test, const SpectralImage& ref,
                               const Rect& roi) {
    if (test.lambda != ref.lambda || test.rows != ref.rows || test.cols != ref.cols)
        throw ShapeMismatch("pearson: test and reference shapes differ");
    if (test.lambda < 2) throw TooFewWavelengths("pearson: need at least 2 wavelengths");
    if (!roi.valid_in(test.rows, test.cols)) throw ValidationError("pearson: roi out of bounds");
    return detail::pearson(detail::roi_mean_spectrum(test, roi),
                           detail::roi_mean_spectrum(ref, roi));
}

// Option: mean over ROI pixels of the per-pixel spectral correlation.
inline double pearson_spectrum_perpixel(const SpectralImage& test, const SpectralImage& ref,
                                        const Rect& roi) {
    if (test.lambda != ref.lambda || test.rows != ref.rows || test.cols != ref.cols)
        throw ShapeMismatch("pearson: test and reference shapes differ");
    if (test.lambda < 2) throw TooFewWavelengths("pearson: need at least 2 wavelengths");
    if (!roi.valid_in(test.rows, test.cols)) throw ValidationError("pearson: roi out of bounds");
    double acc = 0.0;
    std::size_t count = 0;
    std::vector<double> a(test.lambda), b(test.lambda);
    for (int r = roi.r0; r < roi.r1; ++r)
        for (int c = roi.c0; c < roi.c1; ++c) {
            for (int j = 0; j < test.lambda; ++j) {
                a[j] = test.at(j, r, c);
                b[j] = ref.at(j, r, c);
            }
            acc += detail::pearson(a, b);
            ++count;
        }
    return acc / static_cast<double>(count);
}

struct WavelengthMetrics {
    double wavelength_nm = 0.0;
    double snr_db = 0.0;
    double psnr_db = 0.0;
    double psnr_db_standard = 0.0;
    double ssim = 0.0;
    double ssim_standard = 0.0;
};

struct MetricsReport {
    std::vector<WavelengthMetrics> per_wavelength;
    double snr_db_median = 0.0;
    double psnr_db_median = 0.0;
    double psnr_db_standard_median = 0.0;
    double ssim_median = 0.0;
    double ssim_standard_median = 0.0;
    double pearson_r = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline nlohmann::json json_number(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

}  // namespace detail

// Per-wavelength SNR/PSNR/SSIM plus the spectral Pearson correlation over a
// signal ROI. SNR regions are resolved on the reference frame so that every
// method is measured at the same peak and background patch.
inline MetricsReport evaluate(const SpectralImage& test, const SpectralImage& ref, const Rect& roi,
                              const RegionSpec& regions = RegionSpec{}) {
    validate(test, "evaluate test");
    validate(ref, "evaluate reference");
    if (test.lambda != ref.lambda || test.rows != ref.rows || test.cols != ref.cols)
        throw ShapeMismatch("evaluate: test and reference shapes differ");
    if (test.wavelengths_nm != ref.wavelengths_nm)
        throw WavelengthMismatch("evaluate: wavelength lists differ");

    MetricsReport report;
    std::vector<double> snrs, psnrs, psnrs_std, ssims, ssims_std;
    for (int j = 0; j < test.lambda; ++j) {
        const Plane ft = test.frame(j);
        const Plane fr = ref.frame(j);
        WavelengthMetrics m;
        m.wavelength_nm = test.wavelengths_nm[j];
        const ResolvedRegions reg = resolve_regions(fr, ref.pitch_lateral_mm, regions);
        m.snr_db = snr_from_regions(ft, reg).snr_db;
        m.psnr_db = psnr_db(ft, fr, MetricVariant::as_written);
        m.psnr_db_standard = psnr_db(ft, fr, MetricVariant::standard);
        m.ssim = ssim(ft, fr, MetricVariant::as_written);
        m.ssim_standard = ssim(ft, fr, MetricVariant::standard);
        report.per_wavelength.push_back(m);
        snrs.push_back(m.snr_db);
        psnrs.push_back(m.psnr_db);
        psnrs_std.push_back(m.psnr_db_standard);
        ssims.push_back(m.ssim);
        ssims_std.push_back(m.ssim_standard);
    }
    report.snr_db_median = detail::median(snrs);
    report.psnr_db_median = detail::median(psnrs);
    report.psnr_db_standard_median = detail::median(psnrs_std);
    report.ssim_median = detail::median(ssims);
    report.ssim_standard_median = detail::median(ssims_std);
    report.pearson_r = test.lambda >= 2 ? pearson_spectrum(test, ref, roi) : 1.0;
    return report;
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["per_wavelength"] = nlohmann::json::array();
    for (const auto& m : r.per_wavelength) {
        nlohmann::json e;
        e["nm"] = m.wavelength_nm;
        e["snr_db"] = detail::json_number(m.snr_db);
        e["psnr_db"] = detail::json_number(m.psnr_db);
        e["psnr_db_standard"] = detail::json_number(m.psnr_db_standard);
        e["ssim"] = detail::json_number(m.ssim);
        e["ssim_standard"] = detail::json_number(m.ssim_standard);
        j["per_wavelength"].push_back(e);
    }
    j["aggregate"] = {{"snr_db_median", detail::json_number(r.snr_db_median)},
                      {"psnr_db_median", detail::json_number(r.psnr_db_median)},
                      {"psnr_db_standard_median", detail::json_number(r.psnr_db_standard_median)},
                      {"ssim_median", detail::json_number(r.ssim_median)},
                      {"ssim_standard_median", detail::json_number(r.ssim_standard_median)}};
    j["pearson_r"] = detail::json_number(r.pearson_r);
    return j;
}

}  // namespace spade
