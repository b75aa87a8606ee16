#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spade/errors.hpp"
#include "spade/metrics.hpp"
#include "spade/rng.hpp"
#include "spade/tensor.hpp"

namespace spade {

// Image-domain phantom generator and spectral unmixing. The forward model is
// deliberately simple: disk targets convolved with a Gaussian point-spread
// function, scaled per wavelength by the target's mixture spectrum and by an
// exponential fluence decay over depth, plus calibrated white Gaussian noise.

struct SpectrumLibrary {
    std::vector<std::string> names;       // K chromophores
    std::vector<double> wavelengths_nm;   // length lambda, strictly increasing
    std::vector<double> absorption;      // lambda x K, row-major: absorption[j*K + k]

    int chromophores() const { return static_cast<int>(names.size()); }
    int bands() const { return static_cast<int>(wavelengths_nm.size()); }
    double at(int j, int k) const { return absorption[static_cast<std::size_t>(j) * names.size() + k]; }
};

inline void validate(const SpectrumLibrary& lib) {
    const int K = lib.chromophores();
    const int L = lib.bands();
    if (K < 1) throw ValidationError("spectrum library: no chromophores");
    if (L < 1) throw ValidationError("spectrum library: no wavelengths");
    if (lib.absorption.size() != static_cast<std::size_t>(K) * L)
        throw ShapeMismatch("spectrum library: matrix size != lambda*K");
    for (int j = 1; j < L; ++j)
        if (lib.wavelengths_nm[j] <= lib.wavelengths_nm[j - 1])
            throw NonMonotoneWavelengths("spectrum library: wavelengths must increase");
    for (double a : lib.absorption)
        if (!(a >= 0.0) || !std::isfinite(a))
            throw ValidationError("spectrum library: absorption values must be finite and >= 0");
    for (int k = 0; k < K; ++k) {
        double colmax = 0.0;
        for (int j = 0; j < L; ++j) colmax = std::max(colmax, lib.at(j, k));
        if (colmax == 0.0)
            throw ValidationError("spectrum library: column '" + lib.names[k] + "' is all zero");
    }
}

// Constructed test spectra over the given bands: a Gaussian bump peaking at
// 780 nm standing in for a contrast agent, plus one ascending and one
// descending ramp standing in for the two hemoglobin endmembers. Real
// absorption tables are supplied by the user via CSV.
inline SpectrumLibrary synthetic_library(const std::vector<double>& wavelengths_nm) {
    SpectrumLibrary lib;
    lib.names = {"agent", "hbo2_like", "hbr_like"};
    lib.wavelengths_nm = wavelengths_nm;
    const double lo = wavelengths_nm.front();
    const double hi = wavelengths_nm.back();
    const double span = hi > lo ? hi - lo : 1.0;
    lib.absorption.resize(wavelengths_nm.size() * 3);
    for (std::size_t j = 0; j < wavelengths_nm.size(); ++j) {
        const double nm = wavelengths_nm[j];
        const double t = (nm - lo) / span;
        lib.absorption[j * 3 + 0] = std::exp(-0.5 * std::pow((nm - 780.0) / 30.0, 2.0));
        lib.absorption[j * 3 + 1] = 0.2 + 0.8 * t;
        lib.absorption[j * 3 + 2] = 0.2 + 0.8 * (1.0 - t);
    }
    validate(lib);
    return lib;
}

// CSV format: header "wavelength_nm,<name1>,<name2>,...", one numeric row per
// band, '.' decimal separator, UTF-8.
inline SpectrumLibrary load_spectra_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ParseError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    SpectrumLibrary lib;
    {
        std::stringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ',') || cell != "wavelength_nm")
            throw ParseError(path + ": header must start with 'wavelength_nm'");
        while (std::getline(ss, cell, ',')) {
            if (cell.empty()) throw ParseError(path + ": empty chromophore name in header");
            lib.names.push_back(cell);
        }
    }
    if (lib.names.empty()) throw ParseError(path + ": header names no chromophores");

    int row = 1;
    while (std::getline(f, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                vals.push_back(v);
            } catch (const std::exception&) {
                throw ParseError(path + ": row " + std::to_string(row) + ": bad number '" + cell +
                                 "'");
            }
        }
        if (vals.size() != lib.names.size() + 1)
            throw ParseError(path + ": row " + std::to_string(row) + ": expected " +
                             std::to_string(lib.names.size() + 1) + " columns, got " +
                             std::to_string(vals.size()));
        lib.wavelengths_nm.push_back(vals[0]);
        lib.absorption.insert(lib.absorption.end(), vals.begin() + 1, vals.end());
    }
    if (lib.wavelengths_nm.empty()) throw ParseError(path + ": no data rows");
    for (std::size_t j = 1; j < lib.wavelengths_nm.size(); ++j)
        if (lib.wavelengths_nm[j] <= lib.wavelengths_nm[j - 1])
            throw NonMonotoneWavelengths(path + ": wavelengths must be strictly increasing");
    validate(lib);
    return lib;
}

struct TargetSpec {
    double center_lateral_mm = 0.0;
    double center_depth_mm = 0.0;
    double diameter_mm = 0.65;
    double amplitude = 1.0;
    // Chromophore name -> concentration weight.
    std::vector<std::pair<std::string, double>> mix;
};

struct SimConfig {
    int rows = 128;
    int cols = 128;
    double pitch_axial_mm = 0.195;
    double pitch_lateral_mm = 0.195;
    double extent_axial_mm = 41.6;
    double extent_lateral_mm = 41.6;
    std::vector<double> wavelengths_nm;
    SpectrumLibrary library;
    std::vector<TargetSpec> targets;
    double psf_sigma_axial_mm = 0.3;
    double psf_sigma_lateral_mm = 0.3;
    double mu_eff_per_mm = 0.05;
    double noise_snr_db = 15.0;
    int frames = 1;
    std::uint64_t seed = 42;
};

// Default acceptance-scale phantom: three small disk targets with distinct
// mixtures, placed so the automatic noise patch (right of the brightest
// target's peak) stays clear of signal.
inline SimConfig default_sim_config() {
    SimConfig cfg;
    cfg.wavelengths_nm.clear();
    for (int i = 0; i < 16; ++i) cfg.wavelengths_nm.push_back(700.0 + 10.0 * i);
    cfg.library = synthetic_library(cfg.wavelengths_nm);
    cfg.targets = {
        {8.0, 6.0, 0.65, 1.0, {{"agent", 1.0}}},
        {8.0, 12.0, 0.65, 0.9, {{"hbo2_like", 0.7}, {"hbr_like", 0.3}}},
        {16.0, 18.0, 0.65, 0.8, {{"hbr_like", 1.0}}},
    };
    return cfg;
}

namespace detail {

inline void separable_gaussian_blur(Plane& img, double sigma_r, double sigma_c) {
    auto blur_axis = [](Plane& p, double sigma, bool rows) {
        if (sigma <= 0.0) return;
        const int rad = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<double> kernel(2 * rad + 1);
        double sum = 0.0;
        for (int i = -rad; i <= rad; ++i) {
            kernel[i + rad] = std::exp(-0.5 * (i / sigma) * (i / sigma));
            sum += kernel[i + rad];
        }
        for (double& k : kernel) k /= sum;
        Plane out(p.rows, p.cols);
        for (int r = 0; r < p.rows; ++r)
            for (int c = 0; c < p.cols; ++c) {
                double acc = 0.0;
                for (int i = -rad; i <= rad; ++i) {
                    const int rr = rows ? r + i : r;
                    const int cc = rows ? c : c + i;
                    if (rr < 0 || rr >= p.rows || cc < 0 || cc >= p.cols) continue;
                    acc += kernel[i + rad] * p.at(rr, cc);
                }
                out.at(r, c) = acc;
            }
        p = std::move(out);
    };
    blur_axis(img, sigma_r, true);
    blur_axis(img, sigma_c, false);
}

}  // namespace detail

inline SpectralImage generate_clean(const SimConfig& cfg) {
    if (cfg.rows < 1 || cfg.cols < 1) throw ValidationError("phantom: empty grid");
    if (cfg.wavelengths_nm.empty()) throw ValidationError("phantom: no wavelengths");
    validate(cfg.library);
    if (cfg.library.wavelengths_nm != cfg.wavelengths_nm)
        throw WavelengthMismatch("phantom: library bands differ from config wavelengths");

    const double height_mm = cfg.rows * cfg.pitch_axial_mm;
    const double width_mm = cfg.cols * cfg.pitch_lateral_mm;
    const double img_h = std::min(height_mm, cfg.extent_axial_mm);
    const double img_w = std::min(width_mm, cfg.extent_lateral_mm);

    const int L = static_cast<int>(cfg.wavelengths_nm.size());
    SpectralImage out(L, cfg.rows, cfg.cols);
    out.wavelengths_nm = cfg.wavelengths_nm;
    out.pitch_axial_mm = cfg.pitch_axial_mm;
    out.pitch_lateral_mm = cfg.pitch_lateral_mm;

    for (std::size_t ti = 0; ti < cfg.targets.size(); ++ti) {
        const TargetSpec& t = cfg.targets[ti];
        const double rad = t.diameter_mm / 2.0;
        if (t.diameter_mm <= 0.0) throw ValidationError("phantom: target diameter must be > 0");
        if (t.center_lateral_mm - rad < 0.0 || t.center_lateral_mm + rad > img_w ||
            t.center_depth_mm - rad < 0.0 || t.center_depth_mm + rad > img_h)
            throw TargetOutOfBounds("phantom: target " + std::to_string(ti) +
                                    " leaves the imaged extent");

        // Per-wavelength weight of this target.
        std::vector<double> spectrum(L, 0.0);
        for (const auto& [name, wgt] : t.mix) {
            const auto it = std::find(cfg.library.names.begin(), cfg.library.names.end(), name);
            if (it == cfg.library.names.end())
                throw UnknownChromophore("phantom: target " + std::to_string(ti) + " uses '" +
                                         name + "'");
            const int k = static_cast<int>(it - cfg.library.names.begin());
            for (int j = 0; j < L; ++j) spectrum[j] += wgt * cfg.library.at(j, k);
        }

        Plane disk(cfg.rows, cfg.cols);
        for (int h = 0; h < cfg.rows; ++h) {
            const double z = (h + 0.5) * cfg.pitch_axial_mm;
            for (int w = 0; w < cfg.cols; ++w) {
                const double x = (w + 0.5) * cfg.pitch_lateral_mm;
                const double dz = z - t.center_depth_mm;
                const double dx = x - t.center_lateral_mm;
                if (dz * dz + dx * dx <= rad * rad) disk.at(h, w) = t.amplitude;
            }
        }
        detail::separable_gaussian_blur(disk, cfg.psf_sigma_axial_mm / cfg.pitch_axial_mm,
                                        cfg.psf_sigma_lateral_mm / cfg.pitch_lateral_mm);
        for (int j = 0; j < L; ++j) {
            const double s = spectrum[j];
            if (s == 0.0) continue;
            for (int h = 0; h < cfg.rows; ++h) {
                const double* src = disk.row(h);
                double* dst = out.data.data() + out.index(j, h, 0);
                for (int w = 0; w < cfg.cols; ++w) dst[w] += s * src[w];
            }
        }
    }

    // Fluence decay over depth.
    if (cfg.mu_eff_per_mm != 0.0) {
        for (int h = 0; h < cfg.rows; ++h) {
            const double f = std::exp(-cfg.mu_eff_per_mm * (h + 0.5) * cfg.pitch_axial_mm);
            for (int j = 0; j < L; ++j) {
                double* dst = out.data.data() + out.index(j, h, 0);
                for (int w = 0; w < cfg.cols; ++w) dst[w] *= f;
            }
        }
    }
    return out;
}

// White Gaussian noise calibrated so the target SNR (Eq. over peak amplitude
// and background noise deviation) is met in expectation: sigma scales off the
// image's absolute peak.
inline SpectralImage inject_noise(const SpectralImage& img, double target_snr_db,
                                  std::uint64_t seed) {
    validate(img);
    if (!std::isfinite(target_snr_db)) throw ValidationError("inject_noise: SNR must be finite");
    double peak = 0.0;
    for (double x : img.data) peak = std::max(peak, std::abs(x));
    if (peak == 0.0) throw ZeroImage("inject_noise: image has no nonzero peak");
    const double sigma = peak / std::pow(10.0, target_snr_db / 20.0);
    SpectralImage out = img;
    Rng rng(seed);
    for (double& x : out.data) x += sigma * rng.gaussian();
    return out;
}

struct PhantomOutput {
    SpectralImage clean;
    std::vector<SpectralImage> noisy_frames;
};

// Deterministic per seed: frame i draws from an independent substream.
inline PhantomOutput generate_phantom(const SimConfig& cfg) {
    PhantomOutput out;
    out.clean = generate_clean(cfg);
    out.noisy_frames.reserve(cfg.frames);
    for (int i = 0; i < cfg.frames; ++i)
        out.noisy_frames.push_back(
            inject_noise(out.clean, cfg.noise_snr_db, substream_seed(cfg.seed, i)));
    return out;
}

// Bounding box of pixels whose max-over-wavelength intensity reaches `frac`
// of the global maximum; a convenient signal ROI for spectral metrics.
inline Rect signal_roi(const SpectralImage& img, double frac = 0.5) {
    validate(img);
    Plane maxproj(img.rows, img.cols);
    for (int j = 0; j < img.lambda; ++j)
        for (int h = 0; h < img.rows; ++h) {
            const double* src = img.data.data() + img.index(j, h, 0);
            double* dst = maxproj.row(h);
            for (int w = 0; w < img.cols; ++w) dst[w] = std::max(dst[w], std::abs(src[w]));
        }
    double gmax = 0.0;
    for (double x : maxproj.v) gmax = std::max(gmax, x);
    if (gmax == 0.0) throw ZeroImage("signal_roi: image is identically zero");
    Rect roi{img.rows, img.cols, 0, 0};
    for (int h = 0; h < img.rows; ++h)
        for (int w = 0; w < img.cols; ++w)
            if (maxproj.at(h, w) >= frac * gmax) {
                roi.r0 = std::min(roi.r0, h);
                roi.c0 = std::min(roi.c0, w);
                roi.r1 = std::max(roi.r1, h + 1);
                roi.c1 = std::max(roi.c1, w + 1);
            }
    return roi;
}

struct ConcentrationMaps {
    std::vector<std::string> names;
    std::vector<Plane> maps;  // one per chromophore, concentrations >= 0
    Plane residual;           // per-pixel Euclidean misfit
    bool rank_deficient = false;
};

namespace detail {

// Solve G z = rhs restricted to the passive index set, by Gaussian
// elimination with partial pivoting. Near-singular pivots zero the variable.
inline void solve_passive(const std::vector<double>& G, const std::vector<double>& rhs, int K,
                          const std::vector<int>& passive, std::vector<double>& z) {
    const int m = static_cast<int>(passive.size());
    std::vector<double> A(static_cast<std::size_t>(m) * (m + 1));
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c)
            A[r * (m + 1) + c] = G[static_cast<std::size_t>(passive[r]) * K + passive[c]];
        A[r * (m + 1) + m] = rhs[passive[r]];
    }
    for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(A[r * (m + 1) + col]) > std::abs(A[piv * (m + 1) + col])) piv = r;
        if (piv != col)
            for (int c = col; c <= m; ++c) std::swap(A[col * (m + 1) + c], A[piv * (m + 1) + c]);
        const double p = A[col * (m + 1) + col];
        if (std::abs(p) < 1e-14) {
            for (int c = col; c <= m; ++c) A[col * (m + 1) + c] = 0.0;
            continue;
        }
        for (int r = col + 1; r < m; ++r) {
            const double f = A[r * (m + 1) + col] / p;
            if (f == 0.0) continue;
            for (int c = col; c <= m; ++c) A[r * (m + 1) + c] -= f * A[col * (m + 1) + c];
        }
    }
    std::vector<double> zz(m, 0.0);
    for (int r = m - 1; r >= 0; --r) {
        const double p = A[r * (m + 1) + r];
        if (p == 0.0) {
            zz[r] = 0.0;
            continue;
        }
        double s = A[r * (m + 1) + m];
        for (int c = r + 1; c < m; ++c) s -= A[r * (m + 1) + c] * zz[c];
        zz[r] = s / p;
    }
    std::fill(z.begin(), z.end(), 0.0);
    for (int r = 0; r < m; ++r) z[passive[r]] = zz[r];
}

// Lawson-Hanson active-set non-negative least squares on normal equations.
// G = S^T S, rhs = S^T p. Pivot selection is max gradient, ties to the lowest
// index, so runs are reproducible.
inline void nnls(const std::vector<double>& G, const std::vector<double>& rhs, int K,
                 std::vector<double>& x, double tol = 1e-10) {
    x.assign(K, 0.0);
    std::vector<bool> active(K, true);
    std::vector<double> w(K), z(K);
    const int max_outer = 3 * K + 10;
    for (int outer = 0; outer < max_outer; ++outer) {
        // w = rhs - G x
        for (int i = 0; i < K; ++i) {
            double s = rhs[i];
            for (int j = 0; j < K; ++j) s -= G[static_cast<std::size_t>(i) * K + j] * x[j];
            w[i] = s;
        }
        int best = -1;
        double bw = tol;
        for (int i = 0; i < K; ++i)
            if (active[i] && w[i] > bw) {
                bw = w[i];
                best = i;
            }
        if (best < 0) return;
        active[best] = false;

        for (int inner = 0; inner < max_outer; ++inner) {
            std::vector<int> passive;
            for (int i = 0; i < K; ++i)
                if (!active[i]) passive.push_back(i);
            solve_passive(G, rhs, K, passive, z);
            bool feasible = true;
            for (int i : passive)
                if (z[i] <= tol) {
                    feasible = false;
                    break;
                }
            if (feasible) {
                x = z;
                break;
            }
            double alpha = 1.0;
            for (int i : passive)
                if (z[i] <= tol && x[i] != z[i]) alpha = std::min(alpha, x[i] / (x[i] - z[i]));
            for (int i = 0; i < K; ++i) x[i] += alpha * (z[i] - x[i]);
            for (int i : passive)
                if (x[i] <= tol) {
                    x[i] = 0.0;
                    active[i] = true;
                }
        }
    }
}

}  // namespace detail

// Per-pixel non-negative least squares against the library spectra.
inline ConcentrationMaps unmix(const SpectralImage& img, const SpectrumLibrary& lib) {
    validate(img);
    validate(lib);
    if (lib.wavelengths_nm != img.wavelengths_nm)
        throw WavelengthMismatch("unmix: library bands differ from image wavelengths");
    const int K = lib.chromophores();
    const int L = lib.bands();
    if (L < K) throw ValidationError("unmix: need at least as many wavelengths as chromophores");

    ConcentrationMaps out;
    out.names = lib.names;
    out.maps.assign(K, Plane(img.rows, img.cols));
    out.residual = Plane(img.rows, img.cols);

    // Normal-equation pieces are shared across pixels.
    std::vector<double> G(static_cast<std::size_t>(K) * K, 0.0);
    for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) {
            double s = 0.0;
            for (int j = 0; j < L; ++j) s += lib.at(j, a) * lib.at(j, b);
            G[static_cast<std::size_t>(a) * K + b] = s;
        }
    // Rank probe on the Gram matrix.
    {
        std::vector<double> probe = G;
        double maxdiag = 0.0;
        for (int i = 0; i < K; ++i) maxdiag = std::max(maxdiag, probe[static_cast<std::size_t>(i) * K + i]);
        for (int col = 0; col < K; ++col) {
            int piv = col;
            for (int r = col + 1; r < K; ++r)
                if (std::abs(probe[static_cast<std::size_t>(r) * K + col]) >
                    std::abs(probe[static_cast<std::size_t>(piv) * K + col]))
                    piv = r;
            for (int c = 0; c < K; ++c)
                std::swap(probe[static_cast<std::size_t>(col) * K + c],
                          probe[static_cast<std::size_t>(piv) * K + c]);
            const double p = probe[static_cast<std::size_t>(col) * K + col];
            if (std::abs(p) < 1e-12 * std::max(1.0, maxdiag)) {
                out.rank_deficient = true;
                break;
            }
            for (int r = col + 1; r < K; ++r) {
                const double f = probe[static_cast<std::size_t>(r) * K + col] / p;
                for (int c = col; c < K; ++c)
                    probe[static_cast<std::size_t>(r) * K + c] -=
                        f * probe[static_cast<std::size_t>(col) * K + c];
            }
        }
    }

    std::vector<double> rhs(K), conc(K), px(L);
    for (int h = 0; h < img.rows; ++h)
        for (int w = 0; w < img.cols; ++w) {
            for (int j = 0; j < L; ++j) px[j] = img.at(j, h, w);
            for (int k = 0; k < K; ++k) {
                double s = 0.0;
                for (int j = 0; j < L; ++j) s += lib.at(j, k) * px[j];
                rhs[k] = s;
            }
            detail::nnls(G, rhs, K, conc);
            double rss = 0.0;
            for (int j = 0; j < L; ++j) {
                double fit = 0.0;
                for (int k = 0; k < K; ++k) fit += lib.at(j, k) * conc[k];
                rss += (fit - px[j]) * (fit - px[j]);
            }
            for (int k = 0; k < K; ++k) out.maps[k].at(h, w) = conc[k];
            out.residual.at(h, w) = std::sqrt(rss);
        }
    return out;
}

// Contrast-agent ratio map: c_agent / (sum of hemoglobin concentrations + eps).
inline Plane agent_ratio(const ConcentrationMaps& maps, const std::string& agent_name,
                         const std::vector<std::string>& hb_names, double eps = 1e-9) {
    auto find = [&](const std::string& n) {
        const auto it = std::find(maps.names.begin(), maps.names.end(), n);
        if (it == maps.names.end()) throw UnknownChromophore("agent_ratio: '" + n + "'");
        return static_cast<int>(it - maps.names.begin());
    };
    const int agent = find(agent_name);
    std::vector<int> hbs;
    for (const auto& n : hb_names) hbs.push_back(find(n));

    const Plane& a = maps.maps[agent];
    Plane out(a.rows, a.cols);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) {
            double hb = 0.0;
            for (int k : hbs) hb += maps.maps[k].at(r, c);
            out.at(r, c) = a.at(r, c) / (hb + eps);
        }
    return out;
}

}  // namespace spade
