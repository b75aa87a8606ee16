#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "spade/errors.hpp"

namespace spade {

// Dense row-major 2D image. Values are 64-bit; treat instances as immutable
// once filled so they can be shared freely across workers.
struct Plane {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Plane() = default;
    Plane(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
    std::size_t size() const { return v.size(); }
};

// Multi-wavelength image cube, wavelength-major then row (depth) then column
// (lateral): data[(j*rows + h)*cols + w].
struct SpectralImage {
    int lambda = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    std::vector<double> wavelengths_nm;
    double pitch_axial_mm = 1.0;
    double pitch_lateral_mm = 1.0;
    // Optional channel labels for non-spectral cubes (e.g. unmixing outputs).
    std::vector<std::string> channels;

    SpectralImage() = default;
    SpectralImage(int l, int r, int c)
        : lambda(l), rows(r), cols(c), data(static_cast<std::size_t>(l) * r * c, 0.0) {}

    std::size_t index(int j, int h, int w) const {
        return (static_cast<std::size_t>(j) * rows + h) * cols + w;
    }
    double& at(int j, int h, int w) { return data[index(j, h, w)]; }
    double at(int j, int h, int w) const { return data[index(j, h, w)]; }

    Plane frame(int j) const {
        Plane p(rows, cols);
        const double* src = data.data() + static_cast<std::size_t>(j) * rows * cols;
        std::copy(src, src + static_cast<std::size_t>(rows) * cols, p.v.begin());
        return p;
    }
    void set_frame(int j, const Plane& p) {
        std::copy(p.v.begin(), p.v.end(), data.begin() + static_cast<std::size_t>(j) * rows * cols);
    }
};

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void validate(const Plane& p, const std::string& what = "plane") {
    if (p.rows < 1 || p.cols < 1) throw ValidationError(what + ": empty shape");
    if (p.v.size() != static_cast<std::size_t>(p.rows) * p.cols)
        throw ShapeMismatch(what + ": storage does not match rows*cols");
    if (!all_finite(p.v)) throw ValidationError(what + ": non-finite values");
}

inline void validate(const SpectralImage& img, const std::string& what = "image") {
    if (img.lambda < 1 || img.rows < 1 || img.cols < 1) throw ValidationError(what + ": empty shape");
    if (img.data.size() != static_cast<std::size_t>(img.lambda) * img.rows * img.cols)
        throw ShapeMismatch(what + ": storage does not match lambda*rows*cols");
    if (!all_finite(img.data)) throw ValidationError(what + ": non-finite values");
    if (img.wavelengths_nm.size() != static_cast<std::size_t>(img.lambda))
        throw ValidationError(what + ": wavelength list length != lambda");
    for (std::size_t i = 0; i < img.wavelengths_nm.size(); ++i) {
        if (img.wavelengths_nm[i] <= 0.0) throw ValidationError(what + ": non-positive wavelength");
        if (i > 0 && img.wavelengths_nm[i] <= img.wavelengths_nm[i - 1])
            throw NonMonotoneWavelengths(what + ": wavelengths must be strictly increasing");
    }
}

// Affine map bringing an image into [0,1] and back.
struct NormalizationRecord {
    double offset = 0.0;
    double scale = 1.0;
    // Set when the input had zero dynamic range; the image was left unchanged.
    bool constant_image = false;
};

inline std::pair<SpectralImage, NormalizationRecord> normalize(const SpectralImage& img) {
    validate(img);
    double lo = img.data[0], hi = img.data[0];
    for (double x : img.data) {
        if (x < lo) lo = x;
        if (x > hi) hi = x;
    }
    NormalizationRecord rec;
    if (hi == lo) {
        rec.offset = 0.0;
        rec.scale = 1.0;
        rec.constant_image = true;
        return {img, rec};
    }
    rec.offset = lo;
    rec.scale = hi - lo;
    SpectralImage out = img;
    for (double& x : out.data) x = (x - rec.offset) / rec.scale;
    return {out, rec};
}

inline SpectralImage denormalize(const SpectralImage& img, const NormalizationRecord& rec) {
    if (rec.constant_image) return img;
    SpectralImage out = img;
    for (double& x : out.data) x = x * rec.scale + rec.offset;
    return out;
}

}  // namespace spade
