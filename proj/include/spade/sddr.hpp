#pragma once

#include <vector>

#include "spade/errors.hpp"
#include "spade/tensor.hpp"

namespace spade {

// Spectral-domain reassembly of a lambda x H x W cube into one H x (lambda*W)
// plane. Column group w holds the full spectrum of lateral position w, ordered
// by ascending wavelength:
//
//   plane[h, w*lambda + j] = cube[j, h, w]
//
// The mapping is a permutation, so forward followed by inverse is bit-exact.
struct SddrImage {
    Plane plane;  // rows x (lambda*width)
    int lambda = 1;
    int width = 1;
    std::vector<double> wavelengths_nm;
    double pitch_axial_mm = 1.0;
    double pitch_lateral_mm = 1.0;
};

inline SddrImage sddr_forward(const SpectralImage& img) {
    validate(img);
    SddrImage out;
    out.lambda = img.lambda;
    out.width = img.cols;
    out.wavelengths_nm = img.wavelengths_nm;
    out.pitch_axial_mm = img.pitch_axial_mm;
    out.pitch_lateral_mm = img.pitch_lateral_mm;
    out.plane = Plane(img.rows, img.lambda * img.cols);
    for (int j = 0; j < img.lambda; ++j)
        for (int h = 0; h < img.rows; ++h) {
            const double* src = img.data.data() + img.index(j, h, 0);
            double* dst = out.plane.row(h) + j;
            for (int w = 0; w < img.cols; ++w) dst[static_cast<std::size_t>(w) * img.lambda] = src[w];
        }
    return out;
}

inline SpectralImage sddr_inverse(const SddrImage& s) {
    validate(s.plane, "sddr plane");
    if (s.lambda < 1) throw ValidationError("sddr: lambda must be >= 1");
    if (s.plane.cols % s.lambda != 0)
        throw ShapeMismatch("sddr: " + std::to_string(s.plane.cols) + " columns not divisible by lambda=" +
                            std::to_string(s.lambda));
    const int width = s.plane.cols / s.lambda;
    if (s.width != width)
        throw ShapeMismatch("sddr: stored width " + std::to_string(s.width) + " != cols/lambda");

    SpectralImage img(s.lambda, s.plane.rows, width);
    img.wavelengths_nm = s.wavelengths_nm;
    img.pitch_axial_mm = s.pitch_axial_mm;
    img.pitch_lateral_mm = s.pitch_lateral_mm;
    for (int j = 0; j < s.lambda; ++j)
        for (int h = 0; h < s.plane.rows; ++h) {
            const double* src = s.plane.row(h) + j;
            double* dst = img.data.data() + img.index(j, h, 0);
            for (int w = 0; w < width; ++w) dst[w] = src[static_cast<std::size_t>(w) * s.lambda];
        }
    return img;
}

}  // namespace spade
