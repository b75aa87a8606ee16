#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "spade/errors.hpp"

namespace spade {

// Orthonormal DCT-II of arbitrary length, applied as a dense basis multiply.
// Sizes used here are tiny (block edges <= 8, stack depth <= a few dozen).
// forward = B x, inverse = B^T x, with B orthonormal, so round trips are exact
// to rounding and energy is preserved (Parseval).
class DctPlan {
public:
    DctPlan() = default;
    explicit DctPlan(int n) : n_(n), basis_(static_cast<std::size_t>(n) * n) {
        if (n < 1) throw ValidationError("dct: length must be >= 1");
        const double pi = 3.14159265358979323846;
        for (int k = 0; k < n; ++k) {
            const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
            for (int j = 0; j < n; ++j)
                basis_[static_cast<std::size_t>(k) * n + j] =
                    alpha * std::cos(pi * (2.0 * j + 1.0) * k / (2.0 * n));
        }
    }

    int length() const { return n_; }

    // out[k] = sum_j basis[k][j] in[j], with independent element strides.
    void forward(const double* in, int in_stride, double* out, int out_stride) const {
        apply(in, in_stride, out, out_stride, false);
    }
    // out[j] = sum_k basis[k][j] in[k]
    void inverse(const double* in, int in_stride, double* out, int out_stride) const {
        apply(in, in_stride, out, out_stride, true);
    }

private:
    void apply(const double* in, int in_stride, double* out, int out_stride,
               bool transpose) const {
        const double* b = basis_.data();
        for (int k = 0; k < n_; ++k) {
            double s = 0.0;
            for (int j = 0; j < n_; ++j) {
                const double w = transpose ? b[static_cast<std::size_t>(j) * n_ + k]
                                           : b[static_cast<std::size_t>(k) * n_ + j];
                s += w * in[static_cast<std::size_t>(j) * in_stride];
            }
            out[static_cast<std::size_t>(k) * out_stride] = s;
        }
    }

    int n_ = 0;
    std::vector<double> basis_;
};

// Separable 3D transform over a stack of equally sized blocks: 2D DCT on each
// block, then a 1D DCT along the stack dimension at every pixel position.
class StackTransform {
public:
    StackTransform(int block_rows, int block_cols, int depth)
        : rows_(block_rows), cols_(block_cols), depth_(depth),
          row_plan_(block_cols), col_plan_(block_rows), depth_plan_(depth) {}

    // values: depth * rows * cols, block-major. In-place.
    void forward(std::vector<double>& values) const { run(values, false); }
    void inverse(std::vector<double>& values) const { run(values, true); }

private:
    void run(std::vector<double>& values, bool inv) const {
        std::vector<double> tmp(static_cast<std::size_t>(std::max({rows_, cols_, depth_})));
        const std::size_t bp = static_cast<std::size_t>(rows_) * cols_;

        auto blocks_2d = [&] {
            for (int s = 0; s < depth_; ++s) {
                double* blk = values.data() + s * bp;
                for (int r = 0; r < rows_; ++r) {
                    double* line = blk + static_cast<std::size_t>(r) * cols_;
                    if (inv)
                        row_plan_.inverse(line, 1, tmp.data(), 1);
                    else
                        row_plan_.forward(line, 1, tmp.data(), 1);
                    std::copy(tmp.begin(), tmp.begin() + cols_, line);
                }
                for (int c = 0; c < cols_; ++c) {
                    if (inv)
                        col_plan_.inverse(blk + c, cols_, tmp.data(), 1);
                    else
                        col_plan_.forward(blk + c, cols_, tmp.data(), 1);
                    for (int r = 0; r < rows_; ++r)
                        blk[static_cast<std::size_t>(r) * cols_ + c] = tmp[r];
                }
            }
        };
        auto along_depth = [&] {
            for (std::size_t px = 0; px < bp; ++px) {
                if (inv)
                    depth_plan_.inverse(values.data() + px, static_cast<int>(bp), tmp.data(), 1);
                else
                    depth_plan_.forward(values.data() + px, static_cast<int>(bp), tmp.data(), 1);
                for (int s = 0; s < depth_; ++s) values[s * bp + px] = tmp[s];
            }
        };

        if (inv) {
            along_depth();
            blocks_2d();
        } else {
            blocks_2d();
            along_depth();
        }
    }

    int rows_, cols_, depth_;
    DctPlan row_plan_, col_plan_, depth_plan_;
};

}  // namespace spade
