#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "spade/dct.hpp"
#include "spade/errors.hpp"
#include "spade/sddr.hpp"
#include "spade/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spade {

// Two-stage collaborative-filtering denoiser: hard thresholding in a 3D DCT
// domain for a basic estimate, then Wiener shrinkage guided by it. In spectral
// mode, block matching is confined to each SDDR column group so that blocks
// never mix spectra from different lateral positions.

struct Bm3dParams {
    int block_rows = 8;
    // <= 0 selects the default: min(8, lambda) inside spectral groups, 8 otherwise.
    int block_cols = 0;
    int step = 4;
    // Search window half-size, rows and columns, clipped to the group.
    int search_radius_rows = 19;
    int max_matches_hard = 16;
    int max_matches_wiener = 32;
    // Per-pixel mean SSD cutoff on [0,1]-normalized data.
    double match_threshold = 0.0384;
    double hard_lambda = 2.7;
    // Noise standard deviation; < 0 means "not set".
    double sigma = -1.0;

    void check() const {
        if (block_rows < 1) throw ValidationError("bm3d: block_rows must be >= 1");
        if (step < 1) throw ValidationError("bm3d: step must be >= 1");
        if (max_matches_hard < 1 || max_matches_wiener < 1)
            throw ValidationError("bm3d: max_matches must be >= 1");
        if (match_threshold <= 0.0) throw ValidationError("bm3d: match_threshold must be > 0");
        if (hard_lambda <= 0.0) throw ValidationError("bm3d: hard_lambda must be > 0");
    }
};

// Column range [col0, col1) that block matching may not leave.
struct GroupBounds {
    int col0 = 0;
    int col1 = 0;
};

struct BlockStack {
    int ref_row = 0;
    int ref_col = 0;
    int block_rows = 0;
    int block_cols = 0;
    std::vector<std::pair<int, int>> positions;  // (row, col), reference first
    std::vector<double> values;                  // N * block_rows * block_cols
};

// Robust noise estimate: median absolute diagonal detail coefficient of a
// one-level separable Haar analysis, scaled by 1/0.6745.
inline double estimate_sigma(const Plane& x) {
    if (x.rows < 2 || x.cols < 2)
        throw TooSmall("estimate_sigma: need at least 2x2");
    std::vector<double> hh;
    hh.reserve(static_cast<std::size_t>(x.rows / 2) * (x.cols / 2));
    for (int r = 0; r + 1 < x.rows; r += 2) {
        const double* top = x.row(r);
        const double* bot = x.row(r + 1);
        for (int c = 0; c + 1 < x.cols; c += 2)
            hh.push_back(std::abs(0.5 * (top[c] - top[c + 1] - bot[c] + bot[c + 1])));
    }
    const std::size_t n = hh.size();
    std::nth_element(hh.begin(), hh.begin() + n / 2, hh.end());
    double med = hh[n / 2];
    if (n % 2 == 0) {
        std::nth_element(hh.begin(), hh.begin() + n / 2 - 1, hh.begin() + n / 2);
        med = 0.5 * (med + hh[n / 2 - 1]);
    }
    return med / 0.6745;
}

namespace detail {

inline double block_ssd(const Plane& x, int r1, int c1, int r2, int c2, int br, int bc) {
    double s = 0.0;
    for (int r = 0; r < br; ++r) {
        const double* a = x.row(r1 + r) + c1;
        const double* b = x.row(r2 + r) + c2;
        for (int c = 0; c < bc; ++c) {
            const double d = a[c] - b[c];
            s += d * d;
        }
    }
    return s / (static_cast<double>(br) * bc);
}

inline void extract_block(const Plane& x, int r0, int c0, int br, int bc, double* out) {
    for (int r = 0; r < br; ++r)
        std::copy(x.row(r0 + r) + c0, x.row(r0 + r) + c0 + bc, out + static_cast<std::size_t>(r) * bc);
}

// Reference-block grid along one axis: every `step` positions plus the last
// valid position so each group is fully covered.
inline std::vector<int> ref_grid(int extent, int block, int step) {
    std::vector<int> g;
    const int last = extent - block;
    if (last < 0) return g;
    for (int p = 0; p < last; p += step) g.push_back(p);
    g.push_back(last);
    return g;
}

}  // namespace detail

// Find up to `max_matches` most similar blocks to the reference inside the
// search window intersected with the group. Distance is per-pixel mean SSD;
// candidates above `match_threshold` are dropped; ties are broken by row-major
// position. The reference block is always kept and leads the stack.
inline BlockStack block_match(const Plane& x, int ref_row, int ref_col, GroupBounds g,
                              const Bm3dParams& p, int max_matches) {
    const int br = std::min(p.block_rows, x.rows);
    const int bc = p.block_cols > 0 ? p.block_cols : std::min(8, g.col1 - g.col0);
    if (ref_row < 0 || ref_col < g.col0 || ref_row + br > x.rows || ref_col + bc > g.col1)
        throw ValidationError("block_match: reference block outside group bounds");

    const int rad = p.search_radius_rows;
    const int r_lo = std::max(0, ref_row - rad);
    const int r_hi = std::min(x.rows - br, ref_row + rad);
    const int c_lo = std::max(g.col0, ref_col - rad);
    const int c_hi = std::min(g.col1 - bc, ref_col + rad);

    struct Cand {
        double dist;
        int row, col;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<std::size_t>(r_hi - r_lo + 1) * (c_hi - c_lo + 1));
    for (int r = r_lo; r <= r_hi; ++r)
        for (int c = c_lo; c <= c_hi; ++c) {
            if (r == ref_row && c == ref_col) continue;
            const double d = detail::block_ssd(x, ref_row, ref_col, r, c, br, bc);
            if (d <= p.match_threshold) cands.push_back({d, r, c});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });

    BlockStack stack;
    stack.ref_row = ref_row;
    stack.ref_col = ref_col;
    stack.block_rows = br;
    stack.block_cols = bc;
    stack.positions.push_back({ref_row, ref_col});
    for (const Cand& c : cands) {
        if (static_cast<int>(stack.positions.size()) >= max_matches) break;
        stack.positions.push_back({c.row, c.col});
    }
    stack.values.resize(stack.positions.size() * static_cast<std::size_t>(br) * bc);
    for (std::size_t i = 0; i < stack.positions.size(); ++i)
        detail::extract_block(x, stack.positions[i].first, stack.positions[i].second, br, bc,
                              stack.values.data() + i * static_cast<std::size_t>(br) * bc);
    return stack;
}

// 3D transform of a block stack: orthonormal 2D DCT-II per block, then an
// orthonormal 1D DCT-II along the stack dimension.
inline std::vector<double> transform_3d(const BlockStack& stack) {
    if (stack.positions.empty()) throw ValidationError("transform_3d: empty stack");
    std::vector<double> coeffs = stack.values;
    StackTransform t(stack.block_rows, stack.block_cols, static_cast<int>(stack.positions.size()));
    t.forward(coeffs);
    return coeffs;
}

inline BlockStack inverse_transform_3d(std::vector<double> coeffs, const BlockStack& like) {
    BlockStack out = like;
    StackTransform t(like.block_rows, like.block_cols, static_cast<int>(like.positions.size()));
    t.inverse(coeffs);
    out.values = std::move(coeffs);
    return out;
}

namespace detail {

struct Accumulator {
    Plane num;
    Plane den;
    explicit Accumulator(const Plane& like) : num(like.rows, like.cols), den(like.rows, like.cols) {}

    void add(const BlockStack& stack, double weight) {
        const std::size_t bp = static_cast<std::size_t>(stack.block_rows) * stack.block_cols;
        for (std::size_t i = 0; i < stack.positions.size(); ++i) {
            const auto [r0, c0] = stack.positions[i];
            const double* blk = stack.values.data() + i * bp;
            for (int r = 0; r < stack.block_rows; ++r) {
                double* nrow = num.row(r0 + r) + c0;
                double* drow = den.row(r0 + r) + c0;
                for (int c = 0; c < stack.block_cols; ++c) {
                    nrow[c] += weight * blk[static_cast<std::size_t>(r) * stack.block_cols + c];
                    drow[c] += weight;
                }
            }
        }
    }

    // Pixels no stack touched (possible only in degenerate geometries) keep
    // the fallback image's value.
    Plane resolve(const Plane& fallback) const {
        Plane out(num.rows, num.cols);
        for (std::size_t k = 0; k < out.v.size(); ++k)
            out.v[k] = den.v[k] > 0.0 ? num.v[k] / den.v[k] : fallback.v[k];
        return out;
    }
};

inline void require_sigma(const Bm3dParams& p) {
    if (p.sigma < 0.0) throw SigmaMissing("bm3d: sigma is not set");
    if (!std::isfinite(p.sigma)) throw ValidationError("bm3d: sigma must be finite");
}

template <typename PerGroup>
void for_each_group(const std::vector<GroupBounds>& groups, PerGroup&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t gi = 0; gi < groups.size(); ++gi) fn(groups[gi]);
}

}  // namespace detail

// Stage 1: collaborative hard thresholding. Every 3D coefficient below
// hard_lambda*sigma is zeroed (the DC coefficient is always kept); each stack
// is aggregated with weight 1/max(1, retained coefficient count).
inline Plane hard_threshold_stage(const Plane& x, const std::vector<GroupBounds>& groups,
                                  const Bm3dParams& p) {
    p.check();
    detail::require_sigma(p);
    detail::Accumulator acc(x);
    const double thr = p.hard_lambda * p.sigma;

    detail::for_each_group(groups, [&](const GroupBounds& g) {
        const int bc = p.block_cols > 0 ? p.block_cols : std::min(8, g.col1 - g.col0);
        const int br = std::min(p.block_rows, x.rows);
        const auto rows = detail::ref_grid(x.rows, br, p.step);
        const auto cols = detail::ref_grid(g.col1 - g.col0, bc, p.step);
        for (int rr : rows)
            for (int cc : cols) {
                BlockStack stack = block_match(x, rr, g.col0 + cc, g, p, p.max_matches_hard);
                std::vector<double> coeffs = transform_3d(stack);
                int retained = 0;
                for (std::size_t k = 1; k < coeffs.size(); ++k) {
                    if (std::abs(coeffs[k]) < thr)
                        coeffs[k] = 0.0;
                    else
                        ++retained;
                }
                const double weight = 1.0 / std::max(1, retained + 1);
                acc.add(inverse_transform_3d(std::move(coeffs), stack), weight);
            }
    });
    return acc.resolve(x);
}

// Stage 2: empirical Wiener shrinkage. Matching runs on the basic estimate;
// shrinkage factors b^2/(b^2+sigma^2) from the basic stack are applied to the
// noisy stack's coefficients; stack weight is 1/(sigma^2 * sum f^2 + 1e-12).
inline Plane wiener_stage(const Plane& noisy, const Plane& basic,
                          const std::vector<GroupBounds>& groups, const Bm3dParams& p) {
    p.check();
    detail::require_sigma(p);
    if (noisy.rows != basic.rows || noisy.cols != basic.cols)
        throw ShapeMismatch("wiener_stage: noisy and basic shapes differ");
    detail::Accumulator acc(noisy);
    const double s2 = p.sigma * p.sigma;

    detail::for_each_group(groups, [&](const GroupBounds& g) {
        const int bc = p.block_cols > 0 ? p.block_cols : std::min(8, g.col1 - g.col0);
        const int br = std::min(p.block_rows, noisy.rows);
        const auto rows = detail::ref_grid(noisy.rows, br, p.step);
        const auto cols = detail::ref_grid(g.col1 - g.col0, bc, p.step);
        const std::size_t bp = static_cast<std::size_t>(br) * bc;
        for (int rr : rows)
            for (int cc : cols) {
                BlockStack bstack = block_match(basic, rr, g.col0 + cc, g, p, p.max_matches_wiener);
                // Noisy stack at identical positions.
                BlockStack nstack = bstack;
                for (std::size_t i = 0; i < nstack.positions.size(); ++i)
                    detail::extract_block(noisy, nstack.positions[i].first,
                                          nstack.positions[i].second, br, bc,
                                          nstack.values.data() + i * bp);
                const std::vector<double> bco = transform_3d(bstack);
                std::vector<double> nco = transform_3d(nstack);
                double fsum = 0.0;
                for (std::size_t k = 0; k < nco.size(); ++k) {
                    const double b2 = bco[k] * bco[k];
                    const double f = b2 + s2 > 0.0 ? b2 / (b2 + s2) : 0.0;
                    nco[k] *= f;
                    fsum += f * f;
                }
                const double weight = 1.0 / (s2 * fsum + 1e-12);
                acc.add(inverse_transform_3d(std::move(nco), nstack), weight);
            }
    });
    return acc.resolve(noisy);
}

// Whole-plane (vanilla) two-stage BM3D: one group covering all columns.
inline Plane denoise_bm3d(const Plane& x, Bm3dParams p) {
    validate(x, "bm3d input");
    if (p.sigma < 0.0) p.sigma = estimate_sigma(x);
    if (p.block_cols <= 0) p.block_cols = std::min(8, x.cols);
    const std::vector<GroupBounds> groups{{0, x.cols}};
    return wiener_stage(x, hard_threshold_stage(x, groups, p), groups, p);
}

// Spectral mode: the SDDR plane is partitioned into `width` groups of
// `lambda` columns and both stages run with matching confined per group.
// A single wavelength degrades to vanilla mode on the frame.
inline SddrImage denoise_bm3d(const SddrImage& s, Bm3dParams p) {
    validate(s.plane, "bm3d input");
    SddrImage out = s;
    if (s.lambda == 1) {
        out.plane = denoise_bm3d(s.plane, p);
        return out;
    }
    if (p.sigma < 0.0) p.sigma = estimate_sigma(s.plane);
    if (p.block_cols <= 0) p.block_cols = std::min(8, s.lambda);
    std::vector<GroupBounds> groups;
    groups.reserve(s.width);
    for (int w = 0; w < s.width; ++w) groups.push_back({w * s.lambda, (w + 1) * s.lambda});
    out.plane = wiener_stage(s.plane, hard_threshold_stage(s.plane, groups, p), groups, p);
    return out;
}

}  // namespace spade
