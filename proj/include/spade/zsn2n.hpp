#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "spade/errors.hpp"
#include "spade/rng.hpp"
#include "spade/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spade {

// Zero-shot Noise2Noise denoiser. A single noisy plane is split into a pair of
// half-resolution images by two fixed 2x2 kernels; a three-convolution network
// learns to predict the noise by mapping each half to the other, with a
// consistency term tying the half-resolution predictions to the downsampled
// full-resolution prediction. Denoised output is y - f(y).

struct NetworkParams {
    int channels = 0;
    std::vector<double> w1, b1;  // (C,1,3,3), (C)
    std::vector<double> w2, b2;  // (C,C,3,3), (C)
    std::vector<double> w3, b3;  // (1,C,1,1), (1)

    static NetworkParams zeros(int channels) {
        NetworkParams p;
        p.channels = channels;
        p.w1.assign(static_cast<std::size_t>(channels) * 9, 0.0);
        p.b1.assign(channels, 0.0);
        p.w2.assign(static_cast<std::size_t>(channels) * channels * 9, 0.0);
        p.b2.assign(channels, 0.0);
        p.w3.assign(channels, 0.0);
        p.b3.assign(1, 0.0);
        return p;
    }

    std::size_t count() const {
        return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
    }

    std::array<std::vector<double>*, 6> fields() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
    std::array<const std::vector<double>*, 6> fields() const {
        return {&w1, &b1, &w2, &b2, &w3, &b3};
    }
};

struct TrainConfig {
    int channels = 48;
    int iterations = 2000;
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double leaky_slope = 0.2;
    std::uint64_t seed = 0;

    void check() const {
        if (channels < 1) throw ValidationError("train: channels must be >= 1");
        if (iterations < 0) throw ValidationError("train: iterations must be >= 0");
        if (step_size <= 0.0) throw ValidationError("train: step_size must be > 0");
        if (leaky_slope < 0.0 || leaky_slope >= 1.0)
            throw ValidationError("train: leaky_slope must be in [0, 1)");
    }
};

struct DownsamplePair {
    Plane d1;  // 0.5*top-right + 0.5*bottom-left of each 2x2 block
    Plane d2;  // 0.5*top-left  + 0.5*bottom-right
};

inline DownsamplePair downsample_pair(const Plane& y) {
    if (y.rows < 2 || y.cols < 2)
        throw TooSmall("downsample: need at least 2x2, got " + std::to_string(y.rows) + "x" +
                       std::to_string(y.cols));
    const int hr = y.rows / 2;
    const int hc = y.cols / 2;
    DownsamplePair out{Plane(hr, hc), Plane(hr, hc)};
    for (int r = 0; r < hr; ++r) {
        const double* top = y.row(2 * r);
        const double* bot = y.row(2 * r + 1);
        double* o1 = out.d1.row(r);
        double* o2 = out.d2.row(r);
        for (int c = 0; c < hc; ++c) {
            const double a = top[2 * c], b = top[2 * c + 1];
            const double cc = bot[2 * c], d = bot[2 * c + 1];
            o1[c] = 0.5 * b + 0.5 * cc;
            o2[c] = 0.5 * a + 0.5 * d;
        }
    }
    return out;
}

namespace detail {

// Scatter a half-resolution gradient back through the downsampling kernels.
// Pixels cropped from odd-sized inputs receive zero.
inline void downsample_adjoint(const Plane& g1, const Plane& g2, Plane& out) {
    for (int r = 0; r < g1.rows; ++r) {
        const double* a1 = g1.row(r);
        const double* a2 = g2.row(r);
        double* top = out.row(2 * r);
        double* bot = out.row(2 * r + 1);
        for (int c = 0; c < g1.cols; ++c) {
            top[2 * c] += 0.5 * a2[c];
            top[2 * c + 1] += 0.5 * a1[c];
            bot[2 * c] += 0.5 * a1[c];
            bot[2 * c + 1] += 0.5 * a2[c];
        }
    }
}

// Multi-channel activation buffer, channel-major.
struct ChannelStack {
    int ch = 0, rows = 0, cols = 0;
    std::vector<double> v;
    ChannelStack() = default;
    ChannelStack(int c, int r, int cl)
        : ch(c), rows(r), cols(cl), v(static_cast<std::size_t>(c) * r * cl, 0.0) {}
    double* plane(int c) { return v.data() + static_cast<std::size_t>(c) * rows * cols; }
    const double* plane(int c) const { return v.data() + static_cast<std::size_t>(c) * rows * cols; }
};

// z[o] = b[o] + sum_i w[o][i] (*) x[i], 3x3 kernels, same-size zero padding.
inline void conv3x3(const double* x, int in_ch, int rows, int cols, const double* w,
                    const double* b, int out_ch, double* z) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int o = 0; o < out_ch; ++o) {
        double* __restrict zo = z + static_cast<std::size_t>(o) * rows * cols;
        std::fill(zo, zo + static_cast<std::size_t>(rows) * cols, b[o]);
        for (int i = 0; i < in_ch; ++i) {
            const double* xi = x + static_cast<std::size_t>(i) * rows * cols;
            const double* wk = w + (static_cast<std::size_t>(o) * in_ch + i) * 9;
            for (int u = 0; u < 3; ++u) {
                const int dr = u - 1;
                const int r0 = std::max(0, -dr);
                const int r1 = rows - std::max(0, dr);
                for (int v = 0; v < 3; ++v) {
                    const int dc = v - 1;
                    const double wv = wk[u * 3 + v];
                    const int c0 = std::max(0, -dc);
                    const int c1 = cols - std::max(0, dc);
                    for (int r = r0; r < r1; ++r) {
                        const double* __restrict src =
                            xi + static_cast<std::size_t>(r + dr) * cols + dc;
                        double* __restrict dst = zo + static_cast<std::size_t>(r) * cols;
                        for (int c = c0; c < c1; ++c) dst[c] += wv * src[c];
                    }
                }
            }
        }
    }
}

// dx[i] += sum_o w[o][i] correlated against dz[o] with mirrored offsets.
inline void conv3x3_backward_input(const double* dz, int out_ch, int rows, int cols,
                                   const double* w, int in_ch, double* dx) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < in_ch; ++i) {
        double* __restrict dxi = dx + static_cast<std::size_t>(i) * rows * cols;
        for (int o = 0; o < out_ch; ++o) {
            const double* dzo = dz + static_cast<std::size_t>(o) * rows * cols;
            const double* wk = w + (static_cast<std::size_t>(o) * in_ch + i) * 9;
            for (int u = 0; u < 3; ++u) {
                const int dr = u - 1;
                const int r0 = std::max(0, dr);
                const int r1 = rows + std::min(0, dr);
                for (int v = 0; v < 3; ++v) {
                    const int dc = v - 1;
                    const double wv = wk[u * 3 + v];
                    const int c0 = std::max(0, dc);
                    const int c1 = cols + std::min(0, dc);
                    for (int r = r0; r < r1; ++r) {
                        const double* __restrict src =
                            dzo + static_cast<std::size_t>(r - dr) * cols - dc;
                        double* __restrict dst = dxi + static_cast<std::size_t>(r) * cols;
                        for (int c = c0; c < c1; ++c) dst[c] += wv * src[c];
                    }
                }
            }
        }
    }
}

// dw[o][i][u][v] += sum_px dz[o] * x[i] shifted; db[o] += sum_px dz[o].
// Each (o,i,u,v) slot is one fixed-order scan, so results do not depend on
// the number of worker threads.
inline void conv3x3_backward_params(const double* dz, int out_ch, int rows, int cols,
                                    const double* x, int in_ch, double* dw, double* db) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int o = 0; o < out_ch; ++o) {
        const double* dzo = dz + static_cast<std::size_t>(o) * rows * cols;
        double sb = 0.0;
        for (std::size_t k = 0; k < static_cast<std::size_t>(rows) * cols; ++k) sb += dzo[k];
        db[o] += sb;
        for (int i = 0; i < in_ch; ++i) {
            const double* xi = x + static_cast<std::size_t>(i) * rows * cols;
            double* wk = dw + (static_cast<std::size_t>(o) * in_ch + i) * 9;
            for (int u = 0; u < 3; ++u) {
                const int dr = u - 1;
                const int r0 = std::max(0, -dr);
                const int r1 = rows - std::max(0, dr);
                for (int v = 0; v < 3; ++v) {
                    const int dc = v - 1;
                    const int c0 = std::max(0, -dc);
                    const int c1 = cols - std::max(0, dc);
                    double s = 0.0;
                    for (int r = r0; r < r1; ++r) {
                        const double* __restrict a = dzo + static_cast<std::size_t>(r) * cols;
                        const double* __restrict bb =
                            xi + static_cast<std::size_t>(r + dr) * cols + dc;
                        for (int c = c0; c < c1; ++c) s += a[c] * bb[c];
                    }
                    wk[u * 3 + v] += s;
                }
            }
        }
    }
}

inline void leaky_relu(const double* z, double* a, std::size_t n, double slope) {
    for (std::size_t k = 0; k < n; ++k) a[k] = z[k] >= 0.0 ? z[k] : slope * z[k];
}

// Derivative at exactly zero uses the positive side (1).
inline void leaky_relu_backward(const double* z, const double* da, double* dz, std::size_t n,
                                double slope) {
    for (std::size_t k = 0; k < n; ++k) dz[k] = z[k] >= 0.0 ? da[k] : slope * da[k];
}

struct ForwardTrace {
    ChannelStack z1, a1, z2, a2;
    Plane out;
};

inline void net_forward_trace(const NetworkParams& p, const Plane& x, double slope,
                              ForwardTrace& t) {
    const int C = p.channels, R = x.rows, W = x.cols;
    t.z1 = ChannelStack(C, R, W);
    conv3x3(x.v.data(), 1, R, W, p.w1.data(), p.b1.data(), C, t.z1.v.data());
    t.a1 = ChannelStack(C, R, W);
    leaky_relu(t.z1.v.data(), t.a1.v.data(), t.z1.v.size(), slope);
    t.z2 = ChannelStack(C, R, W);
    conv3x3(t.a1.v.data(), C, R, W, p.w2.data(), p.b2.data(), C, t.z2.v.data());
    t.a2 = ChannelStack(C, R, W);
    leaky_relu(t.z2.v.data(), t.a2.v.data(), t.z2.v.size(), slope);
    t.out = Plane(R, W, p.b3[0]);
    for (int i = 0; i < C; ++i) {
        const double wv = p.w3[i];
        const double* __restrict src = t.a2.plane(i);
        double* __restrict dst = t.out.v.data();
        for (std::size_t k = 0; k < t.out.v.size(); ++k) dst[k] += wv * src[k];
    }
}

// Accumulates parameter gradients for one input/output-gradient pair.
inline void net_backward(const NetworkParams& p, const Plane& x, const ForwardTrace& t,
                         const Plane& dout, double slope, NetworkParams& g) {
    const int C = p.channels, R = x.rows, W = x.cols;
    const std::size_t n = static_cast<std::size_t>(R) * W;

    // conv3 (1x1)
    ChannelStack da2(C, R, W);
    for (int i = 0; i < C; ++i) {
        const double* a2i = t.a2.plane(i);
        const double* dd = dout.v.data();
        double s = 0.0;
        double* da2i = da2.plane(i);
        const double wv = p.w3[i];
        for (std::size_t k = 0; k < n; ++k) {
            s += dd[k] * a2i[k];
            da2i[k] = wv * dd[k];
        }
        g.w3[i] += s;
    }
    {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += dout.v[k];
        g.b3[0] += s;
    }

    ChannelStack dz2(C, R, W);
    leaky_relu_backward(t.z2.v.data(), da2.v.data(), dz2.v.data(), dz2.v.size(), slope);

    conv3x3_backward_params(dz2.v.data(), C, R, W, t.a1.v.data(), C, g.w2.data(), g.b2.data());
    ChannelStack da1(C, R, W);
    conv3x3_backward_input(dz2.v.data(), C, R, W, p.w2.data(), C, da1.v.data());

    ChannelStack dz1(C, R, W);
    leaky_relu_backward(t.z1.v.data(), da1.v.data(), dz1.v.data(), dz1.v.size(), slope);

    conv3x3_backward_params(dz1.v.data(), C, R, W, x.v.data(), 1, g.w1.data(), g.b1.data());
}

}  // namespace detail

// conv3x3 -> leaky rectifier -> conv3x3 -> leaky rectifier -> conv1x1,
// same-size zero padding. Output shape equals input shape.
inline Plane net_forward(const NetworkParams& p, const Plane& x, double leaky_slope = 0.2) {
    detail::ForwardTrace t;
    detail::net_forward_trace(p, x, leaky_slope, t);
    return std::move(t.out);
}

struct LossBreakdown {
    double total = 0.0;
    double residual = 0.0;
    double consistency = 0.0;
};

namespace detail {

// Shared forward pass of the loss. When `grad` is non-null the parameter
// gradient of the total loss is accumulated into it (it must be zero-filled
// and shaped like `p`).
inline LossBreakdown loss_impl(const NetworkParams& p, const Plane& y, double slope,
                               NetworkParams* grad) {
    const DownsamplePair ds = downsample_pair(y);
    const Plane& u1 = ds.d1;
    const Plane& u2 = ds.d2;
    const std::size_t n = u1.v.size();

    ForwardTrace t1, t2, tf;
    net_forward_trace(p, u1, slope, t1);
    net_forward_trace(p, u2, slope, t2);
    net_forward_trace(p, y, slope, tf);

    // den = y - f(y), downsampled with the same crop as the pair.
    Plane den(y.rows, y.cols);
    for (std::size_t k = 0; k < den.v.size(); ++k) den.v[k] = y.v[k] - tf.out.v[k];
    const DownsamplePair dend = downsample_pair(den);

    // pred_i = u_i - f(u_i)
    Plane pred1(u1.rows, u1.cols), pred2(u2.rows, u2.cols);
    for (std::size_t k = 0; k < n; ++k) {
        pred1.v[k] = u1.v[k] - t1.out.v[k];
        pred2.v[k] = u2.v[k] - t2.out.v[k];
    }

    LossBreakdown lb;
    Plane e1(u1.rows, u1.cols), e2(u1.rows, u1.cols), q1(u1.rows, u1.cols), q2(u1.rows, u1.cols);
    double sres = 0.0, scons = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        e1.v[k] = pred1.v[k] - u2.v[k];
        e2.v[k] = pred2.v[k] - u1.v[k];
        q1.v[k] = pred1.v[k] - dend.d1.v[k];
        q2.v[k] = pred2.v[k] - dend.d2.v[k];
        sres += e1.v[k] * e1.v[k] + e2.v[k] * e2.v[k];
        scons += q1.v[k] * q1.v[k] + q2.v[k] * q2.v[k];
    }
    lb.residual = 0.5 * sres / static_cast<double>(n);
    lb.consistency = 0.5 * scons / static_cast<double>(n);
    lb.total = lb.residual + lb.consistency;
    if (!grad) return lb;

    // d(total)/d(pred_i) = (e_i + q_i)/n, d/d(t_i) = -q_i/n, pred_i = u_i - f(u_i).
    const double inv = 1.0 / static_cast<double>(n);
    Plane dr1(u1.rows, u1.cols), dr2(u1.rows, u1.cols);
    Plane dt1(u1.rows, u1.cols), dt2(u1.rows, u1.cols);
    for (std::size_t k = 0; k < n; ++k) {
        dr1.v[k] = -(e1.v[k] + q1.v[k]) * inv;
        dr2.v[k] = -(e2.v[k] + q2.v[k]) * inv;
        dt1.v[k] = -q1.v[k] * inv;
        dt2.v[k] = -q2.v[k] * inv;
    }
    // t_i = D_i(y - f(y)) => d/d(f(y)) = -D_i^T(dt_i)
    Plane dden(y.rows, y.cols);
    downsample_adjoint(dt1, dt2, dden);
    Plane drf(y.rows, y.cols);
    for (std::size_t k = 0; k < drf.v.size(); ++k) drf.v[k] = -dden.v[k];

    net_backward(p, u1, t1, dr1, slope, *grad);
    net_backward(p, u2, t2, dr2, slope, *grad);
    net_backward(p, y, tf, drf, slope, *grad);
    return lb;
}

}  // namespace detail

// Total, residual and consistency losses of the network on one noisy plane.
inline LossBreakdown zsn2n_loss(const NetworkParams& p, const Plane& y, double leaky_slope = 0.2) {
    return detail::loss_impl(p, y, leaky_slope, nullptr);
}

// Analytic gradient of the total loss with respect to every parameter.
inline LossBreakdown zsn2n_grad(const NetworkParams& p, const Plane& y, NetworkParams& grad,
                                double leaky_slope = 0.2) {
    grad = NetworkParams::zeros(p.channels);
    return detail::loss_impl(p, y, leaky_slope, &grad);
}

struct TrainStats {
    LossBreakdown initial;
    LossBreakdown final_;
    int iterations = 0;
};

// Seeded initialization: every field uniform in [-s, s] with s = 1/sqrt(fan_in),
// drawn in field order conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b.
inline NetworkParams init_params(int channels, std::uint64_t seed) {
    NetworkParams p = NetworkParams::zeros(channels);
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(9.0);
    const double s2 = 1.0 / std::sqrt(9.0 * channels);
    const double s3 = 1.0 / std::sqrt(static_cast<double>(channels));
    for (double& w : p.w1) w = rng.uniform(-s1, s1);
    for (double& w : p.b1) w = rng.uniform(-s1, s1);
    for (double& w : p.w2) w = rng.uniform(-s2, s2);
    for (double& w : p.b2) w = rng.uniform(-s2, s2);
    for (double& w : p.w3) w = rng.uniform(-s3, s3);
    for (double& w : p.b3) w = rng.uniform(-s3, s3);
    return p;
}

// Full-image adaptive-moment gradient descent on the total loss.
inline NetworkParams train(const Plane& y, const TrainConfig& cfg, TrainStats* stats = nullptr) {
    cfg.check();
    validate(y, "train input");
    NetworkParams p = init_params(cfg.channels, cfg.seed);
    NetworkParams m = NetworkParams::zeros(cfg.channels);
    NetworkParams v = NetworkParams::zeros(cfg.channels);
    NetworkParams g = NetworkParams::zeros(cfg.channels);

    if (stats) {
        stats->initial = zsn2n_loss(p, y, cfg.leaky_slope);
        stats->iterations = cfg.iterations;
    }

    for (int it = 1; it <= cfg.iterations; ++it) {
        const LossBreakdown lb = detail::loss_impl(p, y, cfg.leaky_slope, &g);
        if (!std::isfinite(lb.total))
            throw Diverged("zsn2n training: non-finite loss at iteration " + std::to_string(it));
        const double bc1 = 1.0 - std::pow(cfg.beta1, it);
        const double bc2 = 1.0 - std::pow(cfg.beta2, it);
        auto pf = p.fields();
        auto mf = m.fields();
        auto vf = v.fields();
        auto gf = g.fields();
        for (std::size_t f = 0; f < pf.size(); ++f) {
            std::vector<double>& pw = *pf[f];
            std::vector<double>& mw = *mf[f];
            std::vector<double>& vw = *vf[f];
            std::vector<double>& gw = *gf[f];
            for (std::size_t k = 0; k < pw.size(); ++k) {
                mw[k] = cfg.beta1 * mw[k] + (1.0 - cfg.beta1) * gw[k];
                vw[k] = cfg.beta2 * vw[k] + (1.0 - cfg.beta2) * gw[k] * gw[k];
                const double mhat = mw[k] / bc1;
                const double vhat = vw[k] / bc2;
                pw[k] -= cfg.step_size * mhat / (std::sqrt(vhat) + cfg.epsilon);
                gw[k] = 0.0;
            }
        }
    }
    if (stats) stats->final_ = zsn2n_loss(p, y, cfg.leaky_slope);
    return p;
}

// Residual-learning denoiser: train on y, return y - f(y).
inline Plane denoise_zsn2n(const Plane& y, const TrainConfig& cfg, TrainStats* stats = nullptr) {
    const NetworkParams p = train(y, cfg, stats);
    const Plane noise = net_forward(p, y, cfg.leaky_slope);
    Plane out(y.rows, y.cols);
    for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] = y.v[k] - noise.v[k];
    return out;
}

}  // namespace spade
