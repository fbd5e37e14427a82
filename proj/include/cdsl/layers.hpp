#ifndef CDSL_LAYERS_HPP
#define CDSL_LAYERS_HPP

#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

#include "cdsl/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Primitive layer kernels, forward and backward. Conventions:
//   conv weight  (out_ch, in_ch, k, k), bias (1, out_ch, 1, 1)
//   tconv weight (in_ch, out_ch, k, k), bias (1, out_ch, 1, 1)
//   batch-norm gamma/beta/running_* all (1, c, 1, 1)
// Parallelism is per batch item or per channel; every output element is owned
// by exactly one thread and cross-image reductions run serially in index
// order, so results do not depend on the thread count.
namespace cdsl::nn {

inline int conv_out_dim(int h, int k, int stride, int pad) {
    return (h + 2 * pad - k) / stride + 1;
}

inline int tconv_out_dim(int h, int k, int stride, int pad, int out_pad) {
    return (h - 1) * stride - 2 * pad + k + out_pad;
}

// ---------------------------------------------------------------------------
// GEMM micro-kernels (row-major). Inner loops are written so -O3 vectorizes.
// ---------------------------------------------------------------------------

// C[M x N] (+)= A[M x K] * B[K x N]
template <typename T>
void gemm(int M, int K, int N, const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(M) * N, T(0));
    for (int i = 0; i < M; ++i) {
        T* ci = c + static_cast<std::size_t>(i) * N;
        const T* ai = a + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T av = ai[k];
            const T* bk = b + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) ci[j] += av * bk[j];
        }
    }
}

// C[M x N] (+)= A[M x L] * B[N x L]^T
template <typename T>
void gemm_abt(int M, int L, int N, const T* a, const T* b, T* c, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * L;
        T* ci = c + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const T* bj = b + static_cast<std::size_t>(j) * L;
            T acc = 0;
            for (int l = 0; l < L; ++l) acc += ai[l] * bj[l];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

// C[M x N] (+)= A[L x M]^T * B[L x N]
template <typename T>
void gemm_atb(int M, int L, int N, const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(M) * N, T(0));
    for (int l = 0; l < L; ++l) {
        const T* al = a + static_cast<std::size_t>(l) * M;
        const T* bl = b + static_cast<std::size_t>(l) * N;
        for (int i = 0; i < M; ++i) {
            const T av = al[i];
            if (av == T(0)) continue;
            T* ci = c + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) ci[j] += av * bl[j];
        }
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im for one image: cols is [(c*k*k) x (oh*ow)]
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, T* cols) {
    const std::size_t m = static_cast<std::size_t>(oh) * ow;
    for (int ch = 0; ch < c; ++ch) {
        const T* xc = x + static_cast<std::size_t>(ch) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * m;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = xc + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// scatter-add adjoint of im2col
template <typename T>
void col2im_add(const T* cols, int c, int h, int w, int k, int stride, int pad,
                int oh, int ow, T* x) {
    const std::size_t m = static_cast<std::size_t>(oh) * ow;
    for (int ch = 0; ch < c; ++ch) {
        T* xc = x + static_cast<std::size_t>(ch) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * m;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * ow;
                    T* dst = xc + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> conv_forward(const Tensor4<T>& x, const Tensor4<T>& wgt,
                        const Tensor4<T>& bias, int stride, int pad) {
    const int oc = wgt.n(), ic = wgt.c(), k = wgt.h();
    if (x.c() != ic)
        throw std::invalid_argument("conv: input has " + std::to_string(x.c()) +
                                    " channels, weight expects " + std::to_string(ic));
    const int oh = conv_out_dim(x.h(), k, stride, pad);
    const int ow = conv_out_dim(x.w(), k, stride, pad);
    Tensor4<T> y(x.n(), oc, oh, ow);
    const int K = ic * k * k;
    const std::size_t M = static_cast<std::size_t>(oh) * ow;

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int img = 0; img < x.n(); ++img) {
        std::vector<T> cols(static_cast<std::size_t>(K) * M);
        im2col(x.plane(img, 0), ic, x.h(), x.w(), k, stride, pad, oh, ow, cols.data());
        gemm(oc, K, static_cast<int>(M), wgt.data.data(), cols.data(), y.plane(img, 0), false);
        for (int j = 0; j < oc; ++j) {
            const T b = bias.data[j];
            T* yp = y.plane(img, j);
            for (std::size_t i = 0; i < M; ++i) yp[i] += b;
        }
    }
    return y;
}

template <typename T>
void conv_backward(const Tensor4<T>& x, const Tensor4<T>& wgt, const Tensor4<T>& dy,
                   int stride, int pad, Tensor4<T>* dx, Tensor4<T>* dwgt, Tensor4<T>* dbias) {
    const int oc = wgt.n(), ic = wgt.c(), k = wgt.h();
    const int oh = dy.h(), ow = dy.w();
    const int K = ic * k * k;
    const std::size_t M = static_cast<std::size_t>(oh) * ow;
    if (dx) *dx = Tensor4<T>(x.shape);
    if (dwgt) *dwgt = Tensor4<T>(wgt.shape);
    if (dbias) *dbias = Tensor4<T>(1, oc, 1, 1);

    std::vector<std::vector<T>> dw_part(x.n());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int img = 0; img < x.n(); ++img) {
        std::vector<T> cols(static_cast<std::size_t>(K) * M);
        im2col(x.plane(img, 0), ic, x.h(), x.w(), k, stride, pad, oh, ow, cols.data());
        if (dwgt) {
            dw_part[img].assign(static_cast<std::size_t>(oc) * K, T(0));
            gemm_abt(oc, static_cast<int>(M), K, dy.plane(img, 0), cols.data(),
                     dw_part[img].data(), false);
        }
        if (dx) {
            std::vector<T> dcols(static_cast<std::size_t>(K) * M);
            gemm_atb(K, oc, static_cast<int>(M), wgt.data.data(), dy.plane(img, 0),
                     dcols.data(), false);
            col2im_add(dcols.data(), ic, x.h(), x.w(), k, stride, pad, oh, ow,
                       dx->plane(img, 0));
        }
    }
    if (dwgt) {
        for (int img = 0; img < x.n(); ++img)
            for (std::size_t i = 0; i < dwgt->data.size(); ++i)
                dwgt->data[i] += dw_part[img][i];
    }
    if (dbias) {
        for (int img = 0; img < x.n(); ++img)
            for (int j = 0; j < oc; ++j) {
                const T* dyp = dy.plane(img, j);
                T acc = 0;
                for (std::size_t i = 0; i < M; ++i) acc += dyp[i];
                dbias->data[j] += acc;
            }
    }
}

// ---------------------------------------------------------------------------
// Transposed convolution (exact adjoint of a conv mapping output -> input)
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> tconv_forward(const Tensor4<T>& x, const Tensor4<T>& wgt,
                         const Tensor4<T>& bias, int stride, int pad, int out_pad) {
    const int ic = wgt.n(), oc = wgt.c(), k = wgt.h();
    if (x.c() != ic)
        throw std::invalid_argument("tconv: input has " + std::to_string(x.c()) +
                                    " channels, weight expects " + std::to_string(ic));
    if (out_pad >= stride)
        throw std::invalid_argument("tconv: output padding must be < stride");
    const int oh = tconv_out_dim(x.h(), k, stride, pad, out_pad);
    const int ow = tconv_out_dim(x.w(), k, stride, pad, out_pad);
    Tensor4<T> y(x.n(), oc, oh, ow);
    const int R = oc * k * k;
    const std::size_t M = static_cast<std::size_t>(x.h()) * x.w();

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int img = 0; img < x.n(); ++img) {
        std::vector<T> cols(static_cast<std::size_t>(R) * M);
        // cols[R x M] = W[ic x R]^T * x_img[ic x M]
        gemm_atb(R, ic, static_cast<int>(M), wgt.data.data(), x.plane(img, 0),
                 cols.data(), false);
        col2im_add(cols.data(), oc, oh, ow, k, stride, pad, x.h(), x.w(), y.plane(img, 0));
        const std::size_t OM = static_cast<std::size_t>(oh) * ow;
        for (int j = 0; j < oc; ++j) {
            const T b = bias.data[j];
            T* yp = y.plane(img, j);
            for (std::size_t i = 0; i < OM; ++i) yp[i] += b;
        }
    }
    return y;
}

template <typename T>
void tconv_backward(const Tensor4<T>& x, const Tensor4<T>& wgt, const Tensor4<T>& dy,
                    int stride, int pad, Tensor4<T>* dx, Tensor4<T>* dwgt, Tensor4<T>* dbias) {
    const int ic = wgt.n(), oc = wgt.c(), k = wgt.h();
    const int R = oc * k * k;
    const std::size_t M = static_cast<std::size_t>(x.h()) * x.w();
    const std::size_t OM = static_cast<std::size_t>(dy.h()) * dy.w();
    if (dx) *dx = Tensor4<T>(x.shape);
    if (dwgt) *dwgt = Tensor4<T>(wgt.shape);
    if (dbias) *dbias = Tensor4<T>(1, oc, 1, 1);

    std::vector<std::vector<T>> dw_part(x.n());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int img = 0; img < x.n(); ++img) {
        // g[R x M]: patches of dy gathered at the positions tconv scattered to
        std::vector<T> g(static_cast<std::size_t>(R) * M);
        im2col(dy.plane(img, 0), oc, dy.h(), dy.w(), k, stride, pad, x.h(), x.w(), g.data());
        if (dx)
            gemm(ic, R, static_cast<int>(M), wgt.data.data(), g.data(), dx->plane(img, 0), false);
        if (dwgt) {
            dw_part[img].assign(static_cast<std::size_t>(ic) * R, T(0));
            gemm_abt(ic, static_cast<int>(M), R, x.plane(img, 0), g.data(),
                     dw_part[img].data(), false);
        }
    }
    if (dwgt) {
        for (int img = 0; img < x.n(); ++img)
            for (std::size_t i = 0; i < dwgt->data.size(); ++i)
                dwgt->data[i] += dw_part[img][i];
    }
    if (dbias) {
        for (int img = 0; img < x.n(); ++img)
            for (int j = 0; j < oc; ++j) {
                const T* dyp = dy.plane(img, j);
                T acc = 0;
                for (std::size_t i = 0; i < OM; ++i) acc += dyp[i];
                dbias->data[j] += acc;
            }
    }
}

// ---------------------------------------------------------------------------
// Max pooling (padding acts as -inf; ties resolved to the first scan position)
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> maxpool_forward(const Tensor4<T>& x, int k, int stride, int pad,
                           std::vector<int>& argmax) {
    const int oh = conv_out_dim(x.h(), k, stride, pad);
    const int ow = conv_out_dim(x.w(), k, stride, pad);
    Tensor4<T> y(x.n(), x.c(), oh, ow);
    argmax.assign(y.numel(), -1);
    const int planes = x.n() * x.c();

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int p = 0; p < planes; ++p) {
        const T* xp = x.data.data() + static_cast<std::size_t>(p) * x.h() * x.w();
        T* yp = y.data.data() + static_cast<std::size_t>(p) * oh * ow;
        int* ap = argmax.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                int best_idx = -1;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= x.h()) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= x.w()) continue;
                        const T v = xp[static_cast<std::size_t>(iy) * x.w() + ix];
                        if (v > best) {
                            best = v;
                            best_idx = iy * x.w() + ix;
                        }
                    }
                }
                if (best_idx < 0)
                    throw std::invalid_argument("max_pool: window has no valid input");
                yp[static_cast<std::size_t>(oy) * ow + ox] = best;
                ap[static_cast<std::size_t>(oy) * ow + ox] = best_idx;
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> maxpool_backward(const Tensor4<T>& dy, const std::vector<int>& argmax,
                            const Shape4& x_shape) {
    Tensor4<T> dx(x_shape);
    const int planes = x_shape.n * x_shape.c;
    const std::size_t om = static_cast<std::size_t>(dy.h()) * dy.w();

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int p = 0; p < planes; ++p) {
        const T* dyp = dy.data.data() + static_cast<std::size_t>(p) * om;
        const int* ap = argmax.data() + static_cast<std::size_t>(p) * om;
        T* dxp = dx.data.data() + static_cast<std::size_t>(p) * x_shape.h * x_shape.w;
        for (std::size_t i = 0; i < om; ++i) dxp[ap[i]] += dyp[i];
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1; // fraction of the new batch statistic

template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, const Tensor4<T>& gamma,
                             const Tensor4<T>& beta, Tensor4<T>& running_mean,
                             Tensor4<T>& running_var, bool train, bool update_running,
                             std::vector<T>& save_mean, std::vector<T>& save_invstd) {
    const int C = x.c();
    const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
    const std::size_t N = static_cast<std::size_t>(x.n()) * plane;
    Tensor4<T> y(x.shape);
    save_mean.assign(C, T(0));
    save_invstd.assign(C, T(0));

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int j = 0; j < C; ++j) {
        double mean, var;
        if (train) {
            double s = 0, s2 = 0;
            for (int img = 0; img < x.n(); ++img) {
                const T* xp = x.plane(img, j);
                for (std::size_t i = 0; i < plane; ++i) {
                    const double v = xp[i];
                    s += v;
                    s2 += v * v;
                }
            }
            mean = s / static_cast<double>(N);
            var = s2 / static_cast<double>(N) - mean * mean;
            if (var < 0) var = 0;
            if (update_running) {
                const double unbiased = N > 1 ? var * static_cast<double>(N) / (N - 1) : var;
                running_mean.data[j] = static_cast<T>((1.0 - kBnMomentum) * running_mean.data[j] +
                                                      kBnMomentum * mean);
                running_var.data[j] = static_cast<T>((1.0 - kBnMomentum) * running_var.data[j] +
                                                     kBnMomentum * unbiased);
            }
        } else {
            mean = running_mean.data[j];
            var = running_var.data[j];
        }
        const double invstd = 1.0 / std::sqrt(var + kBnEps);
        save_mean[j] = static_cast<T>(mean);
        save_invstd[j] = static_cast<T>(invstd);
        const T g = gamma.data[j], b = beta.data[j];
        const T a = static_cast<T>(g * invstd);
        const T shift = static_cast<T>(b - g * invstd * mean);
        for (int img = 0; img < x.n(); ++img) {
            const T* xp = x.plane(img, j);
            T* yp = y.plane(img, j);
            for (std::size_t i = 0; i < plane; ++i) yp[i] = a * xp[i] + shift;
        }
    }
    return y;
}

// Backward through the batch statistics (train mode).
template <typename T>
void batchnorm_backward(const Tensor4<T>& x, const Tensor4<T>& gamma,
                        const std::vector<T>& save_mean, const std::vector<T>& save_invstd,
                        const Tensor4<T>& dy, Tensor4<T>* dx, Tensor4<T>* dgamma,
                        Tensor4<T>* dbeta) {
    const int C = x.c();
    const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
    const double N = static_cast<double>(x.n()) * plane;
    if (dx) *dx = Tensor4<T>(x.shape);
    if (dgamma) *dgamma = Tensor4<T>(1, C, 1, 1);
    if (dbeta) *dbeta = Tensor4<T>(1, C, 1, 1);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int j = 0; j < C; ++j) {
        const double mean = save_mean[j], invstd = save_invstd[j];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int img = 0; img < x.n(); ++img) {
            const T* xp = x.plane(img, j);
            const T* dyp = dy.plane(img, j);
            for (std::size_t i = 0; i < plane; ++i) {
                const double xhat = (xp[i] - mean) * invstd;
                sum_dy += dyp[i];
                sum_dy_xhat += dyp[i] * xhat;
            }
        }
        if (dgamma) dgamma->data[j] = static_cast<T>(sum_dy_xhat);
        if (dbeta) dbeta->data[j] = static_cast<T>(sum_dy);
        if (dx) {
            const double g = gamma.data[j];
            for (int img = 0; img < x.n(); ++img) {
                const T* xp = x.plane(img, j);
                const T* dyp = dy.plane(img, j);
                T* dxp = dx->plane(img, j);
                for (std::size_t i = 0; i < plane; ++i) {
                    const double xhat = (xp[i] - mean) * invstd;
                    dxp[i] = static_cast<T>(g * invstd *
                                            (dyp[i] - sum_dy / N - xhat * sum_dy_xhat / N));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pointwise ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
    Tensor4<T> y(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return y;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& dy) {
    Tensor4<T> dx(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) dx.data[i] = x.data[i] > T(0) ? dy.data[i] : T(0);
    return dx;
}

// output kept strictly inside (0,1) even where the float value would saturate
template <typename T>
Tensor4<T> sigmoid_forward(const Tensor4<T>& x) {
    constexpr T lo = std::numeric_limits<T>::epsilon();
    constexpr T hi = T(1) - std::numeric_limits<T>::epsilon();
    Tensor4<T> y(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x.data[i]))));
        y.data[i] = std::clamp(v, lo, hi);
    }
    return y;
}

template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& y, const Tensor4<T>& dy) {
    Tensor4<T> dx(y.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i)
        dx.data[i] = dy.data[i] * y.data[i] * (T(1) - y.data[i]);
    return dx;
}

template <typename T>
Tensor4<T> add_forward(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (!(a.shape == b.shape))
        throw std::invalid_argument("add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    Tensor4<T> y(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) y.data[i] = a.data[i] + b.data[i];
    return y;
}

template <typename T>
Tensor4<T> concat_forward(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (a.n() != b.n() || !a.shape.same_spatial(b.shape))
        throw std::invalid_argument("concat: incompatible shapes " + a.shape.str() + " vs " +
                                    b.shape.str());
    Tensor4<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (int img = 0; img < a.n(); ++img) {
        std::memcpy(y.plane(img, 0), a.plane(img, 0), sizeof(T) * plane * a.c());
        std::memcpy(y.plane(img, a.c()), b.plane(img, 0), sizeof(T) * plane * b.c());
    }
    return y;
}

// splits upstream gradient by channel ranges
template <typename T>
void concat_backward(const Tensor4<T>& dy, int c_a, Tensor4<T>* da, Tensor4<T>* db) {
    const int c_b = dy.c() - c_a;
    const std::size_t plane = static_cast<std::size_t>(dy.h()) * dy.w();
    *da = Tensor4<T>(dy.n(), c_a, dy.h(), dy.w());
    *db = Tensor4<T>(dy.n(), c_b, dy.h(), dy.w());
    for (int img = 0; img < dy.n(); ++img) {
        std::memcpy(da->plane(img, 0), dy.plane(img, 0), sizeof(T) * plane * c_a);
        std::memcpy(db->plane(img, 0), dy.plane(img, c_a), sizeof(T) * plane * c_b);
    }
}

// ---------------------------------------------------------------------------
// Bilinear resize, corner-aligned-false: src = (dst + 0.5) / scale - 0.5
// ---------------------------------------------------------------------------

struct ResizeTaps {
    std::vector<int> lo, hi;
    std::vector<double> w_lo, w_hi;
};

inline ResizeTaps resize_taps(int in_dim, int out_dim) {
    ResizeTaps t;
    t.lo.resize(out_dim);
    t.hi.resize(out_dim);
    t.w_lo.resize(out_dim);
    t.w_hi.resize(out_dim);
    const double scale = static_cast<double>(out_dim) / in_dim;
    for (int i = 0; i < out_dim; ++i) {
        double src = (i + 0.5) / scale - 0.5;
        if (src < 0) src = 0;
        if (src > in_dim - 1) src = in_dim - 1;
        const int lo = static_cast<int>(std::floor(src));
        const int hi = std::min(lo + 1, in_dim - 1);
        const double f = src - lo;
        t.lo[i] = lo;
        t.hi[i] = hi;
        t.w_lo[i] = 1.0 - f;
        t.w_hi[i] = f;
    }
    return t;
}

template <typename T>
Tensor4<T> bilinear_resize_forward(const Tensor4<T>& x, int oh, int ow) {
    const ResizeTaps ty = resize_taps(x.h(), oh);
    const ResizeTaps tx = resize_taps(x.w(), ow);
    Tensor4<T> y(x.n(), x.c(), oh, ow);
    const int planes = x.n() * x.c();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int p = 0; p < planes; ++p) {
        const T* xp = x.data.data() + static_cast<std::size_t>(p) * x.h() * x.w();
        T* yp = y.data.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const T* r0 = xp + static_cast<std::size_t>(ty.lo[oy]) * x.w();
            const T* r1 = xp + static_cast<std::size_t>(ty.hi[oy]) * x.w();
            for (int ox = 0; ox < ow; ++ox) {
                const double top = tx.w_lo[ox] * r0[tx.lo[ox]] + tx.w_hi[ox] * r0[tx.hi[ox]];
                const double bot = tx.w_lo[ox] * r1[tx.lo[ox]] + tx.w_hi[ox] * r1[tx.hi[ox]];
                yp[static_cast<std::size_t>(oy) * ow + ox] =
                    static_cast<T>(ty.w_lo[oy] * top + ty.w_hi[oy] * bot);
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> bilinear_resize_backward(const Tensor4<T>& dy, const Shape4& x_shape) {
    const ResizeTaps ty = resize_taps(x_shape.h, dy.h());
    const ResizeTaps tx = resize_taps(x_shape.w, dy.w());
    Tensor4<T> dx(x_shape);
    const int planes = x_shape.n * x_shape.c;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int p = 0; p < planes; ++p) {
        const T* dyp = dy.data.data() + static_cast<std::size_t>(p) * dy.h() * dy.w();
        T* dxp = dx.data.data() + static_cast<std::size_t>(p) * x_shape.h * x_shape.w;
        for (int oy = 0; oy < dy.h(); ++oy) {
            for (int ox = 0; ox < dy.w(); ++ox) {
                const double g = dyp[static_cast<std::size_t>(oy) * dy.w() + ox];
                dxp[static_cast<std::size_t>(ty.lo[oy]) * x_shape.w + tx.lo[ox]] +=
                    static_cast<T>(g * ty.w_lo[oy] * tx.w_lo[ox]);
                dxp[static_cast<std::size_t>(ty.lo[oy]) * x_shape.w + tx.hi[ox]] +=
                    static_cast<T>(g * ty.w_lo[oy] * tx.w_hi[ox]);
                dxp[static_cast<std::size_t>(ty.hi[oy]) * x_shape.w + tx.lo[ox]] +=
                    static_cast<T>(g * ty.w_hi[oy] * tx.w_lo[ox]);
                dxp[static_cast<std::size_t>(ty.hi[oy]) * x_shape.w + tx.hi[ox]] +=
                    static_cast<T>(g * ty.w_hi[oy] * tx.w_hi[ox]);
            }
        }
    }
    return dx;
}

} // namespace cdsl::nn

#endif
