#include "layers.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace firescar::nn {

namespace {

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
                b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
                b, ldb, beta, c, ldc);
}

template <typename T>
Parameter<T> make_parameter(std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return {std::move(name), std::move(shape), std::vector<T>(n, T{}), std::vector<T>(n, T{})};
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, std::string name)
    : weight(make_parameter<T>(name + ".weight", {out_channels, in_channels, kernel, kernel})),
      bias(make_parameter<T>(name + ".bias", {out_channels})),
      in_(in_channels),
      out_(out_channels),
      k_(kernel) {
    if (kernel != 1 && kernel != 3) throw ContractViolation("Conv2d: only 1x1 and 3x3 kernels are supported");
}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng) {
    // He-uniform for the weights; biases start at zero.
    const double fan_in = static_cast<double>(in_) * k_ * k_;
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : weight.value) v = static_cast<T>(dist(rng));
    std::fill(bias.value.begin(), bias.value.end(), T{});
}

template <typename T>
void Conv2d<T>::im2col(const T* x, int h, int w, T* col) const {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < in_; ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                const int dx = kx - 1;
                for (int y = 0; y < h; ++y) {
                    T* dst = row + static_cast<std::size_t>(y) * w;
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) {
                        std::fill(dst, dst + w, T{});
                        continue;
                    }
                    const T* src = x + ci * hw + static_cast<std::size_t>(sy) * w;
                    if (dx == 0) {
                        std::memcpy(dst, src, sizeof(T) * w);
                    } else if (dx < 0) {
                        dst[0] = T{};
                        std::memcpy(dst + 1, src, sizeof(T) * (w - 1));
                    } else {
                        std::memcpy(dst, src + 1, sizeof(T) * (w - 1));
                        dst[w - 1] = T{};
                    }
                }
            }
}

template <typename T>
void Conv2d<T>::col2im(const T* col, int h, int w, T* x) const {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::fill(x, x + in_ * hw, T{});
    for (int ci = 0; ci < in_; ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                const int dx = kx - 1;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(y) * w;
                    T* dst = x + ci * hw + static_cast<std::size_t>(sy) * w;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int xx = x0; xx < x1; ++xx) dst[xx + dx] += src[xx];
                }
            }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
    if (x.c != in_)
        throw ContractViolation(weight.name + ": expected " + std::to_string(in_) + " input channels, got " +
                                std::to_string(x.c));
    input_ = x;
    Tensor<T> y(x.n, out_, x.h, x.w);
    const int hw = static_cast<int>(x.plane());
    const int kdim = in_ * k_ * k_;
    if (k_ == 3) col_.resize(static_cast<std::size_t>(kdim) * hw);
    for (int i = 0; i < x.n; ++i) {
        const T* col = x.sample(i);
        if (k_ == 3) {
            im2col(x.sample(i), x.h, x.w, col_.data());
            col = col_.data();
        }
        T* out = y.sample(i);
        for (int o = 0; o < out_; ++o) std::fill(out + static_cast<std::size_t>(o) * hw, out + static_cast<std::size_t>(o + 1) * hw, bias.value[o]);
        gemm(false, false, out_, hw, kdim, T{1}, weight.value.data(), kdim, col, hw, T{1}, out, hw);
    }
    return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
    const Tensor<T>& x = input_;
    if (grad_out.n != x.n || grad_out.c != out_ || grad_out.h != x.h || grad_out.w != x.w)
        throw ContractViolation(weight.name + ": gradient shape does not match the last forward pass");
    Tensor<T> gx(x.n, in_, x.h, x.w);
    const int hw = static_cast<int>(x.plane());
    const int kdim = in_ * k_ * k_;
    std::vector<T> dcol(k_ == 3 ? static_cast<std::size_t>(kdim) * hw : 0);
    if (k_ == 3) col_.resize(static_cast<std::size_t>(kdim) * hw);
    for (int i = 0; i < x.n; ++i) {
        const T* g = grad_out.sample(i);
        const T* col = x.sample(i);
        if (k_ == 3) {
            im2col(x.sample(i), x.h, x.w, col_.data());
            col = col_.data();
        }
        gemm(false, true, out_, kdim, hw, T{1}, g, hw, col, hw, T{1}, weight.grad.data(), kdim);
        for (int o = 0; o < out_; ++o) {
            T s{};
            const T* row = g + static_cast<std::size_t>(o) * hw;
            for (int p = 0; p < hw; ++p) s += row[p];
            bias.grad[o] += s;
        }
        if (k_ == 3) {
            gemm(true, false, kdim, hw, out_, T{1}, weight.value.data(), kdim, g, hw, T{0}, dcol.data(), hw);
            col2im(dcol.data(), x.h, x.w, gx.sample(i));
        } else {
            gemm(true, false, kdim, hw, out_, T{1}, weight.value.data(), kdim, g, hw, T{0}, gx.sample(i), hw);
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
}  // namespace

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, std::string name)
    : gamma(make_parameter<T>(name + ".gamma", {channels})),
      beta(make_parameter<T>(name + ".beta", {channels})),
      running_mean(channels, T{0}),
      running_var(channels, T{1}),
      channels_(channels) {
    std::fill(gamma.value.begin(), gamma.value.end(), T{1});
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) {
    if (x.c != channels_) throw ContractViolation(gamma.name + ": channel mismatch");
    Tensor<T> y(x.n, x.c, x.h, x.w);
    const std::size_t hw = x.plane();
    const double m = static_cast<double>(x.n) * static_cast<double>(hw);
    if (training) {
        xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
        inv_std_.assign(channels_, T{});
    }
    for (int ch = 0; ch < channels_; ++ch) {
        double mean, var;
        if (training) {
            double s = 0;
            for (int i = 0; i < x.n; ++i) {
                const T* p = x.sample(i) + ch * hw;
                for (std::size_t q = 0; q < hw; ++q) s += p[q];
            }
            mean = s / m;
            double ss = 0;
            for (int i = 0; i < x.n; ++i) {
                const T* p = x.sample(i) + ch * hw;
                for (std::size_t q = 0; q < hw; ++q) ss += (p[q] - mean) * (p[q] - mean);
            }
            var = ss / m;
            running_mean[ch] = static_cast<T>((1 - kBnMomentum) * running_mean[ch] + kBnMomentum * mean);
            const double unbiased = m > 1 ? var * m / (m - 1) : var;
            running_var[ch] = static_cast<T>((1 - kBnMomentum) * running_var[ch] + kBnMomentum * unbiased);
        } else {
            mean = running_mean[ch];
            var = running_var[ch];
        }
        const double inv = 1.0 / std::sqrt(var + kBnEps);
        if (training) inv_std_[ch] = static_cast<T>(inv);
        const T g = gamma.value[ch], b = beta.value[ch];
        for (int i = 0; i < x.n; ++i) {
            const T* p = x.sample(i) + ch * hw;
            T* out = y.sample(i) + ch * hw;
            T* xh = training ? xhat_.sample(i) + ch * hw : nullptr;
            for (std::size_t q = 0; q < hw; ++q) {
                const T v = static_cast<T>((p[q] - mean) * inv);
                if (xh) xh[q] = v;
                out[q] = g * v + b;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
    if (!grad_out.same_shape(xhat_)) throw ContractViolation(gamma.name + ": backward requires a training-mode forward");
    Tensor<T> gx(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
    const std::size_t hw = grad_out.plane();
    const double m = static_cast<double>(grad_out.n) * static_cast<double>(hw);
    for (int ch = 0; ch < channels_; ++ch) {
        double sum_g = 0, sum_gx = 0;
        for (int i = 0; i < grad_out.n; ++i) {
            const T* g = grad_out.sample(i) + ch * hw;
            const T* xh = xhat_.sample(i) + ch * hw;
            for (std::size_t q = 0; q < hw; ++q) {
                sum_g += g[q];
                sum_gx += g[q] * xh[q];
            }
        }
        gamma.grad[ch] += static_cast<T>(sum_gx);
        beta.grad[ch] += static_cast<T>(sum_g);
        const double scale = gamma.value[ch] * inv_std_[ch] / m;
        for (int i = 0; i < grad_out.n; ++i) {
            const T* g = grad_out.sample(i) + ch * hw;
            const T* xh = xhat_.sample(i) + ch * hw;
            T* out = gx.sample(i) + ch * hw;
            for (std::size_t q = 0; q < hw; ++q) out[q] = static_cast<T>(scale * (m * g[q] - sum_g - xh[q] * sum_gx));
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Activation

namespace {
constexpr double kLeakySlope = 0.01;
}

template <typename T>
Tensor<T> Activation<T>::forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    positive_.resize(x.data.size());
    const T slope = kind_ == ActivationKind::ReLU ? T{0} : static_cast<T>(kLeakySlope);
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        const bool pos = y.data[i] > T{0};
        positive_[i] = pos;
        if (!pos) y.data[i] *= slope;
    }
    return y;
}

template <typename T>
Tensor<T> Activation<T>::backward(const Tensor<T>& grad_out) {
    if (grad_out.data.size() != positive_.size()) throw ContractViolation("Activation: gradient shape mismatch");
    Tensor<T> g = grad_out;
    const T slope = kind_ == ActivationKind::ReLU ? T{0} : static_cast<T>(kLeakySlope);
    for (std::size_t i = 0; i < g.data.size(); ++i)
        if (!positive_[i]) g.data[i] *= slope;
    return g;
}

// ---------------------------------------------------------------------------
// MaxPool2x2

template <typename T>
Tensor<T> MaxPool2x2<T>::forward(const Tensor<T>& x) {
    if (x.h % 2 || x.w % 2) throw ContractViolation("MaxPool2x2: odd spatial size " + x.shape_string());
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
    argmax_.resize(y.data.size());
    std::size_t o = 0;
    for (int i = 0; i < x.n; ++i)
        for (int ch = 0; ch < x.c; ++ch) {
            const std::size_t base = (static_cast<std::size_t>(i) * x.c + ch) * x.plane();
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx, ++o) {
                    std::size_t best = base + static_cast<std::size_t>(2 * yy) * x.w + 2 * xx;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = base + static_cast<std::size_t>(2 * yy + dy) * x.w + 2 * xx + dx;
                            if (x.data[idx] > x.data[best]) best = idx;
                        }
                    y.data[o] = x.data[best];
                    argmax_[o] = static_cast<std::uint32_t>(best);
                }
        }
    return y;
}

template <typename T>
Tensor<T> MaxPool2x2<T>::backward(const Tensor<T>& grad_out) {
    if (grad_out.data.size() != argmax_.size()) throw ContractViolation("MaxPool2x2: gradient shape mismatch");
    Tensor<T> gx(grad_out.n, grad_out.c, in_h_, in_w_);
    for (std::size_t o = 0; o < argmax_.size(); ++o) gx.data[argmax_[o]] += grad_out.data[o];
    return gx;
}

// ---------------------------------------------------------------------------
// UpsampleBilinear2x

namespace {

struct Tap {
    int i0;
    int i1;
    double frac;
};

std::vector<Tap> corner_aligned_taps(int in, int out) {
    std::vector<Tap> taps(out);
    const double scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    for (int o = 0; o < out; ++o) {
        const double s = o * scale;
        int i0 = static_cast<int>(std::floor(s));
        i0 = std::min(i0, in - 1);
        const int i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, s - i0};
    }
    return taps;
}

}  // namespace

template <typename T>
Tensor<T> UpsampleBilinear2x<T>::forward(const Tensor<T>& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<T> y(x.n, x.c, 2 * x.h, 2 * x.w);
    const auto ty = corner_aligned_taps(x.h, y.h);
    const auto tx = corner_aligned_taps(x.w, y.w);
    for (int i = 0; i < x.n; ++i)
        for (int ch = 0; ch < x.c; ++ch) {
            const T* src = x.sample(i) + ch * x.plane();
            T* dst = y.sample(i) + ch * y.plane();
            for (int oy = 0; oy < y.h; ++oy) {
                const auto& a = ty[oy];
                const T* r0 = src + static_cast<std::size_t>(a.i0) * x.w;
                const T* r1 = src + static_cast<std::size_t>(a.i1) * x.w;
                const T wy = static_cast<T>(a.frac);
                for (int ox = 0; ox < y.w; ++ox) {
                    const auto& b = tx[ox];
                    const T wx = static_cast<T>(b.frac);
                    const T top = r0[b.i0] + wx * (r0[b.i1] - r0[b.i0]);
                    const T bot = r1[b.i0] + wx * (r1[b.i1] - r1[b.i0]);
                    dst[static_cast<std::size_t>(oy) * y.w + ox] = top + wy * (bot - top);
                }
            }
        }
    return y;
}

template <typename T>
Tensor<T> UpsampleBilinear2x<T>::backward(const Tensor<T>& grad_out) {
    if (grad_out.h != 2 * in_h_ || grad_out.w != 2 * in_w_) throw ContractViolation("Upsample: gradient shape mismatch");
    Tensor<T> gx(grad_out.n, grad_out.c, in_h_, in_w_);
    const auto ty = corner_aligned_taps(in_h_, grad_out.h);
    const auto tx = corner_aligned_taps(in_w_, grad_out.w);
    for (int i = 0; i < grad_out.n; ++i)
        for (int ch = 0; ch < grad_out.c; ++ch) {
            const T* g = grad_out.sample(i) + ch * grad_out.plane();
            T* dst = gx.sample(i) + ch * gx.plane();
            for (int oy = 0; oy < grad_out.h; ++oy) {
                const auto& a = ty[oy];
                const T wy = static_cast<T>(a.frac);
                T* r0 = dst + static_cast<std::size_t>(a.i0) * in_w_;
                T* r1 = dst + static_cast<std::size_t>(a.i1) * in_w_;
                for (int ox = 0; ox < grad_out.w; ++ox) {
                    const auto& b = tx[ox];
                    const T wx = static_cast<T>(b.frac);
                    const T v = g[static_cast<std::size_t>(oy) * grad_out.w + ox];
                    r0[b.i0] += v * (1 - wy) * (1 - wx);
                    r0[b.i1] += v * (1 - wy) * wx;
                    r1[b.i0] += v * wy * (1 - wx);
                    r1[b.i1] += v * wy * wx;
                }
            }
        }
    return gx;
}

// ---------------------------------------------------------------------------
// Concatenation

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw ContractViolation("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
    Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
    for (int i = 0; i < a.n; ++i) {
        std::copy_n(a.sample(i), a.sample_size(), out.sample(i));
        std::copy_n(b.sample(i), b.sample_size(), out.sample(i) + a.sample_size());
    }
    return out;
}

template <typename T>
void split_channels(const Tensor<T>& g, int first_channels, Tensor<T>& ga, Tensor<T>& gb) {
    ga = Tensor<T>(g.n, first_channels, g.h, g.w);
    gb = Tensor<T>(g.n, g.c - first_channels, g.h, g.w);
    for (int i = 0; i < g.n; ++i) {
        std::copy_n(g.sample(i), ga.sample_size(), ga.sample(i));
        std::copy_n(g.sample(i) + ga.sample_size(), gb.sample_size(), gb.sample(i));
    }
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Activation<float>;
template class Activation<double>;
template class MaxPool2x2<float>;
template class MaxPool2x2<double>;
template class UpsampleBilinear2x<float>;
template class UpsampleBilinear2x<double>;
template Tensor<float> concat_channels(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> concat_channels(const Tensor<double>&, const Tensor<double>&);
template void split_channels(const Tensor<float>&, int, Tensor<float>&, Tensor<float>&);
template void split_channels(const Tensor<double>&, int, Tensor<double>&, Tensor<double>&);

}  // namespace firescar::nn
