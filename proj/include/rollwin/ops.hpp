#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rollwin/error.hpp"
#include "rollwin/tensor.hpp"

namespace rw {

// ---------------------------------------------------------------- dense kernels

/// a[m,k] * b[k,n]
inline Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimension mismatch");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor2D out(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* o = out.row(i).data();
        const double* ar = a.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = b.row(p).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
        }
    }
    return out;
}

/// a[m,k] * b[n,k]^T
inline Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols() != b.cols()) throw InvalidArgument("matmul_nt: inner dimension mismatch");
    Tensor2D out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto br = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < ar.size(); ++p) s += ar[p] * br[p];
            out(i, j) = s;
        }
    }
    return out;
}

/// a[k,m]^T * b[k,n]
inline Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b) {
    if (a.rows() != b.rows()) throw InvalidArgument("matmul_tn: inner dimension mismatch");
    Tensor2D out(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p) {
        const auto ar = a.row(p);
        const auto br = b.row(p);
        for (std::size_t i = 0; i < ar.size(); ++i) {
            const double av = ar[i];
            double* o = out.row(i).data();
            for (std::size_t j = 0; j < br.size(); ++j) o[j] += av * br[j];
        }
    }
    return out;
}

/// Adds a 1 x n row to every row of x.
inline Tensor2D add_row(Tensor2D x, const Tensor2D& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols()) throw InvalidArgument("add_row: bias shape");
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
    }
    return x;
}

/// Row-wise softmax with max subtraction.
inline Tensor2D softmax_rows(Tensor2D x) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        if (r.empty()) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : r) mx = std::max(mx, v);
        double s = 0.0;
        for (double& v : r) {
            v = std::exp(v - mx);
            s += v;
        }
        for (double& v : r) v /= s;
    }
    return x;
}

struct LayerNormCache {
    std::vector<double> mean;
    std::vector<double> inv_std;
    Tensor2D normalized;
};

constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer norm with affine gain/bias (both 1 x cols).
inline Tensor2D layer_norm(const Tensor2D& x, const Tensor2D& gain, const Tensor2D& bias,
                           LayerNormCache* cache = nullptr, double eps = kLayerNormEps) {
    if (gain.rows() != 1 || gain.cols() != x.cols() || !gain.same_shape(bias)) {
        throw InvalidArgument("layer_norm: gain/bias shape");
    }
    const std::size_t n = x.cols();
    Tensor2D out(x.rows(), n);
    Tensor2D xhat(x.rows(), n);
    std::vector<double> means(x.rows()), inv(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        double mu = 0.0;
        for (double v : r) mu += v;
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (double v : r) var += (v - mu) * (v - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        means[i] = mu;
        inv[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            xhat(i, j) = (r[j] - mu) * is;
            out(i, j) = xhat(i, j) * gain(0, j) + bias(0, j);
        }
    }
    if (cache) {
        cache->mean = std::move(means);
        cache->inv_std = std::move(inv);
        cache->normalized = std::move(xhat);
    }
    return out;
}

/// tanh approximation of GELU.
inline double gelu(double x) noexcept {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) noexcept {
    constexpr double c = 0.7978845608028654;
    const double u = c * (x + 0.044715 * x * x * x);
    const double th = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

// ---------------------------------------------------------------- rotary embedding

struct RopeConfig {
    std::size_t head_dim = 16;
    double base = 10000.0;

    void validate() const {
        if (head_dim == 0 || head_dim % 2 != 0) throw InvalidArgument("RopeConfig: head_dim must be even and > 0");
        if (!(base > 1.0)) throw InvalidArgument("RopeConfig: base must be > 1");
    }

    double frequency(std::size_t pair) const noexcept {
        return std::pow(base, -2.0 * static_cast<double>(pair) / static_cast<double>(head_dim));
    }
};

/// Rotates consecutive feature pairs (2j, 2j+1) by position * base^(-2j/head_dim).
inline void rope_apply_inplace(std::span<double> v, std::int64_t position, const RopeConfig& cfg) {
    if (v.size() != cfg.head_dim) {
        throw InvalidArgument("rope_apply: key length " + std::to_string(v.size()) + " != head_dim " +
                              std::to_string(cfg.head_dim));
    }
    const double pos = static_cast<double>(position);
    for (std::size_t j = 0; j < cfg.head_dim / 2; ++j) {
        const double angle = pos * cfg.frequency(j);
        const double c = std::cos(angle), s = std::sin(angle);
        const double a = v[2 * j], b = v[2 * j + 1];
        v[2 * j] = a * c - b * s;
        v[2 * j + 1] = a * s + b * c;
    }
}

inline std::vector<double> rope_apply(std::span<const double> key, std::int64_t position, const RopeConfig& cfg) {
    std::vector<double> out(key.begin(), key.end());
    rope_apply_inplace(out, position, cfg);
    return out;
}

/// Applies RoPE to every row at its own position.
inline Tensor2D rope_rows(Tensor2D x, std::span<const std::int64_t> positions, const RopeConfig& cfg) {
    if (positions.size() != x.rows()) throw InvalidArgument("rope_rows: one position per row required");
    for (std::size_t i = 0; i < x.rows(); ++i) rope_apply_inplace(x.row(i), positions[i], cfg);
    return x;
}

// ---------------------------------------------------------------- attention

/// softmax(Q K^T / sqrt(d)) V. Unmasked: which keys are visible is decided by the caller.
inline Tensor2D attention(const Tensor2D& queries, const Tensor2D& keys, const Tensor2D& values) {
    if (keys.rows() != values.rows()) throw InvalidArgument("attention: keys/values row mismatch");
    if (queries.cols() != keys.cols()) throw InvalidArgument("attention: query/key width mismatch");
    if (keys.rows() == 0) throw InvalidArgument("attention: no keys");
    Tensor2D scores = matmul_nt(queries, keys);
    scores *= 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    return matmul(softmax_rows(std::move(scores)), values);
}

// ---------------------------------------------------------------- gradient oracle

/// Central-difference gradient. Throws NumericError naming the first non-finite probe.
inline std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                            std::span<const double> x, double eps) {
    if (!(eps > 0.0)) throw InvalidArgument("finite_diff_grad: eps must be positive");
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        probe[j] = x[j] + eps;
        const double fp = f(probe);
        probe[j] = x[j] - eps;
        const double fm = f(probe);
        probe[j] = x[j];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_diff_grad: non-finite function value at index " + std::to_string(j));
        }
        grad[j] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

}  // namespace rw
