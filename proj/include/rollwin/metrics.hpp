#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "rollwin/error.hpp"
#include "rollwin/tensor.hpp"

namespace rw {

/// Toy stability metrics of one rollout. Total averages over every emitted block, Last over
/// the final quarter of blocks.
struct MetricsRecord {
    double drift_total = 0.0;
    double drift_last = 0.0;
    double flicker_total = 0.0;
    double flicker_last = 0.0;
    double sync_corr = 0.0;
    double variance_deficit = 0.0;
    double per_step_latency_ms = 0.0;
};

inline std::vector<double> column_mean(const Tensor2D& m, std::size_t first_row, std::size_t count) {
    std::vector<double> mean(m.cols(), 0.0);
    for (std::size_t r = first_row; r < first_row + count; ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c);
    for (double& v : mean) v /= static_cast<double>(count);
    return mean;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// First block index of the "Last" segment.
inline std::size_t last_segment_start(std::size_t n_blocks) { return n_blocks - std::max<std::size_t>(1, n_blocks / 4); }

/// 1 - cos(block mean, reference mean) for each B-frame block.
inline std::vector<double> block_drift(const Tensor2D& frames, const Tensor2D& reference, int B) {
    const auto ref = column_mean(reference, 0, reference.rows());
    std::vector<double> out;
    for (std::size_t r = 0; r + static_cast<std::size_t>(B) <= frames.rows(); r += static_cast<std::size_t>(B)) {
        out.push_back(1.0 - cosine(column_mean(frames, r, static_cast<std::size_t>(B)), ref));
    }
    return out;
}

/// Mean L2 distance between adjacent frames, for pairs whose later frame lies in [first_frame, end).
inline double flicker(const Tensor2D& frames, std::size_t first_frame = 1) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t r = std::max<std::size_t>(first_frame, 1); r < frames.rows(); ++r, ++n) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < frames.cols(); ++c) {
            const double d = frames(r, c) - frames(r - 1, c);
            d2 += d * d;
        }
        acc += std::sqrt(d2);
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("pearson: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) return 0.0;
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Phase of every frame read off two orthonormal lift columns.
inline std::vector<double> frame_phase(const Tensor2D& frames, std::span<const double> cos_axis,
                                       std::span<const double> sin_axis) {
    std::vector<double> phase(frames.rows());
    for (std::size_t r = 0; r < frames.rows(); ++r) phase[r] = std::atan2(dot(frames.row(r), sin_axis), dot(frames.row(r), cos_axis));
    return phase;
}

inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    return a;
}

/// Correlation between the raw conditioning r_j and the generated phase increment from
/// frame j to j+1.
inline double sync_correlation(const Tensor2D& frames, std::span<const double> raw, std::span<const double> cos_axis,
                               std::span<const double> sin_axis) {
    if (frames.rows() < 3) return 0.0;
    const auto phase = frame_phase(frames, cos_axis, sin_axis);
    std::vector<double> inc, drive;
    for (std::size_t j = 0; j + 1 < frames.rows() && j < raw.size(); ++j) {
        inc.push_back(wrap_angle(phase[j + 1] - phase[j]));
        drive.push_back(raw[j]);
    }
    return pearson(drive, inc);
}

/// Mean per-dimension variance across frames.
inline double mean_variance(const Tensor2D& frames) {
    if (frames.rows() < 2) return 0.0;
    const auto mean = column_mean(frames, 0, frames.rows());
    double acc = 0.0;
    for (std::size_t r = 0; r < frames.rows(); ++r)
        for (std::size_t c = 0; c < frames.cols(); ++c) acc += (frames(r, c) - mean[c]) * (frames(r, c) - mean[c]);
    return acc / static_cast<double>((frames.rows() - 1) * frames.cols());
}

/// 1 - var(generated) / var(data); positive means the generator under-disperses (blur).
inline double variance_deficit(const Tensor2D& generated, const Tensor2D& data) {
    const double vd = mean_variance(data);
    if (vd == 0.0) throw NumericError("variance_deficit: data has zero variance");
    return 1.0 - mean_variance(generated) / vd;
}

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| between two sample sets (one sample per row).
inline double energy_distance(const Tensor2D& x, const Tensor2D& y) {
    if (x.cols() != y.cols() || x.rows() < 2 || y.rows() < 2) throw InvalidArgument("energy_distance: bad sample sets");
    auto dist = [](std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < y.rows(); ++j) xy += dist(x.row(i), y.row(j));
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = i + 1; j < x.rows(); ++j) xx += dist(x.row(i), x.row(j));
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = i + 1; j < y.rows(); ++j) yy += dist(y.row(i), y.row(j));
    const double nx = static_cast<double>(x.rows()), ny = static_cast<double>(y.rows());
    return 2.0 * xy / (nx * ny) - 2.0 * xx / (nx * (nx - 1)) - 2.0 * yy / (ny * (ny - 1));
}

/// Reshapes frames into one row per B-frame block.
inline Tensor2D block_vectors(const Tensor2D& frames, int B) {
    const std::size_t b = static_cast<std::size_t>(B);
    const std::size_t n = frames.rows() / b;
    return Tensor2D(n, b * frames.cols(),
                    std::vector<double>(frames.flat().begin(), frames.flat().begin() + static_cast<std::ptrdiff_t>(n * b * frames.cols())));
}

inline double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Drift, flicker and sync of one emitted stream. `raw` is the scalar drive aligned with the frames.
inline MetricsRecord compute_metrics(const Tensor2D& frames, const Tensor2D& reference, std::span<const double> raw,
                                     std::span<const double> cos_axis, std::span<const double> sin_axis,
                                     const Tensor2D& data_frames, int B) {
    MetricsRecord m;
    const auto drift = block_drift(frames, reference, B);
    if (!drift.empty()) {
        const std::size_t last = last_segment_start(drift.size());
        m.drift_total = mean_of(drift);
        m.drift_last = mean_of(std::span<const double>(drift).subspan(last));
        m.flicker_total = flicker(frames);
        m.flicker_last = flicker(frames, last * static_cast<std::size_t>(B) + 1);
    }
    m.sync_corr = sync_correlation(frames, raw, cos_axis, sin_axis);
    if (data_frames.rows() >= 2 && frames.rows() >= 2) m.variance_deficit = variance_deficit(frames, data_frames);
    return m;
}

}  // namespace rw
