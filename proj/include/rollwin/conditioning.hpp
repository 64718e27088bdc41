#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "rollwin/error.hpp"
#include "rollwin/ops.hpp"
#include "rollwin/rng.hpp"
#include "rollwin/schedule.hpp"
#include "rollwin/tensor.hpp"

namespace rw {

struct CondFrame {
    std::int64_t frame_index = 0;
    std::vector<double> features;

    bool is_zero() const noexcept {
        for (double v : features)
            if (v != 0.0) return false;
        return true;
    }
};

/// Frozen featurizer standing in for a streaming speech encoder: a seeded random
/// projection of the causal raw window [t - radius, t], squashed by tanh.
class CondEncoder {
  public:
    static constexpr std::uint64_t kDefaultSeed = 0x5eedc0deULL;

    explicit CondEncoder(std::size_t cond_dim = 8, std::size_t radius = 2, std::uint64_t seed = kDefaultSeed)
        : cond_dim_(cond_dim), radius_(radius) {
        if (cond_dim == 0) throw InvalidArgument("CondEncoder: cond_dim must be > 0");
        Rng rng{seed, 0};
        const double scale = 1.5 / std::sqrt(static_cast<double>(radius + 1));
        weights_ = rng.gaussian(cond_dim, radius + 1, scale);
        bias_ = rng.gaussian(1, cond_dim, 0.1);
    }

    std::size_t cond_dim() const noexcept { return cond_dim_; }
    std::size_t radius() const noexcept { return radius_; }

    /// Features for frame t from raw samples [t - radius, t]; samples before 0 read as zero.
    CondFrame encode(std::span<const double> raw, std::int64_t t) const {
        if (t < 0 || static_cast<std::size_t>(t) >= raw.size()) throw InvalidArgument("encode_cond: frame out of range");
        CondFrame f{t, std::vector<double>(cond_dim_)};
        for (std::size_t c = 0; c < cond_dim_; ++c) {
            double acc = bias_(0, c);
            for (std::size_t k = 0; k <= radius_; ++k) {
                const std::int64_t src = t - static_cast<std::int64_t>(radius_) + static_cast<std::int64_t>(k);
                if (src >= 0) acc += weights_(c, k) * raw[static_cast<std::size_t>(src)];
            }
            f.features[c] = std::tanh(acc);
        }
        return f;
    }

    Tensor2D encode_all(std::span<const double> raw) const {
        Tensor2D out(raw.size(), cond_dim_);
        for (std::size_t t = 0; t < raw.size(); ++t) {
            const CondFrame f = encode(raw, static_cast<std::int64_t>(t));
            std::copy(f.features.begin(), f.features.end(), out.row(t).begin());
        }
        return out;
    }

  private:
    std::size_t cond_dim_;
    std::size_t radius_;
    Tensor2D weights_;
    Tensor2D bias_;
};

/// Append-only per-frame conditioning buffer; frames arrive in order.
class CondStream {
  public:
    explicit CondStream(std::size_t cond_dim = 8) : cond_dim_(cond_dim) {}
    explicit CondStream(const Tensor2D& frames) : cond_dim_(frames.cols()) { append_rows(frames); }

    std::size_t cond_dim() const noexcept { return cond_dim_; }
    std::int64_t available() const noexcept { return static_cast<std::int64_t>(data_.size() / cond_dim_); }

    std::span<const double> row(std::int64_t t) const {
        if (t < 0 || t >= available()) throw InvalidArgument("CondStream: frame out of range");
        return {data_.data() + static_cast<std::size_t>(t) * cond_dim_, cond_dim_};
    }

    Tensor2D slice(std::int64_t first, std::size_t count) const {
        const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(first) * cond_dim_);
        return Tensor2D(count, cond_dim_,
                        std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * cond_dim_)));
    }

    Tensor2D frames() const { return slice(0, static_cast<std::size_t>(available())); }

    void append(const CondFrame& f) {
        if (f.frame_index != available()) throw StateCorruption("CondStream: out-of-order frame");
        if (f.features.size() != cond_dim_) throw InvalidArgument("CondStream: feature width mismatch");
        data_.insert(data_.end(), f.features.begin(), f.features.end());
    }

    void append_rows(const Tensor2D& rows) {
        if (rows.rows() == 0) return;
        if (rows.cols() != cond_dim_) throw InvalidArgument("CondStream: feature width mismatch");
        data_.insert(data_.end(), rows.flat().begin(), rows.flat().end());
    }

  private:
    std::size_t cond_dim_;
    std::vector<double> data_;
};

/// Rows for absolute frames [first_frame, first_frame + count); underrun if not yet received.
inline Tensor2D align_frames(const CondStream& stream, std::int64_t first_frame, std::size_t count) {
    const std::int64_t last = first_frame + static_cast<std::int64_t>(count) - 1;
    if (first_frame < 0) throw InvalidArgument("align_to_window: negative frame index");
    if (last >= stream.available()) throw LookaheadUnderrun(last, stream.available());
    return stream.slice(first_frame, count);
}

/// One row per frame of the window, row j for frame window_start + j.
inline Tensor2D align_to_window(const CondStream& stream, const Window& window, int B) {
    if (window.empty()) return Tensor2D(0, stream.cond_dim());
    return align_frames(stream, window.first_frame(B), window.size() * static_cast<std::size_t>(B));
}

inline CondFrame anchor_cond(std::size_t cond_dim, std::int64_t frame_index = -1) {
    return CondFrame{frame_index, std::vector<double>(cond_dim, 0.0)};
}

/// Additive per-frame conditioning x <- x + a W applied in selected layers.
struct CondInjector {
    Tensor2D projection;  // cond_dim x latent_dim
    std::set<int> injection_layers;

    bool active(int layer) const { return injection_layers.count(layer) > 0; }
};

inline Tensor2D inject(const Tensor2D& tokens, const Tensor2D& conds, const CondInjector& inj, int layer) {
    if (conds.rows() != tokens.rows()) throw InvalidArgument("inject: one cond row per token required");
    if (!inj.active(layer)) return tokens;
    return tokens + matmul(conds, inj.projection);
}

/// Sum of |f_inj(a)| over the given cond rows; zero iff the rows carry no conditioning.
inline double injection_energy(const Tensor2D& conds, const CondInjector& inj) {
    if (conds.rows() == 0) return 0.0;
    const Tensor2D contrib = matmul(conds, inj.projection);
    double e = 0.0;
    for (double v : contrib.flat()) e += std::abs(v);
    return e * static_cast<double>(inj.injection_layers.size());
}

}  // namespace rw
