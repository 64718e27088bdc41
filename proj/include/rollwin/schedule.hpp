#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rollwin/error.hpp"
#include "rollwin/tensor.hpp"

namespace rw {

/// Streaming configuration for the rolling-window mechanism with L blocks and N passes per step.
struct StreamConfig {
    int L = 4;                       // blocks per window
    int N = 1;                       // joint denoising passes per streaming step
    int B = 4;                       // frames per block
    std::size_t latent_dim = 16;
    double fps = 25.0;
    double t_min = 0.0;
    double t_max = 1.0;
    double shift_gamma = 1.0;        // stage spacing exponent
    std::size_t cache_budget_tokens = 8;  // temporal cache budget per layer (default 2 blocks)
    std::int64_t anchor_offset_d = -1;

    // Ablation switches. All true/false defaults describe the full method.
    bool style_anchor = true;
    bool reindex_anchor = true;
    bool anchor_zero_pad = true;
    bool fresh_noise_renoise = false;

    void validate() const {
        if (L < 1) throw ConfigError("StreamConfig: L must be >= 1");
        if (N < 1) throw ConfigError("StreamConfig: N must be >= 1");
        if (B < 1) throw ConfigError("StreamConfig: B must be >= 1");
        if (latent_dim == 0) throw ConfigError("StreamConfig: latent_dim must be > 0");
        if (!(fps > 0.0)) throw ConfigError("StreamConfig: fps must be > 0");
        if (!(t_min >= 0.0 && t_min < 1.0)) throw ConfigError("StreamConfig: t_min must be in [0,1)");
        if (!(t_max > t_min && t_max <= 1.0)) throw ConfigError("StreamConfig: t_max must be in (t_min,1]");
        if (!(shift_gamma > 0.0)) throw ConfigError("StreamConfig: shift_gamma must be > 0");
    }

    std::size_t window_frames() const noexcept { return static_cast<std::size_t>(L) * static_cast<std::size_t>(B); }

    /// Future conditioning frames needed beyond the emitted block: (L-1)*B.
    std::size_t lookahead_frames() const noexcept {
        return static_cast<std::size_t>(L - 1) * static_cast<std::size_t>(B);
    }
};

/// Noise level of every stage; index 0 is the clean endpoint.
struct StageSchedule {
    std::vector<double> stage_times;

    int L() const noexcept { return static_cast<int>(stage_times.size()) - 1; }
    double at(int s) const {
        if (s < 0 || s > L()) throw InvalidArgument("StageSchedule: stage " + std::to_string(s) + " out of range");
        return stage_times[static_cast<std::size_t>(s)];
    }
};

inline StageSchedule build_schedule(const StreamConfig& cfg) {
    cfg.validate();
    StageSchedule sched;
    sched.stage_times.resize(static_cast<std::size_t>(cfg.L) + 1);
    sched.stage_times[0] = 0.0;
    for (int s = 1; s <= cfg.L; ++s) {
        const double frac = static_cast<double>(s) / static_cast<double>(cfg.L);
        sched.stage_times[static_cast<std::size_t>(s)] =
            cfg.t_min + (cfg.t_max - cfg.t_min) * std::pow(frac, cfg.shift_gamma);
    }
    sched.stage_times.back() = cfg.t_max;
    for (std::size_t s = 1; s < sched.stage_times.size(); ++s) {
        if (!(sched.stage_times[s] > sched.stage_times[s - 1])) {
            throw ConfigError("build_schedule: stage times are not strictly increasing");
        }
    }
    return sched;
}

/// The N pass times a block at `stage` visits during one streaming step, descending from t_s.
inline std::vector<double> substep_times(int stage, const StageSchedule& sched, int N) {
    if (stage < 1 || stage > sched.L()) throw InvalidArgument("substep_times: stage out of range");
    if (N < 1) throw InvalidArgument("substep_times: N must be >= 1");
    const double hi = sched.at(stage), lo = sched.at(stage - 1);
    std::vector<double> out(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) out[static_cast<std::size_t>(n)] = hi - (hi - lo) * n / N;
    return out;
}

struct Block {
    std::int64_t block_index = 0;
    int stage = 0;
    Tensor2D frames;      // B x latent_dim
    Tensor2D noise_draw;  // frozen prior sample, drawn once at append
};

struct Window {
    std::vector<Block> blocks;

    std::size_t size() const noexcept { return blocks.size(); }
    bool empty() const noexcept { return blocks.empty(); }
    bool full(int L) const noexcept { return blocks.size() == static_cast<std::size_t>(L); }
    std::int64_t first_frame(int B) const { return blocks.front().block_index * B; }
};

/// Linear-interpolation forward process x_t = (1-t) x0 + t eps.
inline Tensor2D interpolate_noise(const Tensor2D& x0_hat, const Tensor2D& noise, double t) {
    if (!x0_hat.same_shape(noise)) throw InvalidArgument("interpolate_noise: shape mismatch");
    if (t == 0.0) return x0_hat;
    Tensor2D out(x0_hat.rows(), x0_hat.cols());
    const auto a = x0_hat.flat();
    const auto n = noise.flat();
    auto o = out.flat();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 - t) * a[i] + t * n[i];
    return out;
}

inline Block renoise_to_stage(const Tensor2D& x0_hat, const Block& block, int target_stage,
                              const StageSchedule& sched) {
    if (target_stage < 0 || target_stage > sched.L()) {
        throw InvalidArgument("renoise_to_stage: stage " + std::to_string(target_stage) + " out of range");
    }
    Block out = block;
    out.stage = target_stage;
    out.frames = interpolate_noise(x0_hat, block.noise_draw, sched.at(target_stage));
    return out;
}

/// Checks window structure: consecutive block indices, stages consecutive and ending at L.
/// A partially filled window (cold start) is accepted when `allow_partial`.
inline void validate_window(const Window& w, int L, bool allow_partial = true) {
    if (w.empty()) return;
    if (w.size() > static_cast<std::size_t>(L)) throw StateCorruption("window holds more than L blocks");
    if (!allow_partial && !w.full(L)) throw StateCorruption("window is not full");
    for (std::size_t k = 0; k < w.size(); ++k) {
        const Block& b = w.blocks[k];
        if (b.block_index != w.blocks.front().block_index + static_cast<std::int64_t>(k)) {
            throw StateCorruption("window block indices are not consecutive");
        }
        const int expected_stage = L - static_cast<int>(w.size() - 1 - k);
        if (b.stage != expected_stage) {
            throw StateCorruption("window stage " + std::to_string(b.stage) + " at slot " + std::to_string(k) +
                                  ", expected " + std::to_string(expected_stage));
        }
        if (!b.frames.all_finite()) throw StateCorruption("window block frames are not finite");
    }
}

struct SlideResult {
    std::optional<Tensor2D> emitted;
    std::int64_t emitted_index = -1;
    Window next;
};

/// Moves every block one stage down using its own clean prediction, emits a block that
/// reaches stage 0 and appends `fresh` at stage L.
inline SlideResult slide(const Window& window, const std::vector<Tensor2D>& x0_hat, Block fresh,
                         const StageSchedule& sched) {
    if (x0_hat.size() != window.size()) throw InvalidArgument("slide: one prediction per block required");
    if (!window.empty() && fresh.block_index != window.blocks.back().block_index + 1) {
        throw StateCorruption("slide: fresh block index " + std::to_string(fresh.block_index) +
                              " does not continue the window");
    }
    SlideResult res;
    for (std::size_t k = 0; k < window.size(); ++k) {
        const Block& b = window.blocks[k];
        if (b.stage == 1) {
            if (k != 0) throw StateCorruption("slide: stage-1 block is not leftmost");
            res.emitted = x0_hat[k];
            res.emitted_index = b.block_index;
            continue;
        }
        res.next.blocks.push_back(renoise_to_stage(x0_hat[k], b, b.stage - 1, sched));
    }
    fresh.stage = sched.L();
    res.next.blocks.push_back(std::move(fresh));
    return res;
}

}  // namespace rw
