#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "rollwin/conditioning.hpp"
#include "rollwin/denoiser.hpp"
#include "rollwin/error.hpp"
#include "rollwin/kvcache.hpp"
#include "rollwin/rng.hpp"
#include "rollwin/schedule.hpp"

namespace rw {

struct LatencySample {
    std::int64_t step = 0;
    std::int64_t wall_ns = 0;
    std::size_t context_rows = 0;
};

/// Everything one denoising pass saw; handed to observers (rollout harvesting, probes).
struct PassRecord {
    std::int64_t step = 0;
    int pass = 0;
    std::vector<int> stages;
    std::vector<double> block_times;
    TokenInputs inputs;
    std::vector<LayerPrefix> prefix;
    PredictedWindow prediction;
};

struct StreamState {
    StreamConfig cfg;
    StageSchedule sched;
    std::shared_ptr<const DenoiserParams> params;
    std::vector<StyleAnchor> anchors;   // per layer
    std::vector<TemporalCache> caches;  // per layer
    Window window;
    std::int64_t step_i = 0;
    Rng rng;
    std::int64_t next_block_index = 0;
    std::vector<LatencySample> latency_ledger;
    std::map<std::int64_t, int> update_counters;  // blocks currently in the window
    std::vector<int> emitted_update_counts;       // one entry per emitted block, in order
    std::uint64_t denoise_passes = 0;
    double anchor_cond_energy = 0.0;

    std::function<void(const PassRecord&)> on_pass;

    AnchorPlacement placement() const { return AnchorPlacement{cfg.style_anchor, cfg.reindex_anchor}; }
};

/// Builds the per-layer style anchor from the reference block and an empty stream.
/// `reference_cond` is the anchor's original conditioning; it is only used when
/// anchor zero-padding is disabled.
inline StreamState init_stream(const Tensor2D& reference, const Tensor2D& reference_cond, const StreamConfig& cfg,
                               std::shared_ptr<const DenoiserParams> params, std::uint64_t seed) {
    cfg.validate();
    if (!params) throw ConfigError("init_stream: no parameters");
    if (params->dims.latent_dim != cfg.latent_dim) throw ConfigError("init_stream: latent_dim mismatch with model");
    if (reference.rows() == 0 || reference.cols() != cfg.latent_dim) {
        throw InvalidArgument("init_stream: reference must be anchor_tokens x latent_dim");
    }
    if (reference_cond.rows() != reference.rows() || reference_cond.cols() != params->dims.cond_dim) {
        throw InvalidArgument("init_stream: reference conditioning must have one row per anchor token");
    }
    StreamState s;
    s.cfg = cfg;
    s.sched = build_schedule(cfg);
    s.params = std::move(params);
    s.rng = Rng{seed, 0};
    const Tensor2D anchor_conds = cfg.anchor_zero_pad ? Tensor2D(reference.rows(), s.params->dims.cond_dim) : reference_cond;
    s.anchors = encode_anchor(*s.params, reference, anchor_conds, cfg.anchor_offset_d);
    s.anchor_cond_energy = cfg.style_anchor ? injection_energy(anchor_conds, s.params->injector()) : 0.0;
    s.caches.assign(static_cast<std::size_t>(s.params->dims.n_layers), TemporalCache(cfg.cache_budget_tokens));
    return s;
}

inline Block make_fresh_block(StreamState& s) {
    Block b;
    b.block_index = s.next_block_index++;
    b.stage = s.cfg.L;
    b.noise_draw = s.rng.gaussian(static_cast<std::size_t>(s.cfg.B), s.cfg.latent_dim);
    b.frames = interpolate_noise(Tensor2D(b.noise_draw.rows(), b.noise_draw.cols()), b.noise_draw, s.sched.at(s.cfg.L));
    return b;
}

/// First non-anchor frame of the context the next step will assemble.
inline std::int64_t current_u_i(const StreamState& s) {
    const std::int64_t window_start = s.window.empty() ? s.next_block_index * s.cfg.B : s.window.first_frame(s.cfg.B);
    return context_start(s.caches.front(), window_start);
}

inline std::size_t context_rows(const StreamState& s) {
    const std::size_t anchor = s.cfg.style_anchor ? s.anchors.front().tokens() : 0;
    const std::size_t window = (s.window.empty() ? 1 : s.window.size()) * static_cast<std::size_t>(s.cfg.B);
    return anchor + s.caches.front().tokens() + window;
}

/// Last conditioning frame the next step needs.
inline std::int64_t required_cond_frame(const StreamState& s) {
    const std::int64_t last_block = s.window.empty() ? s.next_block_index : s.window.blocks.back().block_index;
    return (last_block + 1) * s.cfg.B - 1;
}

struct StepOutput {
    std::optional<Tensor2D> frames;
    std::int64_t block_index = -1;
};

/// One streaming step: assemble context, N joint passes, emit, cache the emitted block, slide.
inline StepOutput step(StreamState& s, const CondStream& conds) {
    const auto t0 = std::chrono::steady_clock::now();
    const StreamConfig& cfg = s.cfg;
    const DenoiserParams& params = *s.params;
    if (s.window.empty()) s.window.blocks.push_back(make_fresh_block(s));
    validate_window(s.window, cfg.L);

    const Tensor2D window_conds = align_to_window(conds, s.window, cfg.B);
    const std::size_t rows = context_rows(s);

    std::vector<std::vector<double>> pass_times;
    for (const Block& b : s.window.blocks) pass_times.push_back(substep_times(b.stage, s.sched, cfg.N));

    PredictedWindow pred;
    for (int n = 0; n < cfg.N; ++n) {
        std::vector<double> block_times;
        for (const auto& pt : pass_times) block_times.push_back(pt[static_cast<std::size_t>(n)]);
        const TokenInputs in = window_inputs(s.window, block_times, window_conds, cfg.B);
        const std::int64_t u_i = context_start(s.caches.front(), in.positions.front());
        std::vector<LayerPrefix> prefix = build_prefix(params.dims, s.anchors, s.caches, u_i, s.placement());
        pred = split_blocks(evaluate(params, in, prefix), s.window.size(), cfg.B);
        ++s.denoise_passes;
        for (const Block& b : s.window.blocks) ++s.update_counters[b.block_index];
        if (s.on_pass) {
            PassRecord rec{s.step_i, n, {}, block_times, in, std::move(prefix), pred};
            for (const Block& b : s.window.blocks) rec.stages.push_back(b.stage);
            s.on_pass(rec);
        }
        if (n + 1 < cfg.N) {
            for (std::size_t k = 0; k < s.window.size(); ++k) {
                Block& b = s.window.blocks[k];
                if (cfg.fresh_noise_renoise) b.noise_draw = s.rng.gaussian(b.noise_draw.rows(), b.noise_draw.cols());
                b.frames = interpolate_noise(pred.x0_hat[k], b.noise_draw, pass_times[k][static_cast<std::size_t>(n) + 1]);
            }
        }
    }

    if (cfg.fresh_noise_renoise) {
        for (Block& b : s.window.blocks) {
            if (b.stage > 1) b.noise_draw = s.rng.gaussian(b.noise_draw.rows(), b.noise_draw.cols());
        }
    }
    SlideResult slid = slide(s.window, pred.x0_hat, make_fresh_block(s), s.sched);
    StepOutput out;
    if (slid.emitted) {
        const std::int64_t k = slid.emitted_index;
        const int count = s.update_counters[k];
        s.update_counters.erase(k);
        if (count != cfg.L * cfg.N) {
            throw StateCorruption("block " + std::to_string(k) + " emitted after " + std::to_string(count) +
                                  " passes, expected " + std::to_string(cfg.L * cfg.N));
        }
        s.emitted_update_counts.push_back(count);
        const Tensor2D block_conds = window_conds.slice_rows(0, static_cast<std::size_t>(cfg.B));
        auto entries = encode_clean_kv(params, *slid.emitted, k, k * cfg.B, block_conds, s.anchors, s.placement());
        for (std::size_t l = 0; l < s.caches.size(); ++l) s.caches[l].push(std::move(entries[l]));
        out.frames = std::move(slid.emitted);
        out.block_index = k;
    }
    s.window = std::move(slid.next);
    validate_window(s.window, cfg.L);
    const auto t1 = std::chrono::steady_clock::now();
    s.latency_ledger.push_back(
        LatencySample{s.step_i, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count(), rows});
    ++s.step_i;
    return out;
}

// ---------------------------------------------------------------- latency protocol

struct LatencyReport {
    double steady_state_per_frame_s = 0.0;
    double audio_lookahead_s = 0.0;
    double end_to_end_delay_s = 0.0;
    std::vector<std::int64_t> step_ns;
};

inline double audio_lookahead_seconds(const StreamConfig& cfg) {
    return static_cast<double>((cfg.L - 1) * cfg.B) / cfg.fps;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Median step time over steps after `warmup`, normalized per emitted frame.
inline double steady_state_per_frame(const std::vector<LatencySample>& ledger, int B, std::size_t warmup) {
    std::vector<double> ns;
    for (std::size_t i = warmup; i < ledger.size(); ++i) ns.push_back(static_cast<double>(ledger[i].wall_ns));
    if (ns.empty()) {
        for (const auto& l : ledger) ns.push_back(static_cast<double>(l.wall_ns));
    }
    return median(std::move(ns)) * 1e-9 / static_cast<double>(B);
}

inline void write_latency_csv(std::ostream& os, const std::vector<LatencySample>& ledger) {
    os << "step,wall_ns,context_rows\n";
    for (const auto& l : ledger) os << l.step << ',' << l.wall_ns << ',' << l.context_rows << '\n';
}

struct RunOutput {
    Tensor2D frames;  // total_frames x latent_dim
    LatencyReport latency;
    std::vector<LatencySample> ledger;
    std::vector<int> emitted_update_counts;
};

/// Batch driver: streams until `total_frames` frames are emitted.
inline RunOutput run(const StreamConfig& cfg, std::shared_ptr<const DenoiserParams> params, const Tensor2D& reference,
                     const Tensor2D& reference_cond, const CondStream& conds, std::size_t total_frames,
                     std::uint64_t seed, const std::function<void(const PassRecord&)>& on_pass = {}) {
    StreamState s = init_stream(reference, reference_cond, cfg, std::move(params), seed);
    s.on_pass = on_pass;
    RunOutput out;
    out.frames = Tensor2D(total_frames, cfg.latent_dim);
    std::size_t emitted = 0;
    while (emitted < total_frames) {
        StepOutput o = step(s, conds);
        if (!o.frames) continue;
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.B), total_frames - emitted);
        out.frames.set_rows(emitted, o.frames->slice_rows(0, take));
        emitted += take;
    }
    out.ledger = s.latency_ledger;
    out.emitted_update_counts = s.emitted_update_counts;
    out.latency.audio_lookahead_s = audio_lookahead_seconds(cfg);
    out.latency.steady_state_per_frame_s =
        steady_state_per_frame(out.ledger, cfg.B, static_cast<std::size_t>(cfg.L));
    for (const auto& l : out.ledger) out.latency.step_ns.push_back(l.wall_ns);
    out.latency.end_to_end_delay_s = out.latency.audio_lookahead_s + out.latency.steady_state_per_frame_s * cfg.B;
    return out;
}

/// Real-time simulation: cond frame f becomes available at simulated time f / fps. The
/// stepper waits (advances the simulated clock) on look-ahead underrun. Delay is taken for
/// the last frame of every emitted block, the frame whose look-ahead is exactly (L-1)B.
inline LatencyReport measure_delay(const StreamConfig& cfg, std::shared_ptr<const DenoiserParams> params,
                                   const Tensor2D& reference, const Tensor2D& reference_cond,
                                   const Tensor2D& cond_source, std::size_t total_frames, std::uint64_t seed) {
    StreamState s = init_stream(reference, reference_cond, cfg, std::move(params), seed);
    CondStream queue(cond_source.cols());
    double clock = 0.0;
    std::int64_t delivered = 0;
    auto deliver_until = [&](double now) {
        while (delivered < static_cast<std::int64_t>(cond_source.rows()) &&
               static_cast<double>(delivered) / cfg.fps <= now) {
            queue.append_rows(cond_source.slice_rows(static_cast<std::size_t>(delivered), 1));
            ++delivered;
        }
    };
    std::vector<double> delays;
    std::size_t emitted = 0;
    while (emitted < total_frames) {
        deliver_until(clock);
        StepOutput o;
        try {
            const auto ledger_size = s.latency_ledger.size();
            o = step(s, queue);
            clock += static_cast<double>(s.latency_ledger.at(ledger_size).wall_ns) * 1e-9;
        } catch (const LookaheadUnderrun& e) {
            if (e.needed_frame() >= static_cast<std::int64_t>(cond_source.rows())) throw;
            clock = std::max(clock, static_cast<double>(e.needed_frame()) / cfg.fps);
            continue;
        }
        if (!o.frames) continue;
        const std::int64_t aligned_frame = (o.block_index + 1) * cfg.B - 1;
        delays.push_back(clock - static_cast<double>(aligned_frame) / cfg.fps);
        emitted += static_cast<std::size_t>(cfg.B);
    }
    LatencyReport rep;
    rep.audio_lookahead_s = audio_lookahead_seconds(cfg);
    rep.steady_state_per_frame_s = steady_state_per_frame(s.latency_ledger, cfg.B, static_cast<std::size_t>(cfg.L));
    for (const auto& l : s.latency_ledger) rep.step_ns.push_back(l.wall_ns);
    rep.end_to_end_delay_s = median(delays);
    return rep;
}

}  // namespace rw
