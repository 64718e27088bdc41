#include <gtest/gtest.h>

#include <sstream>

#include "rollwin/streamer.hpp"

using namespace rw;

namespace {

struct Rig {
    ModelDims dims{};
    std::shared_ptr<const DenoiserParams> params = std::make_shared<DenoiserParams>(DenoiserParams::init(dims, 31));
    Rng rng{41, 0};
    Tensor2D reference = rng.gaussian(4, dims.latent_dim);
    Tensor2D ref_cond = rng.gaussian(4, dims.cond_dim);

    CondStream conds(std::size_t frames, std::uint64_t seed = 5) const {
        Rng r{seed, 0};
        return CondStream(r.gaussian(frames, dims.cond_dim));
    }
};

StreamConfig config(int L, int N) {
    StreamConfig c;
    c.L = L;
    c.N = N;
    return c;
}

}  // namespace

TEST(InitStream, FreshState) {
    Rig s;
    const StreamState st = init_stream(s.reference, s.ref_cond, config(4, 1), s.params, 9);
    ASSERT_EQ(st.caches.size(), 2u);
    for (const auto& c : st.caches) EXPECT_TRUE(c.empty());
    ASSERT_EQ(st.anchors.size(), 2u);
    for (const auto& a : st.anchors) EXPECT_EQ(a.tokens(), 4u);
    EXPECT_TRUE(st.window.empty());
    EXPECT_EQ(st.step_i, 0);
    EXPECT_EQ(st.anchor_cond_energy, 0.0);

    const StreamState again = init_stream(s.reference, s.ref_cond, config(4, 1), s.params, 9);
    for (std::size_t l = 0; l < 2; ++l) {
        EXPECT_EQ(st.anchors[l].pre_rope_keys, again.anchors[l].pre_rope_keys);
        EXPECT_EQ(st.anchors[l].values, again.anchors[l].values);
    }
    EXPECT_EQ(st.rng.seed, again.rng.seed);
    EXPECT_EQ(st.rng.counter, again.rng.counter);
}

TEST(InitStream, InvalidConfigThrows) {
    Rig s;
    auto c = config(0, 1);
    EXPECT_THROW(init_stream(s.reference, s.ref_cond, c, s.params, 1), ConfigError);
    c = config(4, 1);
    c.latent_dim = 8;
    EXPECT_THROW(init_stream(s.reference, s.ref_cond, c, s.params, 1), ConfigError);
}

TEST(Step, FirstEmissionAtStepL) {
    Rig s;
    for (int L : {1, 2, 4, 8}) {
        StreamState st = init_stream(s.reference, s.ref_cond, config(L, 1), s.params, 3);
        const CondStream conds = s.conds(400);
        int first = -1;
        for (int i = 1; i <= 2 * L + 2 && first < 0; ++i) {
            if (step(st, conds).frames) first = i;
        }
        EXPECT_EQ(first, L) << "L=" << L;
    }
}

TEST(Step, OnePassPerStepWhenN1) {
    Rig s;
    StreamState st = init_stream(s.reference, s.ref_cond, config(4, 1), s.params, 3);
    const CondStream conds = s.conds(200);
    for (int i = 1; i <= 20; ++i) {
        step(st, conds);
        EXPECT_EQ(st.denoise_passes, static_cast<std::uint64_t>(i));
    }
}

TEST(Step, EveryEmittedBlockGetsLTimesNPasses) {
    Rig s;
    for (int L : {1, 2, 4, 8})
        for (int N : {1, 2, 4, 8}) {
            StreamState st = init_stream(s.reference, s.ref_cond, config(L, N), s.params, 3);
            const CondStream conds = s.conds(4 * (40 + L + 1));
            for (int i = 0; i < 40 + L; ++i) step(st, conds);
            ASSERT_EQ(st.emitted_update_counts.size(), 41u) << L << "x" << N;
            for (int c : st.emitted_update_counts) ASSERT_EQ(c, L * N);
        }
}

TEST(Step, ReplayIsBitExact) {
    Rig s;
    const CondStream conds = s.conds(400);
    const auto a = run(config(4, 2), s.params, s.reference, s.ref_cond, conds, 80, 77);
    const auto b = run(config(4, 2), s.params, s.reference, s.ref_cond, conds, 80, 77);
    EXPECT_EQ(a.frames, b.frames);
    const auto c = run(config(4, 2), s.params, s.reference, s.ref_cond, conds, 80, 78);
    EXPECT_NE(a.frames, c.frames);
}

TEST(Step, UnderrunWhenLookaheadMissing) {
    Rig s;
    StreamState st = init_stream(s.reference, s.ref_cond, config(4, 1), s.params, 3);
    CondStream conds = s.conds(8);
    step(st, conds);
    step(st, conds);
    try {
        step(st, conds);
        FAIL() << "expected underrun";
    } catch (const LookaheadUnderrun& e) {
        EXPECT_EQ(e.needed_frame(), 11);
    }
    EXPECT_EQ(required_cond_frame(st), 11);
}

TEST(Run, ZeroFrames) {
    Rig s;
    const auto out = run(config(4, 1), s.params, s.reference, s.ref_cond, s.conds(64), 0, 1);
    EXPECT_EQ(out.frames.rows(), 0u);
    EXPECT_TRUE(out.ledger.empty());
}

TEST(Run, FortyFramesTenBlocks) {
    Rig s;
    const auto out = run(config(4, 1), s.params, s.reference, s.ref_cond, s.conds(64), 40, 1);
    EXPECT_EQ(out.frames.rows(), 40u);
    EXPECT_EQ(out.emitted_update_counts.size(), 10u);
    EXPECT_TRUE(out.frames.all_finite());
}

TEST(Run, BoundedLookaheadPerBlock) {
    Rig s;
    const int L = 4, B = 4;
    Rng r{5, 0};
    const Tensor2D base = r.gaussian(200, 8);
    const auto ref = run(config(L, 1), s.params, s.reference, s.ref_cond, CondStream(base), 120, 13);
    for (int k : {0, 5, 17}) {
        const int last_frame = (k + 1) * B - 1;
        Tensor2D perturbed = base;
        for (std::size_t t = static_cast<std::size_t>(last_frame + (L - 1) * B + 1); t < 200; ++t)
            for (std::size_t c = 0; c < 8; ++c) perturbed(t, c) += 3.0;
        const auto out = run(config(L, 1), s.params, s.reference, s.ref_cond, CondStream(perturbed), 120, 13);
        const std::size_t upto = static_cast<std::size_t>(last_frame + 1);
        EXPECT_EQ(out.frames.slice_rows(0, upto), ref.frames.slice_rows(0, upto)) << k;
        EXPECT_NE(out.frames, ref.frames);
    }
}

TEST(Latency, LookaheadArithmetic) {
    EXPECT_DOUBLE_EQ(audio_lookahead_seconds(config(4, 1)), 0.48);
    EXPECT_EQ(audio_lookahead_seconds(config(1, 1)), 0.0);
}

TEST(Latency, EndToEndDelayAtLeastLookahead) {
    Rig s;
    Rng r{5, 0};
    const Tensor2D src = r.gaussian(200, 8);
    for (int L : {1, 2, 4}) {
        const auto rep = measure_delay(config(L, 1), s.params, s.reference, s.ref_cond, src, 80, 3);
        EXPECT_EQ(rep.audio_lookahead_s, audio_lookahead_seconds(config(L, 1)));
        EXPECT_GE(rep.end_to_end_delay_s, rep.audio_lookahead_s) << L;
        EXPECT_GT(rep.steady_state_per_frame_s, 0.0);
    }
    const auto out = run(config(4, 1), s.params, s.reference, s.ref_cond, CondStream(src), 80, 3);
    EXPECT_GE(out.latency.end_to_end_delay_s, out.latency.audio_lookahead_s);
}

TEST(Latency, CsvLayout) {
    std::ostringstream os;
    write_latency_csv(os, {LatencySample{0, 1500, 20}, LatencySample{1, 1400, 24}});
    EXPECT_EQ(os.str(), "step,wall_ns,context_rows\n0,1500,20\n1,1400,24\n");
}

TEST(LongRun, TenThousandStepsOrderAndCounts) {
    Rig s;
    StreamState st = init_stream(s.reference, s.ref_cond, config(2, 1), s.params, 8);
    const int steps = 10000;
    Rng r{6, 0};
    const CondStream conds(r.gaussian(static_cast<std::size_t>(4 * (steps + 2)), 8));
    std::int64_t expect = 0;
    std::size_t steady_rows = 0;
    std::uint64_t steady_flops = 0;
    for (int i = 0; i < steps; ++i) {
        const std::size_t rows = context_rows(st);
        const auto o = step(st, conds);
        if (o.frames) {
            ASSERT_EQ(o.block_index, expect++);
        }
        if (i >= 4) {
            const std::uint64_t fl = forward_flops(s.dims, 8, rows - 8);
            if (steady_rows == 0) {
                steady_rows = rows;
                steady_flops = fl;
            }
            ASSERT_EQ(rows, steady_rows) << i;
            ASSERT_EQ(fl, steady_flops);
        }
    }
    EXPECT_EQ(expect, steps - 1);
    for (int c : st.emitted_update_counts) ASSERT_EQ(c, 2);
    for (const auto& l : st.latency_ledger) ASSERT_GT(l.wall_ns, 0);
}
