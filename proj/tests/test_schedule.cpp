#include <gtest/gtest.h>

#include "rollwin/rng.hpp"
#include "rollwin/schedule.hpp"

using namespace rw;

namespace {

StreamConfig cfg_L(int L, double gamma = 1.0) {
    StreamConfig c;
    c.L = L;
    c.shift_gamma = gamma;
    return c;
}

Block make_block(std::int64_t idx, int stage, Rng& rng) {
    Block b;
    b.block_index = idx;
    b.stage = stage;
    b.noise_draw = rng.gaussian(4, 3);
    b.frames = rng.gaussian(4, 3);
    return b;
}

}  // namespace

TEST(BuildSchedule, LinearL4) {
    const auto s = build_schedule(cfg_L(4));
    EXPECT_EQ(s.stage_times, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
}

TEST(BuildSchedule, L1) {
    auto c = cfg_L(1);
    c.t_max = 0.8;
    EXPECT_EQ(build_schedule(c).stage_times, (std::vector<double>{0.0, 0.8}));
}

TEST(BuildSchedule, GammaTwo) {
    const auto s = build_schedule(cfg_L(4, 2.0));
    const std::vector<double> want{0.0, 0.0625, 0.25, 0.5625, 1.0};
    ASSERT_EQ(s.stage_times.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(s.stage_times[i], want[i], 1e-15);
}

TEST(BuildSchedule, InvalidConfigThrows) {
    auto c = cfg_L(0);
    EXPECT_THROW(build_schedule(c), ConfigError);
    c = cfg_L(4);
    c.t_max = 0.0;
    EXPECT_THROW(build_schedule(c), ConfigError);
    c = cfg_L(4);
    c.N = 0;
    EXPECT_THROW(build_schedule(c), ConfigError);
}

TEST(Renoise, StageZeroIsBitExact) {
    Rng rng{1, 0};
    const auto sched = build_schedule(cfg_L(4));
    const Block b = make_block(3, 2, rng);
    const auto x0 = rng.gaussian(4, 3);
    const Block out = renoise_to_stage(x0, b, 0, sched);
    EXPECT_EQ(out.frames, x0);
    EXPECT_EQ(out.stage, 0);
}

TEST(Renoise, StageLIsPureNoise) {
    Rng rng{2, 0};
    const auto sched = build_schedule(cfg_L(4));
    const Block b = make_block(3, 4, rng);
    const Block out = renoise_to_stage(rng.gaussian(4, 3), b, 4, sched);
    EXPECT_EQ(out.frames, b.noise_draw);
}

TEST(Renoise, FixedPointWhenPredictionEqualsNoise) {
    Rng rng{3, 0};
    const auto sched = build_schedule(cfg_L(4, 1.7));
    const Block b = make_block(0, 4, rng);
    for (int s = 0; s <= 4; ++s) {
        EXPECT_LE(max_abs_diff(renoise_to_stage(b.noise_draw, b, s, sched).frames, b.noise_draw), 1e-15);
    }
    EXPECT_THROW(renoise_to_stage(b.noise_draw, b, 5, sched), InvalidArgument);
    EXPECT_THROW(renoise_to_stage(b.noise_draw, b, -1, sched), InvalidArgument);
}

TEST(Renoise, Deterministic) {
    Rng rng{4, 0};
    const auto sched = build_schedule(cfg_L(4));
    const Block b = make_block(0, 3, rng);
    const auto x0 = rng.gaussian(4, 3);
    EXPECT_EQ(renoise_to_stage(x0, b, 2, sched).frames, renoise_to_stage(x0, b, 2, sched).frames);
}

TEST(Slide, FourBlockWindow) {
    Rng rng{5, 0};
    const auto sched = build_schedule(cfg_L(4));
    Window w;
    for (int k = 0; k < 4; ++k) w.blocks.push_back(make_block(7 + k, k + 1, rng));
    validate_window(w, 4, false);
    std::vector<Tensor2D> preds;
    for (int k = 0; k < 4; ++k) preds.push_back(rng.gaussian(4, 3));
    const auto res = slide(w, preds, make_block(11, 0, rng), sched);
    ASSERT_TRUE(res.emitted.has_value());
    EXPECT_EQ(res.emitted_index, 7);
    EXPECT_EQ(*res.emitted, preds[0]);
    ASSERT_EQ(res.next.size(), 4u);
    for (int k = 0; k < 4; ++k) {
        EXPECT_EQ(res.next.blocks[k].block_index, 8 + k);
        EXPECT_EQ(res.next.blocks[k].stage, k + 1);
    }
    // the surviving blocks move one stage down using their own prediction and frozen noise
    for (int k = 0; k < 3; ++k) {
        const auto want = interpolate_noise(preds[k + 1], w.blocks[k + 1].noise_draw, sched.at(k + 1));
        EXPECT_EQ(res.next.blocks[k].frames, want);
        EXPECT_EQ(res.next.blocks[k].noise_draw, w.blocks[k + 1].noise_draw);
    }
    validate_window(res.next, 4, false);
}

TEST(Slide, DegenerateL1) {
    Rng rng{6, 0};
    const auto sched = build_schedule(cfg_L(1));
    Window w;
    w.blocks.push_back(make_block(0, 1, rng));
    const Block fresh = make_block(1, 0, rng);
    const auto pred = rng.gaussian(4, 3);
    const auto res = slide(w, {pred}, fresh, sched);
    ASSERT_TRUE(res.emitted.has_value());
    EXPECT_EQ(*res.emitted, pred);
    ASSERT_EQ(res.next.size(), 1u);
    EXPECT_EQ(res.next.blocks[0].block_index, 1);
    EXPECT_EQ(res.next.blocks[0].stage, 1);
    EXPECT_EQ(res.next.blocks[0].frames, fresh.frames);
    EXPECT_EQ(res.next.blocks[0].noise_draw, fresh.noise_draw);
}

TEST(Slide, IndexDiscontinuityThrows) {
    Rng rng{7, 0};
    const auto sched = build_schedule(cfg_L(2));
    Window w;
    w.blocks.push_back(make_block(3, 1, rng));
    w.blocks.push_back(make_block(4, 2, rng));
    std::vector<Tensor2D> preds{rng.gaussian(4, 3), rng.gaussian(4, 3)};
    EXPECT_THROW(slide(w, preds, make_block(6, 0, rng), sched), StateCorruption);
    EXPECT_THROW(slide(w, preds, make_block(4, 0, rng), sched), StateCorruption);
}

TEST(Slide, ColdStartThenSteadyEmission) {
    Rng rng{8, 0};
    const int L = 4;
    const auto sched = build_schedule(cfg_L(L));
    // the stream seeds an empty window with one block at stage L before its first step
    Window w;
    w.blocks.push_back(make_block(0, L, rng));
    std::int64_t next_index = 1;
    std::int64_t expect_emit = 0;
    for (int step = 1; step <= 1000; ++step) {
        std::vector<Tensor2D> preds;
        for (const auto& b : w.blocks) preds.push_back(b.frames);
        const auto res = slide(w, preds, make_block(next_index++, 0, rng), sched);
        EXPECT_EQ(res.emitted.has_value(), step >= L) << step;
        if (res.emitted) EXPECT_EQ(res.emitted_index, expect_emit++);
        w = res.next;
        validate_window(w, L, true);
        if (step >= L - 1) validate_window(w, L, false);
    }
    EXPECT_EQ(expect_emit, 1000 - L + 1);
}

TEST(ValidateWindow, CatchesBadStages) {
    Rng rng{9, 0};
    Window w;
    w.blocks.push_back(make_block(0, 2, rng));
    w.blocks.push_back(make_block(1, 1, rng));
    EXPECT_THROW(validate_window(w, 2), StateCorruption);
    w.blocks[0].stage = 1;
    w.blocks[1].stage = 2;
    w.blocks[1].block_index = 5;
    EXPECT_THROW(validate_window(w, 2), StateCorruption);
}

TEST(SubstepTimes, Examples) {
    const auto sched = build_schedule(cfg_L(4));
    EXPECT_EQ(substep_times(3, sched, 1), (std::vector<double>{0.75}));
    EXPECT_EQ(substep_times(4, sched, 2), (std::vector<double>{1.0, 0.875}));
    EXPECT_EQ(substep_times(1, sched, 4), (std::vector<double>{0.25, 0.1875, 0.125, 0.0625}));
    EXPECT_THROW(substep_times(0, sched, 1), InvalidArgument);
    EXPECT_THROW(substep_times(5, sched, 1), InvalidArgument);
    EXPECT_THROW(substep_times(2, sched, 0), InvalidArgument);
}

TEST(StreamConfigTest, LookaheadFrames) {
    EXPECT_EQ(cfg_L(4).lookahead_frames(), 12u);
    EXPECT_EQ(cfg_L(1).lookahead_frames(), 0u);
    EXPECT_EQ(cfg_L(4).window_frames(), 16u);
}
