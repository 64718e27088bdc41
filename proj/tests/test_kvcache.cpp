#include <gtest/gtest.h>

#include <numeric>

#include "rollwin/kvcache.hpp"
#include "rollwin/rng.hpp"

using namespace rw;

namespace {

constexpr int kB = 4;
const RopeConfig kRope{16, 10000.0};

StyleAnchor make_anchor(Rng& rng, std::size_t tokens = 4, std::int64_t d = -1) {
    return StyleAnchor{rng.gaussian(tokens, 16), rng.gaussian(tokens, 16), d};
}

std::vector<std::int64_t> block_positions(std::int64_t block, int B = kB) {
    std::vector<std::int64_t> p(static_cast<std::size_t>(B));
    std::iota(p.begin(), p.end(), block * B);
    return p;
}

CacheEntry entry(std::int64_t block, Rng& rng, int B = kB) {
    const auto pos = block_positions(block, B);
    return CacheEntry{block, pos, rope_rows(rng.gaussian(static_cast<std::size_t>(B), 16), pos, kRope),
                      rng.gaussian(static_cast<std::size_t>(B), 16)};
}

WindowKV window_kv(std::int64_t first_block, int L, Rng& rng) {
    WindowKV w;
    for (int k = 0; k < L; ++k) {
        const auto p = block_positions(first_block + k);
        w.positions.insert(w.positions.end(), p.begin(), p.end());
    }
    const std::size_t n = w.positions.size();
    w.keys = rope_rows(rng.gaussian(n, 16), w.positions, kRope);
    w.values = rng.gaussian(n, 16);
    return w;
}

std::vector<std::int64_t> cached_blocks(const TemporalCache& c) {
    std::vector<std::int64_t> out;
    for (const auto& e : c.entries()) out.push_back(e.block_index);
    return out;
}

}  // namespace

TEST(AnchorReindex, VirtualPositionExamples) {
    Rng rng{1, 0};
    const StyleAnchor a = make_anchor(rng);
    const Tensor2D at10 = anchor_reindex(a, 10, kRope);
    const Tensor2D at0 = anchor_reindex(a, 0, kRope);
    for (std::size_t r = 0; r < a.tokens(); ++r) {
        const auto want9 = rope_apply(a.pre_rope_keys.row(r), 9, kRope);
        const auto want_neg = rope_apply(a.pre_rope_keys.row(r), -1, kRope);
        for (std::size_t c = 0; c < 16; ++c) {
            EXPECT_EQ(at10(r, c), want9[c]);
            EXPECT_EQ(at0(r, c), want_neg[c]);
        }
    }
    // pre-rope keys stay untouched
    Rng again{1, 0};
    EXPECT_EQ(a.pre_rope_keys, make_anchor(again).pre_rope_keys);
}

TEST(AnchorReindex, LogitStepInvariant) {
    Rng rng{2, 0};
    const StyleAnchor a = make_anchor(rng);
    const auto q = rng.gaussian(1, 16);
    auto logit = [&](std::int64_t step) {
        const std::int64_t u_i = step * kB;
        const auto qk = rope_apply(q.row(0), u_i, kRope);
        return dot(qk, anchor_reindex(a, u_i, kRope).row(0));
    };
    const std::int64_t i = 37;
    EXPECT_NEAR(logit(i), logit(i + 100), 1e-10);
    double worst = 0.0;
    for (std::int64_t s = 0; s <= 1000; ++s) worst = std::max(worst, std::abs(logit(s) - logit(0)));
    EXPECT_LE(worst, 1e-10);
}

TEST(TemporalPush, BudgetEightKeepsLastTwoBlocks) {
    Rng rng{3, 0};
    TemporalCache c(8);
    for (int b = 0; b < 3; ++b) c = temporal_push(c, entry(b, rng));
    EXPECT_EQ(cached_blocks(c), (std::vector<std::int64_t>{1, 2}));
    EXPECT_EQ(c.tokens(), 8u);
}

TEST(TemporalPush, ZeroBudgetAlwaysEmpty) {
    Rng rng{4, 0};
    TemporalCache c(0);
    for (int b = 0; b < 5; ++b) {
        c = temporal_push(c, entry(b, rng));
        EXPECT_TRUE(c.empty());
        EXPECT_EQ(c.tokens(), 0u);
    }
}

TEST(TemporalPush, BudgetSixteenKeepsLastFour) {
    Rng rng{5, 0};
    TemporalCache c(16);
    for (int b = 0; b < 10; ++b) c = temporal_push(c, entry(b, rng));
    EXPECT_EQ(cached_blocks(c), (std::vector<std::int64_t>{6, 7, 8, 9}));
}

TEST(TemporalPush, EvictionIsBlockGranular) {
    Rng rng{6, 0};
    TemporalCache c(10);  // not a multiple of B
    for (int b = 0; b < 6; ++b) {
        c = temporal_push(c, entry(b, rng));
        EXPECT_LE(c.tokens(), 10u);
        for (const auto& e : c.entries()) EXPECT_EQ(e.keys.rows(), static_cast<std::size_t>(kB));
    }
    EXPECT_EQ(cached_blocks(c), (std::vector<std::int64_t>{4, 5}));
}

TEST(TemporalPush, OutOfOrderThrows) {
    Rng rng{7, 0};
    TemporalCache c(16);
    c.push(entry(3, rng));
    EXPECT_THROW(c.push(entry(3, rng)), StateCorruption);
    EXPECT_THROW(c.push(entry(1, rng)), StateCorruption);
}

TEST(Assemble, EmptyCacheAtStreamStart) {
    Rng rng{8, 0};
    const StyleAnchor a = make_anchor(rng);
    const TemporalCache c(8);
    const auto ctx = assemble(&a, c, window_kv(0, 4, rng), kRope);
    EXPECT_EQ(ctx.u_i, 0);
    EXPECT_EQ(ctx.rows(), a.tokens() + 16);
}

TEST(Assemble, CacheOfTwoBlocksGivesU32) {
    Rng rng{9, 0};
    const StyleAnchor a = make_anchor(rng);
    TemporalCache c(8);
    for (int b = 0; b < 10; ++b) c.push(entry(b, rng));
    ASSERT_EQ(c.last_position(), 39);
    const WindowKV w = window_kv(10, 4, rng);
    ASSERT_EQ(w.positions.front(), 40);
    ASSERT_EQ(w.positions.back(), 55);
    const auto ctx = assemble(&a, c, w, kRope);
    EXPECT_EQ(ctx.u_i, 32);
    EXPECT_EQ(ctx.rows(), a.tokens() + 8 + 16);
}

TEST(Assemble, RowOrderAnchorTemporalWindow) {
    Rng rng{10, 0};
    const StyleAnchor a = make_anchor(rng, 3);
    TemporalCache c(8);
    for (int b = 0; b < 4; ++b) c.push(entry(b, rng));
    const WindowKV w = window_kv(4, 2, rng);
    const auto ctx = assemble(&a, c, w, kRope);
    ASSERT_EQ(ctx.segment_labels.size(), 3u + 8u + 8u);
    for (std::size_t r = 0; r < ctx.rows(); ++r) {
        const Segment want = r < 3 ? Segment::anchor : r < 11 ? Segment::temporal : Segment::window;
        EXPECT_EQ(ctx.segment_labels[r], want) << r;
    }
    const Tensor2D anchor_keys = anchor_reindex(a, 8, kRope);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(ctx.keys(r, j), anchor_keys(r, j));
    for (std::size_t j = 0; j < 16; ++j) {
        EXPECT_EQ(ctx.keys(3, j), c.entries().front().keys(0, j));
        EXPECT_EQ(ctx.values(11, j), w.values(0, j));
    }
}

TEST(Assemble, DisabledAnchorRemovesExactlyAnchorRows) {
    Rng rng{11, 0};
    const StyleAnchor a = make_anchor(rng, 4);
    TemporalCache c(8);
    for (int b = 0; b < 3; ++b) c.push(entry(b, rng));
    const WindowKV w = window_kv(3, 4, rng);
    const auto with = assemble(&a, c, w, kRope);
    const auto without = assemble(&a, c, w, kRope, AnchorPlacement{false, true});
    EXPECT_EQ(with.rows() - without.rows(), a.tokens());
    EXPECT_EQ(with.keys.slice_rows(a.tokens(), without.rows()), without.keys);
    EXPECT_EQ(with.values.slice_rows(a.tokens(), without.rows()), without.values);
    EXPECT_EQ(with.u_i, without.u_i);
}

TEST(Assemble, PositionGapThrows) {
    Rng rng{12, 0};
    const StyleAnchor a = make_anchor(rng);
    TemporalCache c(8);
    c.push(entry(0, rng));
    c.push(entry(1, rng));
    EXPECT_THROW(assemble(&a, c, window_kv(3, 4, rng), kRope), StateCorruption);
}

TEST(Assemble, ConstantRowsOverThousandSteps) {
    Rng rng{13, 0};
    const StyleAnchor a = make_anchor(rng);
    TemporalCache c(8);
    const int L = 4;
    std::size_t steady = 0;
    for (std::int64_t step = 0; step < 1010; ++step) {
        const auto ctx = assemble(&a, c, window_kv(step, L, rng), kRope);
        if (step >= 2) {
            if (steady == 0) steady = ctx.rows();
            ASSERT_EQ(ctx.rows(), steady) << step;
            ASSERT_EQ(ctx.rows(), a.tokens() + c.tokens() + static_cast<std::size_t>(L * kB));
        }
        c.push(entry(step, rng));
    }
    EXPECT_EQ(steady, a.tokens() + 8 + 16);
}

TEST(TemporalCacheDump, GoldenShape) {
    TemporalCache c(4);
    CacheEntry e{5, {20, 21}, Tensor2D{{1.0, 0.5}, {-2.0, 0.25}}, Tensor2D{{0.0, 1.0}, {3.0, -1.0}}};
    c.push(e);
    const std::string want =
        "temporal_cache budget=4 tokens=2 entries=1\n"
        "block 5 positions 20 21\n"
        "  k 1 0.5\n"
        "  v 0 1\n"
        "  k -2 0.25\n"
        "  v 3 -1\n";
    EXPECT_EQ(c.dump(), want);
}
