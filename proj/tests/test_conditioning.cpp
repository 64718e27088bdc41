#include <gtest/gtest.h>

#include "rollwin/conditioning.hpp"
#include "rollwin/streamer.hpp"

using namespace rw;

namespace {

std::vector<double> raw_signal(std::size_t n, std::uint64_t seed) {
    Rng rng{seed, 0};
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

CondStream stream_of(std::size_t frames, std::size_t dim = 8) {
    CondStream s(dim);
    for (std::size_t t = 0; t < frames; ++t) {
        CondFrame f{static_cast<std::int64_t>(t), std::vector<double>(dim, static_cast<double>(t))};
        s.append(f);
    }
    return s;
}

Window window_at(std::int64_t first_block, int L) {
    Window w;
    for (int k = 0; k < L; ++k) w.blocks.push_back(Block{first_block + k, k + 1, Tensor2D(4, 2), Tensor2D(4, 2)});
    return w;
}

}  // namespace

TEST(Encoder, ZeroSignalGivesConstantGolden) {
    const CondEncoder enc;
    const std::vector<double> zero(16, 0.0);
    const Tensor2D f = enc.encode_all(zero);
    // every frame reads only zeros, so all rows equal the squashed bias
    for (std::size_t t = 1; t < 16; ++t)
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(f(t, c), f(0, c));
    const std::vector<double> golden{0.089194477495610117, 0.10143786009501586,  0.097880802917641452,
                                     -0.18924155811208268, -0.15764235818875091, -0.062844323004963204,
                                     -0.0096246008849101648, -0.055065977561308169};
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(f(0, c), golden[c], 1e-15) << c;
}

TEST(Encoder, BitIdenticalRepeat) {
    const auto raw = raw_signal(200, 3);
    EXPECT_EQ(CondEncoder().encode_all(raw), CondEncoder().encode_all(raw));
}

TEST(Encoder, LocalityOverRadius) {
    const CondEncoder enc(8, 2);
    auto raw = raw_signal(200, 4);
    const Tensor2D a = enc.encode_all(raw);
    raw[100] += 1.0;
    const Tensor2D b = enc.encode_all(raw);
    for (std::size_t t = 0; t < 200; ++t) {
        bool same = true;
        for (std::size_t c = 0; c < 8; ++c) same = same && a(t, c) == b(t, c);
        const bool covers = t >= 100 && t <= 102;
        EXPECT_EQ(same, !covers) << "frame " << t;
    }
}

TEST(Align, WindowStartingAtForty) {
    const CondStream s = stream_of(56);
    const Tensor2D rows = align_to_window(s, window_at(10, 4), 4);
    ASSERT_EQ(rows.rows(), 16u);
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(rows(j, 0), 40.0 + static_cast<double>(j));
}

TEST(Align, L1NeedsOnlyOneBlock) {
    const CondStream s = stream_of(8);
    const Tensor2D rows = align_to_window(s, window_at(1, 1), 4);
    ASSERT_EQ(rows.rows(), 4u);
    EXPECT_EQ(rows(0, 0), 4.0);
    StreamConfig cfg;
    cfg.L = 1;
    EXPECT_EQ(audio_lookahead_seconds(cfg), 0.0);
}

TEST(Align, LookaheadHorizonSeconds) {
    StreamConfig cfg;
    EXPECT_DOUBLE_EQ(audio_lookahead_seconds(cfg), 0.48);
}

TEST(Align, UnderrunNamesMissingFrame) {
    const CondStream s = stream_of(55);
    try {
        align_to_window(s, window_at(10, 4), 4);
        FAIL() << "expected underrun";
    } catch (const LookaheadUnderrun& e) {
        EXPECT_EQ(e.needed_frame(), 55);
    }
}

TEST(AnchorCond, ZeroAndZeroContribution) {
    const CondFrame f = anchor_cond(8);
    EXPECT_TRUE(f.is_zero());
    EXPECT_EQ(f.features.size(), 8u);
    Rng rng{5, 0};
    const CondInjector inj{rng.gaussian(8, 16), {0, 1}};
    const Tensor2D zeros(4, 8);
    EXPECT_EQ(injection_energy(zeros, inj), 0.0);
    const Tensor2D x = rng.gaussian(4, 16);
    EXPECT_EQ(inject(x, zeros, inj, 0), x);
}

TEST(Inject, IdentityCases) {
    Rng rng{6, 0};
    const CondInjector inj{rng.gaussian(8, 16), {1}};
    const Tensor2D x = rng.gaussian(5, 16);
    const Tensor2D a = rng.gaussian(5, 8);
    EXPECT_EQ(inject(x, Tensor2D(5, 8), inj, 1), x);
    EXPECT_EQ(inject(x, a, inj, 0), x);
    EXPECT_NE(inject(x, a, inj, 1), x);
    EXPECT_THROW(inject(x, rng.gaussian(4, 8), inj, 1), InvalidArgument);
}

TEST(Inject, Linearity) {
    Rng rng{7, 0};
    const CondInjector inj{rng.gaussian(8, 16), {0}};
    const Tensor2D x = rng.gaussian(6, 16);
    const Tensor2D a = rng.gaussian(6, 8);
    const Tensor2D b = rng.gaussian(6, 8);
    EXPECT_LE(max_abs_diff(inject(x, a + b, inj, 0), inject(inject(x, a, inj, 0), b, inj, 0)), 1e-12);
}

TEST(Inject, FrameSynchronous) {
    Rng rng{8, 0};
    const CondInjector inj{rng.gaussian(8, 16), {0}};
    const Tensor2D x(3, 16);
    const Tensor2D a = rng.gaussian(3, 8);
    Tensor2D swapped = a;
    swapped.set_rows(0, a.slice_rows(1, 1));
    swapped.set_rows(1, a.slice_rows(0, 1));
    const Tensor2D ya = inject(x, a, inj, 0);
    const Tensor2D yb = inject(x, swapped, inj, 0);
    EXPECT_NE(ya, yb);
    EXPECT_EQ(ya.slice_rows(2, 1), yb.slice_rows(2, 1));
    EXPECT_EQ(ya.slice_rows(0, 1), yb.slice_rows(1, 1));
}

TEST(CondStreamTest, OutOfOrderAppendThrows) {
    CondStream s(2);
    s.append(CondFrame{0, {1.0, 2.0}});
    EXPECT_THROW(s.append(CondFrame{2, {1.0, 2.0}}), StateCorruption);
    EXPECT_THROW(s.append(CondFrame{1, {1.0}}), InvalidArgument);
}
