#include <gtest/gtest.h>

#include <sstream>

#include "rollwin/config.hpp"

using namespace rw;

namespace {

std::string dump(const AppConfig& c) {
    std::ostringstream os;
    write_config(os, c);
    return os.str();
}

AppConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    const AppConfig c;
    const std::string text = dump(c);
    EXPECT_EQ(dump(parse(text)), text);
}

TEST(Config, EditedValuesRoundTrip) {
    AppConfig c;
    c.stream.L = 8;
    c.stream.N = 2;
    c.stream.shift_gamma = 1.0 / 3.0;
    c.stream.reindex_anchor = false;
    c.train.shapes = {{4, 1, 2.5}, {1, 8, 0.125}};
    c.bench.seeds = {3, 9, 27};
    c.seed = 123456789012345ULL;
    const AppConfig back = parse(dump(c));
    EXPECT_EQ(back.stream.L, 8);
    EXPECT_EQ(back.stream.N, 2);
    EXPECT_EQ(back.stream.shift_gamma, 1.0 / 3.0);
    EXPECT_FALSE(back.stream.reindex_anchor);
    ASSERT_EQ(back.train.shapes.size(), 2u);
    EXPECT_EQ(back.train.shapes[1].N, 8);
    EXPECT_EQ(back.train.shapes[1].weight, 0.125);
    EXPECT_EQ(back.bench.seeds, (std::vector<std::uint64_t>{3, 9, 27}));
    EXPECT_EQ(back.seed, 123456789012345ULL);
    EXPECT_EQ(dump(back), dump(c));
}

TEST(Config, PartialFileKeepsDefaults) {
    const AppConfig c = parse("[stream]\nL = 2\n");
    EXPECT_EQ(c.stream.L, 2);
    EXPECT_EQ(c.stream.N, AppConfig{}.stream.N);
    EXPECT_EQ(c.train.teacher_steps, AppConfig{}.train.teacher_steps);
}

TEST(Config, UnknownKeyOrSectionThrows) {
    EXPECT_THROW(parse("[stream]\nwindow = 4\n"), ConfigError);
    EXPECT_THROW(parse("[streem]\nL = 4\n"), ConfigError);
    EXPECT_THROW(parse("L = 4\n"), ConfigError);
}

TEST(Config, BadValuesThrow) {
    EXPECT_THROW(parse("[stream]\nL = four\n"), ConfigError);
    EXPECT_THROW(parse("[stream]\nL = 4x\n"), ConfigError);
    EXPECT_THROW(parse("[stream]\nL = 0\n"), ConfigError);
    EXPECT_THROW(parse("[stream]\nfps = -1\n"), ConfigError);
    EXPECT_THROW(parse("[stream]\nstyle_anchor = maybe\n"), ConfigError);
    EXPECT_THROW(parse("[train]\nshapes = 4-1\n"), ConfigError);
    EXPECT_THROW(parse("[bench]\nseeds = 1,-2\n"), ConfigError);
    EXPECT_THROW(parse("[stream\nL = 4\n"), ConfigError);
}

TEST(Config, ShippedFilesLoad) {
    const AppConfig smoke = load_config(std::string(ROLLWIN_SOURCE_DIR) + "/configs/smoke.ini");
    EXPECT_EQ(smoke.seed, 7u);
    EXPECT_EQ(smoke.train.teacher_steps, 40);
    EXPECT_EQ(smoke.bench.L_list, (std::vector<int>{1, 2, 4}));
    const AppConfig def = load_config(std::string(ROLLWIN_SOURCE_DIR) + "/configs/default.ini");
    EXPECT_EQ(dump(def), dump(AppConfig{}));
    EXPECT_THROW(load_config("/nonexistent/rollwin.ini"), ConfigError);
}
