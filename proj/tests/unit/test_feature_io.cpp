#include "gen.hpp"

#include "endoseg/error.hpp"
#include "endoseg/feature_io.hpp"
#include "endoseg/file_util.hpp"

#include <catch_amalgamated.hpp>

#include <cstring>

using namespace endoseg;

TEST_CASE("header echo: 4 blocks, 16x16 grid, dim 8") {
    Rng rng(1);
    const PatchFeatureTensor t = testing::random_tensor(rng, 4, 16, 16, 8, "a");
    const auto bytes = encode_features(t);
    REQUIRE(bytes.size() == kPftHeaderSize + 4 * 16 * 16 * 8 * 4);
    const PatchFeatureTensor back = decode_features(bytes, "a");
    CHECK(back.n_blocks == 4);
    CHECK(back.grid_h == 16);
    CHECK(back.grid_w == 16);
    CHECK(back.dim == 8);
    CHECK(back.data.size() == 4u * 16 * 16 * 8);
}

TEST_CASE("little-endian header layout") {
    PatchFeatureTensor t;
    t.n_blocks = 2;
    t.grid_h = 3;
    t.grid_w = 5;
    t.dim = 7;
    t.data.assign(t.expected_size(), 0.5f);
    const auto b = encode_features(t);
    CHECK(std::memcmp(b.data(), "PFT1", 4) == 0);
    CHECK((b[4] | b[5] << 8) == 1);
    CHECK((b[6] | b[7] << 8) == 2);
    CHECK(b[8] == 3);
    CHECK(b[12] == 5);
    CHECK(b[16] == 7);
    // 0.5f = 0x3f000000
    CHECK(b[20] == 0x00);
    CHECK(b[23] == 0x3f);
}

TEST_CASE("truncation by one float is rejected") {
    Rng rng(2);
    auto bytes = encode_features(testing::random_tensor(rng, 4, 16, 16, 8));
    bytes.resize(bytes.size() - 4);
    CHECK_THROWS_AS(decode_features(bytes), DataError);
    CHECK_THROWS_WITH(decode_features(bytes), Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("trailing bytes, short header and non-finite values are rejected") {
    Rng rng(3);
    const PatchFeatureTensor t = testing::random_tensor(rng, 1, 2, 2, 3);
    auto bytes = encode_features(t);
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(decode_features(longer), DataError);
    CHECK_THROWS_AS(decode_features(std::span(bytes.data(), 10)), DataError);
    auto nan = bytes;
    const float q = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(nan.data() + kPftHeaderSize + 8, &q, 4);
    CHECK_THROWS_AS(decode_features(nan), DataError);
}

TEST_CASE("write then read is bit-identical on random tensors") {
    Rng rng(4);
    testing::TempDir dir("pft");
    for (int i = 0; i < 50; ++i) {
        const auto blocks = static_cast<std::uint32_t>(1 + rng.below(6));
        const auto gh = static_cast<std::uint32_t>(1 + rng.below(20));
        const auto gw = static_cast<std::uint32_t>(1 + rng.below(20));
        const auto dim = static_cast<std::uint32_t>(1 + rng.below(40));
        const PatchFeatureTensor t = testing::random_tensor(rng, blocks, gh, gw, dim, "img" + std::to_string(i));
        const auto path = dir / ("img" + std::to_string(i) + ".pft");
        write_features(path, t);
        const PatchFeatureTensor back = read_features(path, t.image_id);
        REQUIRE(back == t);
        REQUIRE(std::memcmp(back.data.data(), t.data.data(), t.data.size() * 4) == 0);
    }
}

TEST_CASE("every single-byte header mutation is rejected") {
    Rng rng(5);
    const auto good = encode_features(testing::random_tensor(rng, 3, 4, 5, 6));
    REQUIRE_NOTHROW(decode_features(good));
    int tried = 0;
    for (std::size_t pos = 0; pos < kPftHeaderSize; ++pos) {
        for (int trial = 0; trial < 16; ++trial) {
            auto bad = good;
            std::uint8_t v = 0;
            do {
                v = static_cast<std::uint8_t>(rng.below(256));
            } while (v == good[pos]);
            bad[pos] = v;
            INFO("byte " << pos << " -> " << int(v));
            CHECK_THROWS_AS(decode_features(bad), DataError);
            ++tried;
        }
    }
    CHECK(tried == 320);
}

TEST_CASE("missing feature file names the image id") {
    CHECK_THROWS_AS(read_features("/nonexistent/zz.pft", "zz"), DataError);
    CHECK_THROWS_WITH(read_features("/nonexistent/zz.pft", "zz"), Catch::Matchers::ContainsSubstring("zz"));
}
