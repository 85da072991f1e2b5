#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <patchace/features.hpp>
#include <patchace/rng.hpp>

using namespace patchace;

namespace {

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    Tensor image({h, w}, Dtype::F32);
    RngStream rng(seed);
    for (float& v : image.f32()) v = static_cast<float>(rng.uniform01() * 4.0);
    return image;
}

FeaturePyramid tiny_pyramid(float l1_base, float l2_base, float l3_value) {
    // Channels (1, 1, 1): a 2x2 level-1 grid, 1x1 level-2 and level-3 grids.
    FeaturePyramid pyr;
    const float l1[4] = {l1_base, l1_base + 1, l1_base + 2, l1_base + 3};
    pyr.levels[0] = Tensor::from_f32({1, 2, 2}, l1);
    pyr.levels[1] = Tensor::from_f32({1, 1, 1}, std::span<const float>(&l2_base, 1));
    pyr.levels[2] = Tensor::from_f32({1, 1, 1}, std::span<const float>(&l3_value, 1));
    return pyr;
}

} // namespace

TEST_CASE("toy_extract level shapes for a 64x64 image") {
    const FeaturePyramid pyr = toy_extract(random_image(64, 64, 3), 5);
    CHECK(pyr.levels[0].shape() == std::vector<std::size_t>{16, 32, 32});
    CHECK(pyr.levels[1].shape() == std::vector<std::size_t>{32, 16, 16});
    CHECK(pyr.levels[2].shape() == std::vector<std::size_t>{64, 8, 8});
    CHECK(pyr.total_channels() == kToyTotalChannels);
}

TEST_CASE("toy_extract maps the zero image to a zero pyramid") {
    const Tensor zero({32, 32}, Dtype::F32);
    const FeaturePyramid pyr = toy_extract(zero, 11);
    for (const Tensor& level : pyr.levels)
        for (const float v : level.f32()) CHECK(v == 0.0f);
}

TEST_CASE("toy_extract is bit-deterministic for a fixed seed") {
    const Tensor image = random_image(32, 64, 21);
    const FeaturePyramid a = toy_extract(image, 77);
    const FeaturePyramid b = toy_extract(image, 77);
    for (int level = 0; level < 3; ++level)
        CHECK(a.levels[level].same_bytes(b.levels[level]));

    const FeaturePyramid c = toy_extract(image, 78);
    const auto lhs = c.levels[0].f32();
    const auto rhs = a.levels[0].f32();
    bool differs = false;
    for (std::size_t i = 0; i < lhs.size(); ++i) differs |= (lhs[i] != rhs[i]);
    CHECK(differs);
}

TEST_CASE("toy_extract rejects bad extents") {
    CHECK_THROWS_AS(toy_extract(random_image(30, 64, 1), 0), ArgumentError);
    CHECK_THROWS_AS(toy_extract(random_image(64, 60, 1), 0), ArgumentError);
    CHECK_THROWS_AS(toy_extract(Tensor({4, 4}, Dtype::F32), 0), ArgumentError);
}

TEST_CASE("assemble_embedding full concatenation") {
    const FeaturePyramid pyr = toy_extract(random_image(64, 64, 9), 13);
    std::vector<std::size_t> all(kToyTotalChannels);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const EmbeddingVolume vol = assemble_embedding(pyr, all);
    CHECK(vol.dim() == 112);
    CHECK(vol.grid_h == 32);
    CHECK(vol.grid_w == 32);
    CHECK(vol.data.shape() == std::vector<std::size_t>{112, 32, 32});
}

TEST_CASE("assemble_embedding single level-1 channel passes through") {
    const FeaturePyramid pyr = toy_extract(random_image(64, 64, 10), 14);
    const EmbeddingVolume vol = assemble_embedding(pyr, {0});
    const auto plane = pyr.levels[0].f32().subspan(0, 32 * 32);
    const auto out = vol.data.f32();
    REQUIRE(out.size() == plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) CHECK(out[i] == plane[i]);
}

TEST_CASE("assemble_embedding replicates a 1x1 deep level to every cell") {
    // Hand-computed nearest-neighbor: a single level-3 value must replicate
    // to all four level-1 cells.
    const FeaturePyramid pyr = tiny_pyramid(10.0f, 20.0f, 30.0f);
    const EmbeddingVolume vol = assemble_embedding(pyr, {0, 1, 2});
    const auto out = vol.data.f32();
    CHECK(out[0 * 4 + 0] == 10.0f);
    CHECK(out[0 * 4 + 3] == 13.0f);
    for (int i = 0; i < 4; ++i) {
        CHECK(out[1 * 4 + i] == 20.0f);
        CHECK(out[2 * 4 + i] == 30.0f);
    }
}

TEST_CASE("assemble_embedding rejects out-of-range indices") {
    const FeaturePyramid pyr = tiny_pyramid(0.0f, 1.0f, 2.0f);
    CHECK_THROWS_AS(assemble_embedding(pyr, {3}), ArgumentError);
}

TEST_CASE("channel selection commutes with location") {
    const FeaturePyramid pyr = toy_extract(random_image(32, 32, 17), 19);
    std::vector<std::size_t> all(kToyTotalChannels);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    RngStream rng(3);
    const auto subset = choose_channel_indices(rng, kToyTotalChannels, 24);

    const EmbeddingVolume full = assemble_embedding(pyr, all);
    const EmbeddingVolume selected = assemble_embedding(pyr, subset);

    const std::size_t plane = full.grid_h * full.grid_w;
    for (std::size_t loc = 0; loc < plane; loc += 37) {
        for (std::size_t c = 0; c < subset.size(); ++c) {
            CHECK(selected.data.f32()[c * plane + loc] ==
                  full.data.f32()[subset[c] * plane + loc]);
        }
    }
}

TEST_CASE("nearest-neighbor upsampling preserves per-channel extrema") {
    const FeaturePyramid pyr = toy_extract(random_image(64, 64, 23), 29);
    // Channel 16 is the first level-2 channel, upsampled 2x.
    const EmbeddingVolume vol = assemble_embedding(pyr, {16});
    const auto src = pyr.levels[1].f32().subspan(0, 16 * 16);
    const auto dst = vol.data.f32();
    const auto src_minmax = std::minmax_element(src.begin(), src.end());
    const auto dst_minmax = std::minmax_element(dst.begin(), dst.end());
    CHECK(*src_minmax.first == *dst_minmax.first);
    CHECK(*src_minmax.second == *dst_minmax.second);
}
