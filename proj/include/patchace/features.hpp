#pragma once

#include <patchace/tensor.hpp>

#include <array>
#include <cstdint>
#include <vector>

namespace patchace {

/// Three-level multi-scale feature stack for one image. Level k has shape
/// (C_k, H_k, W_k) with spatial extents halving per level.
struct FeaturePyramid {
    std::array<Tensor, 3> levels;

    std::size_t total_channels() const {
        return levels[0].shape()[0] + levels[1].shape()[0] + levels[2].shape()[0];
    }
};

/// d-channel embedding grid for one image, after channel selection.
/// data has shape (d, H', W'); the patch vector at (i, j) is data[:, i, j].
struct EmbeddingVolume {
    Tensor data;
    std::vector<std::size_t> channel_indices;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;

    std::size_t dim() const { return channel_indices.size(); }
};

/// Channel widths of the three toy extractor levels.
inline constexpr std::array<std::size_t, 3> kToyChannels = {16, 32, 64};
inline constexpr std::size_t kToyTotalChannels = 112;

/// Deterministic stand-in feature extractor: per level, a 3x3 seeded random
/// convolution (stride 1, reflect padding, no bias), ReLU, then 2x2 average
/// pooling with stride 2. Level k consumes level k-1 output; weights come
/// from RngStream(seed, level) as zero-mean Gaussians scaled by
/// 1/sqrt(9*C_in). Requires H, W >= 8 and divisible by 8.
FeaturePyramid toy_extract(const Tensor& image, std::uint64_t seed);

/// Align levels 2 and 3 to the level-1 grid by nearest neighbor, concatenate
/// channels in level order, then select the given channel indices.
EmbeddingVolume assemble_embedding(const FeaturePyramid& pyramid,
                                   const std::vector<std::size_t>& channel_indices);

} // namespace patchace
