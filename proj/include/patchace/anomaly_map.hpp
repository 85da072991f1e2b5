#pragma once

#include <patchace/detectors.hpp>
#include <patchace/tensor.hpp>

#include <string>
#include <vector>

namespace patchace {

/// Full-resolution anomaly heatmap plus the scalar image score (the exact
/// maximum of the smoothed pixels).
struct AnomalyMap {
    Tensor pixels; // (H, W) f32
    double image_score = 0.0;
    double smoothing_sigma = 0.0;
    std::string image_id;
};

/// Bilinear upsample (half-pixel centers) of the patch grid to
/// (out_h, out_w), then Gaussian blur with the given sigma (truncated at
/// 4 sigma, reflect padding). sigma == 0 skips the blur.
AnomalyMap render_map(const PatchScoreMap& patch, std::size_t out_h, std::size_t out_w,
                      double sigma);

struct NormalizeResult {
    std::vector<AnomalyMap> maps;
    bool degenerate = false; // all input values identical; maps forced to 0.5
};

/// Min-max rescale to [0, 1] using the global extrema across the list.
/// Presentation only: rank-preserving per pixel and per image score.
NormalizeResult normalize_maps(const std::vector<AnomalyMap>& maps);

} // namespace patchace
