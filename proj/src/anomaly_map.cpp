#include <patchace/anomaly_map.hpp>

#include <patchace/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace patchace {

namespace {

// Symmetric reflection with folding, valid for any offset.
std::size_t reflect_index(long idx, std::size_t n) {
    const long period = 2 * static_cast<long>(n);
    long m = idx % period;
    if (m < 0) m += period;
    if (m >= static_cast<long>(n)) m = period - 1 - m;
    return static_cast<std::size_t>(m);
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(4.0 * sigma + 0.5);
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * (k / sigma) * (k / sigma));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        total += w;
    }
    for (double& w : kernel) w /= total;
    return kernel;
}

void blur_separable(std::vector<double>& buf, std::size_t h, std::size_t w, double sigma) {
    const std::vector<double> kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);
    if (radius == 0) return;

    std::vector<double> tmp(buf.size());
    for (std::size_t y = 0; y < h; ++y) {
        const double* row = buf.data() + y * w;
        double* out = tmp.data() + y * w;
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       row[reflect_index(static_cast<long>(x) + k, w)];
            out[x] = acc;
        }
    }
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       tmp[reflect_index(static_cast<long>(y) + k, h) * w + x];
            buf[y * w + x] = acc;
        }
    }
}

} // namespace

AnomalyMap render_map(const PatchScoreMap& patch, std::size_t out_h, std::size_t out_w,
                      double sigma) {
    const std::size_t gh = patch.grid_h();
    const std::size_t gw = patch.grid_w();
    if (out_h < gh || out_w < gw)
        throw ArgumentError("render_map: output extents must not be smaller than the grid");
    if (sigma < 0.0) throw ArgumentError("render_map: sigma must be non-negative");

    const auto grid = patch.scores.f32();
    std::vector<double> pixels(out_h * out_w);

    // Bilinear with half-pixel centers; source taps clamp at the borders.
    for (std::size_t y = 0; y < out_h; ++y) {
        const double sy = (static_cast<double>(y) + 0.5) * static_cast<double>(gh) /
                              static_cast<double>(out_h) - 0.5;
        const double fy0 = std::floor(sy);
        const double wy = sy - fy0;
        const long y0 = std::clamp<long>(static_cast<long>(fy0), 0, static_cast<long>(gh) - 1);
        const long y1 = std::clamp<long>(static_cast<long>(fy0) + 1, 0, static_cast<long>(gh) - 1);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double sx = (static_cast<double>(x) + 0.5) * static_cast<double>(gw) /
                                  static_cast<double>(out_w) - 0.5;
            const double fx0 = std::floor(sx);
            const double wx = sx - fx0;
            const long x0 = std::clamp<long>(static_cast<long>(fx0), 0, static_cast<long>(gw) - 1);
            const long x1 = std::clamp<long>(static_cast<long>(fx0) + 1, 0,
                                             static_cast<long>(gw) - 1);
            const double v00 = grid[static_cast<std::size_t>(y0) * gw + static_cast<std::size_t>(x0)];
            const double v01 = grid[static_cast<std::size_t>(y0) * gw + static_cast<std::size_t>(x1)];
            const double v10 = grid[static_cast<std::size_t>(y1) * gw + static_cast<std::size_t>(x0)];
            const double v11 = grid[static_cast<std::size_t>(y1) * gw + static_cast<std::size_t>(x1)];
            pixels[y * out_w + x] = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                    wy * ((1.0 - wx) * v10 + wx * v11);
        }
    }

    if (sigma > 0.0) blur_separable(pixels, out_h, out_w, sigma);

    AnomalyMap map;
    map.pixels = Tensor({out_h, out_w}, Dtype::F32);
    map.smoothing_sigma = sigma;
    map.image_id = patch.image_id;
    auto out = map.pixels.f32();
    float max_value = -std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        out[i] = static_cast<float>(pixels[i]);
        max_value = std::max(max_value, out[i]);
    }
    map.image_score = static_cast<double>(max_value);
    return map;
}

NormalizeResult normalize_maps(const std::vector<AnomalyMap>& maps) {
    if (maps.empty()) throw ArgumentError("normalize_maps: need at least one map");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const AnomalyMap& map : maps)
        for (const float v : map.pixels.f32()) {
            lo = std::min(lo, static_cast<double>(v));
            hi = std::max(hi, static_cast<double>(v));
        }

    NormalizeResult result;
    result.maps = maps;
    if (lo == hi) {
        result.degenerate = true;
        for (AnomalyMap& map : result.maps) {
            for (float& v : map.pixels.f32()) v = 0.5f;
            map.image_score = 0.5;
        }
        return result;
    }

    const double range = hi - lo;
    for (AnomalyMap& map : result.maps) {
        float max_value = -std::numeric_limits<float>::infinity();
        for (float& v : map.pixels.f32()) {
            v = static_cast<float>((static_cast<double>(v) - lo) / range);
            max_value = std::max(max_value, v);
        }
        map.image_score = static_cast<double>(max_value);
    }
    return result;
}

} // namespace patchace
