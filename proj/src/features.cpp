#include <patchace/features.hpp>

#include <patchace/error.hpp>
#include <patchace/rng.hpp>

#include <cmath>

namespace patchace {

namespace {

// Symmetric reflection: -1 -> 0, n -> n-1. Kernel radius is 1 so a single
// fold suffices.
inline std::size_t reflect(long idx, std::size_t n) {
    if (idx < 0) return static_cast<std::size_t>(-1 - idx);
    if (idx >= static_cast<long>(n)) return 2 * n - 1 - static_cast<std::size_t>(idx);
    return static_cast<std::size_t>(idx);
}

// 3x3 conv + ReLU + 2x2 average pool over a channel-major (C, H, W) buffer.
// Weight order is fixed: out channel, in channel, kernel row, kernel col.
std::vector<float> conv_relu_pool(const std::vector<float>& in, std::size_t c_in,
                                  std::size_t h, std::size_t w, std::size_t c_out,
                                  RngStream& weights_rng) {
    const double scale = 1.0 / std::sqrt(9.0 * static_cast<double>(c_in));
    std::vector<double> weights(c_out * c_in * 9);
    for (double& wv : weights) wv = weights_rng.normal() * scale;

    const std::size_t oh = h / 2, ow = w / 2;
    std::vector<float> out(c_out * oh * ow, 0.0f);
    std::vector<double> conv_row(w);

    for (std::size_t oc = 0; oc < c_out; ++oc) {
        std::vector<double> activated(h * w, 0.0);
        for (std::size_t ic = 0; ic < c_in; ++ic) {
            const float* plane = in.data() + ic * h * w;
            const double* k = weights.data() + (oc * c_in + ic) * 9;
            for (std::size_t y = 0; y < h; ++y) {
                const float* rows[3] = {
                    plane + reflect(static_cast<long>(y) - 1, h) * w,
                    plane + y * w,
                    plane + reflect(static_cast<long>(y) + 1, h) * w,
                };
                double* acc = activated.data() + y * w;
                for (std::size_t x = 0; x < w; ++x) {
                    const std::size_t xl = reflect(static_cast<long>(x) - 1, w);
                    const std::size_t xr = reflect(static_cast<long>(x) + 1, w);
                    double s = 0.0;
                    for (int ky = 0; ky < 3; ++ky) {
                        const float* r = rows[ky];
                        s += k[ky * 3 + 0] * r[xl];
                        s += k[ky * 3 + 1] * r[x];
                        s += k[ky * 3 + 2] * r[xr];
                    }
                    acc[x] += s;
                }
            }
        }
        float* opl = out.data() + oc * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const double v = activated[(2 * y + dy) * w + (2 * x + dx)];
                        s += v > 0.0 ? v : 0.0;
                    }
                opl[y * ow + x] = static_cast<float>(0.25 * s);
            }
        }
    }
    return out;
}

} // namespace

FeaturePyramid toy_extract(const Tensor& image, std::uint64_t seed) {
    if (image.rank() != 2)
        throw ArgumentError("toy_extract: image must be 2-D, got shape " +
                            shape_to_string(image.shape()));
    const std::size_t h = image.shape()[0];
    const std::size_t w = image.shape()[1];
    if (h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0)
        throw ArgumentError("toy_extract: extents must be >= 8 and divisible by 8, got " +
                            shape_to_string(image.shape()));

    const auto pixels = image.f32();
    std::vector<float> current(pixels.begin(), pixels.end());
    std::size_t c_in = 1, ch = h, cw = w;

    FeaturePyramid pyr;
    for (std::size_t level = 0; level < 3; ++level) {
        RngStream weights_rng = RngStream::child(seed, level + 1);
        const std::size_t c_out = kToyChannels[level];
        std::vector<float> next = conv_relu_pool(current, c_in, ch, cw, c_out, weights_rng);
        ch /= 2;
        cw /= 2;
        pyr.levels[level] = Tensor::from_f32({c_out, ch, cw}, next);
        current = std::move(next);
        c_in = c_out;
    }
    return pyr;
}

EmbeddingVolume assemble_embedding(const FeaturePyramid& pyramid,
                                   const std::vector<std::size_t>& channel_indices) {
    for (const Tensor& level : pyramid.levels)
        if (level.rank() != 3)
            throw ArgumentError("assemble_embedding: pyramid levels must be (C, H, W)");

    const std::size_t out_h = pyramid.levels[0].shape()[1];
    const std::size_t out_w = pyramid.levels[0].shape()[2];
    const std::size_t total = pyramid.total_channels();

    const std::size_t d = channel_indices.size();
    Tensor data({d, out_h, out_w}, Dtype::F32);
    auto out = data.f32();

    for (std::size_t c = 0; c < d; ++c) {
        const std::size_t index = channel_indices[c];
        if (index >= total)
            throw ArgumentError("assemble_embedding: channel index " +
                                std::to_string(index) + " out of range for " +
                                std::to_string(total) + " channels");
        std::size_t level = 0, within = index;
        while (within >= pyramid.levels[level].shape()[0]) {
            within -= pyramid.levels[level].shape()[0];
            ++level;
        }
        const Tensor& src = pyramid.levels[level];
        const std::size_t sh = src.shape()[1], sw = src.shape()[2];
        const float* plane = src.f32().data() + within * sh * sw;
        float* dst = out.data() + c * out_h * out_w;
        if (sh == out_h && sw == out_w) {
            std::copy(plane, plane + sh * sw, dst);
        } else {
            // Nearest neighbor with floor index mapping.
            for (std::size_t y = 0; y < out_h; ++y) {
                const std::size_t sy = y * sh / out_h;
                for (std::size_t x = 0; x < out_w; ++x)
                    dst[y * out_w + x] = plane[sy * sw + x * sw / out_w];
            }
        }
    }
    return EmbeddingVolume{std::move(data), channel_indices, out_h, out_w};
}

} // namespace patchace
