#include <patchace/metrics.hpp>

#include <patchace/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace patchace {

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const std::size_t n = scores.size();
    if (n != labels.size()) throw ArgumentError("auroc: scores and labels differ in length");
    if (n < 2) throw ArgumentError("auroc: need at least two samples");

    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(scores[i])) throw ArgumentError("auroc: non-finite score");
        if (labels[i]) ++positives;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0)
        throw MetricError("auroc: undefined, only one class present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups (1-based), summed over positives.
    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]]) positive_rank_sum += avg_rank;
        i = j + 1;
    }

    const double p = static_cast<double>(positives);
    const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

double pixel_auroc(const std::vector<AnomalyMap>& maps, const std::vector<Tensor>& masks) {
    if (maps.size() != masks.size())
        throw ArgumentError("pixel_auroc: one mask per map required");
    if (maps.empty()) throw ArgumentError("pixel_auroc: need at least one map");

    std::size_t total = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (!maps[i].pixels.same_shape(masks[i]))
            throw ArgumentError("pixel_auroc: map and mask shapes differ at index " +
                                std::to_string(i));
        total += maps[i].pixels.size();
    }

    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    scores.reserve(total);
    labels.reserve(total);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto pixels = maps[i].pixels.f32();
        const auto mask = masks[i].u8();
        for (std::size_t k = 0; k < pixels.size(); ++k) {
            scores.push_back(static_cast<double>(pixels[k]));
            labels.push_back(mask[k] ? 1 : 0);
        }
    }
    try {
        return auroc(scores, labels);
    } catch (const MetricError&) {
        throw MetricError("pixel_auroc: undefined, masks lack a positive or negative pixel");
    }
}

Tensor threshold_mask(const AnomalyMap& map, double threshold) {
    Tensor out(map.pixels.shape(), Dtype::U8);
    const auto pixels = map.pixels.f32();
    auto bits = out.u8();
    for (std::size_t i = 0; i < pixels.size(); ++i)
        bits[i] = static_cast<double>(pixels[i]) >= threshold ? 1 : 0;
    return out;
}

namespace {

MetricStats stats_of(const std::vector<double>& values) {
    MetricStats s;
    const std::size_t r = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(r);
    if (r > 1) {
        double acc = 0.0;
        for (const double v : values) acc += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(r - 1));
    }
    return s;
}

} // namespace

EvalReport aggregate_runs(const std::vector<RunMetrics>& runs) {
    if (runs.empty()) throw ArgumentError("aggregate_runs: need at least one run");
    EvalReport report;
    report.runs = runs;

    std::vector<double> image_values;
    std::vector<double> pixel_values;
    bool all_pixel = true;
    for (const RunMetrics& run : runs) {
        image_values.push_back(run.image_auroc);
        if (run.pixel_auroc)
            pixel_values.push_back(*run.pixel_auroc);
        else
            all_pixel = false;
    }
    report.image_auroc = stats_of(image_values);
    if (all_pixel) report.pixel_auroc = stats_of(pixel_values);
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["image_auroc"] = report.image_auroc.mean;
    j["pixel_auroc"] = report.pixel_auroc ? nlohmann::json(report.pixel_auroc->mean)
                                          : nlohmann::json(nullptr);
    nlohmann::json runs = nlohmann::json::array();
    for (const RunMetrics& run : report.runs) {
        nlohmann::json r;
        r["seed"] = run.seed;
        r["image_auroc"] = run.image_auroc;
        r["pixel_auroc"] =
            run.pixel_auroc ? nlohmann::json(*run.pixel_auroc) : nlohmann::json(nullptr);
        runs.push_back(r);
    }
    j["runs"] = runs;
    j["mean"]["image_auroc"] = report.image_auroc.mean;
    j["std"]["image_auroc"] = report.image_auroc.stddev;
    if (report.pixel_auroc) {
        j["mean"]["pixel_auroc"] = report.pixel_auroc->mean;
        j["std"]["pixel_auroc"] = report.pixel_auroc->stddev;
    }
    j["config"] = report.config_json.empty()
                      ? nlohmann::json::object()
                      : nlohmann::json::parse(report.config_json);
    j["config_fingerprint"] = report.config_fingerprint;
    return j.dump(2);
}

} // namespace patchace
