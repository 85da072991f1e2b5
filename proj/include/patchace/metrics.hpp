#pragma once

#include <patchace/anomaly_map.hpp>
#include <patchace/tensor.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace patchace {

/// Probability that a random positive outranks a random negative, ties
/// counted 1/2 (Mann-Whitney via average ranks). Raises MetricError when
/// only one class is present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// AUROC over the flattened pixels of all maps against binary masks.
double pixel_auroc(const std::vector<AnomalyMap>& maps, const std::vector<Tensor>& masks);

/// Binary mask: pixel >= threshold.
Tensor threshold_mask(const AnomalyMap& map, double threshold);

struct RunMetrics {
    std::uint64_t seed = 0;
    double image_auroc = 0.0;
    std::optional<double> pixel_auroc;
};

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0; // sample std, divisor R-1; zero for a single run
};

struct EvalReport {
    std::vector<RunMetrics> runs;
    MetricStats image_auroc;
    std::optional<MetricStats> pixel_auroc;
    std::string config_fingerprint;
    std::string config_json; // effective config echo, serialized
};

EvalReport aggregate_runs(const std::vector<RunMetrics>& runs);

/// JSON with keys image_auroc, pixel_auroc, runs[], mean{}, std{}, config{},
/// config_fingerprint; doubles keep full round-trip precision.
std::string report_to_json(const EvalReport& report);

} // namespace patchace
