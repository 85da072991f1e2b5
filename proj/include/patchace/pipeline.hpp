#pragma once

#include <patchace/anomaly_map.hpp>
#include <patchace/archive.hpp>
#include <patchace/detectors.hpp>
#include <patchace/metrics.hpp>
#include <patchace/synth.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace patchace {

/// Effective configuration of one modeling run. CLI flags override config
/// file values override these defaults.
struct RunConfig {
    Detector detector = Detector::Ace;
    CovType cov_type = CovType::Full;
    Aggregation aggregation = Aggregation::MeanDiagonal;
    SignatureMode signature_mode = SignatureMode::Global;
    std::size_t d = 100;
    double epsilon = 0.01;
    double sigma = 4.0;
    std::uint64_t seed = 0;
    bool use_masks = true;

    std::string to_json() const;
    std::string fingerprint() const; // CRC-32 of the canonical JSON, hex
};

/// In-memory model: channel selection, Gaussian field, whitening transforms
/// and (optionally) the target signature.
struct Model {
    std::size_t d = 0;
    std::size_t total_channels = 0;
    std::vector<std::size_t> channel_indices;
    bool toy_extractor = true;
    std::uint64_t extractor_seed = 0;
    GaussianField field;
    WhitenField whiten;
    std::optional<TargetSignature> signature;
};

/// Persist as a ZIP bundle (manifest.json + f32 NPY entries means /
/// covariance / whitening / signature). The file is replaced atomically.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// Read a pyramid for one dataset entry: from a features archive
/// ("level{k}/<id>" entries, batched "level{k}" with a leading batch axis,
/// or plain "level{k}" for single-image archives), or by running the toy
/// extractor on the dataset image.
FeaturePyramid load_pyramid(const NpzReader& dataset, const NpzReader* features,
                            const DatasetEntry& entry, std::size_t batch_index,
                            bool toy_extractor, std::uint64_t extractor_seed);

std::vector<EmbeddingVolume> embed_entries(const NpzReader& dataset,
                                           const NpzReader* features,
                                           const std::vector<DatasetEntry>& entries,
                                           const std::vector<std::size_t>& channel_indices,
                                           bool toy_extractor, std::uint64_t extractor_seed);

/// Fit channel selection + Gaussian field + whitening on the train split.
Model fit_model(const NpzReader& dataset, const NpzReader* features,
                const DatasetManifest& manifest, const RunConfig& config);

/// Reduce an image-resolution binary mask to the patch grid: a cell is
/// positive when any pixel in its footprint is.
Tensor reduce_mask_to_grid(const Tensor& mask, std::size_t grid_h, std::size_t grid_w);

/// Build the target signature from anomalous entries (their masks restrict
/// the mean when use_masks is set) and attach it to the model.
void attach_signature(Model& model, const NpzReader& dataset, const NpzReader* features,
                      const std::vector<DatasetEntry>& entries, SignatureMode mode,
                      bool use_masks);

struct ScoreOutput {
    std::vector<std::string> ids;
    std::vector<PatchScoreMap> patches;
    std::vector<AnomalyMap> maps;
    std::vector<double> image_scores;
    Detector detector = Detector::Ace;
    double sigma = 0.0;
};

ScoreOutput score_entries(const Model& model, const NpzReader& dataset,
                          const NpzReader* features,
                          const std::vector<DatasetEntry>& entries, Detector detector,
                          double sigma);

/// Results archive: "patch/<id>" and "map/<id>" f32 tensors, an
/// "image_scores" vector and a results.json manifest.
void write_results(const ScoreOutput& output, const std::string& split,
                   const std::string& config_json, const std::filesystem::path& path);

struct ResultsArchive {
    std::vector<std::string> ids;
    std::string split;
    Detector detector = Detector::Ace;
    std::vector<AnomalyMap> maps;
    std::vector<double> image_scores;
    std::string config_json;
};

ResultsArchive read_results(const std::filesystem::path& path);

/// Image-level AUROC (and pixel-level when both pixel classes are present)
/// of a results archive against the dataset labels and masks.
RunMetrics evaluate_results(const ResultsArchive& results, const NpzReader& dataset,
                            const DatasetManifest& manifest, std::uint64_t seed);

/// Full fit -> signature -> score -> eval once per seed; per-seed artifacts
/// land in workdir/seed<k>/. The signature is built from the anomalous
/// validation images; scoring and evaluation use the test split.
EvalReport run_multi_seed(const std::filesystem::path& dataset_path,
                          const std::optional<std::filesystem::path>& features_path,
                          RunConfig base, const std::vector<std::uint64_t>& seeds,
                          const std::filesystem::path& workdir);

/// 8-bit PGM heatmap (min-max normalized per map) for quick eyeballing.
void write_pgm(const AnomalyMap& map, const std::filesystem::path& path);

} // namespace patchace
