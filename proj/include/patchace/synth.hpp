#pragma once

#include <patchace/archive.hpp>
#include <patchace/tensor.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace patchace {

/// Parameters for one synthetic SAR-like scene: unit-mean L-look Gamma
/// speckle background with bright elliptical targets.
struct SceneParams {
    std::size_t height = 64;
    std::size_t width = 64;
    int speckle_looks = 4;
    int target_count = 1;
    double target_contrast = 5.0;
    double radius_min = 4.0;
    double radius_max = 10.0;
    std::uint64_t seed = 0;
};

struct Scene {
    Tensor image; // (H, W) f32
    Tensor mask;  // (H, W) u8, union of target interiors
};

Scene generate_scene(const SceneParams& params);

struct SplitRatios {
    double train = 0.8; // fraction of normal images used for training
};

struct DatasetEntry {
    std::string id;
    std::string image_key; // tensor key inside the archive
    std::string mask_key;
    int label = 0; // 1 = anomalous
};

struct DatasetManifest {
    SplitRatios ratios;
    std::vector<DatasetEntry> train;
    std::vector<DatasetEntry> val;
    std::vector<DatasetEntry> test;
    std::string generator_json; // echo of the generating configuration

    const std::vector<DatasetEntry>& split(const std::string& name) const;
    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
};

/// Generate a dataset archive: n_normal target-free scenes and n_anomalous
/// scenes with targets, split train/val/test per the ratios (train holds
/// only normals; val and test each take half of the remaining normals and
/// half of the anomalous images).
DatasetManifest generate_dataset(const SceneParams& params, std::size_t n_normal,
                                 std::size_t n_anomalous, const SplitRatios& ratios,
                                 const std::filesystem::path& out);

DatasetManifest read_dataset_manifest(const NpzReader& archive);

} // namespace patchace
