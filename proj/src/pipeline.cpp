#include <patchace/pipeline.hpp>

#include <patchace/error.hpp>
#include <patchace/rng.hpp>

#include <json.hpp>
#include <zlib.h>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>

namespace patchace {

namespace {

// RNG stream layout per run seed: 0 = channel selection, 1..3 = toy
// extractor conv layers (consumed inside toy_extract).
constexpr std::uint64_t kChannelSelectionStream = 0;

nlohmann::json config_to_json_object(const RunConfig& c) {
    nlohmann::json j;
    j["detector"] = to_string(c.detector);
    j["cov_type"] = to_string(c.cov_type);
    j["aggregation"] = to_string(c.aggregation);
    j["signature_mode"] = to_string(c.signature_mode);
    j["d"] = c.d;
    j["epsilon"] = c.epsilon;
    j["sigma"] = c.sigma;
    j["seed"] = c.seed;
    j["use_masks"] = c.use_masks;
    return j;
}

Tensor f64_to_f32_tensor(const std::vector<double>& values,
                         std::vector<std::size_t> shape) {
    Tensor t(std::move(shape), Dtype::F32);
    auto out = t.f32();
    if (out.size() != values.size())
        throw ArgumentError("tensor conversion: shape does not match value count");
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = static_cast<float>(values[i]);
    return t;
}

std::vector<double> f32_tensor_to_f64(const Tensor& t) {
    const auto in = t.f32();
    return {in.begin(), in.end()};
}

} // namespace

std::string RunConfig::to_json() const { return config_to_json_object(*this).dump(); }

std::string RunConfig::fingerprint() const {
    const std::string canonical = to_json();
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(canonical.data()),
                static_cast<uInt>(canonical.size()));
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

void save_model(const Model& model, const std::filesystem::path& path) {
    const GaussianField& f = model.field;
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["d"] = model.d;
    manifest["grid"] = {f.grid_h, f.grid_w};
    manifest["cov_type"] = to_string(f.cov_type);
    manifest["epsilon"] = f.epsilon;
    manifest["aggregation"] = to_string(f.aggregation);
    manifest["channel_indices"] = model.channel_indices;
    manifest["total_channels"] = model.total_channels;
    manifest["sample_count"] = f.sample_count;
    if (model.toy_extractor)
        manifest["extractor"] = {{"type", "toy"}, {"seed", model.extractor_seed}};
    else
        manifest["extractor"] = {{"type", "external"}};
    if (model.signature)
        manifest["signature"] = {{"mode", to_string(model.signature->mode)},
                                 {"source_count", model.signature->source_count}};
    else
        manifest["signature"] = nullptr;

    const std::size_t gh = f.grid_h, gw = f.grid_w, d = f.dim;
    std::vector<std::size_t> cov_shape;
    switch (f.cov_type) {
        case CovType::Full: cov_shape = {gh, gw, d, d}; break;
        case CovType::Diagonal: cov_shape = {gh, gw, d}; break;
        case CovType::Isotropic: cov_shape = {gh, gw}; break;
    }

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        NpzWriter writer(tmp);
        writer.add_text("manifest.json", manifest.dump(2));
        writer.add_tensor("means", f64_to_f32_tensor(f.means, {gh, gw, d}));
        writer.add_tensor("covariance", f64_to_f32_tensor(f.cov, cov_shape));
        writer.add_tensor("whitening",
                          f64_to_f32_tensor(model.whiten.transforms, cov_shape));
        if (model.signature) {
            const TargetSignature& sig = *model.signature;
            std::vector<std::size_t> shape =
                sig.mode == SignatureMode::Global
                    ? std::vector<std::size_t>{d}
                    : std::vector<std::size_t>{gh, gw, d};
            writer.add_tensor("signature", f64_to_f32_tensor(sig.values, shape));
        }
        writer.finish();
    }
    std::filesystem::rename(tmp, path);
}

Model load_model(const std::filesystem::path& path) {
    NpzReader reader(path);
    if (!reader.has_text("manifest.json"))
        throw FormatError("model bundle lacks manifest.json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(reader.text("manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model manifest: bad JSON: ") + e.what());
    }

    Model model;
    try {
        model.d = manifest.at("d").get<std::size_t>();
        model.total_channels = manifest.at("total_channels").get<std::size_t>();
        model.channel_indices =
            manifest.at("channel_indices").get<std::vector<std::size_t>>();
        const auto& extractor = manifest.at("extractor");
        model.toy_extractor = extractor.at("type").get<std::string>() == "toy";
        if (model.toy_extractor)
            model.extractor_seed = extractor.at("seed").get<std::uint64_t>();

        GaussianField& f = model.field;
        f.grid_h = manifest.at("grid").at(0).get<std::size_t>();
        f.grid_w = manifest.at("grid").at(1).get<std::size_t>();
        f.dim = model.d;
        f.cov_type = cov_type_from_string(manifest.at("cov_type").get<std::string>());
        f.aggregation =
            aggregation_from_string(manifest.at("aggregation").get<std::string>());
        f.epsilon = manifest.at("epsilon").get<double>();
        f.sample_count = manifest.at("sample_count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model manifest: missing field: ") + e.what());
    }

    if (model.channel_indices.size() != model.d)
        throw FormatError("model manifest: d does not match channel_indices length");

    const Tensor means = reader.tensor("means");
    const Tensor cov = reader.tensor("covariance");
    const Tensor whiten = reader.tensor("whitening");
    const std::size_t gh = model.field.grid_h, gw = model.field.grid_w, d = model.d;

    auto expect_shape = [](const Tensor& t, const std::vector<std::size_t>& shape,
                           const char* name) {
        if (t.shape() != shape)
            throw FormatError(std::string("model bundle: ") + name + " has shape " +
                              shape_to_string(t.shape()) + ", expected " +
                              shape_to_string(shape));
    };
    expect_shape(means, {gh, gw, d}, "means");
    std::vector<std::size_t> cov_shape;
    switch (model.field.cov_type) {
        case CovType::Full: cov_shape = {gh, gw, d, d}; break;
        case CovType::Diagonal: cov_shape = {gh, gw, d}; break;
        case CovType::Isotropic: cov_shape = {gh, gw}; break;
    }
    expect_shape(cov, cov_shape, "covariance");
    expect_shape(whiten, cov_shape, "whitening");

    model.field.means = f32_tensor_to_f64(means);
    model.field.cov = f32_tensor_to_f64(cov);
    model.whiten.grid_h = gh;
    model.whiten.grid_w = gw;
    model.whiten.dim = d;
    model.whiten.cov_type = model.field.cov_type;
    model.whiten.transforms = f32_tensor_to_f64(whiten);

    if (manifest.contains("signature") && !manifest["signature"].is_null()) {
        TargetSignature sig;
        sig.mode = signature_mode_from_string(
            manifest["signature"].at("mode").get<std::string>());
        sig.source_count = manifest["signature"].at("source_count").get<std::size_t>();
        sig.dim = d;
        const Tensor values = reader.tensor("signature");
        if (sig.mode == SignatureMode::Global) {
            expect_shape(values, {d}, "signature");
        } else {
            expect_shape(values, {gh, gw, d}, "signature");
            sig.grid_h = gh;
            sig.grid_w = gw;
        }
        sig.values = f32_tensor_to_f64(values);
        model.signature = std::move(sig);
    }
    return model;
}

FeaturePyramid load_pyramid(const NpzReader& dataset, const NpzReader* features,
                            const DatasetEntry& entry, std::size_t batch_index,
                            bool toy_extractor, std::uint64_t extractor_seed) {
    if (features) {
        FeaturePyramid pyr;
        for (std::size_t level = 0; level < 3; ++level) {
            const std::string base = "level" + std::to_string(level + 1);
            const std::string keyed = base + "/" + entry.id;
            if (features->has_tensor(keyed)) {
                pyr.levels[level] = features->tensor(keyed);
            } else if (features->has_tensor(base)) {
                const Tensor t = features->tensor(base);
                if (t.rank() == 3) {
                    pyr.levels[level] = t; // single-image archive
                } else if (t.rank() == 4) {
                    const auto& s = t.shape();
                    if (batch_index >= s[0])
                        throw ArgumentError("features archive: batch index " +
                                            std::to_string(batch_index) +
                                            " out of range for " + base);
                    const std::size_t plane = s[1] * s[2] * s[3];
                    const auto all = t.f32();
                    pyr.levels[level] = Tensor::from_f32(
                        {s[1], s[2], s[3]},
                        all.subspan(batch_index * plane, plane));
                } else {
                    throw FormatError("features archive: " + base +
                                      " must be 3-D or batched 4-D");
                }
            } else {
                throw FormatError("features archive lacks level" +
                                  std::to_string(level + 1) + " for image '" +
                                  entry.id + "'");
            }
            if (pyr.levels[level].rank() != 3)
                throw FormatError("features archive: pyramid level must be (C, H, W)");
        }
        return pyr;
    }
    if (!toy_extractor)
        throw ConfigError("model was fitted on external features; pass the features archive");
    const Tensor image = dataset.tensor(entry.image_key);
    return toy_extract(image, extractor_seed);
}

std::vector<EmbeddingVolume> embed_entries(const NpzReader& dataset,
                                           const NpzReader* features,
                                           const std::vector<DatasetEntry>& entries,
                                           const std::vector<std::size_t>& channel_indices,
                                           bool toy_extractor,
                                           std::uint64_t extractor_seed) {
    std::vector<EmbeddingVolume> volumes;
    volumes.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const FeaturePyramid pyr = load_pyramid(dataset, features, entries[i], i,
                                                toy_extractor, extractor_seed);
        volumes.push_back(assemble_embedding(pyr, channel_indices));
    }
    return volumes;
}

Model fit_model(const NpzReader& dataset, const NpzReader* features,
                const DatasetManifest& manifest, const RunConfig& config) {
    const std::vector<DatasetEntry>& train = manifest.train;
    if (train.empty()) throw ConfigError("fit: train split is empty");

    Model model;
    model.toy_extractor = features == nullptr;
    model.extractor_seed = config.seed;

    // Channel count comes from the first pyramid.
    const FeaturePyramid first = load_pyramid(dataset, features, train[0], 0,
                                              model.toy_extractor, model.extractor_seed);
    model.total_channels = first.total_channels();
    RngStream selection = RngStream::child(config.seed, kChannelSelectionStream);
    model.channel_indices = choose_channel_indices(selection, model.total_channels, config.d);
    model.d = config.d;

    std::vector<EmbeddingVolume> volumes;
    volumes.reserve(train.size());
    volumes.push_back(assemble_embedding(first, model.channel_indices));
    for (std::size_t i = 1; i < train.size(); ++i) {
        const FeaturePyramid pyr = load_pyramid(dataset, features, train[i], i,
                                                model.toy_extractor, model.extractor_seed);
        volumes.push_back(assemble_embedding(pyr, model.channel_indices));
    }

    model.field = fit_gaussians(volumes, config.cov_type, config.epsilon,
                                config.aggregation);
    model.whiten = precompute_whitening(model.field);
    return model;
}

Tensor reduce_mask_to_grid(const Tensor& mask, std::size_t grid_h, std::size_t grid_w) {
    if (mask.rank() != 2)
        throw ArgumentError("reduce_mask_to_grid: mask must be 2-D");
    const std::size_t h = mask.shape()[0], w = mask.shape()[1];
    if (grid_h == 0 || grid_w == 0 || grid_h > h || grid_w > w)
        throw ArgumentError("reduce_mask_to_grid: grid larger than mask");
    Tensor out({grid_h, grid_w}, Dtype::U8);
    const auto in = mask.u8();
    auto bits = out.u8();
    for (std::size_t gy = 0; gy < grid_h; ++gy) {
        const std::size_t y0 = gy * h / grid_h;
        const std::size_t y1 = (gy + 1) * h / grid_h;
        for (std::size_t gx = 0; gx < grid_w; ++gx) {
            const std::size_t x0 = gx * w / grid_w;
            const std::size_t x1 = (gx + 1) * w / grid_w;
            std::uint8_t any = 0;
            for (std::size_t y = y0; y < y1 && !any; ++y)
                for (std::size_t x = x0; x < x1; ++x)
                    if (in[y * w + x]) {
                        any = 1;
                        break;
                    }
            bits[gy * grid_w + gx] = any;
        }
    }
    return out;
}

void attach_signature(Model& model, const NpzReader& dataset, const NpzReader* features,
                      const std::vector<DatasetEntry>& entries, SignatureMode mode,
                      bool use_masks) {
    if (entries.empty())
        throw ConfigError("signature: no anomalous images available");
    const std::vector<EmbeddingVolume> volumes =
        embed_entries(dataset, features, entries, model.channel_indices,
                      model.toy_extractor, model.extractor_seed);

    std::vector<Tensor> grid_masks;
    if (use_masks) {
        grid_masks.reserve(entries.size());
        for (const DatasetEntry& entry : entries) {
            const Tensor mask = dataset.tensor(entry.mask_key);
            grid_masks.push_back(
                reduce_mask_to_grid(mask, volumes[0].grid_h, volumes[0].grid_w));
        }
    }
    model.signature = build_target_signature(
        volumes, use_masks ? &grid_masks : nullptr, mode);
}

ScoreOutput score_entries(const Model& model, const NpzReader& dataset,
                          const NpzReader* features,
                          const std::vector<DatasetEntry>& entries, Detector detector,
                          double sigma) {
    if (entries.empty()) throw ConfigError("score: no images selected");

    std::vector<std::string> ids;
    ids.reserve(entries.size());
    for (const DatasetEntry& entry : entries) ids.push_back(entry.id);

    const std::vector<EmbeddingVolume> volumes =
        embed_entries(dataset, features, entries, model.channel_indices,
                      model.toy_extractor, model.extractor_seed);

    ScoreOutput out;
    out.ids = ids;
    out.detector = detector;
    out.sigma = sigma;
    out.patches = score_volumes(volumes, model.field, model.whiten,
                                model.signature ? &*model.signature : nullptr,
                                detector, ids);
    out.maps.reserve(entries.size());
    out.image_scores.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Tensor image = dataset.tensor(entries[i].image_key);
        const AnomalyMap map =
            render_map(out.patches[i], image.shape()[0], image.shape()[1], sigma);
        out.image_scores.push_back(map.image_score);
        out.maps.push_back(map);
    }
    return out;
}

void write_results(const ScoreOutput& output, const std::string& split,
                   const std::string& config_json, const std::filesystem::path& path) {
    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["split"] = split;
    meta["detector"] = to_string(output.detector);
    meta["sigma"] = output.sigma;
    meta["ids"] = output.ids;
    meta["config"] = config_json.empty() ? nlohmann::json::object()
                                         : nlohmann::json::parse(config_json);

    NpzWriter writer(path);
    writer.add_text("results.json", meta.dump(2));
    for (std::size_t i = 0; i < output.ids.size(); ++i) {
        writer.add_tensor("patch/" + output.ids[i], output.patches[i].scores);
        writer.add_tensor("map/" + output.ids[i], output.maps[i].pixels);
    }
    std::vector<float> scores(output.image_scores.begin(), output.image_scores.end());
    writer.add_tensor("image_scores", Tensor::from_f32({scores.size()}, scores));
    writer.finish();
}

ResultsArchive read_results(const std::filesystem::path& path) {
    NpzReader reader(path);
    if (!reader.has_text("results.json"))
        throw FormatError("results archive lacks results.json");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(reader.text("results.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("results.json: bad JSON: ") + e.what());
    }

    ResultsArchive out;
    try {
        out.split = meta.at("split").get<std::string>();
        out.detector = detector_from_string(meta.at("detector").get<std::string>());
        out.ids = meta.at("ids").get<std::vector<std::string>>();
        if (meta.contains("config")) out.config_json = meta["config"].dump();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("results.json: missing field: ") + e.what());
    }

    const Tensor scores = reader.tensor("image_scores");
    if (scores.size() != out.ids.size())
        throw FormatError("results archive: image_scores length mismatch");
    for (const float v : scores.f32()) out.image_scores.push_back(v);

    out.maps.reserve(out.ids.size());
    for (const std::string& id : out.ids) {
        AnomalyMap map;
        map.pixels = reader.tensor("map/" + id);
        map.image_id = id;
        float max_value = map.pixels.size() ? map.pixels.f32()[0] : 0.0f;
        for (const float v : map.pixels.f32()) max_value = std::max(max_value, v);
        map.image_score = max_value;
        out.maps.push_back(std::move(map));
    }
    return out;
}

RunMetrics evaluate_results(const ResultsArchive& results, const NpzReader& dataset,
                            const DatasetManifest& manifest, std::uint64_t seed) {
    std::map<std::string, int> labels_by_id;
    for (const auto* split : {&manifest.train, &manifest.val, &manifest.test})
        for (const DatasetEntry& entry : *split) labels_by_id[entry.id] = entry.label;
    std::map<std::string, std::string> mask_by_id;
    for (const auto* split : {&manifest.train, &manifest.val, &manifest.test})
        for (const DatasetEntry& entry : *split) mask_by_id[entry.id] = entry.mask_key;

    std::vector<std::uint8_t> labels;
    for (const std::string& id : results.ids) {
        const auto it = labels_by_id.find(id);
        if (it == labels_by_id.end())
            throw ConfigError("eval: image '" + id + "' not present in the dataset manifest");
        labels.push_back(it->second ? 1 : 0);
    }

    RunMetrics metrics;
    metrics.seed = seed;
    metrics.image_auroc = auroc(results.image_scores, labels);

    std::vector<Tensor> masks;
    bool any_positive = false, any_negative = false;
    for (const std::string& id : results.ids) {
        Tensor mask = dataset.tensor(mask_by_id.at(id));
        for (const std::uint8_t v : mask.u8()) {
            if (v)
                any_positive = true;
            else
                any_negative = true;
        }
        masks.push_back(std::move(mask));
    }
    if (any_positive && any_negative)
        metrics.pixel_auroc = pixel_auroc(results.maps, masks);
    return metrics;
}

EvalReport run_multi_seed(const std::filesystem::path& dataset_path,
                          const std::optional<std::filesystem::path>& features_path,
                          RunConfig base, const std::vector<std::uint64_t>& seeds,
                          const std::filesystem::path& workdir) {
    if (seeds.empty()) throw ConfigError("eval: seeds list is empty");

    NpzReader dataset(dataset_path);
    std::optional<NpzReader> features;
    if (features_path) features.emplace(*features_path);
    const NpzReader* features_ptr = features ? &*features : nullptr;
    const DatasetManifest manifest = read_dataset_manifest(dataset);

    std::vector<DatasetEntry> val_anomalous;
    for (const DatasetEntry& entry : manifest.val)
        if (entry.label == 1) val_anomalous.push_back(entry);

    std::vector<RunMetrics> runs;
    for (const std::uint64_t seed : seeds) {
        RunConfig config = base;
        config.seed = seed;
        const std::filesystem::path run_dir =
            workdir / ("seed" + std::to_string(seed));
        std::filesystem::create_directories(run_dir);

        Model model = fit_model(dataset, features_ptr, manifest, config);
        if (config.detector == Detector::Ace)
            attach_signature(model, dataset, features_ptr, val_anomalous,
                             config.signature_mode, config.use_masks);
        save_model(model, run_dir / "model.npz");

        const ScoreOutput output = score_entries(model, dataset, features_ptr,
                                                 manifest.test, config.detector,
                                                 config.sigma);
        write_results(output, "test", config.to_json(), run_dir / "results.npz");

        const ResultsArchive results = read_results(run_dir / "results.npz");
        const RunMetrics metrics = evaluate_results(results, dataset, manifest, seed);
        runs.push_back(metrics);

        EvalReport single = aggregate_runs({metrics});
        single.config_json = config.to_json();
        single.config_fingerprint = config.fingerprint();
        std::ofstream report_out(run_dir / "report.json");
        report_out << report_to_json(single) << "\n";
    }

    EvalReport report = aggregate_runs(runs);
    nlohmann::json config_echo = config_to_json_object(base);
    config_echo.erase("seed");
    config_echo["seeds"] = seeds;
    report.config_json = config_echo.dump();
    {
        uLong crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(report.config_json.data()),
                    static_cast<uInt>(report.config_json.size()));
        char buf[9];
        std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
        report.config_fingerprint = buf;
    }
    return report;
}

void write_pgm(const AnomalyMap& map, const std::filesystem::path& path) {
    const auto pixels = map.pixels.f32();
    float lo = pixels.empty() ? 0.0f : pixels[0];
    float hi = lo;
    for (const float v : pixels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float range = hi > lo ? hi - lo : 1.0f;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("pgm: cannot open " + path.string());
    out << "P5\n" << map.pixels.shape()[1] << " " << map.pixels.shape()[0] << "\n255\n";
    for (const float v : pixels) {
        const int level = static_cast<int>(255.0f * (v - lo) / range + 0.5f);
        out.put(static_cast<char>(std::clamp(level, 0, 255)));
    }
    if (!out) throw IoError("pgm: write failure on " + path.string());
}

} // namespace patchace
