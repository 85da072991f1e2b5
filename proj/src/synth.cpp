#include <patchace/synth.hpp>

#include <patchace/error.hpp>
#include <patchace/rng.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>

namespace patchace {

namespace {

void validate_params(const SceneParams& p) {
    if (p.height < 32 || p.width < 32)
        throw ArgumentError("scene extents must be at least 32 pixels");
    if (p.height % 8 != 0 || p.width % 8 != 0)
        throw ArgumentError("scene extents must be divisible by 8");
    if (p.speckle_looks < 1) throw ArgumentError("speckle_looks must be >= 1");
    if (!(p.target_contrast > 1.0)) throw ArgumentError("target_contrast must exceed 1");
    if (p.target_count < 0) throw ArgumentError("target_count must be non-negative");
    if (!(p.radius_min >= 1.0) || !(p.radius_max >= p.radius_min))
        throw ArgumentError("target radii must satisfy 1 <= min <= max");
    const double bound = 0.5 * static_cast<double>(std::min(p.height, p.width)) - 1.0;
    if (p.radius_max > bound)
        throw ArgumentError("radius_max " + std::to_string(p.radius_max) +
                            " does not fit the image bounds");
}

struct Ellipse {
    double cx, cy, a, b, theta;
};

// Rasterize the ellipse interior into the mask (union semantics).
void stamp(const Ellipse& e, std::uint8_t* mask, std::size_t h, std::size_t w) {
    const double reach = std::max(e.a, e.b);
    const long y_lo = std::max<long>(0, static_cast<long>(std::floor(e.cy - reach)));
    const long y_hi = std::min<long>(static_cast<long>(h) - 1,
                                     static_cast<long>(std::ceil(e.cy + reach)));
    const long x_lo = std::max<long>(0, static_cast<long>(std::floor(e.cx - reach)));
    const long x_hi = std::min<long>(static_cast<long>(w) - 1,
                                     static_cast<long>(std::ceil(e.cx + reach)));
    const double ct = std::cos(e.theta);
    const double st = std::sin(e.theta);
    for (long y = y_lo; y <= y_hi; ++y) {
        for (long x = x_lo; x <= x_hi; ++x) {
            const double dx = static_cast<double>(x) - e.cx;
            const double dy = static_cast<double>(y) - e.cy;
            const double u = (ct * dx + st * dy) / e.a;
            const double v = (-st * dx + ct * dy) / e.b;
            if (u * u + v * v <= 1.0)
                mask[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = 1;
        }
    }
}

} // namespace

Scene generate_scene(const SceneParams& p) {
    validate_params(p);
    const std::size_t h = p.height, w = p.width;

    Scene scene;
    scene.image = Tensor({h, w}, Dtype::F32);
    scene.mask = Tensor({h, w}, Dtype::U8);
    auto pixels = scene.image.f32();
    auto mask = scene.mask.u8();

    // Stream 0: background speckle, row-major. Stream 1: target placement.
    RngStream background = RngStream::child(p.seed, 0);
    const double looks = static_cast<double>(p.speckle_looks);
    for (std::size_t i = 0; i < h * w; ++i)
        pixels[i] = static_cast<float>(background.gamma(looks) / looks);

    RngStream targets = RngStream::child(p.seed, 1);
    for (int t = 0; t < p.target_count; ++t) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            // Fixed draw order: cx, cy, a, b, theta.
            Ellipse e;
            e.cx = targets.uniform01() * static_cast<double>(w);
            e.cy = targets.uniform01() * static_cast<double>(h);
            e.a = p.radius_min + targets.uniform01() * (p.radius_max - p.radius_min);
            e.b = p.radius_min + targets.uniform01() * (p.radius_max - p.radius_min);
            e.theta = targets.uniform01() * 3.14159265358979323846;
            const double reach = std::max(e.a, e.b);
            if (e.cx - reach < 0.0 || e.cx + reach > static_cast<double>(w) - 1.0 ||
                e.cy - reach < 0.0 || e.cy + reach > static_cast<double>(h) - 1.0)
                continue;
            stamp(e, mask.data(), h, w);
            placed = true;
        }
        if (!placed)
            throw ConfigError("generate_scene: could not place target " +
                              std::to_string(t) + " within 100 attempts");
    }

    if (p.target_count > 0) {
        const auto contrast = static_cast<float>(p.target_contrast);
        for (std::size_t i = 0; i < h * w; ++i)
            if (mask[i]) pixels[i] *= contrast;
    }
    return scene;
}

const std::vector<DatasetEntry>& DatasetManifest::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ArgumentError("unknown split '" + name + "'");
}

namespace {

nlohmann::json entries_to_json(const std::vector<DatasetEntry>& entries) {
    nlohmann::json out = nlohmann::json::array();
    for (const DatasetEntry& e : entries)
        out.push_back({{"id", e.id},
                       {"image", e.image_key},
                       {"mask", e.mask_key},
                       {"label", e.label}});
    return out;
}

std::vector<DatasetEntry> entries_from_json(const nlohmann::json& j) {
    std::vector<DatasetEntry> out;
    for (const auto& item : j) {
        DatasetEntry e;
        e.id = item.at("id").get<std::string>();
        e.image_key = item.at("image").get<std::string>();
        e.mask_key = item.at("mask").get<std::string>();
        e.label = item.at("label").get<int>();
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace

std::string DatasetManifest::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["ratios"]["train"] = ratios.train;
    j["splits"]["train"] = entries_to_json(train);
    j["splits"]["val"] = entries_to_json(val);
    j["splits"]["test"] = entries_to_json(test);
    j["generator"] = generator_json.empty() ? nlohmann::json::object()
                                            : nlohmann::json::parse(generator_json);
    return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset manifest: bad JSON: ") + e.what());
    }
    DatasetManifest m;
    try {
        m.ratios.train = j.at("ratios").at("train").get<double>();
        m.train = entries_from_json(j.at("splits").at("train"));
        m.val = entries_from_json(j.at("splits").at("val"));
        m.test = entries_from_json(j.at("splits").at("test"));
        if (j.contains("generator")) m.generator_json = j["generator"].dump();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset manifest: missing field: ") + e.what());
    }
    return m;
}

DatasetManifest generate_dataset(const SceneParams& params, std::size_t n_normal,
                                 std::size_t n_anomalous, const SplitRatios& ratios,
                                 const std::filesystem::path& out) {
    validate_params(params);
    if (n_normal < 5) throw ArgumentError("generate_dataset: need at least 5 normal images");
    if (n_anomalous < 2)
        throw ArgumentError("generate_dataset: need at least 2 anomalous images");
    if (!(ratios.train > 0.0 && ratios.train < 1.0))
        throw ArgumentError("generate_dataset: train ratio must lie in (0, 1)");

    // Floor the train boundary; an odd leftover normal goes back to train so
    // val and test stay even. Odd anomalous counts give the extra image to
    // test.
    std::size_t train_n = static_cast<std::size_t>(
        std::floor(ratios.train * static_cast<double>(n_normal)));
    std::size_t rest = n_normal - train_n;
    if (rest % 2 != 0) {
        ++train_n;
        --rest;
    }
    const std::size_t val_n = rest / 2;
    const std::size_t test_n = rest / 2;
    const std::size_t val_a = n_anomalous / 2;
    const std::size_t test_a = n_anomalous - val_a;
    if (test_n == 0 || test_a == 0)
        throw ConfigError("generate_dataset: split leaves an empty class in the test set");

    DatasetManifest manifest;
    manifest.ratios = ratios;
    {
        nlohmann::json gen;
        gen["height"] = params.height;
        gen["width"] = params.width;
        gen["speckle_looks"] = params.speckle_looks;
        gen["target_count"] = std::max(params.target_count, 1);
        gen["target_contrast"] = params.target_contrast;
        gen["radius_min"] = params.radius_min;
        gen["radius_max"] = params.radius_max;
        gen["seed"] = params.seed;
        gen["n_normal"] = n_normal;
        gen["n_anomalous"] = n_anomalous;
        manifest.generator_json = gen.dump();
    }

    NpzWriter writer(out);
    char id[32];
    for (std::size_t k = 0; k < n_normal + n_anomalous; ++k) {
        const bool anomalous = k >= n_normal;
        SceneParams sp = params;
        sp.seed = derive_seed(params.seed, k);
        sp.target_count = anomalous ? std::max(params.target_count, 1) : 0;
        const Scene scene = generate_scene(sp);

        if (anomalous)
            std::snprintf(id, sizeof id, "a%04zu", k - n_normal);
        else
            std::snprintf(id, sizeof id, "n%04zu", k);
        DatasetEntry entry;
        entry.id = id;
        entry.image_key = std::string("img/") + id;
        entry.mask_key = std::string("mask/") + id;
        entry.label = anomalous ? 1 : 0;
        writer.add_tensor(entry.image_key, scene.image);
        writer.add_tensor(entry.mask_key, scene.mask);

        if (!anomalous) {
            if (k < train_n)
                manifest.train.push_back(entry);
            else if (k < train_n + val_n)
                manifest.val.push_back(entry);
            else
                manifest.test.push_back(entry);
        } else {
            const std::size_t j = k - n_normal;
            if (j < val_a)
                manifest.val.push_back(entry);
            else
                manifest.test.push_back(entry);
        }
    }
    writer.add_text("manifest.json", manifest.to_json());
    writer.finish();
    return manifest;
}

DatasetManifest read_dataset_manifest(const NpzReader& archive) {
    if (!archive.has_text("manifest.json"))
        throw FormatError("dataset archive lacks manifest.json");
    return DatasetManifest::from_json(archive.text("manifest.json"));
}

} // namespace patchace
