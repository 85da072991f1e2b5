#include <patchace/detectors.hpp>

#include <patchace/error.hpp>
#include <patchace/parallel.hpp>

#include <algorithm>
#include <cmath>

namespace patchace {

const char* to_string(Detector d) {
    return d == Detector::Mahalanobis ? "mahalanobis" : "ace";
}

const char* to_string(SignatureMode m) {
    return m == SignatureMode::Global ? "global" : "per-location";
}

Detector detector_from_string(const std::string& s) {
    if (s == "mahalanobis") return Detector::Mahalanobis;
    if (s == "ace") return Detector::Ace;
    throw ArgumentError("unknown detector '" + s + "'");
}

SignatureMode signature_mode_from_string(const std::string& s) {
    if (s == "global") return SignatureMode::Global;
    if (s == "per-location" || s == "per_location") return SignatureMode::PerLocation;
    throw ArgumentError("unknown signature mode '" + s + "'");
}

namespace {

void check_grid_mask(const Tensor& mask, std::size_t gh, std::size_t gw) {
    if (mask.rank() != 2 || mask.shape()[0] != gh || mask.shape()[1] != gw)
        throw ArgumentError("signature mask shape " + shape_to_string(mask.shape()) +
                            " does not match grid (" + std::to_string(gh) + ", " +
                            std::to_string(gw) + ")");
}

} // namespace

TargetSignature build_target_signature(const std::vector<EmbeddingVolume>& anomalous,
                                       const std::vector<Tensor>* grid_masks,
                                       SignatureMode mode) {
    if (anomalous.empty())
        throw ArgumentError("build_target_signature: need at least one anomalous volume");
    const std::size_t d = anomalous[0].dim();
    const std::size_t gh = anomalous[0].grid_h;
    const std::size_t gw = anomalous[0].grid_w;
    for (const EmbeddingVolume& vol : anomalous)
        if (vol.dim() != d || vol.grid_h != gh || vol.grid_w != gw)
            throw ArgumentError("build_target_signature: volumes disagree on (d, H', W')");
    if (grid_masks && grid_masks->size() != anomalous.size())
        throw ArgumentError("build_target_signature: one mask per volume required");
    if (grid_masks)
        for (const Tensor& mask : *grid_masks) check_grid_mask(mask, gh, gw);

    const std::size_t locs = gh * gw;
    const std::size_t plane = locs;

    // Global mean over contributing patches; reused as the per-location
    // fallback.
    std::vector<double> global_sum(d, 0.0);
    std::size_t global_count = 0;
    std::vector<double> cell_sum;
    std::vector<std::size_t> cell_count;
    if (mode == SignatureMode::PerLocation) {
        cell_sum.assign(locs * d, 0.0);
        cell_count.assign(locs, 0);
    }

    for (std::size_t v = 0; v < anomalous.size(); ++v) {
        const float* base = anomalous[v].data.f32().data();
        const std::uint8_t* mask =
            grid_masks ? (*grid_masks)[v].u8().data() : nullptr;
        for (std::size_t loc = 0; loc < locs; ++loc) {
            if (mask && mask[loc] == 0) continue;
            ++global_count;
            for (std::size_t c = 0; c < d; ++c) {
                const double value = static_cast<double>(base[c * plane + loc]);
                global_sum[c] += value;
                if (mode == SignatureMode::PerLocation) cell_sum[loc * d + c] += value;
            }
            if (mode == SignatureMode::PerLocation) ++cell_count[loc];
        }
    }

    if (global_count == 0)
        throw ArgumentError("build_target_signature: masks select no patches (empty signature)");

    TargetSignature sig;
    sig.mode = mode;
    sig.dim = d;
    sig.source_count = global_count;
    std::vector<double> global_mean(d);
    for (std::size_t c = 0; c < d; ++c)
        global_mean[c] = global_sum[c] / static_cast<double>(global_count);

    if (mode == SignatureMode::Global) {
        sig.values = std::move(global_mean);
        return sig;
    }

    sig.grid_h = gh;
    sig.grid_w = gw;
    sig.values.resize(locs * d);
    for (std::size_t loc = 0; loc < locs; ++loc) {
        if (cell_count[loc] == 0) {
            std::copy(global_mean.begin(), global_mean.end(), sig.values.begin() + loc * d);
        } else {
            for (std::size_t c = 0; c < d; ++c)
                sig.values[loc * d + c] =
                    cell_sum[loc * d + c] / static_cast<double>(cell_count[loc]);
        }
    }
    return sig;
}

ScoreValue mahalanobis_score(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& mu,
                             const Eigen::Ref<const Eigen::MatrixXd>& cov_inverse) {
    if (x.size() != mu.size() || cov_inverse.rows() != x.size() ||
        cov_inverse.cols() != x.size())
        throw ArgumentError("mahalanobis_score: dimension mismatch");
    const Eigen::VectorXd diff = x - mu;
    double q = diff.dot(cov_inverse * diff);
    if (q < 0.0) {
        if (q < -1e-9)
            throw NumericError("mahalanobis_score: quadratic form is negative (" +
                               std::to_string(q) + "); inverse is not positive definite");
        q = 0.0;
    }
    return {std::sqrt(q), Detector::Mahalanobis, false};
}

ScoreValue ace_score(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& s,
                     const Eigen::Ref<const Eigen::VectorXd>& mu_b,
                     const Eigen::Ref<const Eigen::MatrixXd>& cov_inverse_b) {
    if (x.size() != s.size() || x.size() != mu_b.size() ||
        cov_inverse_b.rows() != x.size() || cov_inverse_b.cols() != x.size())
        throw ArgumentError("ace_score: dimension mismatch");
    if (s.isZero(0.0))
        throw ArgumentError("ace_score: target signature must be nonzero");
    const Eigen::VectorXd diff = x - mu_b;
    if (diff.isZero(0.0)) return {0.0, Detector::Ace, true};

    const double numer = s.dot(cov_inverse_b * diff);
    const double s_form = s.dot(cov_inverse_b * s);
    const double x_form = diff.dot(cov_inverse_b * diff);
    if (!(s_form > 0.0) || !(x_form > 0.0))
        return {0.0, Detector::Ace, true}; // quadratic form vanished in rounding
    const double value = numer / (std::sqrt(s_form) * std::sqrt(x_form));
    return {std::clamp(value, -1.0, 1.0), Detector::Ace, false};
}

ScoreValue ace_score_whitened(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& s_whitened_unit,
                              const Eigen::Ref<const Eigen::MatrixXd>& whitener,
                              const Eigen::Ref<const Eigen::VectorXd>& mu_b) {
    if (x.size() != mu_b.size() || s_whitened_unit.size() != x.size() ||
        whitener.rows() != x.size() || whitener.cols() != x.size())
        throw ArgumentError("ace_score_whitened: dimension mismatch");
    const Eigen::VectorXd x_hat = whitener * (x - mu_b);
    const double norm = x_hat.norm();
    if (norm == 0.0) return {0.0, Detector::Ace, true};
    const double value = s_whitened_unit.dot(x_hat) / norm;
    return {std::clamp(value, -1.0, 1.0), Detector::Ace, false};
}

namespace {

void gather_patch(const EmbeddingVolume& vol, std::size_t loc, Eigen::VectorXd& out) {
    const float* base = vol.data.f32().data();
    const std::size_t plane = vol.grid_h * vol.grid_w;
    for (std::size_t c = 0; c < vol.dim(); ++c)
        out[static_cast<Eigen::Index>(c)] = static_cast<double>(base[c * plane + loc]);
}

} // namespace

std::vector<PatchScoreMap> score_volumes(const std::vector<EmbeddingVolume>& volumes,
                                         const GaussianField& field,
                                         const WhitenField& whiten,
                                         const TargetSignature* signature,
                                         Detector detector,
                                         const std::vector<std::string>& image_ids) {
    if (detector == Detector::Ace && signature == nullptr)
        throw ConfigError("detector 'ace' requires a target signature; "
                          "run the signature step first");
    if (!image_ids.empty() && image_ids.size() != volumes.size())
        throw ArgumentError("score_volumes: one image id per volume required");

    const std::size_t d = field.dim;
    const std::size_t gh = field.grid_h;
    const std::size_t gw = field.grid_w;
    if (whiten.dim != d || whiten.grid_h != gh || whiten.grid_w != gw)
        throw ArgumentError("score_volumes: whitening field does not match Gaussian field");
    for (const EmbeddingVolume& vol : volumes)
        if (vol.dim() != d || vol.grid_h != gh || vol.grid_w != gw)
            throw ArgumentError("score_volumes: volume shape does not match model grid " +
                                std::to_string(gh) + "x" + std::to_string(gw) + "x" +
                                std::to_string(d));
    if (signature) {
        if (signature->dim != d)
            throw ArgumentError("score_volumes: signature dimension mismatch");
        if (signature->mode == SignatureMode::PerLocation &&
            (signature->grid_h != gh || signature->grid_w != gw))
            throw ArgumentError("score_volumes: per-location signature grid mismatch");
    }

    std::vector<PatchScoreMap> maps(volumes.size());
    for (std::size_t v = 0; v < volumes.size(); ++v) {
        maps[v].scores = Tensor({gh, gw}, Dtype::F32);
        maps[v].detector = detector;
        if (!image_ids.empty()) maps[v].image_id = image_ids[v];
    }

    const std::size_t locs = gh * gw;
    parallel_for(locs, [&](std::size_t begin, std::size_t end) {
        Eigen::VectorXd x(static_cast<Eigen::Index>(d));
        for (std::size_t loc = begin; loc < end; ++loc) {
            const auto mu = field.mean_at(loc);
            if (detector == Detector::Mahalanobis) {
                const Eigen::MatrixXd inverse = whiten.inverse_at(loc);
                for (std::size_t v = 0; v < volumes.size(); ++v) {
                    gather_patch(volumes[v], loc, x);
                    const ScoreValue sv = mahalanobis_score(x, mu, inverse);
                    maps[v].scores.f32()[loc] = static_cast<float>(sv.value);
                }
            } else {
                const Eigen::MatrixXd w = whiten.matrix_at(loc);
                const Eigen::VectorXd ws = w * signature->at(loc);
                const double ws_norm = ws.norm();
                if (ws_norm == 0.0)
                    throw ArgumentError("score_volumes: whitened signature is zero at location " +
                                        std::to_string(loc));
                const Eigen::VectorXd s_hat = ws / ws_norm;
                for (std::size_t v = 0; v < volumes.size(); ++v) {
                    gather_patch(volumes[v], loc, x);
                    const ScoreValue sv = ace_score_whitened(x, s_hat, w, mu);
                    maps[v].scores.f32()[loc] = static_cast<float>(sv.value);
                }
            }
        }
    });
    return maps;
}

PatchScoreMap score_volume(const EmbeddingVolume& volume, const GaussianField& field,
                           const WhitenField& whiten, const TargetSignature* signature,
                           Detector detector, std::string image_id) {
    std::vector<PatchScoreMap> maps =
        score_volumes({volume}, field, whiten, signature, detector,
                      {std::move(image_id)});
    return std::move(maps.front());
}

} // namespace patchace
