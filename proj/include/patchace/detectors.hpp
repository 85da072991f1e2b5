#pragma once

#include <patchace/gaussian.hpp>
#include <patchace/tensor.hpp>

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace patchace {

enum class Detector { Mahalanobis, Ace };
enum class SignatureMode { Global, PerLocation };

const char* to_string(Detector d);
const char* to_string(SignatureMode m);
Detector detector_from_string(const std::string& s);
SignatureMode signature_mode_from_string(const std::string& s);

/// Anomaly-class representative built from anomalous patch embeddings:
/// one shared d-vector (global) or one vector per grid cell (per-location).
struct TargetSignature {
    SignatureMode mode = SignatureMode::Global;
    std::size_t dim = 0;
    std::size_t grid_h = 0; // per-location only
    std::size_t grid_w = 0;
    std::vector<double> values; // (dim) or (grid_h * grid_w * dim)
    std::size_t source_count = 0;

    Eigen::Map<const Eigen::VectorXd> at(std::size_t loc) const {
        const double* base =
            mode == SignatureMode::Global ? values.data() : values.data() + loc * dim;
        return {base, static_cast<Eigen::Index>(dim)};
    }
};

struct ScoreValue {
    double value = 0.0;
    Detector detector = Detector::Mahalanobis;
    bool degenerate = false;
};

/// Per-location patch score grid for one image.
struct PatchScoreMap {
    Tensor scores; // (H', W') f32
    Detector detector = Detector::Mahalanobis;
    std::string image_id;

    std::size_t grid_h() const { return scores.shape()[0]; }
    std::size_t grid_w() const { return scores.shape()[1]; }
};

/// Mean of anomalous patch embeddings. Optional masks restrict the mean to
/// mask-positive grid cells; per-location cells without any positive sample
/// fall back to the global mean.
TargetSignature build_target_signature(const std::vector<EmbeddingVolume>& anomalous,
                                       const std::vector<Tensor>* grid_masks,
                                       SignatureMode mode);

/// sqrt((x-mu)^T Sigma^-1 (x-mu)). Values in [-1e-9, 0] clamp to zero;
/// anything more negative is a numeric error.
ScoreValue mahalanobis_score(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& mu,
                             const Eigen::Ref<const Eigen::MatrixXd>& cov_inverse);

/// Adaptive cosine estimator, direct form:
/// s^T S^-1 (x-mu) / (sqrt(s^T S^-1 s) sqrt((x-mu)^T S^-1 (x-mu))).
/// Bounded in [-1, 1]; x == mu gives 0 with the degenerate flag set.
ScoreValue ace_score(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& s,
                     const Eigen::Ref<const Eigen::VectorXd>& mu_b,
                     const Eigen::Ref<const Eigen::MatrixXd>& cov_inverse_b);

/// Whitened-space form: score = s_hat . (W(x-mu) / |W(x-mu)|) with
/// s_hat = Ws/|Ws| precomputed. Agrees with ace_score to 1e-6 when W is the
/// whitener of the same covariance.
ScoreValue ace_score_whitened(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& s_whitened_unit,
                              const Eigen::Ref<const Eigen::MatrixXd>& whitener,
                              const Eigen::Ref<const Eigen::VectorXd>& mu_b);

/// Score every grid location of one volume. ACE goes through the whitened
/// path; Mahalanobis ignores the signature.
PatchScoreMap score_volume(const EmbeddingVolume& volume, const GaussianField& field,
                           const WhitenField& whiten, const TargetSignature* signature,
                           Detector detector, std::string image_id = {});

/// Batch variant: per-location whiteners/inverses are materialized once and
/// reused across volumes.
std::vector<PatchScoreMap> score_volumes(const std::vector<EmbeddingVolume>& volumes,
                                         const GaussianField& field,
                                         const WhitenField& whiten,
                                         const TargetSignature* signature,
                                         Detector detector,
                                         const std::vector<std::string>& image_ids = {});

} // namespace patchace
