#pragma once

#include <patchace/features.hpp>

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace patchace {

enum class CovType { Full, Diagonal, Isotropic };
enum class Aggregation { MeanDiagonal, MeanFull, Determinant, Trace };

const char* to_string(CovType t);
const char* to_string(Aggregation a);
CovType cov_type_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);

/// Per-location multivariate Gaussian background parameters fitted from
/// normal-image embeddings. Covariance storage depends on cov_type:
/// full (d x d per location), diagonal (d per location) or isotropic
/// (one scalar per location). Locations are row-major: loc = i * grid_w + j.
struct GaussianField {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t dim = 0;
    CovType cov_type = CovType::Full;
    Aggregation aggregation = Aggregation::MeanDiagonal;
    double epsilon = 0.0;
    std::size_t sample_count = 0;
    std::vector<double> means; // (grid_h * grid_w * dim)
    std::vector<double> cov;   // layout per cov_type, row-major slices

    std::size_t locations() const { return grid_h * grid_w; }

    Eigen::Map<const Eigen::VectorXd> mean_at(std::size_t loc) const {
        return {means.data() + loc * dim, static_cast<Eigen::Index>(dim)};
    }

    /// Materialize the full d x d covariance for a location, whatever the
    /// storage type.
    Eigen::MatrixXd cov_matrix_at(std::size_t loc) const;
};

/// Isotropic aggregation of a full covariance matrix, floored at epsilon.
double make_isotropic(const Eigen::Ref<const Eigen::MatrixXd>& cov_full,
                      Aggregation aggregation, double epsilon);

/// Fit per-location mean and covariance from N embedding volumes sharing a
/// grid. Covariance uses the unbiased divisor N-1 (zero matrix when N == 1)
/// plus epsilon on the diagonal.
GaussianField fit_gaussians(const std::vector<EmbeddingVolume>& embeddings,
                            CovType cov_type, double epsilon,
                            Aggregation aggregation = Aggregation::MeanDiagonal);

/// Per-location whitening transforms W with W Sigma W^T = I. Full covariances
/// whiten through the symmetric eigendecomposition Sigma = U D U^T with
/// W = D^(-1/2) U^T (eigenvalues clamped below at epsilon); diagonal and
/// isotropic use the closed forms.
struct WhitenField {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t dim = 0;
    CovType cov_type = CovType::Full;
    std::vector<double> transforms; // full: d*d per loc; diagonal: d; isotropic: 1

    std::size_t locations() const { return grid_h * grid_w; }

    /// Materialize W for a location as a column-major matrix.
    Eigen::MatrixXd matrix_at(std::size_t loc) const;

    /// Materialize W^T W, the (regularized) covariance inverse.
    Eigen::MatrixXd inverse_at(std::size_t loc) const;
};

WhitenField precompute_whitening(const GaussianField& field);

} // namespace patchace
