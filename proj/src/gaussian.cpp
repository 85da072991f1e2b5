#include <patchace/gaussian.hpp>

#include <patchace/error.hpp>
#include <patchace/parallel.hpp>

#include <cmath>

namespace patchace {

const char* to_string(CovType t) {
    switch (t) {
        case CovType::Full: return "full";
        case CovType::Diagonal: return "diagonal";
        case CovType::Isotropic: return "isotropic";
    }
    return "?";
}

const char* to_string(Aggregation a) {
    switch (a) {
        case Aggregation::MeanDiagonal: return "mean-diagonal";
        case Aggregation::MeanFull: return "mean-full";
        case Aggregation::Determinant: return "determinant";
        case Aggregation::Trace: return "trace";
    }
    return "?";
}

CovType cov_type_from_string(const std::string& s) {
    if (s == "full") return CovType::Full;
    if (s == "diagonal") return CovType::Diagonal;
    if (s == "isotropic") return CovType::Isotropic;
    throw ArgumentError("unknown covariance type '" + s + "'");
}

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "mean-diagonal") return Aggregation::MeanDiagonal;
    if (s == "mean-full") return Aggregation::MeanFull;
    if (s == "determinant") return Aggregation::Determinant;
    if (s == "trace") return Aggregation::Trace;
    throw ArgumentError("unknown aggregation '" + s + "'");
}

Eigen::MatrixXd GaussianField::cov_matrix_at(std::size_t loc) const {
    const auto n = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    switch (cov_type) {
        case CovType::Full: {
            const double* slice = cov.data() + loc * dim * dim;
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index c = 0; c < n; ++c)
                    out(r, c) = slice[r * dim + c];
            break;
        }
        case CovType::Diagonal: {
            const double* slice = cov.data() + loc * dim;
            for (Eigen::Index k = 0; k < n; ++k) out(k, k) = slice[k];
            break;
        }
        case CovType::Isotropic:
            out.diagonal().setConstant(cov[loc]);
            break;
    }
    return out;
}

double make_isotropic(const Eigen::Ref<const Eigen::MatrixXd>& cov_full,
                      Aggregation aggregation, double epsilon) {
    const Eigen::Index d = cov_full.rows();
    if (d == 0 || cov_full.cols() != d)
        throw ArgumentError("make_isotropic: covariance must be square and non-empty");
    const double scale = std::max(1.0, cov_full.cwiseAbs().maxCoeff());
    if ((cov_full - cov_full.transpose()).cwiseAbs().maxCoeff() > 1e-6 * scale)
        throw ArgumentError("make_isotropic: covariance is not symmetric");

    double sigma2 = 0.0;
    switch (aggregation) {
        case Aggregation::MeanDiagonal:
            sigma2 = cov_full.trace() / static_cast<double>(d);
            break;
        case Aggregation::MeanFull:
            sigma2 = cov_full.sum() / static_cast<double>(d * d);
            break;
        case Aggregation::Determinant: {
            // Product of eigenvalues in log magnitude to avoid intermediate
            // overflow; the final value may still overflow, which is an error.
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
                cov_full, Eigen::EigenvaluesOnly);
            if (solver.info() != Eigen::Success)
                throw NumericError("make_isotropic: eigendecomposition failed");
            double log_mag = 0.0;
            double sign = 1.0;
            bool zero = false;
            for (Eigen::Index k = 0; k < d; ++k) {
                const double ev = solver.eigenvalues()[k];
                if (ev == 0.0) {
                    zero = true;
                } else {
                    if (ev < 0.0) sign = -sign;
                    log_mag += std::log(std::abs(ev));
                }
            }
            sigma2 = zero ? 0.0 : sign * std::exp(log_mag);
            break;
        }
        case Aggregation::Trace:
            sigma2 = cov_full.trace();
            break;
    }
    if (!std::isfinite(sigma2))
        throw NumericError(std::string("make_isotropic: non-finite result for ") +
                           to_string(aggregation));
    sigma2 = std::max(sigma2, epsilon);
    if (sigma2 <= 0.0)
        throw NumericError("make_isotropic: non-positive variance after flooring");
    return sigma2;
}

GaussianField fit_gaussians(const std::vector<EmbeddingVolume>& embeddings,
                            CovType cov_type, double epsilon,
                            Aggregation aggregation) {
    if (embeddings.empty())
        throw ArgumentError("fit_gaussians: need at least one embedding volume");
    if (!(epsilon > 0.0))
        throw ArgumentError("fit_gaussians: epsilon must be positive");

    const std::size_t d = embeddings[0].dim();
    const std::size_t gh = embeddings[0].grid_h;
    const std::size_t gw = embeddings[0].grid_w;
    for (const EmbeddingVolume& vol : embeddings)
        if (vol.dim() != d || vol.grid_h != gh || vol.grid_w != gw)
            throw ArgumentError("fit_gaussians: embedding volumes disagree on (d, H', W')");

    const std::size_t n = embeddings.size();
    const std::size_t locs = gh * gw;
    const std::size_t plane = gh * gw;

    GaussianField field;
    field.grid_h = gh;
    field.grid_w = gw;
    field.dim = d;
    field.cov_type = cov_type;
    field.aggregation = aggregation;
    field.epsilon = epsilon;
    field.sample_count = n;
    field.means.resize(locs * d);
    switch (cov_type) {
        case CovType::Full: field.cov.resize(locs * d * d); break;
        case CovType::Diagonal: field.cov.resize(locs * d); break;
        case CovType::Isotropic: field.cov.resize(locs); break;
    }

    parallel_for(locs, [&](std::size_t begin, std::size_t end) {
        Eigen::MatrixXd samples(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        Eigen::MatrixXd scatter(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t loc = begin; loc < end; ++loc) {
            for (std::size_t v = 0; v < n; ++v) {
                const float* base = embeddings[v].data.f32().data();
                for (std::size_t c = 0; c < d; ++c)
                    samples(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c)) =
                        static_cast<double>(base[c * plane + loc]);
            }
            double* mean_out = field.means.data() + loc * d;
            for (std::size_t c = 0; c < d; ++c) {
                double acc = 0.0;
                for (std::size_t v = 0; v < n; ++v)
                    acc += samples(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c));
                mean_out[c] = acc / static_cast<double>(n);
            }

            if (cov_type == CovType::Diagonal) {
                double* var_out = field.cov.data() + loc * d;
                for (std::size_t c = 0; c < d; ++c) {
                    double acc = 0.0;
                    if (n > 1) {
                        for (std::size_t v = 0; v < n; ++v) {
                            const double dv =
                                samples(static_cast<Eigen::Index>(v),
                                        static_cast<Eigen::Index>(c)) - mean_out[c];
                            acc += dv * dv;
                        }
                        acc /= static_cast<double>(n - 1);
                    }
                    var_out[c] = acc + epsilon;
                }
                continue;
            }

            // Upper triangle, then mirror, so symmetry is exact.
            scatter.setZero();
            if (n > 1) {
                for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t c = r; c < d; ++c) {
                        double acc = 0.0;
                        for (std::size_t v = 0; v < n; ++v) {
                            const auto vi = static_cast<Eigen::Index>(v);
                            acc += (samples(vi, static_cast<Eigen::Index>(r)) - mean_out[r]) *
                                   (samples(vi, static_cast<Eigen::Index>(c)) - mean_out[c]);
                        }
                        const double value = acc / static_cast<double>(n - 1);
                        scatter(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = value;
                        scatter(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = value;
                    }
            }
            scatter.diagonal().array() += epsilon;

            if (cov_type == CovType::Full) {
                double* slice = field.cov.data() + loc * d * d;
                for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t c = 0; c < d; ++c)
                        slice[r * d + c] =
                            scatter(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            } else {
                field.cov[loc] = make_isotropic(scatter, aggregation, epsilon);
            }
        }
    });
    return field;
}

Eigen::MatrixXd WhitenField::matrix_at(std::size_t loc) const {
    const auto n = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    switch (cov_type) {
        case CovType::Full: {
            const double* slice = transforms.data() + loc * dim * dim;
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index c = 0; c < n; ++c)
                    out(r, c) = slice[r * dim + c];
            break;
        }
        case CovType::Diagonal: {
            const double* slice = transforms.data() + loc * dim;
            for (Eigen::Index k = 0; k < n; ++k) out(k, k) = slice[k];
            break;
        }
        case CovType::Isotropic:
            out.diagonal().setConstant(transforms[loc]);
            break;
    }
    return out;
}

Eigen::MatrixXd WhitenField::inverse_at(std::size_t loc) const {
    const Eigen::MatrixXd w = matrix_at(loc);
    return w.transpose() * w;
}

WhitenField precompute_whitening(const GaussianField& field) {
    WhitenField out;
    out.grid_h = field.grid_h;
    out.grid_w = field.grid_w;
    out.dim = field.dim;
    out.cov_type = field.cov_type;

    const std::size_t d = field.dim;
    const std::size_t locs = field.locations();
    const double eps = field.epsilon;

    switch (field.cov_type) {
        case CovType::Diagonal:
            out.transforms.resize(locs * d);
            for (std::size_t k = 0; k < locs * d; ++k)
                out.transforms[k] = 1.0 / std::sqrt(std::max(field.cov[k], eps));
            return out;
        case CovType::Isotropic:
            out.transforms.resize(locs);
            for (std::size_t loc = 0; loc < locs; ++loc)
                out.transforms[loc] = 1.0 / std::sqrt(std::max(field.cov[loc], eps));
            return out;
        case CovType::Full:
            break;
    }

    out.transforms.resize(locs * d * d);
    parallel_for(locs, [&](std::size_t begin, std::size_t end) {
        Eigen::MatrixXd sigma(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t loc = begin; loc < end; ++loc) {
            const double* slice = field.cov.data() + loc * d * d;
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = 0; c < d; ++c)
                    sigma(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        slice[r * d + c];
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
            if (solver.info() != Eigen::Success)
                throw NumericError("precompute_whitening: eigendecomposition failed at location (" +
                                   std::to_string(loc / field.grid_w) + ", " +
                                   std::to_string(loc % field.grid_w) + ")");
            double* w = out.transforms.data() + loc * d * d;
            for (std::size_t r = 0; r < d; ++r) {
                const double ev = std::max(solver.eigenvalues()[static_cast<Eigen::Index>(r)], eps);
                const double inv_sqrt = 1.0 / std::sqrt(ev);
                for (std::size_t c = 0; c < d; ++c)
                    w[r * d + c] = inv_sqrt * solver.eigenvectors()(static_cast<Eigen::Index>(c),
                                                                    static_cast<Eigen::Index>(r));
            }
        }
    });
    return out;
}

} // namespace patchace
