#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <patchace/gaussian.hpp>
#include <patchace/rng.hpp>

#include "oracles.hpp"

#include <Eigen/Dense>

using namespace patchace;

namespace {

// Volumes with a single grid cell, one sample vector per volume.
std::vector<EmbeddingVolume> single_cell_volumes(
    const std::vector<std::vector<double>>& samples) {
    std::vector<EmbeddingVolume> volumes;
    const std::size_t d = samples[0].size();
    std::vector<std::size_t> indices(d);
    for (std::size_t i = 0; i < d; ++i) indices[i] = i;
    for (const auto& sample : samples) {
        std::vector<float> values(sample.begin(), sample.end());
        EmbeddingVolume vol;
        vol.data = Tensor::from_f32({d, 1, 1}, values);
        vol.channel_indices = indices;
        vol.grid_h = 1;
        vol.grid_w = 1;
        volumes.push_back(std::move(vol));
    }
    return volumes;
}

std::vector<EmbeddingVolume> random_volumes(std::size_t n, std::size_t d,
                                            std::size_t gh, std::size_t gw,
                                            std::uint64_t seed) {
    std::vector<EmbeddingVolume> volumes;
    std::vector<std::size_t> indices(d);
    for (std::size_t i = 0; i < d; ++i) indices[i] = i;
    RngStream rng(seed);
    for (std::size_t v = 0; v < n; ++v) {
        EmbeddingVolume vol;
        vol.data = Tensor({d, gh, gw}, Dtype::F32);
        for (float& value : vol.data.f32())
            value = static_cast<float>(rng.normal() * 2.0 + 0.5);
        vol.channel_indices = indices;
        vol.grid_h = gh;
        vol.grid_w = gw;
        volumes.push_back(std::move(vol));
    }
    return volumes;
}

double max_whiten_error(const GaussianField& field, const WhitenField& whiten) {
    double worst = 0.0;
    for (std::size_t loc = 0; loc < field.locations(); ++loc) {
        const Eigen::MatrixXd w = whiten.matrix_at(loc);
        const Eigen::MatrixXd sigma = field.cov_matrix_at(loc);
        const Eigen::MatrixXd residual =
            w * sigma * w.transpose() - Eigen::MatrixXd::Identity(w.rows(), w.cols());
        worst = std::max(worst, residual.cwiseAbs().maxCoeff());
    }
    return worst;
}

} // namespace

TEST_CASE("fit_gaussians on samples {0, 2}") {
    const GaussianField field =
        fit_gaussians(single_cell_volumes({{0.0}, {2.0}}), CovType::Full, 0.01);
    CHECK(field.means[0] == doctest::Approx(1.0).epsilon(1e-12));
    // Unbiased variance of {0, 2} is 2; epsilon adds 0.01.
    CHECK(field.cov[0] == doctest::Approx(2.01).epsilon(1e-12));
    CHECK(field.sample_count == 2);
}

TEST_CASE("fit_gaussians degenerate sample counts give epsilon * I") {
    SUBCASE("single sample") {
        const GaussianField field =
            fit_gaussians(single_cell_volumes({{3.0, -1.0}}), CovType::Full, 0.01);
        CHECK(field.cov[0] == 0.01);
        CHECK(field.cov[1] == 0.0);
        CHECK(field.cov[2] == 0.0);
        CHECK(field.cov[3] == 0.01);
    }
    SUBCASE("identical samples") {
        const GaussianField field = fit_gaussians(
            single_cell_volumes({{5.0, 2.0}, {5.0, 2.0}, {5.0, 2.0}}), CovType::Full, 0.01);
        CHECK(field.cov[0] == doctest::Approx(0.01).epsilon(1e-12));
        CHECK(field.cov[1] == doctest::Approx(0.0));
        CHECK(field.cov[3] == doctest::Approx(0.01).epsilon(1e-12));
    }
}

TEST_CASE("fit_gaussians argument errors") {
    CHECK_THROWS_AS(fit_gaussians({}, CovType::Full, 0.01), ArgumentError);
    CHECK_THROWS_AS(fit_gaussians(single_cell_volumes({{1.0}}), CovType::Full, 0.0),
                    ArgumentError);
    auto mismatched = random_volumes(1, 2, 2, 2, 0);
    auto other = random_volumes(1, 2, 2, 3, 1);
    mismatched.push_back(other[0]);
    CHECK_THROWS_AS(fit_gaussians(mismatched, CovType::Full, 0.01), ArgumentError);
}

TEST_CASE("fitted mean and covariance match the two-pass loop oracle") {
    RngStream seeds(404);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + seeds.below(9);  // 2..10
        const std::size_t d = 1 + seeds.below(4);  // 1..4
        std::vector<std::vector<double>> samples(n, std::vector<double>(d));
        RngStream rng(seeds.next_u64());
        for (auto& row : samples)
            for (double& v : row) {
                v = rng.normal() * 3.0;
                // Round to f32 so the oracle sees exactly what the fit sees.
                v = static_cast<double>(static_cast<float>(v));
            }
        const double epsilon = 0.01;
        const GaussianField field =
            fit_gaussians(single_cell_volumes(samples), CovType::Full, epsilon);
        for (std::size_t c = 0; c < d; ++c) {
            const double expected = oracle::mean_loop(samples, c);
            CHECK(field.means[c] ==
                  doctest::Approx(expected).epsilon(1e-10));
        }
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                double expected = oracle::cov_loop(samples, r, c);
                if (r == c) expected += epsilon;
                CHECK(field.cov[r * d + c] ==
                      doctest::Approx(expected).epsilon(1e-10));
            }
    }
}

TEST_CASE("fitted covariance is exactly symmetric") {
    const auto volumes = random_volumes(6, 4, 3, 3, 50);
    const GaussianField field = fit_gaussians(volumes, CovType::Full, 0.01);
    const std::size_t d = field.dim;
    for (std::size_t loc = 0; loc < field.locations(); ++loc) {
        const double* slice = field.cov.data() + loc * d * d;
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c)
                CHECK(slice[r * d + c] == slice[c * d + r]);
    }
}

TEST_CASE("make_isotropic aggregation arithmetic") {
    Eigen::MatrixXd diag24 = Eigen::MatrixXd::Zero(2, 2);
    diag24(0, 0) = 2.0;
    diag24(1, 1) = 4.0;
    CHECK(make_isotropic(diag24, Aggregation::MeanDiagonal, 1e-9) ==
          doctest::Approx(3.0).epsilon(1e-12));
    CHECK(make_isotropic(diag24, Aggregation::Determinant, 1e-9) ==
          doctest::Approx(8.0).epsilon(1e-12));
    CHECK(make_isotropic(diag24, Aggregation::Trace, 1e-9) ==
          doctest::Approx(6.0).epsilon(1e-12));

    Eigen::MatrixXd full(2, 2);
    full << 2.0, 1.0, 1.0, 4.0;
    CHECK(make_isotropic(full, Aggregation::MeanFull, 1e-9) ==
          doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("make_isotropic floors at epsilon and rejects asymmetry") {
    Eigen::MatrixXd tiny = Eigen::MatrixXd::Identity(2, 2) * 1e-12;
    CHECK(make_isotropic(tiny, Aggregation::MeanDiagonal, 0.01) == 0.01);

    Eigen::MatrixXd skew(2, 2);
    skew << 1.0, 5.0, -5.0, 1.0;
    CHECK_THROWS_AS(make_isotropic(skew, Aggregation::Trace, 0.01), ArgumentError);
}

TEST_CASE("whitening of the identity covariance") {
    GaussianField field;
    field.grid_h = field.grid_w = 1;
    field.dim = 2;
    field.cov_type = CovType::Full;
    field.epsilon = 1e-6;
    field.sample_count = 2;
    field.means = {0.0, 0.0};
    field.cov = {1.0, 0.0, 0.0, 1.0};
    const WhitenField whiten = precompute_whitening(field);
    CHECK(max_whiten_error(field, whiten) <= 1e-12);
}

TEST_CASE("whitening diag(4, 1)") {
    GaussianField field;
    field.grid_h = field.grid_w = 1;
    field.dim = 2;
    field.cov_type = CovType::Diagonal;
    field.epsilon = 1e-6;
    field.sample_count = 2;
    field.means = {0.0, 0.0};
    field.cov = {4.0, 1.0};
    const WhitenField whiten = precompute_whitening(field);
    // Closed form: diag(1/2, 1).
    CHECK(whiten.transforms[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(whiten.transforms[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(max_whiten_error(field, whiten) <= 1e-12);
}

TEST_CASE("whitening [[2,1],[1,2]] against the characteristic polynomial oracle") {
    GaussianField field;
    field.grid_h = field.grid_w = 1;
    field.dim = 2;
    field.cov_type = CovType::Full;
    field.epsilon = 1e-6;
    field.sample_count = 2;
    field.means = {0.0, 0.0};
    field.cov = {2.0, 1.0, 1.0, 2.0};

    const auto [hi, lo] = oracle::eig2x2(2.0, 1.0, 1.0, 2.0);
    CHECK(hi == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(lo == doctest::Approx(1.0).epsilon(1e-12));

    const WhitenField whiten = precompute_whitening(field);
    CHECK(max_whiten_error(field, whiten) <= 1e-10);
}

TEST_CASE("whitening contract holds for all covariance types on fitted fields") {
    const auto volumes = random_volumes(8, 6, 4, 4, 91);
    for (const CovType cov_type :
         {CovType::Full, CovType::Diagonal, CovType::Isotropic}) {
        const GaussianField field = fit_gaussians(volumes, cov_type, 0.01);
        const WhitenField whiten = precompute_whitening(field);
        CHECK(max_whiten_error(field, whiten) <= 1e-4);
    }
}

TEST_CASE("regularized covariance has smallest eigenvalue >= epsilon") {
    const double epsilon = 0.05;
    const auto volumes = random_volumes(3, 4, 2, 2, 17); // n < d: rank deficient
    const GaussianField field = fit_gaussians(volumes, CovType::Full, epsilon);
    for (std::size_t loc = 0; loc < field.locations(); ++loc) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(field.cov_matrix_at(loc));
        CHECK(solver.eigenvalues().minCoeff() >= epsilon - 1e-12);
    }
}

TEST_CASE("isotropic field stores the aggregated variance") {
    const auto volumes = random_volumes(5, 3, 2, 2, 33);
    const GaussianField iso =
        fit_gaussians(volumes, CovType::Isotropic, 0.01, Aggregation::MeanDiagonal);
    const GaussianField full = fit_gaussians(volumes, CovType::Full, 0.01);
    for (std::size_t loc = 0; loc < iso.locations(); ++loc) {
        const double expected =
            make_isotropic(full.cov_matrix_at(loc), Aggregation::MeanDiagonal, 0.01);
        CHECK(iso.cov[loc] == doctest::Approx(expected).epsilon(1e-12));
    }
}
