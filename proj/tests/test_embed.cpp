#include <cmath>
#include <cstring>

#include "ctxsub/embed.hpp"
#include "ctxsub/rng.hpp"
#include "ctxsub/search.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ctxsub;

namespace {

Eigen::MatrixXd random_points(int n, int dim, std::int64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = rng.normal();
    return m;
}

DescriptorBank bank_from_rows(const std::vector<std::vector<float>>& rows) {
    std::vector<float> data;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        data.insert(data.end(), rows[i].begin(), rows[i].end());
        ids.push_back("r" + std::to_string(i));
    }
    return make_bank(static_cast<std::uint32_t>(rows.front().size()), std::move(data), std::move(ids));
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("embed") {

TEST_CASE("coincident points split the soft assignment evenly") {
    const Eigen::Vector2d p(0.3, -0.7);
    std::vector<Eigen::VectorXd> negs = {p};
    const auto w = soft_assign(p, p, negs, 1.0);
    CHECK(w.positive_weight == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.per_negative_weights[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("huge sigma flattens weights to uniform") {
    Rng rng(5);
    Eigen::VectorXd q(3), pos(3);
    std::vector<Eigen::VectorXd> negs(5, Eigen::VectorXd(3));
    for (int j = 0; j < 3; ++j) {
        q[j] = rng.normal();
        pos[j] = rng.normal();
    }
    for (auto& n : negs)
        for (int j = 0; j < 3; ++j) n[j] = rng.normal();
    const auto w = soft_assign(q, pos, negs, 1e9);
    CHECK(w.positive_weight == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
}

TEST_CASE("scalar evaluation of the positive weight") {
    // d+ = 0, d- = 1, sigma = 0.5 -> s+ = 1/(1+exp(-2))
    const Eigen::Vector2d q(1, 0), pos(1, 0), neg(0, 0);
    std::vector<Eigen::VectorXd> negs = {neg};
    const auto w = soft_assign(q, pos, negs, 0.5);
    CHECK(w.positive_weight == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(w.negative_weight == doctest::Approx(std::exp(-2.0) / (1.0 + std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("weights always sum to one") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int dim = 1 + static_cast<int>(rng.below(6));
        const int k = 1 + static_cast<int>(rng.below(6));
        Eigen::VectorXd q(dim), pos(dim);
        for (int j = 0; j < dim; ++j) {
            q[j] = rng.normal() * 3;
            pos[j] = rng.normal() * 3;
        }
        std::vector<Eigen::VectorXd> negs(k, Eigen::VectorXd(dim));
        for (auto& n : negs)
            for (int j = 0; j < dim; ++j) n[j] = rng.normal() * 3;
        const double sigma = 0.05 + rng.uniform() * 2.0;
        const auto w = soft_assign(q, pos, negs, sigma);
        double sum = w.positive_weight;
        for (const double x : w.per_negative_weights) sum += x;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(w.negative_weight ==
              *std::max_element(w.per_negative_weights.begin(), w.per_negative_weights.end()));
    }
}

TEST_CASE("soft assignment stays stable for tiny bandwidths") {
    // distances large relative to sigma: naive exponentials would underflow
    const Eigen::Vector2d q(100, 0), pos(-100, 0), neg(100, 1);
    std::vector<Eigen::VectorXd> negs = {neg};
    const auto w = soft_assign(q, pos, negs, 1e-3);
    CHECK(std::isfinite(w.positive_weight));
    CHECK(w.positive_weight + w.per_negative_weights[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(w.per_negative_weights[0] > 0.99);
}

TEST_CASE("two-point subspace matches the hand computation") {
    Eigen::MatrixXd points(2, 2);
    points << 0, 0, 2, 0;
    const auto sub = truncated_svd(points, 1);
    CHECK(sub.mean[0] == doctest::Approx(1.0));
    CHECK(sub.mean[1] == doctest::Approx(0.0));
    CHECK(sub.basis(0, 0) == doctest::Approx(1.0));
    CHECK(sub.basis(1, 0) == doctest::Approx(0.0));
    CHECK(sub.eigenvalues[0] == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("identical points with eta_prime zero give the point and no basis") {
    Eigen::MatrixXd points(3, 2);
    points << 1, 2, 1, 2, 1, 2;
    const auto sub = truncated_svd(points, 0);
    CHECK(sub.mean[0] == doctest::Approx(1.0));
    CHECK(sub.mean[1] == doctest::Approx(2.0));
    CHECK(sub.basis.cols() == 0);
    CHECK(sub.eigenvalues.size() == 0);
}

TEST_CASE("subspace agrees with the dense eigendecomposition oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 2 + static_cast<int>(rng.below(5));  // up to 6
        const int n = 2 + static_cast<int>(rng.below(5));
        const int eta_prime = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(n - 1, dim)) + 1));
        const Eigen::MatrixXd points = random_points(n, dim, 1000 + trial);

        oracle::Mat rows(n, std::vector<double>(dim));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dim; ++j) rows[i][j] = points(i, j);
        const auto ref = oracle::svd_reference(rows);
        const auto sub = truncated_svd(points, eta_prime);

        for (int j = 0; j < dim; ++j) CHECK(sub.mean[j] == doctest::Approx(ref.mean[j]).epsilon(1e-9));
        for (int k = 0; k < eta_prime; ++k) {
            CHECK(sub.eigenvalues[k] ==
                  doctest::Approx(ref.singular_values[k]).epsilon(1e-6).scale(1.0));
            // eigenvector comparison needs a spectral gap to be well-posed
            const double gap_prev = k == 0 ? 1.0 : ref.singular_values[k - 1] - ref.singular_values[k];
            const double gap_next = k + 1 < dim ? ref.singular_values[k] - ref.singular_values[k + 1]
                                                : ref.singular_values[k];
            if (ref.singular_values[k] > 1e-6 && std::min(gap_prev, gap_next) > 1e-3) {
                for (int j = 0; j < dim; ++j)
                    CHECK(sub.basis(j, k) == doctest::Approx(ref.directions[k][j]).epsilon(1e-6).scale(1.0));
            }
        }
    }
}

TEST_CASE("bases are orthonormal and sign-canonical even past the rank") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const int dim = 3 + static_cast<int>(rng.below(6));
        const int n = 1 + static_cast<int>(rng.below(4));
        const int eta_prime = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(dim)));
        Eigen::MatrixXd points = random_points(n, dim, 2000 + trial);
        if (trial % 3 == 0 && n > 1) points.row(n - 1) = points.row(0);  // force rank deficiency
        const auto sub = truncated_svd(points, eta_prime);
        const Eigen::MatrixXd gram = sub.basis.transpose() * sub.basis;
        CHECK(max_abs(gram - Eigen::MatrixXd::Identity(eta_prime, eta_prime)) < 1e-6);
        for (int k = 0; k < eta_prime; ++k) {
            Eigen::Index arg;
            sub.basis.col(k).cwiseAbs().maxCoeff(&arg);
            CHECK(sub.basis(arg, k) >= 0.0);
        }
        for (int k = 1; k < eta_prime; ++k) CHECK(sub.eigenvalues[k] <= sub.eigenvalues[k - 1] + 1e-12);
    }
}

TEST_CASE("identical inputs reproduce bitwise-identical subspaces") {
    const Eigen::MatrixXd points = random_points(6, 5, 77);
    const auto a = truncated_svd(points, 3);
    const auto b = truncated_svd(points, 3);
    CHECK(std::memcmp(a.mean.data(), b.mean.data(), sizeof(double) * 5) == 0);
    CHECK(std::memcmp(a.basis.data(), b.basis.data(), sizeof(double) * 5 * 3) == 0);
    CHECK(std::memcmp(a.eigenvalues.data(), b.eigenvalues.data(), sizeof(double) * 3) == 0);
}

TEST_CASE("neha singleton neighborhoods reduce to nearest rows") {
    const auto bank = bank_from_rows({{1, 0}, {0, 1}, {-1, 0}, {0, -1}});
    const auto index = build_index(bank, Metric::L2, 0, 0);
    const Eigen::Vector2d pos(0.9, 0.1);
    std::vector<Eigen::VectorXd> negs = {Eigen::Vector2d(-0.9, -0.1)};
    const auto [ps, ns] = neha(pos, negs, bank, index, 1, 0);
    CHECK(ps.mean[0] == doctest::Approx(1.0));
    CHECK(ps.mean[1] == doctest::Approx(0.0));
    CHECK(ns.mean[0] == doctest::Approx(-1.0));
    CHECK(ps.basis.cols() == 0);
}

TEST_CASE("neha two-neighbor subspace is the mean and difference direction") {
    // rows r0, r1 are the two nearest to the positive; the rest are far
    const auto bank = bank_from_rows({{1.0f, 0.0f, 0.0f},
                                      {0.8f, 0.3f, 0.0f},
                                      {-5.0f, 0.0f, 0.0f},
                                      {0.0f, -5.0f, 0.0f},
                                      {0.0f, 0.0f, -5.0f}});
    const auto index = build_index(bank, Metric::L2, 0, 0);
    const Eigen::Vector3d pos(0.95, 0.1, 0.0);
    std::vector<Eigen::VectorXd> negs = {Eigen::Vector3d(0, 0, -5)};
    const auto [ps, ns] = neha(pos, negs, bank, index, 2, 1);

    const Eigen::Vector3d a = bank.row(0), b = bank.row(1);
    CHECK((ps.mean - (a + b) / 2.0).norm() < 1e-12);
    Eigen::Vector3d dir = (a - b).normalized();
    Eigen::Index arg;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir[arg] < 0) dir = -dir;
    CHECK((ps.basis.col(0) - dir).norm() < 1e-9);

    // cross-check against the dense oracle
    oracle::Mat rows = {{a[0], a[1], a[2]}, {b[0], b[1], b[2]}};
    const auto ref = oracle::svd_reference(rows);
    CHECK(ps.eigenvalues[0] == doctest::Approx(ref.singular_values[0]).epsilon(1e-9));
}

TEST_CASE("eta of four with eta_prime four gives a D x 4 subspace") {
    const auto bank = [] {
        Rng rng(3);
        std::vector<std::vector<float>> rows(16, std::vector<float>(8));
        for (auto& r : rows)
            for (auto& v : r) v = static_cast<float>(rng.normal());
        return bank_from_rows(rows);
    }();
    const auto index = build_index(bank, Metric::L2, 0, 0);
    Rng rng(4);
    Eigen::VectorXd pos(8);
    for (int j = 0; j < 8; ++j) pos[j] = rng.normal();
    std::vector<Eigen::VectorXd> negs(5, Eigen::VectorXd(8));
    for (auto& n : negs)
        for (int j = 0; j < 8; ++j) n[j] = rng.normal();

    const auto [ps, ns] = neha(pos, negs, bank, index, 4, 4);
    CHECK(ps.basis.rows() == 8);
    CHECK(ps.basis.cols() == 4);
    CHECK(ns.basis.cols() == 4);
    CHECK(max_abs(ps.basis.transpose() * ps.basis - Eigen::MatrixXd::Identity(4, 4)) < 1e-6);
}

TEST_CASE("nesa with huge sigma recovers neha up to the uniform weight") {
    Rng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 4 + static_cast<int>(rng.below(4));
        std::vector<std::vector<float>> rows(20, std::vector<float>(dim));
        for (auto& r : rows)
            for (auto& v : r) v = static_cast<float>(rng.normal());
        const auto bank = bank_from_rows(rows);
        const auto index = build_index(bank, Metric::L2, 0, 0);

        const int k = 1 + static_cast<int>(rng.below(4));
        const std::uint32_t eta = 1 + static_cast<std::uint32_t>(rng.below(4));
        const std::uint32_t eta_prime = static_cast<std::uint32_t>(rng.below(eta + 1));
        Eigen::VectorXd pos(dim);
        for (int j = 0; j < dim; ++j) pos[j] = rng.normal();
        std::vector<Eigen::VectorXd> negs(k, Eigen::VectorXd(dim));
        for (auto& n : negs)
            for (int j = 0; j < dim; ++j) n[j] = rng.normal();

        const auto [hp, hn] = neha(pos, negs, bank, index, eta, eta_prime);
        const auto [sp, sn] = nesa(pos, negs, bank, index, eta, eta_prime, 1e9);
        const double w = 1.0 / (1.0 + k);
        CHECK((sp.mean - hp.mean * w).norm() < 1e-6);
        CHECK((sn.mean - hn.mean * w).norm() < 1e-6);
        if (eta_prime > 0) {
            CHECK(max_abs(sp.basis - hp.basis) < 1e-6);
            CHECK(max_abs(sn.basis - hn.basis) < 1e-6);
        }
    }
}

TEST_CASE("nesa single neighbor scales the nearest row by its weight") {
    const auto bank = bank_from_rows({{1, 0}, {-1, 0}, {0, 3}});
    const auto index = build_index(bank, Metric::L2, 0, 0);
    const Eigen::Vector2d pos(0.9, 0.0);
    std::vector<Eigen::VectorXd> negs = {Eigen::Vector2d(-0.9, 0.0)};
    const double sigma = 0.7;

    const auto [ps, ns] = nesa(pos, negs, bank, index, 1, 0, sigma);
    const Eigen::VectorXd nearest = bank.row(0);
    const double s = soft_assign(nearest, pos, negs, sigma).positive_weight;
    CHECK((ps.mean - s * nearest).norm() < 1e-12);
}

TEST_CASE("s_minus weighting rescales negative-side neighbors differently") {
    const auto bank = bank_from_rows({{1, 0}, {-1, 0}, {0, 3}, {0, -3}});
    const auto index = build_index(bank, Metric::L2, 0, 0);
    const Eigen::Vector2d pos(0.9, 0.0);
    std::vector<Eigen::VectorXd> negs = {Eigen::Vector2d(-0.9, 0.0)};

    const auto [plus_p, plus_n] = nesa(pos, negs, bank, index, 1, 0, 0.5, NegativeWeighting::SPlus);
    const auto [minus_p, minus_n] = nesa(pos, negs, bank, index, 1, 0, 0.5, NegativeWeighting::SMinus);
    CHECK((plus_p.mean - minus_p.mean).norm() == 0.0);  // positive side unchanged
    CHECK((plus_n.mean - minus_n.mean).norm() > 1e-6);

    const Eigen::VectorXd neg_neighbor = bank.row(1);
    const auto w = soft_assign(neg_neighbor, pos, negs, 0.5);
    CHECK((plus_n.mean - w.positive_weight * neg_neighbor).norm() < 1e-12);
    CHECK((minus_n.mean - w.negative_weight * neg_neighbor).norm() < 1e-12);
}

TEST_CASE("embedding preconditions are enforced") {
    const auto bank = bank_from_rows({{1, 0}, {0, 1}});
    const auto index = build_index(bank, Metric::L2, 0, 0);
    const Eigen::Vector2d pos(1, 0);
    std::vector<Eigen::VectorXd> negs = {Eigen::Vector2d(0, 1)};
    try {
        neha(pos, negs, bank, index, 5, 0);
        FAIL("expected InsufficientNeighbors");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientNeighbors);
    }
    CHECK_THROWS_AS(neha(pos, negs, bank, index, 2, 3), Error);
    CHECK_THROWS_AS(nesa(pos, negs, bank, index, 2, 1, 0.0), Error);
}

}  // TEST_SUITE
