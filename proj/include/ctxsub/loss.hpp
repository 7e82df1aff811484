#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "ctxsub/embed.hpp"
#include "ctxsub/error.hpp"

namespace ctxsub {

/// Combined-objective parts: total == primary + lambda * assisted.
struct LossBreakdown {
    double primary = 0.0;
    double assisted = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

/// Ranking hinge: max(0, 1 - psi_star . (positive - mean(negatives))).
/// Inner products are taken on the inputs as given; callers that want
/// cosine semantics normalize beforehand.
double hinge_rank(const Eigen::VectorXd& psi_star, const Eigen::VectorXd& positive,
                  std::span<const Eigen::VectorXd> negatives);

/// Subspace hinge: max(0, 1 - mu.(mu_pos - mu_neg) - sum_n u_n.(u_n_pos - u_n_neg)).
/// With zero-column bases this reduces to the mean-only attraction term.
double hinge_assisted(const Eigen::VectorXd& mu, const Eigen::MatrixXd& basis,
                      const Eigen::VectorXd& mu_pos, const Eigen::MatrixXd& basis_pos,
                      const Eigen::VectorXd& mu_neg, const Eigen::MatrixXd& basis_neg);

/// Nearest-neighbor-only objective: ranking hinge plus lambda times the
/// squared distance to the positive-neighbor mean.
double nno_loss(const Eigen::VectorXd& psi_star, const Eigen::VectorXd& positive,
                std::span<const Eigen::VectorXd> negatives, const Eigen::VectorXd& neighbor_mean,
                double lambda);

constexpr double kDefaultLambda = 0.5;

LossBreakdown combined_loss(const Eigen::VectorXd& psi_star, const Eigen::VectorXd& positive,
                            std::span<const Eigen::VectorXd> negatives, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& basis, const ContextSubspace& pos_subspace,
                            const ContextSubspace& neg_subspace, double lambda = kDefaultLambda);

/// One language's decoder output: per-position probability vectors against
/// one-hot targets, with a relevance weight (the base stream uses 1).
struct LanguageStream {
    double weight = 1.0;
    std::vector<Eigen::VectorXd> predictions;
    std::vector<Eigen::VectorXd> targets;
};

/// Weighted sum over streams of the per-position negative log-likelihood,
/// with log probabilities clamped below at log(1e-12).
double multilingual_nll(std::span<const LanguageStream> streams);

}  // namespace ctxsub
