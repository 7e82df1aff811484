#include "ctxsub/loss.hpp"

#include <cmath>

namespace ctxsub {

namespace {
constexpr double kLogFloor = 1e-12;

void check_dim(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b)
        raise(ErrorCode::DimensionMismatch,
              std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
}
}  // namespace

double hinge_rank(const Eigen::VectorXd& psi_star, const Eigen::VectorXd& positive,
                  std::span<const Eigen::VectorXd> negatives) {
    if (negatives.empty()) raise(ErrorCode::InvalidArgument, "hinge_rank needs at least one negative");
    check_dim(psi_star.size(), positive.size(), "hinge_rank psi_star/positive");
    Eigen::VectorXd neg_mean = Eigen::VectorXd::Zero(psi_star.size());
    for (const auto& n : negatives) {
        check_dim(psi_star.size(), n.size(), "hinge_rank psi_star/negative");
        neg_mean += n;
    }
    neg_mean /= static_cast<double>(negatives.size());
    return std::max(0.0, 1.0 - psi_star.dot(positive - neg_mean));
}

double hinge_assisted(const Eigen::VectorXd& mu, const Eigen::MatrixXd& basis,
                      const Eigen::VectorXd& mu_pos, const Eigen::MatrixXd& basis_pos,
                      const Eigen::VectorXd& mu_neg, const Eigen::MatrixXd& basis_neg) {
    check_dim(mu.size(), mu_pos.size(), "hinge_assisted mu/mu_pos");
    check_dim(mu.size(), mu_neg.size(), "hinge_assisted mu/mu_neg");
    check_dim(basis.cols(), basis_pos.cols(), "hinge_assisted basis columns (pos)");
    check_dim(basis.cols(), basis_neg.cols(), "hinge_assisted basis columns (neg)");
    if (basis.cols() > 0) {
        check_dim(basis.rows(), mu.size(), "hinge_assisted basis rows");
        check_dim(basis_pos.rows(), mu.size(), "hinge_assisted basis_pos rows");
        check_dim(basis_neg.rows(), mu.size(), "hinge_assisted basis_neg rows");
    }
    double margin = 1.0 - mu.dot(mu_pos - mu_neg);
    for (Eigen::Index n = 0; n < basis.cols(); ++n)
        margin -= basis.col(n).dot(basis_pos.col(n) - basis_neg.col(n));
    return std::max(0.0, margin);
}

double nno_loss(const Eigen::VectorXd& psi_star, const Eigen::VectorXd& positive,
                std::span<const Eigen::VectorXd> negatives, const Eigen::VectorXd& neighbor_mean,
                double lambda) {
    check_dim(psi_star.size(), neighbor_mean.size(), "nno_loss psi_star/neighbor_mean");
    return hinge_rank(psi_star, positive, negatives) + lambda * (psi_star - neighbor_mean).squaredNorm();
}

LossBreakdown combined_loss(const Eigen::VectorXd& psi_star, const Eigen::VectorXd& positive,
                            std::span<const Eigen::VectorXd> negatives, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& basis, const ContextSubspace& pos_subspace,
                            const ContextSubspace& neg_subspace, double lambda) {
    LossBreakdown b;
    b.primary = hinge_rank(psi_star, positive, negatives);
    b.assisted = hinge_assisted(mu, basis, pos_subspace.mean, pos_subspace.basis, neg_subspace.mean,
                                neg_subspace.basis);
    b.lambda = lambda;
    b.total = b.primary + lambda * b.assisted;
    return b;
}

double multilingual_nll(std::span<const LanguageStream> streams) {
    if (streams.empty()) raise(ErrorCode::InvalidArgument, "multilingual_nll needs at least one stream");
    double total = 0.0;
    for (std::size_t s = 0; s < streams.size(); ++s) {
        const auto& stream = streams[s];
        if (stream.weight < 0.0)
            raise(ErrorCode::InvalidArgument, "stream " + std::to_string(s) + " has negative weight");
        if (stream.predictions.size() != stream.targets.size())
            raise(ErrorCode::DimensionMismatch,
                  "stream " + std::to_string(s) + ": " + std::to_string(stream.predictions.size()) +
                      " predictions vs " + std::to_string(stream.targets.size()) + " targets");
        double stream_nll = 0.0;
        for (std::size_t m = 0; m < stream.predictions.size(); ++m) {
            const auto& p = stream.predictions[m];
            const auto& y = stream.targets[m];
            check_dim(p.size(), y.size(), "multilingual_nll prediction/target");
            double mass = 0.0;
            Eigen::Index hot = -1;
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                if (p[i] < 0.0)
                    raise(ErrorCode::NotDistribution, "stream " + std::to_string(s) + " position " +
                                                          std::to_string(m) + ": negative probability");
                mass += p[i];
                if (y[i] == 1.0) {
                    if (hot >= 0)
                        raise(ErrorCode::NotOneHot, "stream " + std::to_string(s) + " position " +
                                                        std::to_string(m) + ": multiple ones");
                    hot = i;
                } else if (y[i] != 0.0) {
                    raise(ErrorCode::NotOneHot, "stream " + std::to_string(s) + " position " +
                                                    std::to_string(m) + ": entry not in {0,1}");
                }
            }
            if (hot < 0)
                raise(ErrorCode::NotOneHot,
                      "stream " + std::to_string(s) + " position " + std::to_string(m) + ": no one set");
            if (std::abs(mass - 1.0) > 1e-6)
                raise(ErrorCode::NotDistribution, "stream " + std::to_string(s) + " position " +
                                                      std::to_string(m) + ": mass " + std::to_string(mass));
            stream_nll += -std::log(std::max(p[hot], kLogFloor));
        }
        total += stream.weight * stream_nll;
    }
    return total;
}

}  // namespace ctxsub
