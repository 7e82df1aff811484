#include "ctxsub/embed.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace ctxsub {

namespace {

/// Flip so the first entry of largest magnitude is non-negative.
void canonicalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double m = std::abs(v[i]);
        if (m > best) {
            best = m;
            arg = i;
        }
    }
    if (v[arg] < 0.0) v = -v;
}

/// Append orthonormal columns derived from coordinate axes until basis has
/// `want` columns. Axis choice is the largest residual after projecting out
/// the current columns, ties to the lowest axis index.
void complete_basis(Eigen::MatrixXd& basis, Eigen::Index filled, Eigen::Index want) {
    const Eigen::Index dim = basis.rows();
    while (filled < want) {
        double best_norm = -1.0;
        Eigen::VectorXd best_residual;
        for (Eigen::Index a = 0; a < dim; ++a) {
            Eigen::VectorXd r = Eigen::VectorXd::Unit(dim, a);
            if (filled > 0) r -= basis.leftCols(filled) * (basis.leftCols(filled).transpose() * r);
            const double n = r.norm();
            if (n > best_norm + 1e-12) {
                best_norm = n;
                best_residual = std::move(r);
            }
        }
        best_residual /= best_norm;
        canonicalize_sign(best_residual);
        basis.col(filled) = best_residual;
        ++filled;
    }
}

void check_same_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
    if (a.size() != b.size())
        raise(ErrorCode::DimensionMismatch, std::string(what) + ": " + std::to_string(a.size()) + " vs " +
                                                std::to_string(b.size()));
}

std::vector<Eigen::VectorXd> gather_neighbors(const DescriptorBank& bank, const SearchIndex& index,
                                              const Eigen::VectorXd& query, std::uint32_t eta) {
    std::vector<Eigen::VectorXd> rows;
    rows.reserve(eta);
    for (const auto& [row, dist] : knn_rows(index, bank, query, eta)) {
        (void)dist;
        rows.push_back(bank.row(row));
    }
    return rows;
}

ContextSubspace subspace_of(const std::vector<Eigen::VectorXd>& points, std::uint32_t eta_prime) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), points.front().size());
    for (std::size_t i = 0; i < points.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = points[i];
    return truncated_svd(m, static_cast<int>(eta_prime));
}

}  // namespace

const char* negative_weighting_name(NegativeWeighting w) {
    return w == NegativeWeighting::SPlus ? "s_plus" : "s_minus";
}

NegativeWeighting negative_weighting_from_name(const std::string& name) {
    if (name == "s_plus") return NegativeWeighting::SPlus;
    if (name == "s_minus") return NegativeWeighting::SMinus;
    raise(ErrorCode::InvalidArgument, "unknown negative weighting '" + name + "'");
}

const char* embed_mode_name(EmbedMode m) { return m == EmbedMode::Neha ? "neha" : "nesa"; }

EmbedMode embed_mode_from_name(const std::string& name) {
    if (name == "neha") return EmbedMode::Neha;
    if (name == "nesa") return EmbedMode::Nesa;
    raise(ErrorCode::InvalidArgument, "unknown embed mode '" + name + "'");
}

SoftWeights soft_assign(const Eigen::VectorXd& query, const Eigen::VectorXd& positive,
                        std::span<const Eigen::VectorXd> negatives, double sigma) {
    if (negatives.empty()) raise(ErrorCode::InvalidArgument, "soft_assign needs at least one negative");
    if (!(sigma > 0.0)) raise(ErrorCode::InvalidArgument, "sigma must be positive");
    check_same_dim(query, positive, "soft_assign query/positive");
    for (const auto& n : negatives) check_same_dim(query, n, "soft_assign query/negative");

    // log-domain partition terms; shifting by the max keeps exp() in range
    const double inv = 1.0 / (2.0 * sigma * sigma);
    std::vector<double> logits(1 + negatives.size());
    logits[0] = -(query - positive).squaredNorm() * inv;
    for (std::size_t k = 0; k < negatives.size(); ++k)
        logits[1 + k] = -(query - negatives[k]).squaredNorm() * inv;
    const double m = *std::max_element(logits.begin(), logits.end());
    double tau = 0.0;
    for (double& l : logits) {
        l = std::exp(l - m);
        tau += l;
    }

    SoftWeights w;
    w.sigma = sigma;
    w.positive_weight = logits[0] / tau;
    w.per_negative_weights.resize(negatives.size());
    for (std::size_t k = 0; k < negatives.size(); ++k) w.per_negative_weights[k] = logits[1 + k] / tau;
    w.negative_weight = *std::max_element(w.per_negative_weights.begin(), w.per_negative_weights.end());
    return w;
}

ContextSubspace truncated_svd(const Eigen::MatrixXd& points, int eta_prime) {
    const Eigen::Index n = points.rows();
    const Eigen::Index dim = points.cols();
    if (n < 1) raise(ErrorCode::InvalidArgument, "truncated_svd needs at least one point");
    if (eta_prime < 0 || eta_prime > dim)
        raise(ErrorCode::InvalidArgument, "eta_prime " + std::to_string(eta_prime) +
                                              " out of range for dim " + std::to_string(dim));

    ContextSubspace sub;
    sub.mean = points.colwise().mean();
    sub.basis.resize(dim, eta_prime);
    sub.eigenvalues = Eigen::VectorXd::Zero(eta_prime);
    if (eta_prime == 0) return sub;

    const Eigen::MatrixXd centered = points.rowwise() - sub.mean.transpose();

    // Principal directions via the n x n Gram matrix: cheap for small
    // neighbor sets regardless of the descriptor dimension.
    const Eigen::MatrixXd gram = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success)
        raise(ErrorCode::InvalidArgument, "eigendecomposition failed");

    // The Gram route floors the resolvable spectrum at sigma_max*sqrt(eps);
    // anything under 1e-6 relative is treated as beyond the numerical rank
    // and handed to the deterministic completion.
    const double sigma_max = std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
    const double rank_tol = 1e-6 * sigma_max;

    Eigen::Index filled = 0;
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(eta_prime, n) && filled < eta_prime; ++i) {
        const Eigen::Index src = n - 1 - i;  // eigenvalues come back ascending
        const double sv = std::sqrt(std::max(0.0, eig.eigenvalues()[src]));
        if (sv <= rank_tol) break;
        Eigen::VectorXd dir = centered.transpose() * eig.eigenvectors().col(src) / sv;
        if (filled > 0)  // keep columns orthonormal near the rank threshold
            dir -= sub.basis.leftCols(filled) * (sub.basis.leftCols(filled).transpose() * dir);
        const double norm = dir.norm();
        if (norm < 0.5) break;
        dir /= norm;
        canonicalize_sign(dir);
        sub.basis.col(filled) = dir;
        sub.eigenvalues[filled] = sv;
        ++filled;
    }
    complete_basis(sub.basis, filled, eta_prime);
    return sub;
}

std::pair<ContextSubspace, ContextSubspace> neha(const Eigen::VectorXd& positive,
                                                 std::span<const Eigen::VectorXd> negatives,
                                                 const DescriptorBank& bank, const SearchIndex& index,
                                                 std::uint32_t eta, std::uint32_t eta_prime) {
    if (eta == 0) raise(ErrorCode::InvalidArgument, "eta must be >= 1");
    if (negatives.empty()) raise(ErrorCode::InvalidArgument, "need at least one negative target");
    if (bank.count() == 0) raise(ErrorCode::EmptyBank, "cannot embed against an empty bank");
    if (bank.count() < eta)
        raise(ErrorCode::InsufficientNeighbors,
              "bank holds " + std::to_string(bank.count()) + " rows, eta=" + std::to_string(eta));
    if (eta_prime > eta)
        raise(ErrorCode::InvalidArgument, "eta_prime " + std::to_string(eta_prime) + " > eta");

    const auto pos_neighbors = gather_neighbors(bank, index, positive, eta);
    std::vector<Eigen::VectorXd> neg_neighbors;
    neg_neighbors.reserve(static_cast<std::size_t>(eta) * negatives.size());
    for (const auto& neg : negatives)
        for (auto& v : gather_neighbors(bank, index, neg, eta)) neg_neighbors.push_back(std::move(v));

    return {subspace_of(pos_neighbors, eta_prime), subspace_of(neg_neighbors, eta_prime)};
}

std::pair<ContextSubspace, ContextSubspace> nesa(const Eigen::VectorXd& positive,
                                                 std::span<const Eigen::VectorXd> negatives,
                                                 const DescriptorBank& bank, const SearchIndex& index,
                                                 std::uint32_t eta, std::uint32_t eta_prime, double sigma,
                                                 NegativeWeighting weighting) {
    if (eta == 0) raise(ErrorCode::InvalidArgument, "eta must be >= 1");
    if (negatives.empty()) raise(ErrorCode::InvalidArgument, "need at least one negative target");
    if (!(sigma > 0.0)) raise(ErrorCode::InvalidArgument, "sigma must be positive");
    if (bank.count() == 0) raise(ErrorCode::EmptyBank, "cannot embed against an empty bank");
    if (bank.count() < eta)
        raise(ErrorCode::InsufficientNeighbors,
              "bank holds " + std::to_string(bank.count()) + " rows, eta=" + std::to_string(eta));
    if (eta_prime > eta)
        raise(ErrorCode::InvalidArgument, "eta_prime " + std::to_string(eta_prime) + " > eta");

    auto pos_neighbors = gather_neighbors(bank, index, positive, eta);
    for (auto& v : pos_neighbors) v *= soft_assign(v, positive, negatives, sigma).positive_weight;

    std::vector<Eigen::VectorXd> neg_neighbors;
    neg_neighbors.reserve(static_cast<std::size_t>(eta) * negatives.size());
    for (const auto& neg : negatives) {
        for (auto& v : gather_neighbors(bank, index, neg, eta)) {
            const SoftWeights w = soft_assign(v, positive, negatives, sigma);
            v *= (weighting == NegativeWeighting::SPlus) ? w.positive_weight : w.negative_weight;
            neg_neighbors.push_back(std::move(v));
        }
    }

    return {subspace_of(pos_neighbors, eta_prime), subspace_of(neg_neighbors, eta_prime)};
}

}  // namespace ctxsub
