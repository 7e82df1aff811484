#pragma once

#include <Eigen/Core>
#include <span>
#include <utility>
#include <vector>

#include "ctxsub/bank.hpp"
#include "ctxsub/search.hpp"

namespace ctxsub {

/// Mean plus an orthonormal basis of leading principal directions of a
/// neighbor set, with the corresponding singular values of the row-centered
/// matrix as diagnostics. Each basis column is sign-canonical: its
/// largest-magnitude entry is non-negative.
struct ContextSubspace {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;        // dim x eta_prime, orthonormal columns
    Eigen::VectorXd eigenvalues;  // eta_prime singular values, non-increasing
};

/// Gaussian soft-assignment of one vector against a positive target and K
/// negative targets. positive_weight and per_negative_weights are the 1+K
/// normalized partition terms (they sum to 1); negative_weight is the
/// largest negative term.
struct SoftWeights {
    double sigma = 0.0;
    double positive_weight = 0.0;
    std::vector<double> per_negative_weights;
    double negative_weight = 0.0;
};

/// Which weight rescales negative-side neighbors. The hard/soft embedding
/// recipe applies the positive weight to both sides; SMinus switches the
/// negative side to the max-negative-partition weight instead.
enum class NegativeWeighting { SPlus, SMinus };

const char* negative_weighting_name(NegativeWeighting w);
NegativeWeighting negative_weighting_from_name(const std::string& name);

enum class EmbedMode { Neha = 0, Nesa = 1 };

const char* embed_mode_name(EmbedMode m);
EmbedMode embed_mode_from_name(const std::string& name);

SoftWeights soft_assign(const Eigen::VectorXd& query, const Eigen::VectorXd& positive,
                        std::span<const Eigen::VectorXd> negatives, double sigma);

/// Row mean plus the eta_prime leading principal directions of the
/// row-centered points (rows of `points` are observations). Directions
/// beyond the numerical rank carry zero eigenvalue and are completed
/// deterministically from coordinate axes; eta_prime == 0 yields an empty
/// basis. Requires eta_prime <= dim.
ContextSubspace truncated_svd(const Eigen::MatrixXd& points, int eta_prime);

struct EmbedConfig {
    std::uint32_t eta = 4;
    std::uint32_t eta_prime = 4;
    double sigma = 0.5;
    NegativeWeighting negative_weighting = NegativeWeighting::SPlus;
};

/// Neighbor embedding by hard assignment: eta bank neighbors of the positive
/// target give (mean+, basis+); the pooled eta*K neighbors of the K negative
/// targets give (mean-, basis-).
std::pair<ContextSubspace, ContextSubspace> neha(const Eigen::VectorXd& positive,
                                                 std::span<const Eigen::VectorXd> negatives,
                                                 const DescriptorBank& bank, const SearchIndex& index,
                                                 std::uint32_t eta, std::uint32_t eta_prime);

/// Soft-assignment variant: every retrieved neighbor is rescaled by its
/// soft weight against the episode targets before the mean/SVD step.
std::pair<ContextSubspace, ContextSubspace> nesa(const Eigen::VectorXd& positive,
                                                 std::span<const Eigen::VectorXd> negatives,
                                                 const DescriptorBank& bank, const SearchIndex& index,
                                                 std::uint32_t eta, std::uint32_t eta_prime, double sigma,
                                                 NegativeWeighting weighting = NegativeWeighting::SPlus);

}  // namespace ctxsub
