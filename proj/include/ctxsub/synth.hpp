#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "ctxsub/bank.hpp"
#include "ctxsub/loss.hpp"

namespace ctxsub {

/// Synthetic benchmark: descriptors clustered around unit-sphere centers,
/// episodes whose context vector is a fixed linear projection of the
/// positive's cluster center plus noise. Everything derives from the seed.
struct SynthConfig {
    std::uint32_t dim = 32;
    std::uint32_t n_clusters = 8;
    std::uint32_t bank_size = 500;
    std::uint32_t n_episodes = 500;
    std::uint32_t k = 5;              // negatives per episode
    double noise = 0.05;              // bank row jitter around its center
    double context_noise = 0.10;      // context jitter before projection
    std::uint32_t context_dim = 0;    // 0 means dim
    std::int64_t seed = 0;
};

struct SynthData {
    DescriptorBank bank;
    std::vector<TargetEpisode> episodes;
    std::vector<std::uint32_t> cluster_of_row;
    Eigen::MatrixXd context_map;  // context_dim x dim
};

SynthData generate(const SynthConfig& config);

/// Language-stream sampler feeding the multilingual loss: one-hot targets,
/// predictions blended toward uniform by the corruption rate. Stream 0 is
/// the base stream (weight 1); auxiliary weights follow `weights`.
struct LanguageStreamConfig {
    std::vector<std::uint32_t> vocab_sizes;  // one per stream, first is the base
    std::vector<double> aux_weights;         // one per stream after the first
    std::uint32_t positions = 20;            // M', padded sentence length
    double corruption = 0.0;                 // 0 = perfect predictions, 1 = uniform
    std::uint32_t n_samples = 1;
    std::int64_t seed = 0;
};

std::vector<std::vector<LanguageStream>> generate_language_streams(const LanguageStreamConfig& config);

}  // namespace ctxsub
