#include "ctxsub/synth.hpp"

#include <cmath>

#include "ctxsub/rng.hpp"

namespace ctxsub {

SynthData generate(const SynthConfig& config) {
    if (config.dim == 0 || config.bank_size == 0 || config.n_clusters == 0)
        raise(ErrorCode::InvalidArgument, "dim, bank_size and n_clusters must be positive");
    if (config.bank_size < config.n_clusters)
        raise(ErrorCode::InvalidArgument, "bank_size must be >= n_clusters");
    if (config.n_episodes > 0 && config.k == 0)
        raise(ErrorCode::InvalidArgument, "k must be >= 1 when episodes are requested");
    if (config.n_episodes > 0 && config.n_clusters < 2)
        raise(ErrorCode::NeedTwoClusters, "episodes draw negatives from a different cluster");
    if (!(config.noise >= 0.0) || !(config.context_noise >= 0.0))
        raise(ErrorCode::InvalidArgument, "noise levels must be non-negative");

    const std::uint32_t dim = config.dim;
    const std::uint32_t context_dim = config.context_dim == 0 ? dim : config.context_dim;
    Rng rng(config.seed);

    // cluster centers on the unit sphere
    std::vector<Eigen::VectorXd> centers(config.n_clusters);
    for (auto& c : centers) {
        c.resize(dim);
        for (std::uint32_t j = 0; j < dim; ++j) c[j] = rng.normal();
        const double n = c.norm();
        if (n > 0.0) c /= n;
    }

    // fixed projection from descriptor space to context space
    Eigen::MatrixXd context_map(context_dim, dim);
    const double map_scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::uint32_t i = 0; i < context_dim; ++i)
        for (std::uint32_t j = 0; j < dim; ++j) context_map(i, j) = rng.normal() * map_scale;

    // bank rows cycle through clusters so every cluster is populated
    SynthData out;
    out.cluster_of_row.resize(config.bank_size);
    std::vector<float> data(static_cast<std::size_t>(config.bank_size) * dim);
    std::vector<std::string> ids(config.bank_size);
    std::vector<std::vector<std::size_t>> rows_of_cluster(config.n_clusters);
    for (std::uint32_t i = 0; i < config.bank_size; ++i) {
        const std::uint32_t c = i % config.n_clusters;
        out.cluster_of_row[i] = c;
        rows_of_cluster[c].push_back(i);
        for (std::uint32_t j = 0; j < dim; ++j)
            data[static_cast<std::size_t>(i) * dim + j] =
                static_cast<float>(centers[c][j] + config.noise * rng.normal());
        char buf[16];
        std::snprintf(buf, sizeof(buf), "row%05u", i);
        ids[i] = buf;
    }
    out.bank = make_bank(dim, std::move(data), std::move(ids));
    out.context_map = std::move(context_map);

    out.episodes.reserve(config.n_episodes);
    for (std::uint32_t e = 0; e < config.n_episodes; ++e) {
        TargetEpisode ep;
        const std::uint32_t pos_cluster = static_cast<std::uint32_t>(rng.below(config.n_clusters));
        const auto& pos_rows = rows_of_cluster[pos_cluster];
        ep.positive_id = out.bank.ids[pos_rows[rng.below(pos_rows.size())]];

        // negatives: distinct rows sampled from the other clusters
        std::vector<std::size_t> other_rows;
        other_rows.reserve(config.bank_size - pos_rows.size());
        for (std::uint32_t c = 0; c < config.n_clusters; ++c)
            if (c != pos_cluster)
                other_rows.insert(other_rows.end(), rows_of_cluster[c].begin(), rows_of_cluster[c].end());
        if (other_rows.size() < config.k)
            raise(ErrorCode::InvalidArgument, "not enough rows outside the positive cluster for k negatives");
        for (const std::size_t pick : rng.sample_without_replacement(other_rows.size(), config.k))
            ep.negative_ids.push_back(out.bank.ids[other_rows[pick]]);

        Eigen::VectorXd latent = centers[pos_cluster];
        for (std::uint32_t j = 0; j < dim; ++j) latent[j] += config.context_noise * rng.normal();
        ep.context = out.context_map * latent;
        ep.task = static_cast<TaskLabel>(pos_cluster % 3);
        out.episodes.push_back(std::move(ep));
    }
    return out;
}

std::vector<std::vector<LanguageStream>> generate_language_streams(const LanguageStreamConfig& config) {
    if (config.vocab_sizes.empty())
        raise(ErrorCode::InvalidArgument, "need at least the base stream vocabulary");
    for (const auto v : config.vocab_sizes)
        if (v < 2) raise(ErrorCode::InvalidArgument, "vocab sizes must be >= 2");
    if (config.aux_weights.size() + 1 != config.vocab_sizes.size())
        raise(ErrorCode::InvalidArgument, "need one auxiliary weight per non-base stream");
    if (config.corruption < 0.0 || config.corruption > 1.0)
        raise(ErrorCode::InvalidArgument, "corruption must lie in [0, 1]");
    if (config.positions == 0) raise(ErrorCode::InvalidArgument, "positions must be >= 1");

    Rng rng(config.seed);
    std::vector<std::vector<LanguageStream>> samples;
    samples.reserve(config.n_samples);
    for (std::uint32_t s = 0; s < config.n_samples; ++s) {
        std::vector<LanguageStream> streams;
        streams.reserve(config.vocab_sizes.size());
        for (std::size_t lang = 0; lang < config.vocab_sizes.size(); ++lang) {
            LanguageStream stream;
            stream.weight = lang == 0 ? 1.0 : config.aux_weights[lang - 1];
            const std::uint32_t v = config.vocab_sizes[lang];
            for (std::uint32_t m = 0; m < config.positions; ++m) {
                const auto hot = static_cast<Eigen::Index>(rng.below(v));
                Eigen::VectorXd target = Eigen::VectorXd::Zero(v);
                target[hot] = 1.0;
                Eigen::VectorXd pred =
                    Eigen::VectorXd::Constant(v, config.corruption / static_cast<double>(v));
                pred[hot] += 1.0 - config.corruption;
                stream.targets.push_back(std::move(target));
                stream.predictions.push_back(std::move(pred));
            }
            streams.push_back(std::move(stream));
        }
        samples.push_back(std::move(streams));
    }
    return samples;
}

}  // namespace ctxsub
