#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxsub/bank.hpp"

namespace ctxsub {

enum class Metric { L2 = 0, Cosine = 1, InnerProduct = 2 };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);

/// Neighbors of one query: ids with their distance keys, ascending. Keys are
/// squared L2, 1 - cosine, or 1 - <q,x>; the first two are non-negative by
/// construction, the inner-product key is non-negative once inputs are
/// unit-normalized (the default pipeline normalizes).
struct KnnResult {
    std::vector<std::string> ids;
    std::vector<double> distances;
};

/// Flat exact scan when partitions are empty, otherwise a coarse quantizer:
/// queries probe the probe_count nearest centroids and scan only those row
/// lists. Partition row lists always form a disjoint cover of the bank.
struct SearchIndex {
    Metric metric = Metric::L2;
    std::uint32_t dim = 0;
    std::uint32_t probe_count = 1;
    std::vector<Eigen::VectorXd> centroids;
    std::vector<std::vector<std::uint32_t>> partitions;

    bool flat() const { return partitions.empty(); }
};

/// Distance key between a query and one float32 row under the metric.
double pair_distance(Metric metric, const Eigen::VectorXd& query, const float* row, std::uint32_t dim);

/// n_partitions == 0 builds a flat exact index. Otherwise centroids start
/// from a seeded sample of distinct rows (rows 0..n-1 in order when
/// n_partitions == count) and are refined by a fixed 10 Lloyd iterations;
/// everything is deterministic given the seed.
SearchIndex build_index(const DescriptorBank& bank, Metric metric, std::uint32_t n_partitions,
                        std::int64_t seed);

/// The eta nearest rows (fewer if the scanned candidate set is smaller).
/// Ties at equal distance break by ascending row index.
KnnResult knn(const SearchIndex& index, const DescriptorBank& bank, const Eigen::VectorXd& query,
              std::uint32_t eta);

/// Row-index form used by the embedding stage.
std::vector<std::pair<std::uint32_t, double>> knn_rows(const SearchIndex& index, const DescriptorBank& bank,
                                                       const Eigen::VectorXd& query, std::uint32_t eta);

std::vector<KnnResult> knn_batch(const SearchIndex& index, const DescriptorBank& bank,
                                 std::span<const Eigen::VectorXd> queries, std::uint32_t eta, int threads);

/// Index file: magic "NEIX", u32 version=1, u8 metric, u32 probe_count,
/// u32 n_partitions, u32 dim, centroids as f64 little-endian, then each
/// partition as u32 length + u32 row indices.
void save_index(const SearchIndex& index, const std::filesystem::path& path);
SearchIndex load_index(const std::filesystem::path& path);

}  // namespace ctxsub
