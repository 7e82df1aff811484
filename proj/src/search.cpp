#include "ctxsub/search.hpp"

#include <algorithm>
#include <cmath>

#include "ctxsub/io.hpp"
#include "ctxsub/parallel.hpp"
#include "ctxsub/rng.hpp"

namespace ctxsub {

namespace {
constexpr char kIndexMagic[4] = {'N', 'E', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;
constexpr int kLloydIterations = 10;

void check_query_dim(const Eigen::VectorXd& query, std::uint32_t dim) {
    if (query.size() != static_cast<Eigen::Index>(dim))
        raise(ErrorCode::DimensionMismatch, "query has dim " + std::to_string(query.size()) +
                                                ", index expects " + std::to_string(dim));
}

/// Smallest eta (key, row) pairs, key ascending, ties by ascending row.
std::vector<std::pair<std::uint32_t, double>> select_smallest(std::vector<std::pair<double, std::uint32_t>>& cand,
                                                              std::uint32_t eta) {
    const std::size_t take = std::min<std::size_t>(eta, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
    std::vector<std::pair<std::uint32_t, double>> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.emplace_back(cand[i].second, cand[i].first);
    return out;
}
}  // namespace

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::L2: return "l2";
        case Metric::Cosine: return "cosine";
        case Metric::InnerProduct: return "ip";
    }
    return "l2";
}

Metric metric_from_name(const std::string& name) {
    if (name == "l2") return Metric::L2;
    if (name == "cosine") return Metric::Cosine;
    if (name == "ip") return Metric::InnerProduct;
    raise(ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
}

double pair_distance(Metric metric, const Eigen::VectorXd& query, const float* row, std::uint32_t dim) {
    switch (metric) {
        case Metric::L2: {
            double acc = 0.0;
            for (std::uint32_t j = 0; j < dim; ++j) {
                const double d = query[j] - static_cast<double>(row[j]);
                acc += d * d;
            }
            return acc;
        }
        case Metric::Cosine: {
            double dot = 0.0, nq = 0.0, nr = 0.0;
            for (std::uint32_t j = 0; j < dim; ++j) {
                const double x = static_cast<double>(row[j]);
                dot += query[j] * x;
                nq += query[j] * query[j];
                nr += x * x;
            }
            // zero-norm operands score similarity 0
            if (nq == 0.0 || nr == 0.0) return 1.0;
            return 1.0 - dot / (std::sqrt(nq) * std::sqrt(nr));
        }
        case Metric::InnerProduct: {
            double dot = 0.0;
            for (std::uint32_t j = 0; j < dim; ++j) dot += query[j] * static_cast<double>(row[j]);
            return 1.0 - dot;
        }
    }
    return 0.0;
}

namespace {
double centroid_distance(Metric metric, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    switch (metric) {
        case Metric::L2: return (a - b).squaredNorm();
        case Metric::Cosine: {
            const double na = a.norm(), nb = b.norm();
            if (na == 0.0 || nb == 0.0) return 1.0;
            return 1.0 - a.dot(b) / (na * nb);
        }
        case Metric::InnerProduct: return 1.0 - a.dot(b);
    }
    return 0.0;
}
}  // namespace

SearchIndex build_index(const DescriptorBank& bank, Metric metric, std::uint32_t n_partitions,
                        std::int64_t seed) {
    SearchIndex index;
    index.metric = metric;
    index.dim = bank.dim;
    if (n_partitions == 0) return index;
    if (bank.count() == 0) raise(ErrorCode::EmptyBank, "cannot partition an empty bank");
    if (n_partitions > bank.count())
        raise(ErrorCode::InvalidArgument, "n_partitions " + std::to_string(n_partitions) + " > bank count " +
                                              std::to_string(bank.count()));

    const std::size_t count = bank.count();
    std::vector<Eigen::VectorXd> centroids;
    centroids.reserve(n_partitions);
    if (n_partitions == count) {
        for (std::size_t i = 0; i < count; ++i) centroids.push_back(bank.row(i));
    } else {
        Rng rng(seed);
        for (const std::size_t r : rng.sample_without_replacement(count, n_partitions))
            centroids.push_back(bank.row(r));
    }

    std::vector<std::uint32_t> assignment(count, 0);
    for (int iter = 0; iter <= kLloydIterations; ++iter) {
        // assign: nearest centroid, ties to the lowest centroid index
        for (std::size_t i = 0; i < count; ++i) {
            const Eigen::VectorXd row = bank.row(i);
            std::uint32_t best = 0;
            double best_d = centroid_distance(metric, row, centroids[0]);
            for (std::uint32_t c = 1; c < n_partitions; ++c) {
                const double d = centroid_distance(metric, row, centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            assignment[i] = best;
        }
        if (iter == kLloydIterations) break;
        // update: member mean; an emptied partition keeps its centroid
        std::vector<Eigen::VectorXd> sums(n_partitions, Eigen::VectorXd::Zero(bank.dim));
        std::vector<std::size_t> sizes(n_partitions, 0);
        for (std::size_t i = 0; i < count; ++i) {
            sums[assignment[i]] += bank.row(i);
            ++sizes[assignment[i]];
        }
        for (std::uint32_t c = 0; c < n_partitions; ++c)
            if (sizes[c] > 0) centroids[c] = sums[c] / static_cast<double>(sizes[c]);
    }

    index.centroids = std::move(centroids);
    index.partitions.assign(n_partitions, {});
    for (std::size_t i = 0; i < count; ++i)
        index.partitions[assignment[i]].push_back(static_cast<std::uint32_t>(i));
    return index;
}

std::vector<std::pair<std::uint32_t, double>> knn_rows(const SearchIndex& index, const DescriptorBank& bank,
                                                       const Eigen::VectorXd& query, std::uint32_t eta) {
    if (eta == 0) raise(ErrorCode::InvalidArgument, "eta must be >= 1");
    if (bank.dim != index.dim)
        raise(ErrorCode::DimensionMismatch, "bank dim " + std::to_string(bank.dim) + " != index dim " +
                                                std::to_string(index.dim));
    check_query_dim(query, index.dim);

    std::vector<std::pair<double, std::uint32_t>> cand;
    if (index.flat()) {
        cand.reserve(bank.count());
        for (std::size_t i = 0; i < bank.count(); ++i)
            cand.emplace_back(pair_distance(index.metric, query, bank.row_ptr(i), bank.dim),
                              static_cast<std::uint32_t>(i));
    } else {
        const std::uint32_t nparts = static_cast<std::uint32_t>(index.partitions.size());
        const std::uint32_t probes = std::min(index.probe_count, nparts);
        std::vector<std::pair<double, std::uint32_t>> order;
        order.reserve(nparts);
        for (std::uint32_t c = 0; c < nparts; ++c)
            order.emplace_back(centroid_distance(index.metric, query, index.centroids[c]), c);
        std::partial_sort(order.begin(), order.begin() + probes, order.end());
        for (std::uint32_t p = 0; p < probes; ++p)
            for (const std::uint32_t row : index.partitions[order[p].second])
                cand.emplace_back(pair_distance(index.metric, query, bank.row_ptr(row), bank.dim), row);
    }
    return select_smallest(cand, eta);
}

KnnResult knn(const SearchIndex& index, const DescriptorBank& bank, const Eigen::VectorXd& query,
              std::uint32_t eta) {
    KnnResult res;
    for (const auto& [row, dist] : knn_rows(index, bank, query, eta)) {
        res.ids.push_back(bank.ids[row]);
        res.distances.push_back(dist);
    }
    return res;
}

std::vector<KnnResult> knn_batch(const SearchIndex& index, const DescriptorBank& bank,
                                 std::span<const Eigen::VectorXd> queries, std::uint32_t eta, int threads) {
    std::vector<KnnResult> out(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) { out[i] = knn(index, bank, queries[i], eta); });
    return out;
}

void save_index(const SearchIndex& index, const std::filesystem::path& path) {
    std::string bytes;
    bytes.append(kIndexMagic, 4);
    put_u32(bytes, kIndexVersion);
    bytes.push_back(static_cast<char>(index.metric));
    put_u32(bytes, index.probe_count);
    put_u32(bytes, static_cast<std::uint32_t>(index.partitions.size()));
    put_u32(bytes, index.dim);
    for (const auto& c : index.centroids)
        for (Eigen::Index j = 0; j < c.size(); ++j) put_f64(bytes, c[j]);
    for (const auto& part : index.partitions) {
        put_u32(bytes, static_cast<std::uint32_t>(part.size()));
        for (const std::uint32_t row : part) put_u32(bytes, row);
    }
    atomic_write_file(path, bytes);
}

SearchIndex load_index(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    if (r.tag(4) != std::string(kIndexMagic, 4))
        raise(ErrorCode::BadMagic, path.string() + ": expected NEIX at offset 0");
    const std::uint32_t version = r.u32();
    if (version != kIndexVersion)
        raise(ErrorCode::VersionMismatch, path.string() + ": version " + std::to_string(version));
    SearchIndex index;
    const std::uint8_t metric_byte = static_cast<std::uint8_t>(r.tag(1)[0]);
    if (metric_byte > 2)
        raise(ErrorCode::MalformedLine, path.string() + ": bad metric byte " + std::to_string(metric_byte));
    index.metric = static_cast<Metric>(metric_byte);
    index.probe_count = r.u32();
    const std::uint32_t nparts = r.u32();
    index.dim = r.u32();
    index.centroids.reserve(nparts);
    for (std::uint32_t c = 0; c < nparts; ++c) {
        Eigen::VectorXd v(index.dim);
        for (std::uint32_t j = 0; j < index.dim; ++j) v[j] = r.f64();
        index.centroids.push_back(std::move(v));
    }
    index.partitions.resize(nparts);
    for (std::uint32_t c = 0; c < nparts; ++c) {
        const std::uint32_t len = r.u32();
        index.partitions[c].reserve(len);
        for (std::uint32_t i = 0; i < len; ++i) index.partitions[c].push_back(r.u32());
    }
    if (r.remaining() != 0)
        raise(ErrorCode::TruncatedPayload,
              path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes");
    return index;
}

}  // namespace ctxsub
