#include <filesystem>
#include <numeric>
#include <set>

#include "ctxsub/io.hpp"
#include "ctxsub/rng.hpp"
#include "ctxsub/search.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ctxsub;

namespace {

DescriptorBank random_bank(std::size_t count, std::uint32_t dim, std::int64_t seed) {
    Rng rng(seed);
    std::vector<float> data(count * dim);
    for (auto& v : data) v = static_cast<float>(rng.normal());
    std::vector<std::string> ids(count);
    for (std::size_t i = 0; i < count; ++i) ids[i] = "r" + std::to_string(i);
    return make_bank(dim, std::move(data), std::move(ids));
}

std::vector<std::vector<float>> bank_rows(const DescriptorBank& bank) {
    std::vector<std::vector<float>> rows(bank.count());
    for (std::size_t i = 0; i < bank.count(); ++i)
        rows[i].assign(bank.row_ptr(i), bank.row_ptr(i) + bank.dim);
    return rows;
}

}  // namespace

TEST_SUITE("search") {

TEST_CASE("query equal to a bank row ranks that row first at distance zero") {
    const auto bank = random_bank(20, 4, 1);
    const auto index = build_index(bank, Metric::L2, 0, 0);
    const auto res = knn(index, bank, bank.row(7), 3);
    REQUIRE(res.ids.size() == 3);
    CHECK(res.ids[0] == "r7");
    CHECK(res.distances[0] == 0.0);
    CHECK(res.distances[0] <= res.distances[1]);
}

TEST_CASE("eta at least count returns every row sorted") {
    const auto bank = random_bank(6, 3, 2);
    const auto index = build_index(bank, Metric::L2, 0, 0);
    const auto res = knn(index, bank, bank.row(0), 100);
    CHECK(res.ids.size() == 6);
    CHECK(std::is_sorted(res.distances.begin(), res.distances.end()));
    CHECK(std::set<std::string>(res.ids.begin(), res.ids.end()).size() == 6);
}

TEST_CASE("flat search matches the exhaustive oracle across metrics") {
    for (const char* metric : {"l2", "cosine", "ip"}) {
        const auto bank = random_bank(50, 8, 3);
        const auto rows = bank_rows(bank);
        const auto index = build_index(bank, metric_from_name(metric), 0, 0);
        Rng rng(17);
        for (int q = 0; q < 10; ++q) {
            Eigen::VectorXd query(8);
            std::vector<double> qv(8);
            for (int j = 0; j < 8; ++j) {
                query[j] = rng.normal();
                qv[j] = query[j];
            }
            const auto got = knn_rows(index, bank, query, 5);
            const auto want = oracle::brute_force_knn(rows, qv, 5, metric);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].first == want[i].row);
                CHECK(got[i].second == doctest::Approx(want[i].distance).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("ties break by ascending row index") {
    // two identical rows at the query point
    std::vector<float> data = {1, 0, 1, 0, 0, 1};
    const auto bank = make_bank(2, data, {"x", "y", "z"});
    const auto index = build_index(bank, Metric::L2, 0, 0);
    const auto res = knn(index, bank, Eigen::Vector2d(1, 0), 2);
    CHECK(res.ids[0] == "x");
    CHECK(res.ids[1] == "y");
}

TEST_CASE("partitioned build is deterministic and covers all rows disjointly") {
    const auto bank = random_bank(64, 6, 5);
    const auto a = build_index(bank, Metric::L2, 4, 42);
    const auto b = build_index(bank, Metric::L2, 4, 42);
    REQUIRE(a.partitions.size() == 4);
    CHECK(a.partitions == b.partitions);

    std::vector<bool> seen(bank.count(), false);
    for (const auto& part : a.partitions)
        for (const auto row : part) {
            CHECK(!seen[row]);
            seen[row] = true;
        }
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }));
}

TEST_CASE("one partition per row yields singletons") {
    const auto bank = random_bank(12, 4, 6);
    const auto index = build_index(bank, Metric::L2, 12, 0);
    for (std::size_t c = 0; c < 12; ++c) {
        REQUIRE(index.partitions[c].size() == 1);
        CHECK(index.partitions[c][0] == c);
    }
}

TEST_CASE("probing every partition reproduces the flat result") {
    const auto bank = random_bank(80, 5, 7);
    auto index = build_index(bank, Metric::L2, 8, 9);
    index.probe_count = 8;
    const auto flat = build_index(bank, Metric::L2, 0, 0);
    Rng rng(23);
    for (int q = 0; q < 5; ++q) {
        Eigen::VectorXd query(5);
        for (int j = 0; j < 5; ++j) query[j] = rng.normal();
        const auto a = knn_rows(index, bank, query, 7);
        const auto b = knn_rows(flat, bank, query, 7);
        CHECK(a == b);
    }
}

TEST_CASE("partitioning an empty bank fails, flat is fine") {
    const auto empty = make_bank(4, {}, {});
    try {
        build_index(empty, Metric::L2, 2, 0);
        FAIL("expected EmptyBank");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyBank);
    }
    CHECK(build_index(empty, Metric::L2, 0, 0).flat());
}

TEST_CASE("dimension mismatches are rejected") {
    const auto bank = random_bank(5, 3, 8);
    const auto index = build_index(bank, Metric::L2, 0, 0);
    CHECK_THROWS_AS(knn(index, bank, Eigen::Vector2d(1, 2), 1), Error);
}

TEST_CASE("worker exceptions surface on the calling thread") {
    const auto bank = random_bank(40, 4, 10);
    const auto index = build_index(bank, Metric::L2, 0, 0);
    std::vector<Eigen::VectorXd> queries(8, Eigen::VectorXd::Zero(4));
    queries[5] = Eigen::VectorXd::Zero(3);  // one bad query among many
    CHECK_THROWS_AS(knn_batch(index, bank, queries, 2, 4), Error);
}

TEST_CASE("batch results are independent of the thread count") {
    const auto bank = random_bank(40, 4, 10);
    const auto index = build_index(bank, Metric::L2, 0, 0);
    Rng rng(31);
    std::vector<Eigen::VectorXd> queries(9);
    for (auto& q : queries) {
        q.resize(4);
        for (int j = 0; j < 4; ++j) q[j] = rng.normal();
    }
    const auto one = knn_batch(index, bank, queries, 3, 1);
    const auto four = knn_batch(index, bank, queries, 3, 4);
    REQUIRE(one.size() == four.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].ids == four[i].ids);
        CHECK(one[i].distances == four[i].distances);
    }
}

TEST_CASE("cosine and inner product agree on unit-normalized data") {
    Rng rng(37);
    std::vector<float> data(30 * 6);
    for (std::size_t i = 0; i < 30; ++i) {
        Eigen::VectorXd v(6);
        for (int j = 0; j < 6; ++j) v[j] = rng.normal();
        v.normalize();
        for (int j = 0; j < 6; ++j) data[i * 6 + j] = static_cast<float>(v[j]);
    }
    std::vector<std::string> ids(30);
    for (int i = 0; i < 30; ++i) ids[i] = "r" + std::to_string(i);
    const auto bank = make_bank(6, std::move(data), std::move(ids));
    const auto cos_index = build_index(bank, Metric::Cosine, 0, 0);
    const auto ip_index = build_index(bank, Metric::InnerProduct, 0, 0);
    for (int q = 0; q < 8; ++q) {
        Eigen::VectorXd query(6);
        for (int j = 0; j < 6; ++j) query[j] = rng.normal();
        query.normalize();
        const auto a = knn(cos_index, bank, query, 5);
        const auto b = knn(ip_index, bank, query, 5);
        CHECK(a.ids == b.ids);
        // float32 storage perturbs row norms by ~1e-7, so the two key
        // definitions coincide only to that order
        for (std::size_t i = 0; i < a.distances.size(); ++i) {
            CHECK(a.distances[i] == doctest::Approx(b.distances[i]).epsilon(1e-5));
            CHECK(a.distances[i] >= 0.0);
        }
    }
}

TEST_CASE("index files round-trip") {
    const auto dir = std::filesystem::temp_directory_path() / "ctxsub_index_rt";
    std::filesystem::create_directories(dir);
    const auto bank = random_bank(30, 4, 11);
    auto index = build_index(bank, Metric::Cosine, 5, 12);
    index.probe_count = 3;
    save_index(index, dir / "i.neix");
    const auto loaded = load_index(dir / "i.neix");
    CHECK(loaded.metric == index.metric);
    CHECK(loaded.probe_count == 3);
    CHECK(loaded.partitions == index.partitions);
    REQUIRE(loaded.centroids.size() == index.centroids.size());
    for (std::size_t c = 0; c < loaded.centroids.size(); ++c)
        CHECK(loaded.centroids[c] == index.centroids[c]);

    save_index(loaded, dir / "i2.neix");
    CHECK(read_file_bytes(dir / "i.neix") == read_file_bytes(dir / "i2.neix"));
}

}  // TEST_SUITE
