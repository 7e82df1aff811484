#include <cmath>
#include <set>

#include "ctxsub/loss.hpp"
#include "ctxsub/synth.hpp"
#include "doctest.h"

using namespace ctxsub;

TEST_SUITE("synth") {

TEST_CASE("zero noise pins every row to its cluster center") {
    SynthConfig cfg;
    cfg.dim = 8;
    cfg.n_clusters = 4;
    cfg.bank_size = 16;
    cfg.n_episodes = 0;
    cfg.noise = 0.0;
    cfg.seed = 1;
    const auto data = generate(cfg);
    for (std::size_t i = 0; i < data.bank.count(); ++i) {
        const auto ref = data.bank.row(i % 4);
        CHECK((data.bank.row(i) - ref).norm() == 0.0);
        CHECK(data.cluster_of_row[i] == i % 4);
        CHECK(std::abs(data.bank.row(i).norm() - 1.0) < 1e-6);  // centers live on the sphere
    }
}

TEST_CASE("generation is bitwise reproducible under the seed") {
    SynthConfig cfg;
    cfg.dim = 6;
    cfg.n_clusters = 3;
    cfg.bank_size = 30;
    cfg.n_episodes = 10;
    cfg.k = 2;
    cfg.seed = 21;
    const auto a = generate(cfg);
    const auto b = generate(cfg);
    CHECK(a.bank.data == b.bank.data);
    CHECK(a.bank.ids == b.bank.ids);
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (std::size_t e = 0; e < a.episodes.size(); ++e) {
        CHECK(a.episodes[e].context == b.episodes[e].context);
        CHECK(a.episodes[e].positive_id == b.episodes[e].positive_id);
        CHECK(a.episodes[e].negative_ids == b.episodes[e].negative_ids);
    }
}

TEST_CASE("episodes pick negatives outside the positive cluster") {
    SynthConfig cfg;
    cfg.dim = 8;
    cfg.n_clusters = 4;
    cfg.bank_size = 40;
    cfg.n_episodes = 25;
    cfg.k = 5;
    cfg.seed = 5;
    const auto data = generate(cfg);
    for (const auto& ep : data.episodes) {
        const auto pos_row = data.bank.find(ep.positive_id);
        REQUIRE(pos_row);
        const auto pos_cluster = data.cluster_of_row[*pos_row];
        CHECK(ep.negative_ids.size() == 5);
        std::set<std::string> distinct(ep.negative_ids.begin(), ep.negative_ids.end());
        CHECK(distinct.size() == 5);
        for (const auto& id : ep.negative_ids) {
            const auto row = data.bank.find(id);
            REQUIRE(row);
            CHECK(data.cluster_of_row[*row] != pos_cluster);
            CHECK(id != ep.positive_id);
        }
        CHECK(ep.task == static_cast<TaskLabel>(pos_cluster % 3));
    }
}

TEST_CASE("rows stay nearest to their own center under mild noise") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_clusters = 4;
    cfg.bank_size = 40;
    cfg.n_episodes = 0;
    cfg.noise = 0.05;
    cfg.seed = 13;
    const auto data = generate(cfg);
    // recompute centers from noise-free twin run
    SynthConfig clean = cfg;
    clean.noise = 0.0;
    const auto centers = generate(clean);
    for (std::size_t i = 0; i < data.bank.count(); ++i) {
        double best = 1e300;
        std::uint32_t arg = 0;
        for (std::uint32_t c = 0; c < 4; ++c) {
            const double d = (data.bank.row(i) - centers.bank.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        CHECK(arg == data.cluster_of_row[i]);
    }
}

TEST_CASE("a single cluster cannot produce episodes") {
    SynthConfig cfg;
    cfg.n_clusters = 1;
    cfg.bank_size = 10;
    cfg.n_episodes = 1;
    try {
        generate(cfg);
        FAIL("expected NeedTwoClusters");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NeedTwoClusters);
    }
}

TEST_CASE("uncorrupted streams have zero loss") {
    LanguageStreamConfig cfg;
    cfg.vocab_sizes = {7};
    cfg.positions = 5;
    cfg.corruption = 0.0;
    cfg.seed = 3;
    const auto samples = generate_language_streams(cfg);
    REQUIRE(samples.size() == 1);
    CHECK(multilingual_nll(samples[0]) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("full corruption costs log V per position") {
    LanguageStreamConfig cfg;
    cfg.vocab_sizes = {4};
    cfg.positions = 3;
    cfg.corruption = 1.0;
    cfg.seed = 7;
    const auto samples = generate_language_streams(cfg);
    CHECK(multilingual_nll(samples[0]) == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("half corruption matches the closed form") {
    LanguageStreamConfig cfg;
    cfg.vocab_sizes = {4};
    cfg.positions = 6;
    cfg.corruption = 0.5;
    cfg.seed = 11;
    const auto samples = generate_language_streams(cfg);
    const double per_position = -std::log(0.5 + 0.5 / 4.0);
    CHECK(multilingual_nll(samples[0]) == doctest::Approx(6.0 * per_position).epsilon(1e-9));
}

TEST_CASE("stream sampling is deterministic and weighted as configured") {
    LanguageStreamConfig cfg;
    cfg.vocab_sizes = {6, 9};
    cfg.aux_weights = {0.3};
    cfg.positions = 4;
    cfg.corruption = 0.25;
    cfg.n_samples = 2;
    cfg.seed = 15;
    const auto a = generate_language_streams(cfg);
    const auto b = generate_language_streams(cfg);
    REQUIRE(a.size() == 2);
    REQUIRE(a[0].size() == 2);
    CHECK(a[0][0].weight == 1.0);
    CHECK(a[0][1].weight == 0.3);
    CHECK(a[0][1].predictions[0] == b[0][1].predictions[0]);
    CHECK(multilingual_nll(a[0]) == multilingual_nll(b[0]));
}

}  // TEST_SUITE
