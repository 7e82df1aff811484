#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <fstream>

#include "ctxsub/eval.hpp"
#include "ctxsub/io.hpp"
#include "ctxsub/rng.hpp"
#include "ctxsub/synth.hpp"
#include "doctest.h"

using namespace ctxsub;

namespace {
using Scores = std::vector<std::pair<std::string, double>>;

/// Rank oracle: full stable sort by (-score, id).
int rank_oracle(Scores scores, const std::string& positive_id) {
    std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i].first == positive_id) return static_cast<int>(i) + 1;
    return -1;
}
}  // namespace

TEST_SUITE("eval") {

TEST_CASE("a winning positive is recalled at one") {
    const Scores s = {{"pos", 2.0}, {"a", 1.0}, {"b", 0.5}};
    CHECK(recall_at(s, "pos", 1) == 1);
}

TEST_CASE("rank two fails at one and passes at two") {
    const Scores s = {{"a", 3.0}, {"pos", 2.0}, {"b", 1.0}, {"c", 0.9}, {"d", 0.8}, {"e", 0.7}};
    CHECK(recall_at(s, "pos", 1) == 0);
    CHECK(recall_at(s, "pos", 2) == 1);
}

TEST_CASE("ties follow the id order and match the rank oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Scores s;
        const int n = 2 + static_cast<int>(rng.below(8));
        const bool all_equal = trial % 3 == 0;
        for (int i = 0; i < n; ++i) {
            const double v = all_equal ? 1.0 : std::round(rng.uniform() * 4) / 4.0;
            s.emplace_back("c" + std::to_string(i), v);
        }
        const std::string pos = "c" + std::to_string(rng.below(n));
        const int rank = rank_oracle(s, pos);
        for (int l = 1; l <= n; ++l) CHECK(recall_at(s, pos, l) == (rank <= l ? 1 : 0));
    }
}

TEST_CASE("recall is monotone in the cutoff") {
    Rng rng(5);
    Scores s;
    for (int i = 0; i < 10; ++i) s.emplace_back("c" + std::to_string(i), rng.normal());
    int prev = 0;
    for (int l = 1; l <= 10; ++l) {
        const int r = recall_at(s, "c4", l);
        CHECK(r >= prev);
        prev = r;
    }
    CHECK(prev == 1);
}

TEST_CASE("a missing positive is a typed error") {
    const Scores s = {{"a", 1.0}};
    try {
        recall_at(s, "nope", 1);
        FAIL("expected MissingPositive");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingPositive);
    }
}

TEST_CASE("recall is invariant to positive rescaling of the scores") {
    Rng rng(7);
    Scores s;
    for (int i = 0; i < 8; ++i) s.emplace_back("c" + std::to_string(i), rng.normal());
    Scores scaled = s;
    for (auto& [id, v] : scaled) v *= 37.5;
    for (int l = 1; l <= 8; ++l) CHECK(recall_at(s, "c2", l) == recall_at(scaled, "c2", l));
}

TEST_CASE("evaluate_ranking scores one obvious episode") {
    SynthConfig cfg;
    cfg.dim = 8;
    cfg.n_clusters = 2;
    cfg.bank_size = 10;
    cfg.n_episodes = 1;
    cfg.k = 3;
    cfg.noise = 0.0;
    cfg.context_noise = 0.0;
    cfg.context_dim = 8;
    cfg.seed = 9;
    const auto data = generate(cfg);

    // identity-ish head: psi_star == psi, and psi == projected positive center
    HeadShape shape{HeadKind::SingleFc, 8, 0, 8, 0};
    HeadParams p = init_head(shape, 0.01, 1);
    p.w2 = data.context_map.inverse();  // undo the projection
    p.b2.setZero();

    const std::vector<int> cuts = {1};
    const auto recall = evaluate_ranking(p, data.episodes, data.bank, cuts);
    CHECK(recall.at(1) == 1.0);
}

TEST_CASE("evaluate_ranking is independent of the thread count") {
    SynthConfig cfg;
    cfg.dim = 8;
    cfg.n_clusters = 4;
    cfg.bank_size = 60;
    cfg.n_episodes = 40;
    cfg.k = 5;
    cfg.seed = 11;
    const auto data = generate(cfg);
    const HeadParams p = init_head({HeadKind::MainPlusContext, 8, 8, 8, 2}, 0.05, 3);
    const std::vector<int> cuts = {1, 2, 3};
    const auto one = evaluate_ranking(p, data.episodes, data.bank, cuts, ScoreKind::Cosine, 1);
    const auto four = evaluate_ranking(p, data.episodes, data.bank, cuts, ScoreKind::Cosine, 4);
    CHECK(one == four);
}

TEST_CASE("sweep emits one record per feasible point in lexicographic order") {
    const std::vector<std::pair<std::string, std::vector<double>>> grid = {
        {"eta", {2, 3}}, {"eta_prime", {0, 1, 2}}};
    std::vector<std::string> seen;
    const auto records = sweep(
        grid,
        [&](const SweepPoint& point, std::int64_t seed) {
            CHECK(seed == 42);
            seen.push_back("eta=" + std::to_string(static_cast<int>(point.at("eta"))) +
                           ",eta_prime=" + std::to_string(static_cast<int>(point.at("eta_prime"))));
            return std::vector<std::pair<std::string, double>>{{"loss", point.at("eta")}};
        },
        42);
    CHECK(records.size() == 6);
    const std::vector<std::string> want = {"eta=2,eta_prime=0", "eta=2,eta_prime=1", "eta=2,eta_prime=2",
                                           "eta=3,eta_prime=0", "eta=3,eta_prime=1", "eta=3,eta_prime=2"};
    CHECK(seen == want);
}

TEST_CASE("a one-point grid produces a single record") {
    const auto records = sweep({{"sigma", {0.5}}},
                               [](const SweepPoint&, std::int64_t) {
                                   return std::vector<std::pair<std::string, double>>{{"R@1", 0.8}};
                               },
                               7);
    REQUIRE(records.size() == 1);
    CHECK(records[0].metric_name == "R@1");
    CHECK(records[0].metric_value == 0.8);
    CHECK(records[0].seed == 7);
}

TEST_CASE("infeasible points are skipped and logged") {
    const std::vector<std::pair<std::string, std::vector<double>>> grid = {
        {"eta", {2, 3}}, {"eta_prime", {0, 2, 3}}};
    std::vector<std::string> skipped;
    const auto records = sweep(
        grid,
        [](const SweepPoint& point, std::int64_t) {
            return std::vector<std::pair<std::string, double>>{{"R@1", point.at("eta")}};
        },
        0, 100000, [](const SweepPoint& p) { return p.at("eta_prime") <= p.at("eta"); }, &skipped);
    CHECK(records.size() == 5);  // eta=2,eta_prime=3 is infeasible
    CHECK(skipped.size() == 1);
    CHECK(skipped[0].find("eta_prime=3") != std::string::npos);
}

TEST_CASE("oversized grids are rejected") {
    std::vector<double> many(200);
    for (int i = 0; i < 200; ++i) many[i] = i;
    try {
        sweep({{"a", many}, {"b", many}},
              [](const SweepPoint&, std::int64_t) {
                  return std::vector<std::pair<std::string, double>>{};
              },
              0, 1000);
        FAIL("expected GridTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::GridTooLarge);
    }
}

TEST_CASE("unknown metric names are rejected") {
    CHECK_THROWS_AS(sweep({{"a", {1.0}}},
                          [](const SweepPoint&, std::int64_t) {
                              return std::vector<std::pair<std::string, double>>{{"bogus", 1.0}};
                          },
                          0),
                    Error);
}

TEST_CASE("sweep files carry the param columns and reload consistently") {
    const auto dir = std::filesystem::temp_directory_path() / "ctxsub_sweep";
    std::filesystem::create_directories(dir);
    const auto records = sweep({{"eta", {2, 3}}, {"sigma", {0.1, 0.5}}},
                               [](const SweepPoint& p, std::int64_t) {
                                   return std::vector<std::pair<std::string, double>>{
                                       {"R@1", p.at("eta") + p.at("sigma")}};
                               },
                               3);
    write_sweep_csv(records, dir / "s.csv");
    write_sweep_jsonl(records, dir / "s.jsonl");

    const std::string csv = read_file_bytes(dir / "s.csv");
    CHECK(csv.rfind("param:eta,param:sigma,metric,value,seed\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    write_sweep_csv(records, dir / "s2.csv");
    CHECK(read_file_bytes(dir / "s.csv") == read_file_bytes(dir / "s2.csv"));
}

}  // TEST_SUITE
