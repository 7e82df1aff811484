#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxsub/bank.hpp"
#include "ctxsub/model.hpp"

namespace ctxsub {

/// 1 iff positive_id ranks within the top l by descending score; exact
/// score ties order by ascending candidate id.
int recall_at(std::span<const std::pair<std::string, double>> scores, const std::string& positive_id,
              int l);

enum class ScoreKind { Cosine = 0, Dot = 1 };

const char* score_kind_name(ScoreKind s);
ScoreKind score_kind_from_name(const std::string& name);

/// Mean recall over episodes for each cutoff: each episode's candidates
/// (positive plus negatives) are scored against the head output psi_star.
std::map<int, double> evaluate_ranking(const HeadParams& params, std::span<const TargetEpisode> episodes,
                                       const DescriptorBank& bank, std::span<const int> l_values,
                                       ScoreKind score = ScoreKind::Cosine, int threads = 1);

double discriminator_accuracy(const DiscriminatorParams& params, std::span<const DiscInstance> instances);

struct SweepRecord {
    std::vector<std::pair<std::string, double>> params;  // grid point, names sorted
    std::string metric_name;
    double metric_value;
    std::int64_t seed;
};

using SweepPoint = std::map<std::string, double>;
/// Evaluates one grid point; returns (metric name, value) pairs.
using SweepRunner = std::function<std::vector<std::pair<std::string, double>>(const SweepPoint&,
                                                                              std::int64_t seed)>;
using SweepFilter = std::function<bool(const SweepPoint&)>;

inline const std::vector<std::string>& metric_registry() {
    static const std::vector<std::string> names = {"R@1", "R@2", "R@3", "R@5", "accuracy", "loss"};
    return names;
}

/// Cartesian sweep in lexicographic order (parameter names sorted, last name
/// fastest). Infeasible points (filter false) are skipped; their names land
/// in skipped_log when given. Throws GridTooLarge past max_points.
std::vector<SweepRecord> sweep(const std::vector<std::pair<std::string, std::vector<double>>>& grid,
                               const SweepRunner& runner, std::int64_t seed, std::size_t max_points = 100000,
                               const SweepFilter& filter = {}, std::vector<std::string>* skipped_log = nullptr);

/// CSV with header "param:<name>,...,metric,value,seed" plus a JSON-lines
/// twin of the same records.
void write_sweep_csv(std::span<const SweepRecord> records, const std::filesystem::path& path);
void write_sweep_jsonl(std::span<const SweepRecord> records, const std::filesystem::path& path);

}  // namespace ctxsub
