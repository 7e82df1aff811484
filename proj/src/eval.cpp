#include "ctxsub/eval.hpp"

#include <algorithm>
#include <cmath>

#include "ctxsub/io.hpp"
#include "ctxsub/parallel.hpp"
#include "json.hpp"

namespace ctxsub {

int recall_at(std::span<const std::pair<std::string, double>> scores, const std::string& positive_id,
              int l) {
    if (l < 1) raise(ErrorCode::InvalidArgument, "recall cutoff must be >= 1");
    const std::pair<std::string, double>* positive = nullptr;
    for (const auto& s : scores) {
        if (!std::isfinite(s.second))
            raise(ErrorCode::InvalidArgument, "non-finite score for candidate '" + s.first + "'");
        if (s.first == positive_id) positive = &s;
    }
    if (!positive) raise(ErrorCode::MissingPositive, "candidate '" + positive_id + "' not among scores");

    std::size_t better = 0;
    for (const auto& s : scores) {
        if (&s == positive) continue;
        if (s.second > positive->second || (s.second == positive->second && s.first < positive_id)) ++better;
    }
    return better + 1 <= static_cast<std::size_t>(l) ? 1 : 0;
}

const char* score_kind_name(ScoreKind s) { return s == ScoreKind::Cosine ? "cosine" : "dot"; }

ScoreKind score_kind_from_name(const std::string& name) {
    if (name == "cosine") return ScoreKind::Cosine;
    if (name == "dot") return ScoreKind::Dot;
    raise(ErrorCode::InvalidArgument, "unknown score kind '" + name + "'");
}

namespace {
double candidate_score(ScoreKind kind, const Eigen::VectorXd& psi_star, const DescriptorBank& bank,
                       std::size_t row) {
    double dot = 0.0, nr = 0.0;
    const float* p = bank.row_ptr(row);
    for (std::uint32_t j = 0; j < bank.dim; ++j) {
        const double x = static_cast<double>(p[j]);
        dot += psi_star[j] * x;
        nr += x * x;
    }
    if (kind == ScoreKind::Dot) return dot;
    const double nq = psi_star.norm();
    if (nq == 0.0 || nr == 0.0) return 0.0;
    return dot / (nq * std::sqrt(nr));
}
}  // namespace

std::map<int, double> evaluate_ranking(const HeadParams& params, std::span<const TargetEpisode> episodes,
                                       const DescriptorBank& bank, std::span<const int> l_values,
                                       ScoreKind score, int threads) {
    if (episodes.empty()) raise(ErrorCode::InvalidArgument, "evaluate_ranking needs episodes");
    if (l_values.empty()) raise(ErrorCode::InvalidArgument, "evaluate_ranking needs cutoffs");
    if (static_cast<int>(bank.dim) != params.shape.descriptor_dim)
        raise(ErrorCode::DimensionMismatch, "bank dim != head descriptor dim");

    std::vector<std::vector<int>> hits(episodes.size());
    parallel_for(episodes.size(), threads, [&](std::size_t e) {
        const auto& ep = episodes[e];
        const Eigen::VectorXd psi_star = head_forward(params, ep.context).psi_star;
        std::vector<std::pair<std::string, double>> scores;
        scores.reserve(1 + ep.negative_ids.size());
        const auto pos_row = bank.find(ep.positive_id);
        if (!pos_row) raise(ErrorCode::UnknownId, "unknown id '" + ep.positive_id + "'");
        scores.emplace_back(ep.positive_id, candidate_score(score, psi_star, bank, *pos_row));
        for (const auto& id : ep.negative_ids) {
            const auto row = bank.find(id);
            if (!row) raise(ErrorCode::UnknownId, "unknown id '" + id + "'");
            scores.emplace_back(id, candidate_score(score, psi_star, bank, *row));
        }
        hits[e].reserve(l_values.size());
        for (const int l : l_values) hits[e].push_back(recall_at(scores, ep.positive_id, l));
    });

    std::map<int, double> mean;
    for (std::size_t li = 0; li < l_values.size(); ++li) {
        double sum = 0.0;
        for (const auto& h : hits) sum += h[li];
        mean[l_values[li]] = sum / static_cast<double>(episodes.size());
    }
    return mean;
}

double discriminator_accuracy(const DiscriminatorParams& params, std::span<const DiscInstance> instances) {
    if (instances.empty()) raise(ErrorCode::InvalidArgument, "discriminator_accuracy needs instances");
    std::size_t correct = 0;
    for (const auto& inst : instances)
        if (discriminator_predict(params, inst.psi) == static_cast<int>(inst.label)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(instances.size());
}

std::vector<SweepRecord> sweep(const std::vector<std::pair<std::string, std::vector<double>>>& grid,
                               const SweepRunner& runner, std::int64_t seed, std::size_t max_points,
                               const SweepFilter& filter, std::vector<std::string>* skipped_log) {
    if (grid.empty()) raise(ErrorCode::InvalidArgument, "sweep needs a non-empty grid");
    for (const auto& [name, values] : grid)
        if (values.empty()) raise(ErrorCode::InvalidArgument, "grid axis '" + name + "' has no values");

    std::vector<std::pair<std::string, std::vector<double>>> axes = grid;
    std::sort(axes.begin(), axes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < axes.size(); ++i)
        if (axes[i].first == axes[i - 1].first)
            raise(ErrorCode::InvalidArgument, "duplicate grid axis '" + axes[i].first + "'");

    std::size_t total = 1;
    for (const auto& [name, values] : axes) {
        if (values.size() > max_points / total)
            raise(ErrorCode::GridTooLarge, "cartesian grid exceeds " + std::to_string(max_points) + " points");
        total *= values.size();
    }

    std::vector<SweepRecord> records;
    std::vector<std::size_t> odo(axes.size(), 0);
    for (std::size_t point = 0; point < total; ++point) {
        SweepPoint values;
        for (std::size_t a = 0; a < axes.size(); ++a) values[axes[a].first] = axes[a].second[odo[a]];

        bool feasible = !filter || filter(values);
        if (feasible) {
            for (const auto& [metric, value] : runner(values, seed)) {
                if (std::find(metric_registry().begin(), metric_registry().end(), metric) ==
                    metric_registry().end())
                    raise(ErrorCode::InvalidArgument, "metric '" + metric + "' not in the registry");
                if (!std::isfinite(value))
                    raise(ErrorCode::NonFiniteLoss, "metric '" + metric + "' is not finite");
                SweepRecord rec;
                for (const auto& [name, v] : values) rec.params.emplace_back(name, v);
                rec.metric_name = metric;
                rec.metric_value = value;
                rec.seed = seed;
                records.push_back(std::move(rec));
            }
        } else if (skipped_log) {
            std::string desc;
            for (const auto& [name, v] : values) desc += name + "=" + format_double(v) + " ";
            skipped_log->push_back(desc);
        }

        // odometer, last axis fastest
        for (std::size_t a = axes.size(); a-- > 0;) {
            if (++odo[a] < axes[a].second.size()) break;
            odo[a] = 0;
        }
    }
    return records;
}

void write_sweep_csv(std::span<const SweepRecord> records, const std::filesystem::path& path) {
    std::string out;
    if (!records.empty()) {
        for (const auto& [name, value] : records.front().params) out += "param:" + name + ",";
        out += "metric,value,seed\n";
        for (const auto& rec : records) {
            for (const auto& [name, value] : rec.params) out += format_double(value) + ",";
            out += rec.metric_name + "," + format_double(rec.metric_value) + "," + std::to_string(rec.seed) +
                   "\n";
        }
    } else {
        out = "metric,value,seed\n";
    }
    atomic_write_file(path, out);
}

void write_sweep_jsonl(std::span<const SweepRecord> records, const std::filesystem::path& path) {
    std::string out;
    for (const auto& rec : records) {
        nlohmann::json j;
        for (const auto& [name, value] : rec.params) j["params"][name] = value;
        j["metric"] = rec.metric_name;
        j["value"] = rec.metric_value;
        j["seed"] = rec.seed;
        out += j.dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

}  // namespace ctxsub
