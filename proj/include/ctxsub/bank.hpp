#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxsub/error.hpp"

namespace ctxsub {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Immutable set of fixed-dimension float32 descriptors with string ids.
/// Construct through make_bank / load_bank only; both enforce the type
/// invariants (unique ids, finite entries, consistent dimension). Treat
/// instances as read-only after construction — every consumer in this
/// library takes const references and banks are safe to share across
/// threads.
struct DescriptorBank {
    std::uint32_t dim = 0;
    std::vector<float> data;  // count * dim, row-major
    std::vector<std::string> ids;

    std::size_t count() const { return ids.size(); }

    Eigen::Map<const RowMatrixXf> matrix() const {
        return {data.data(), static_cast<Eigen::Index>(count()), static_cast<Eigen::Index>(dim)};
    }

    const float* row_ptr(std::size_t i) const { return data.data() + i * dim; }

    /// Row widened to double for downstream math.
    Eigen::VectorXd row(std::size_t i) const;

    std::optional<std::size_t> find(const std::string& id) const;

  private:
    friend DescriptorBank make_bank(std::uint32_t, std::vector<float>, std::vector<std::string>);
    friend DescriptorBank load_bank(const std::filesystem::path&);
    mutable std::unordered_map<std::string, std::size_t> id_to_row_;
};

enum class TaskLabel { Text = 0, Image = 1, TextImage = 2 };

const char* task_label_name(TaskLabel t);
TaskLabel task_label_from_name(const std::string& name);  // throws MalformedLine

/// One ranking instance: a context vector, one positive target id and K
/// negative target ids resolving into some bank, plus the task routing label.
struct TargetEpisode {
    Eigen::VectorXd context;
    std::string positive_id;
    std::vector<std::string> negative_ids;
    TaskLabel task = TaskLabel::Image;
};

/// Validates invariants and builds the id lookup; throws on violation.
DescriptorBank make_bank(std::uint32_t dim, std::vector<float> data, std::vector<std::string> ids);

/// Binary bank format: magic "NEDB", u32 version=1, u32 count, u32 dim,
/// then count*dim float32 little-endian row-major. Ids live in the sidecar
/// "<path>.ids.json" (a JSON array of strings).
DescriptorBank load_bank(const std::filesystem::path& path);
void save_bank(const DescriptorBank& bank, const std::filesystem::path& path);

/// Episode files are JSON lines: {"context":[...],"pos":"id","neg":["id",...],
/// "task":"text"|"image"|"both"}. An optional first line {"context_dim":N}
/// overrides the default rule that contexts match bank.dim. Lines starting
/// with '#' and blank lines are skipped.
std::vector<TargetEpisode> load_episodes(const std::filesystem::path& path, const DescriptorBank& bank);
void save_episodes(std::span<const TargetEpisode> episodes, const std::filesystem::path& path,
                   std::optional<std::uint32_t> context_dim_header = std::nullopt);

}  // namespace ctxsub
