#include "ctxsub/bank.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ctxsub/io.hpp"
#include "json.hpp"

namespace ctxsub {

namespace {
constexpr char kBankMagic[4] = {'N', 'E', 'D', 'B'};
constexpr std::uint32_t kBankVersion = 1;

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return path.string() + ".ids.json";
}
}  // namespace

Eigen::VectorXd DescriptorBank::row(std::size_t i) const {
    Eigen::VectorXd v(dim);
    const float* p = row_ptr(i);
    for (std::uint32_t j = 0; j < dim; ++j) v[j] = static_cast<double>(p[j]);
    return v;
}

std::optional<std::size_t> DescriptorBank::find(const std::string& id) const {
    const auto it = id_to_row_.find(id);
    if (it == id_to_row_.end()) return std::nullopt;
    return it->second;
}

DescriptorBank make_bank(std::uint32_t dim, std::vector<float> data, std::vector<std::string> ids) {
    if (dim == 0) raise(ErrorCode::InvalidArgument, "bank dim must be positive");
    if (data.size() != static_cast<std::size_t>(dim) * ids.size())
        raise(ErrorCode::TruncatedPayload,
              "data holds " + std::to_string(data.size()) + " values, expected " +
                  std::to_string(static_cast<std::size_t>(dim) * ids.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            raise(ErrorCode::NonFiniteEntry,
                  "non-finite value at row " + std::to_string(i / dim) + " col " + std::to_string(i % dim));
    }
    DescriptorBank bank;
    bank.dim = dim;
    bank.data = std::move(data);
    bank.ids = std::move(ids);
    bank.id_to_row_.reserve(bank.ids.size());
    for (std::size_t i = 0; i < bank.ids.size(); ++i) {
        if (!bank.id_to_row_.emplace(bank.ids[i], i).second)
            raise(ErrorCode::DuplicateId, "duplicate id '" + bank.ids[i] + "' at row " + std::to_string(i));
    }
    return bank;
}

DescriptorBank load_bank(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    if (r.tag(4) != std::string(kBankMagic, 4))
        raise(ErrorCode::BadMagic, path.string() + ": expected NEDB at offset 0");
    const std::uint32_t version = r.u32();
    if (version != kBankVersion)
        raise(ErrorCode::VersionMismatch,
              path.string() + ": version " + std::to_string(version) + ", expected " +
                  std::to_string(kBankVersion));
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();
    if (dim == 0) raise(ErrorCode::InvalidArgument, path.string() + ": dim 0 in header");
    const std::size_t want = static_cast<std::size_t>(count) * dim * 4;
    if (r.remaining() != want)
        raise(ErrorCode::TruncatedPayload,
              path.string() + ": payload is " + std::to_string(r.remaining()) + " bytes at offset " +
                  std::to_string(r.offset()) + ", header implies " + std::to_string(want));
    std::vector<float> data(static_cast<std::size_t>(count) * dim);
    for (auto& v : data) v = r.f32();

    const auto ids_path = sidecar_path(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_bytes(ids_path));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::IoFailure, ids_path.string() + ": " + e.what());
    }
    if (!j.is_array())
        raise(ErrorCode::IoFailure, ids_path.string() + ": expected a JSON array of strings");
    std::vector<std::string> ids;
    ids.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_string())
            raise(ErrorCode::IoFailure, ids_path.string() + ": non-string id at index " +
                                            std::to_string(ids.size()));
        ids.push_back(e.get<std::string>());
    }
    if (ids.size() != count)
        raise(ErrorCode::IdCountMismatch, ids_path.string() + ": " + std::to_string(ids.size()) +
                                              " ids for " + std::to_string(count) + " rows");
    return make_bank(dim, std::move(data), std::move(ids));
}

void save_bank(const DescriptorBank& bank, const std::filesystem::path& path) {
    std::string bytes;
    bytes.reserve(16 + bank.data.size() * 4);
    bytes.append(kBankMagic, 4);
    put_u32(bytes, kBankVersion);
    put_u32(bytes, static_cast<std::uint32_t>(bank.count()));
    put_u32(bytes, bank.dim);
    for (const float v : bank.data) put_f32(bytes, v);
    atomic_write_file(path, bytes);

    nlohmann::json ids = nlohmann::json::array();
    for (const auto& id : bank.ids) ids.push_back(id);
    atomic_write_file(sidecar_path(path), ids.dump() + "\n");
}

const char* task_label_name(TaskLabel t) {
    switch (t) {
        case TaskLabel::Text: return "text";
        case TaskLabel::Image: return "image";
        case TaskLabel::TextImage: return "both";
    }
    return "image";
}

TaskLabel task_label_from_name(const std::string& name) {
    if (name == "text") return TaskLabel::Text;
    if (name == "image") return TaskLabel::Image;
    if (name == "both") return TaskLabel::TextImage;
    raise(ErrorCode::MalformedLine, "unknown task label '" + name + "'");
}

std::vector<TargetEpisode> load_episodes(const std::filesystem::path& path, const DescriptorBank& bank) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoFailure, "cannot open " + path.string());

    std::vector<TargetEpisode> episodes;
    std::uint32_t context_dim = bank.dim;
    bool saw_record = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object())
            raise(ErrorCode::MalformedLine,
                  path.string() + ":" + std::to_string(line_no) + ": expected a JSON object");
        if (j.contains("context_dim") && !j.contains("pos")) {
            if (saw_record)
                raise(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no) +
                                                    ": header after first record");
            context_dim = j.at("context_dim").get<std::uint32_t>();
            continue;
        }
        if (!j.contains("context") || !j.contains("pos") || !j.contains("neg") || !j.contains("task"))
            raise(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no) +
                                                ": record needs context/pos/neg/task fields");
        TargetEpisode ep;
        const auto& ctx = j.at("context");
        if (!ctx.is_array())
            raise(ErrorCode::MalformedLine,
                  path.string() + ":" + std::to_string(line_no) + ": context must be an array");
        if (ctx.size() != context_dim)
            raise(ErrorCode::DimensionMismatch,
                  path.string() + ":" + std::to_string(line_no) + ": context has " +
                      std::to_string(ctx.size()) + " entries, expected " + std::to_string(context_dim));
        ep.context.resize(static_cast<Eigen::Index>(ctx.size()));
        for (std::size_t i = 0; i < ctx.size(); ++i) {
            if (!ctx[i].is_number())
                raise(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no) +
                                                    ": non-numeric context entry");
            ep.context[static_cast<Eigen::Index>(i)] = ctx[i].get<double>();
            if (!std::isfinite(ep.context[static_cast<Eigen::Index>(i)]))
                raise(ErrorCode::NonFiniteEntry, path.string() + ":" + std::to_string(line_no) +
                                                     ": non-finite context entry");
        }
        ep.positive_id = j.at("pos").get<std::string>();
        if (!bank.find(ep.positive_id))
            raise(ErrorCode::UnknownId,
                  path.string() + ":" + std::to_string(line_no) + ": unknown id '" + ep.positive_id + "'");
        const auto& neg = j.at("neg");
        if (!neg.is_array() || neg.empty())
            raise(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no) +
                                                ": neg must be a non-empty array");
        for (const auto& n : neg) {
            const auto id = n.get<std::string>();
            if (!bank.find(id))
                raise(ErrorCode::UnknownId,
                      path.string() + ":" + std::to_string(line_no) + ": unknown id '" + id + "'");
            if (id == ep.positive_id)
                raise(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no) +
                                                    ": positive id '" + id + "' listed as negative");
            ep.negative_ids.push_back(id);
        }
        try {
            ep.task = task_label_from_name(j.at("task").get<std::string>());
        } catch (const Error&) {
            raise(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no) +
                                                ": bad task label");
        }
        episodes.push_back(std::move(ep));
        saw_record = true;
    }
    return episodes;
}

void save_episodes(std::span<const TargetEpisode> episodes, const std::filesystem::path& path,
                   std::optional<std::uint32_t> context_dim_header) {
    std::string out;
    if (context_dim_header) {
        nlohmann::json h;
        h["context_dim"] = *context_dim_header;
        out += h.dump();
        out += '\n';
    }
    for (const auto& ep : episodes) {
        nlohmann::json j;
        j["context"] = nlohmann::json::array();
        for (Eigen::Index i = 0; i < ep.context.size(); ++i) j["context"].push_back(ep.context[i]);
        j["pos"] = ep.positive_id;
        j["neg"] = ep.negative_ids;
        j["task"] = task_label_name(ep.task);
        out += j.dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

}  // namespace ctxsub
