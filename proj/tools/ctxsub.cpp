// ctxsub: batch pipeline over descriptor banks. Subcommands cover data
// generation, index building, retrieval, subspace embedding, head and
// discriminator training, ranking evaluation, grid sweeps and gradient
// checking. Every command validates flags before touching the filesystem,
// writes outputs atomically and drops a <command>.run.json manifest next
// to them.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctxsub/bank.hpp"
#include "ctxsub/embed.hpp"
#include "ctxsub/eval.hpp"
#include "ctxsub/io.hpp"
#include "ctxsub/model.hpp"
#include "ctxsub/parallel.hpp"
#include "ctxsub/rng.hpp"
#include "ctxsub/search.hpp"
#include "ctxsub/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctxsub;

namespace {

constexpr const char* kVersion = "0.1.0";

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    const json& seed, double wall_seconds) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["seed"] = seed;
    m["version"] = kVersion;
    m["wall_time_seconds"] = wall_seconds;
    atomic_write_file(dir / (command + ".run.json"), m.dump(2) + "\n");
}

// ---- matrix <-> bank-format helpers for parameter files ----

void save_matrix(const Eigen::MatrixXd& m, const fs::path& path) {
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ids.push_back("r" + std::to_string(i));
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(static_cast<float>(m(i, j)));
    }
    save_bank(make_bank(static_cast<std::uint32_t>(m.cols()), std::move(data), std::move(ids)), path);
}

Eigen::MatrixXd load_matrix(const fs::path& path) {
    const DescriptorBank bank = load_bank(path);
    Eigen::MatrixXd m(bank.count(), bank.dim);
    for (std::size_t i = 0; i < bank.count(); ++i) m.row(static_cast<Eigen::Index>(i)) = bank.row(i);
    return m;
}

void save_vector(const Eigen::VectorXd& v, const fs::path& path) {
    save_matrix(v.transpose(), path);
}

Eigen::VectorXd load_vector(const fs::path& path) {
    const Eigen::MatrixXd m = load_matrix(path);
    if (m.rows() != 1) raise(ErrorCode::ShapeMismatch, path.string() + ": expected a single row");
    return m.row(0);
}

// ---- subspace files written by `embed`, read by `train` ----

struct SubspaceSet {
    EmbedConfig config;
    std::string mode;
    std::vector<std::pair<ContextSubspace, ContextSubspace>> pairs;
};

void save_subspaces(const SubspaceSet& set, const fs::path& dir) {
    const std::size_t n = set.pairs.size();
    const std::uint32_t eta_prime = set.config.eta_prime;
    const std::uint32_t dim =
        n == 0 ? 1 : static_cast<std::uint32_t>(set.pairs.front().first.mean.size());

    std::vector<float> mean_data;
    std::vector<std::string> mean_ids;
    std::vector<float> basis_data;
    std::vector<std::string> basis_ids;
    json map;
    map["mode"] = set.mode;
    map["eta"] = set.config.eta;
    map["eta_prime"] = eta_prime;
    map["sigma"] = set.config.sigma;
    map["negative_weighting"] = negative_weighting_name(set.config.negative_weighting);
    map["episodes"] = json::array();

    for (std::size_t e = 0; e < n; ++e) {
        const auto& [pos, neg] = set.pairs[e];
        const std::string tag = "ep" + std::to_string(e);
        for (const auto* sub : {&pos, &neg}) {
            const bool is_pos = sub == &pos;
            mean_ids.push_back(tag + (is_pos ? ":pos:mu" : ":neg:mu"));
            for (Eigen::Index j = 0; j < sub->mean.size(); ++j)
                mean_data.push_back(static_cast<float>(sub->mean[j]));
            for (std::uint32_t k = 0; k < eta_prime; ++k) {
                basis_ids.push_back(tag + (is_pos ? ":pos:u" : ":neg:u") + std::to_string(k));
                for (Eigen::Index j = 0; j < sub->basis.rows(); ++j)
                    basis_data.push_back(static_cast<float>(sub->basis(j, k)));
            }
        }
        json ep;
        ep["index"] = e;
        ep["means_rows"] = {2 * e, 2 * e + 1};
        ep["basis_rows"] = {2 * e * eta_prime, 2 * (e + 1) * eta_prime};
        ep["pos_eigenvalues"] = std::vector<double>(pos.eigenvalues.data(),
                                                    pos.eigenvalues.data() + pos.eigenvalues.size());
        ep["neg_eigenvalues"] = std::vector<double>(neg.eigenvalues.data(),
                                                    neg.eigenvalues.data() + neg.eigenvalues.size());
        map["episodes"].push_back(std::move(ep));
    }

    save_bank(make_bank(dim, std::move(mean_data), std::move(mean_ids)), dir / "subspaces.means.nedb");
    save_bank(make_bank(dim, std::move(basis_data), std::move(basis_ids)), dir / "subspaces.basis.nedb");
    atomic_write_file(dir / "subspaces.map.json", map.dump(2) + "\n");
}

SubspaceSet load_subspaces(const fs::path& dir) {
    SubspaceSet set;
    json map;
    try {
        map = json::parse(read_file_bytes(dir / "subspaces.map.json"));
    } catch (const json::exception& e) {
        raise(ErrorCode::IoFailure, (dir / "subspaces.map.json").string() + ": " + e.what());
    }
    set.mode = map.at("mode").get<std::string>();
    set.config.eta = map.at("eta").get<std::uint32_t>();
    set.config.eta_prime = map.at("eta_prime").get<std::uint32_t>();
    set.config.sigma = map.at("sigma").get<double>();
    set.config.negative_weighting =
        negative_weighting_from_name(map.at("negative_weighting").get<std::string>());

    const DescriptorBank means = load_bank(dir / "subspaces.means.nedb");
    const DescriptorBank basis = load_bank(dir / "subspaces.basis.nedb");
    const std::size_t n = map.at("episodes").size();
    if (means.count() != 2 * n)
        raise(ErrorCode::IdCountMismatch, "means bank holds " + std::to_string(means.count()) +
                                              " rows for " + std::to_string(n) + " episodes");
    const std::uint32_t eta_prime = set.config.eta_prime;
    if (basis.count() != 2 * n * eta_prime)
        raise(ErrorCode::IdCountMismatch, "basis bank row count does not match eta_prime");
    if (basis.count() > 0 && basis.dim != means.dim)
        raise(ErrorCode::DimensionMismatch, "means and basis banks disagree on the descriptor dim");

    set.pairs.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
        auto fill = [&](ContextSubspace& sub, std::size_t mean_row, std::size_t basis_row0,
                        const char* eig_key) {
            sub.mean = means.row(mean_row);
            sub.basis.resize(means.dim, eta_prime);
            for (std::uint32_t k = 0; k < eta_prime; ++k) sub.basis.col(k) = basis.row(basis_row0 + k);
            const auto& eig = map.at("episodes")[e].at(eig_key);
            sub.eigenvalues.resize(static_cast<Eigen::Index>(eig.size()));
            for (std::size_t i = 0; i < eig.size(); ++i)
                sub.eigenvalues[static_cast<Eigen::Index>(i)] = eig[i].get<double>();
        };
        fill(set.pairs[e].first, 2 * e, 2 * e * eta_prime, "pos_eigenvalues");
        fill(set.pairs[e].second, 2 * e + 1, 2 * e * eta_prime + eta_prime, "neg_eigenvalues");
    }
    return set;
}

// ---- head/discriminator parameter files ----

void save_head_params(const HeadParams& p, const TrainConfig& cfg, Objective objective,
                      const fs::path& dir) {
    json map;
    map["model"] = "head";
    map["kind"] = head_kind_name(p.shape.kind);
    map["context_dim"] = p.shape.context_dim;
    map["hidden"] = p.shape.hidden;
    map["descriptor_dim"] = p.shape.descriptor_dim;
    map["eta_prime"] = p.shape.eta_prime;
    map["train"] = {{"learning_rate", cfg.learning_rate}, {"epochs", cfg.epochs},
                    {"batch_size", cfg.batch_size},       {"lambda", cfg.lambda},
                    {"seed", cfg.seed},                   {"init_scale", cfg.init_scale},
                    {"objective", objective_name(objective)}};
    map["files"] = json::object();

    auto dump = [&](const char* name, const Eigen::MatrixXd& m) {
        if (m.size() == 0) return;
        const std::string file = std::string("params.") + name + ".nedb";
        save_matrix(m, dir / file);
        map["files"][name] = file;
    };
    dump("w1", p.w1);
    dump("b1", p.b1.transpose());
    dump("w2", p.w2);
    dump("b2", p.b2.transpose());
    dump("wc", p.wc);
    dump("bc", p.bc.transpose());
    atomic_write_file(dir / "params.map.json", map.dump(2) + "\n");
}

HeadParams load_head_params(const fs::path& dir) {
    json map;
    try {
        map = json::parse(read_file_bytes(dir / "params.map.json"));
    } catch (const json::exception& e) {
        raise(ErrorCode::IoFailure, (dir / "params.map.json").string() + ": " + e.what());
    }
    if (map.at("model").get<std::string>() != "head")
        raise(ErrorCode::InvalidArgument, dir.string() + " holds no head parameters");
    HeadParams p;
    p.shape.kind = head_kind_from_name(map.at("kind").get<std::string>());
    p.shape.context_dim = map.at("context_dim").get<int>();
    p.shape.hidden = map.at("hidden").get<int>();
    p.shape.descriptor_dim = map.at("descriptor_dim").get<int>();
    p.shape.eta_prime = map.at("eta_prime").get<int>();

    auto fetch_mat = [&](const char* name, Eigen::MatrixXd& m) {
        if (map.at("files").contains(name)) m = load_matrix(dir / map["files"][name].get<std::string>());
    };
    auto fetch_vec = [&](const char* name, Eigen::VectorXd& v) {
        if (map.at("files").contains(name)) v = load_vector(dir / map["files"][name].get<std::string>());
    };
    fetch_mat("w1", p.w1);
    fetch_vec("b1", p.b1);
    fetch_mat("w2", p.w2);
    fetch_vec("b2", p.b2);
    fetch_mat("wc", p.wc);
    fetch_vec("bc", p.bc);
    return p;
}

void save_disc_params(const DiscriminatorParams& p, const fs::path& dir) {
    json map;
    map["model"] = "disc";
    map["context_dim"] = p.w.cols();
    map["files"] = {{"wd", "params.wd.nedb"}, {"bd", "params.bd.nedb"}};
    save_matrix(p.w, dir / "params.wd.nedb");
    save_vector(p.b, dir / "params.bd.nedb");
    atomic_write_file(dir / "params.map.json", map.dump(2) + "\n");
}

DiscriminatorParams load_disc_params(const fs::path& dir) {
    const json map = json::parse(read_file_bytes(dir / "params.map.json"));
    if (map.at("model").get<std::string>() != "disc")
        raise(ErrorCode::InvalidArgument, dir.string() + " holds no discriminator parameters");
    DiscriminatorParams p;
    p.w = load_matrix(dir / map.at("files").at("wd").get<std::string>());
    p.b = load_vector(dir / map.at("files").at("bd").get<std::string>());
    return p;
}

// ---- grid parsing: "eta=2..7,sigma=0.1|0.3|0.5" ----

std::vector<std::pair<std::string, std::vector<double>>> parse_grid(const std::string& text) {
    std::vector<std::pair<std::string, std::vector<double>>> grid;
    std::size_t at = 0;
    while (at < text.size()) {
        const std::size_t comma = text.find(',', at);
        const std::string item = text.substr(at, comma == std::string::npos ? comma : comma - at);
        at = comma == std::string::npos ? text.size() : comma + 1;
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            raise(ErrorCode::InvalidArgument, "grid item '" + item + "' is not name=values");
        const std::string name = item.substr(0, eq);
        const std::string spec = item.substr(eq + 1);
        std::vector<double> values;
        const std::size_t dots = spec.find("..");
        if (dots != std::string::npos) {
            const long lo = std::stol(spec.substr(0, dots));
            const long hi = std::stol(spec.substr(dots + 2));
            if (hi < lo) raise(ErrorCode::InvalidArgument, "grid range '" + spec + "' is descending");
            for (long v = lo; v <= hi; ++v) values.push_back(static_cast<double>(v));
        } else {
            std::size_t p = 0;
            while (p <= spec.size()) {
                const std::size_t bar = spec.find('|', p);
                const std::string tok =
                    spec.substr(p, bar == std::string::npos ? bar : bar - p);
                if (tok.empty()) raise(ErrorCode::InvalidArgument, "empty value in grid '" + item + "'");
                values.push_back(std::stod(tok));
                if (bar == std::string::npos) break;
                p = bar + 1;
            }
        }
        grid.emplace_back(name, std::move(values));
    }
    if (grid.empty()) raise(ErrorCode::InvalidArgument, "empty grid");
    return grid;
}

std::vector<int> parse_cutoffs(const std::string& text) {
    std::vector<int> out;
    std::size_t at = 0;
    while (at <= text.size()) {
        const std::size_t comma = text.find(',', at);
        out.push_back(std::stoi(text.substr(at, comma == std::string::npos ? comma : comma - at)));
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    return out;
}

// ---- subcommand implementations ----

struct GenArgs {
    SynthConfig cfg;
    std::string out;
};

int run_gen(const GenArgs& a) {
    Stopwatch timer;
    const SynthData data = generate(a.cfg);
    fs::create_directories(a.out);
    save_bank(data.bank, fs::path(a.out) / "bank.nedb");
    const std::uint32_t context_dim = a.cfg.context_dim == 0 ? a.cfg.dim : a.cfg.context_dim;
    save_episodes(data.episodes, fs::path(a.out) / "episodes.jsonl",
                  context_dim == a.cfg.dim ? std::nullopt : std::make_optional(context_dim));
    json clusters = json::array();
    for (const auto c : data.cluster_of_row) clusters.push_back(c);
    atomic_write_file(fs::path(a.out) / "clusters.json", clusters.dump() + "\n");

    const json config = {{"dim", a.cfg.dim},           {"clusters", a.cfg.n_clusters},
                         {"bank", a.cfg.bank_size},    {"episodes", a.cfg.n_episodes},
                         {"k", a.cfg.k},               {"noise", a.cfg.noise},
                         {"context_noise", a.cfg.context_noise}, {"context_dim", context_dim}};
    write_manifest(a.out, "gen", config, {},
                   {"bank.nedb", "bank.nedb.ids.json", "episodes.jsonl", "clusters.json"}, a.cfg.seed,
                   timer.seconds());
    return 0;
}

struct IndexArgs {
    std::string bank, metric = "l2", out;
    std::uint32_t partitions = 0, probes = 1;
    std::int64_t seed = 0;
};

int run_index(const IndexArgs& a) {
    Stopwatch timer;
    const DescriptorBank bank = load_bank(a.bank);
    SearchIndex index = build_index(bank, metric_from_name(a.metric), a.partitions, a.seed);
    index.probe_count = a.probes;
    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_index(index, out);
    const json config = {{"bank", a.bank}, {"metric", a.metric}, {"partitions", a.partitions},
                         {"probes", a.probes}};
    write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), "index", config, {a.bank},
                   {out.filename().string()}, a.seed, timer.seconds());
    return 0;
}

struct KnnArgs {
    std::string bank, queries, index_path, metric = "l2", out;
    std::uint32_t eta = 4;
    int threads = 0;
};

int run_knn(const KnnArgs& a) {
    Stopwatch timer;
    const DescriptorBank bank = load_bank(a.bank);
    const DescriptorBank queries = load_bank(a.queries);
    const SearchIndex index = a.index_path.empty()
                                  ? build_index(bank, metric_from_name(a.metric), 0, 0)
                                  : load_index(a.index_path);

    std::vector<Eigen::VectorXd> query_vecs(queries.count());
    for (std::size_t i = 0; i < queries.count(); ++i) query_vecs[i] = queries.row(i);
    const auto results = knn_batch(index, bank, query_vecs, a.eta, a.threads);

    std::string csv = "query_id,rank,neighbor_id,distance\n";
    for (std::size_t q = 0; q < results.size(); ++q)
        for (std::size_t r = 0; r < results[q].ids.size(); ++r)
            csv += queries.ids[q] + "," + std::to_string(r + 1) + "," + results[q].ids[r] + "," +
                   format_double(results[q].distances[r]) + "\n";
    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    atomic_write_file(out, csv);

    const json config = {{"bank", a.bank},     {"queries", a.queries}, {"index", a.index_path},
                         {"metric", a.metric}, {"eta", a.eta}};
    write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), "knn", config,
                   {a.bank, a.queries}, {out.filename().string()}, nullptr, timer.seconds());
    return 0;
}

struct EmbedArgs {
    std::string bank, episodes, mode = "nesa", weighting = "s_plus", metric = "l2", index_path, out;
    EmbedConfig cfg;
    int threads = 0;
};

int run_embed(const EmbedArgs& a) {
    Stopwatch timer;
    const DescriptorBank bank = load_bank(a.bank);
    const auto episodes = load_episodes(a.episodes, bank);
    const SearchIndex index = a.index_path.empty()
                                  ? build_index(bank, metric_from_name(a.metric), 0, 0)
                                  : load_index(a.index_path);
    EmbedConfig cfg = a.cfg;
    cfg.negative_weighting = negative_weighting_from_name(a.weighting);
    const EmbedMode mode = embed_mode_from_name(a.mode);

    const auto instances = build_instances(episodes, bank, index, mode, cfg, a.threads);
    SubspaceSet set;
    set.config = cfg;
    set.mode = a.mode;
    set.pairs.reserve(instances.size());
    for (const auto& inst : instances) set.pairs.emplace_back(inst.pos_subspace, inst.neg_subspace);

    fs::create_directories(a.out);
    save_subspaces(set, a.out);
    const json config = {{"bank", a.bank},   {"episodes", a.episodes},
                         {"mode", a.mode},   {"eta", cfg.eta},
                         {"eta_prime", cfg.eta_prime}, {"sigma", cfg.sigma},
                         {"negative_weighting", a.weighting}, {"metric", a.metric}};
    write_manifest(a.out, "embed", config, {a.bank, a.episodes},
                   {"subspaces.means.nedb", "subspaces.basis.nedb", "subspaces.map.json"}, nullptr,
                   timer.seconds());
    return 0;
}

struct TrainArgs {
    std::string bank, episodes, subspaces, out;
    std::string model = "head", objective = "combined", head = "main_plus_context";
    TrainConfig cfg;
    int hidden = 0;
};

int run_train(const TrainArgs& a) {
    Stopwatch timer;
    const DescriptorBank bank = load_bank(a.bank);
    const auto episodes = load_episodes(a.episodes, bank);
    if (episodes.empty()) raise(ErrorCode::InvalidArgument, a.episodes + " holds no episodes");

    std::string trace_csv = "epoch,value\n";
    if (a.model == "disc") {
        std::vector<DiscInstance> data(episodes.size());
        for (std::size_t i = 0; i < episodes.size(); ++i)
            data[i] = {episodes[i].context, episodes[i].task};
        const auto [params, trace] = discriminator_train(data, a.cfg);
        fs::create_directories(a.out);
        save_disc_params(params, a.out);
        for (std::size_t e = 0; e < trace.size(); ++e)
            trace_csv += std::to_string(e) + "," + format_double(trace[e]) + "\n";
    } else if (a.model == "head") {
        const Objective objective = objective_from_name(a.objective);
        const SearchIndex flat = build_index(bank, Metric::L2, 0, 0);
        auto instances = build_instances(episodes, bank, flat, std::nullopt, {}, 1);

        int eta_prime = 0;
        if (objective != Objective::Hinge) {
            if (a.subspaces.empty())
                raise(ErrorCode::InvalidArgument,
                      "--subspaces is required for the combined and nno objectives");
            const SubspaceSet set = load_subspaces(a.subspaces);
            if (set.pairs.size() != instances.size())
                raise(ErrorCode::IdCountMismatch,
                      "subspace set covers " + std::to_string(set.pairs.size()) + " episodes, data has " +
                          std::to_string(instances.size()));
            for (std::size_t i = 0; i < instances.size(); ++i) {
                instances[i].pos_subspace = set.pairs[i].first;
                instances[i].neg_subspace = set.pairs[i].second;
                instances[i].neighbor_mean = set.pairs[i].first.mean;
            }
            eta_prime = static_cast<int>(set.config.eta_prime);
        }

        HeadShape shape;
        shape.kind = head_kind_from_name(a.head);
        shape.context_dim = static_cast<int>(episodes.front().context.size());
        shape.hidden = a.hidden;
        shape.descriptor_dim = static_cast<int>(bank.dim);
        shape.eta_prime = objective == Objective::Combined ? eta_prime : 0;

        const auto [params, trace] = train_head(instances, shape, objective, a.cfg);
        fs::create_directories(a.out);
        save_head_params(params, a.cfg, objective, a.out);
        for (std::size_t e = 0; e < trace.size(); ++e)
            trace_csv += std::to_string(e) + "," + format_double(trace[e]) + "\n";
    } else {
        raise(ErrorCode::InvalidArgument, "unknown model '" + a.model + "'");
    }

    atomic_write_file(fs::path(a.out) / "trace.csv", trace_csv);
    const json config = {{"bank", a.bank},       {"episodes", a.episodes},
                         {"subspaces", a.subspaces}, {"model", a.model},
                         {"objective", a.objective}, {"head", a.head},
                         {"learning_rate", a.cfg.learning_rate}, {"epochs", a.cfg.epochs},
                         {"batch_size", a.cfg.batch_size}, {"lambda", a.cfg.lambda},
                         {"init_scale", a.cfg.init_scale}, {"hidden", a.hidden}};
    write_manifest(a.out, "train", config, {a.bank, a.episodes}, {"params.map.json", "trace.csv"},
                   a.cfg.seed, timer.seconds());
    return 0;
}

struct EvalArgs {
    std::string bank, episodes, params, out;
    std::string model = "head", score = "cosine", cutoffs = "1,2,3";
    int threads = 0;
};

int run_eval(const EvalArgs& a) {
    Stopwatch timer;
    const DescriptorBank bank = load_bank(a.bank);
    const auto episodes = load_episodes(a.episodes, bank);

    std::string csv = "metric,value\n";
    if (a.model == "head") {
        const HeadParams params = load_head_params(a.params);
        const std::vector<int> cutoffs = parse_cutoffs(a.cutoffs);
        const auto recall =
            evaluate_ranking(params, episodes, bank, cutoffs, score_kind_from_name(a.score), a.threads);
        for (const auto& [l, value] : recall)
            csv += "R@" + std::to_string(l) + "," + format_double(value) + "\n";
    } else if (a.model == "disc") {
        const DiscriminatorParams params = load_disc_params(a.params);
        std::vector<DiscInstance> data(episodes.size());
        for (std::size_t i = 0; i < episodes.size(); ++i)
            data[i] = {episodes[i].context, episodes[i].task};
        csv += "accuracy," + format_double(discriminator_accuracy(params, data)) + "\n";
    } else {
        raise(ErrorCode::InvalidArgument, "unknown model '" + a.model + "'");
    }

    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    atomic_write_file(out, csv);
    const json config = {{"bank", a.bank},   {"episodes", a.episodes}, {"params", a.params},
                         {"model", a.model}, {"score", a.score},       {"l", a.cutoffs}};
    write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), "eval", config,
                   {a.bank, a.episodes}, {out.filename().string()}, nullptr, timer.seconds());
    return 0;
}

struct SweepArgs {
    std::string task = "image", grid, bank, episodes, out;
    std::string mode = "nesa", objective = "combined", metrics = "R@1";
    std::size_t train_count = 0;  // 0: 80% of episodes
    TrainConfig cfg;
    std::size_t max_points = 100000;
    std::uint32_t positions = 20;
    std::uint32_t vocab_base = 16, vocab_aux = 12;
    int threads = 0;
};

int run_sweep(const SweepArgs& a) {
    Stopwatch timer;
    const auto grid = parse_grid(a.grid);
    std::vector<std::string> skipped;
    std::vector<SweepRecord> records;

    if (a.task == "image") {
        const DescriptorBank bank = load_bank(a.bank);
        const auto episodes = load_episodes(a.episodes, bank);
        const std::size_t train_count =
            a.train_count > 0 ? std::min(a.train_count, episodes.size()) : episodes.size() * 4 / 5;
        if (train_count == 0 || train_count == episodes.size())
            raise(ErrorCode::InvalidArgument, "train split leaves no train or no test episodes");
        const std::span<const TargetEpisode> train_eps(episodes.data(), train_count);
        const std::span<const TargetEpisode> test_eps(episodes.data() + train_count,
                                                      episodes.size() - train_count);
        const SearchIndex index = build_index(bank, Metric::L2, 0, 0);
        const EmbedMode mode = embed_mode_from_name(a.mode);
        const Objective objective = objective_from_name(a.objective);
        const std::vector<int> cutoffs = {1, 2, 3};

        const SweepRunner runner = [&](const SweepPoint& point, std::int64_t seed) {
            EmbedConfig ec;
            ec.eta = static_cast<std::uint32_t>(point.count("eta") ? point.at("eta") : 4);
            ec.eta_prime =
                static_cast<std::uint32_t>(point.count("eta_prime") ? point.at("eta_prime") : 4);
            ec.sigma = point.count("sigma") ? point.at("sigma") : 0.5;
            TrainConfig tc = a.cfg;
            tc.seed = seed;
            tc.lambda = point.count("lambda") ? point.at("lambda") : a.cfg.lambda;

            auto train_inst = build_instances(train_eps, bank, index, mode, ec, a.threads);
            HeadShape shape{objective == Objective::Nno ? HeadKind::SingleFc : HeadKind::MainPlusContext,
                            static_cast<int>(train_eps.front().context.size()), 0,
                            static_cast<int>(bank.dim),
                            objective == Objective::Combined ? static_cast<int>(ec.eta_prime) : 0};
            const auto [params, trace] = train_head(train_inst, shape, objective, tc);
            const auto recall = evaluate_ranking(params, test_eps, bank, cutoffs, ScoreKind::Cosine,
                                                 a.threads);
            std::vector<std::pair<std::string, double>> metrics;
            for (const auto& [l, v] : recall) {
                const std::string name = "R@" + std::to_string(l);
                if (a.metrics.find(name) != std::string::npos) metrics.emplace_back(name, v);
            }
            if (a.metrics.find("loss") != std::string::npos && !trace.empty())
                metrics.emplace_back("loss", trace.back());
            return metrics;
        };
        const SweepFilter feasible = [](const SweepPoint& p) {
            if (p.count("eta") && p.count("eta_prime") && p.at("eta_prime") > p.at("eta")) return false;
            return true;
        };
        records = sweep(grid, runner, a.cfg.seed, a.max_points, feasible, &skipped);
    } else if (a.task == "text") {
        const SweepRunner runner = [&](const SweepPoint& point, std::int64_t seed) {
            LanguageStreamConfig lc;
            lc.vocab_sizes = {a.vocab_base, a.vocab_aux};
            lc.aux_weights = {point.count("lambda_f") ? point.at("lambda_f") : 0.3};
            lc.positions = a.positions;
            lc.corruption = point.count("corruption") ? point.at("corruption") : 0.5;
            lc.seed = seed;
            const auto samples = generate_language_streams(lc);
            std::vector<std::pair<std::string, double>> metrics;
            metrics.emplace_back("loss", multilingual_nll(samples.front()));
            return metrics;
        };
        records = sweep(grid, runner, a.cfg.seed, a.max_points, {}, &skipped);
    } else {
        raise(ErrorCode::InvalidArgument, "unknown sweep task '" + a.task + "'");
    }

    fs::create_directories(a.out);
    write_sweep_csv(records, fs::path(a.out) / "sweep.csv");
    write_sweep_jsonl(records, fs::path(a.out) / "sweep.jsonl");
    for (const auto& s : skipped) std::fprintf(stderr, "skipped infeasible point: %s\n", s.c_str());

    const json config = {{"task", a.task},     {"grid", a.grid},   {"bank", a.bank},
                         {"episodes", a.episodes}, {"mode", a.mode}, {"objective", a.objective},
                         {"metrics", a.metrics},   {"epochs", a.cfg.epochs},
                         {"skipped_points", skipped.size()}};
    write_manifest(a.out, "sweep", config, {a.bank, a.episodes}, {"sweep.csv", "sweep.jsonl"}, a.cfg.seed,
                   timer.seconds());
    return 0;
}

struct GradcheckArgs {
    int context_dim = 4, hidden = 3, descriptor_dim = 2, eta_prime = 1, trials = 10, k = 3;
    std::string objective = "combined", head = "main_plus_context", out;
    double step = 1e-4, lambda = 0.5;
    std::int64_t seed = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
    Stopwatch timer;
    const Objective objective = objective_from_name(a.objective);
    HeadShape shape{head_kind_from_name(a.head), a.context_dim, a.hidden, a.descriptor_dim, a.eta_prime};

    std::string csv = "trial,max_rel_error\n";
    double worst = 0.0;
    Rng rng(a.seed);
    for (int trial = 0; trial < a.trials; ++trial) {
        const HeadParams params = init_head(shape, 0.4, a.seed + trial + 1);
        TrainInstance inst;
        inst.psi.resize(shape.context_dim);
        for (int j = 0; j < shape.context_dim; ++j) inst.psi[j] = rng.normal();
        inst.positive.resize(shape.descriptor_dim);
        for (int j = 0; j < shape.descriptor_dim; ++j) inst.positive[j] = rng.normal();
        inst.negatives.assign(a.k, Eigen::VectorXd(shape.descriptor_dim));
        for (auto& n : inst.negatives)
            for (int j = 0; j < shape.descriptor_dim; ++j) n[j] = rng.normal();
        const int eta_prime = shape.kind == HeadKind::SingleFc ? 0 : shape.eta_prime;
        for (auto* sub : {&inst.pos_subspace, &inst.neg_subspace}) {
            sub->mean.resize(shape.descriptor_dim);
            for (int j = 0; j < shape.descriptor_dim; ++j) sub->mean[j] = rng.normal();
            sub->basis.resize(shape.descriptor_dim, eta_prime);
            for (int c = 0; c < eta_prime; ++c)
                for (int j = 0; j < shape.descriptor_dim; ++j) sub->basis(j, c) = rng.normal();
            sub->eigenvalues = Eigen::VectorXd::Zero(eta_prime);
        }
        inst.neighbor_mean.resize(shape.descriptor_dim);
        for (int j = 0; j < shape.descriptor_dim; ++j) inst.neighbor_mean[j] = rng.normal();

        const double err = grad_check(params, inst, objective, a.lambda, a.step);
        worst = std::max(worst, err);
        csv += std::to_string(trial) + "," + format_double(err) + "\n";
    }

    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    atomic_write_file(out, csv);
    std::printf("max_rel_error %s over %d trials (step %s)\n", format_double(worst).c_str(), a.trials,
                format_double(a.step).c_str());
    const json config = {{"context_dim", a.context_dim}, {"hidden", a.hidden},
                         {"descriptor_dim", a.descriptor_dim}, {"eta_prime", a.eta_prime},
                         {"objective", a.objective}, {"head", a.head},
                         {"step", a.step}, {"trials", a.trials}, {"lambda", a.lambda}};
    write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), "gradcheck", config, {},
                   {out.filename().string()}, a.seed, timer.seconds());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"context-subspace retrieval and assisted-supervision toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GenArgs gen;
    auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic bank and episode file");
    cmd_gen->add_option("--dim", gen.cfg.dim, "descriptor dimension")->capture_default_str();
    cmd_gen->add_option("--clusters", gen.cfg.n_clusters, "cluster count")->capture_default_str();
    cmd_gen->add_option("--bank", gen.cfg.bank_size, "bank rows")->capture_default_str();
    cmd_gen->add_option("--episodes", gen.cfg.n_episodes, "episode count")->capture_default_str();
    cmd_gen->add_option("--k", gen.cfg.k, "negatives per episode")->capture_default_str();
    cmd_gen->add_option("--noise", gen.cfg.noise, "bank row jitter")->capture_default_str();
    cmd_gen->add_option("--context-noise", gen.cfg.context_noise, "context jitter")->capture_default_str();
    cmd_gen->add_option("--context-dim", gen.cfg.context_dim, "context dimension (0 = dim)")
        ->capture_default_str();
    cmd_gen->add_option("--seed", gen.cfg.seed, "rng seed")->required();
    cmd_gen->add_option("--out", gen.out, "output directory")->required();

    IndexArgs index;
    auto* cmd_index = app.add_subcommand("index", "build and store a search index");
    cmd_index->add_option("--bank", index.bank, "bank file")->required();
    cmd_index->add_option("--metric", index.metric, "l2|cosine|ip")->capture_default_str();
    cmd_index->add_option("--partitions", index.partitions, "0 = flat exact")->capture_default_str();
    cmd_index->add_option("--probes", index.probes, "partitions scanned per query")
        ->capture_default_str();
    cmd_index->add_option("--seed", index.seed, "rng seed")->required();
    cmd_index->add_option("--out", index.out, "index file path")->required();

    KnnArgs knn_args;
    auto* cmd_knn = app.add_subcommand("knn", "nearest neighbors for a query bank");
    cmd_knn->add_option("--bank", knn_args.bank, "bank file")->required();
    cmd_knn->add_option("--queries", knn_args.queries, "query bank file")->required();
    cmd_knn->add_option("--index", knn_args.index_path, "prebuilt index (default: flat)");
    cmd_knn->add_option("--metric", knn_args.metric, "metric for the flat default")
        ->capture_default_str();
    cmd_knn->add_option("--eta", knn_args.eta, "neighbors per query")->capture_default_str();
    cmd_knn->add_option("--threads", knn_args.threads, "query parallelism");
    cmd_knn->add_option("--out", knn_args.out, "output csv")->required();

    EmbedArgs embed;
    auto* cmd_embed = app.add_subcommand("embed", "per-episode context subspaces");
    cmd_embed->add_option("--bank", embed.bank, "bank file")->required();
    cmd_embed->add_option("--episodes", embed.episodes, "episode file")->required();
    cmd_embed->add_option("--mode", embed.mode, "neha|nesa")->capture_default_str();
    cmd_embed->add_option("--eta", embed.cfg.eta, "neighbors per target")->capture_default_str();
    cmd_embed->add_option("--eta-prime", embed.cfg.eta_prime, "subspace directions")
        ->capture_default_str();
    cmd_embed->add_option("--sigma", embed.cfg.sigma, "soft-assignment bandwidth")
        ->capture_default_str();
    cmd_embed->add_option("--negative-weighting", embed.weighting, "s_plus|s_minus")
        ->capture_default_str();
    cmd_embed->add_option("--metric", embed.metric, "metric for the flat default")
        ->capture_default_str();
    cmd_embed->add_option("--index", embed.index_path, "prebuilt index (default: flat)");
    cmd_embed->add_option("--threads", embed.threads, "episode parallelism");
    cmd_embed->add_option("--out", embed.out, "output directory")->required();

    TrainArgs train;
    auto* cmd_train = app.add_subcommand("train", "train the matching head or task discriminator");
    cmd_train->add_option("--bank", train.bank, "bank file")->required();
    cmd_train->add_option("--episodes", train.episodes, "episode file")->required();
    cmd_train->add_option("--subspaces", train.subspaces, "embed output directory");
    cmd_train->add_option("--model", train.model, "head|disc")->capture_default_str();
    cmd_train->add_option("--objective", train.objective, "combined|nno|hinge")->capture_default_str();
    cmd_train->add_option("--head", train.head, "main_plus_context|single_fc")->capture_default_str();
    cmd_train->add_option("--lambda", train.cfg.lambda, "assist weight")->capture_default_str();
    cmd_train->add_option("--lr", train.cfg.learning_rate, "learning rate")->capture_default_str();
    cmd_train->add_option("--epochs", train.cfg.epochs, "epochs")->capture_default_str();
    cmd_train->add_option("--batch", train.cfg.batch_size, "minibatch size")->capture_default_str();
    cmd_train->add_option("--init-scale", train.cfg.init_scale, "uniform init half-width")
        ->capture_default_str();
    cmd_train->add_option("--hidden", train.hidden, "main-stream width (0 = descriptor dim)")
        ->capture_default_str();
    cmd_train->add_option("--seed", train.cfg.seed, "rng seed")->required();
    cmd_train->add_option("--out", train.out, "output directory")->required();

    EvalArgs eval;
    auto* cmd_eval = app.add_subcommand("eval", "recall or discriminator accuracy");
    cmd_eval->add_option("--bank", eval.bank, "bank file")->required();
    cmd_eval->add_option("--episodes", eval.episodes, "episode file")->required();
    cmd_eval->add_option("--params", eval.params, "train output directory")->required();
    cmd_eval->add_option("--model", eval.model, "head|disc")->capture_default_str();
    cmd_eval->add_option("--score", eval.score, "cosine|dot")->capture_default_str();
    cmd_eval->add_option("--l", eval.cutoffs, "recall cutoffs")->capture_default_str();
    cmd_eval->add_option("--threads", eval.threads, "episode parallelism");
    cmd_eval->add_option("--out", eval.out, "output csv")->required();

    SweepArgs sweep_args;
    auto* cmd_sweep = app.add_subcommand("sweep", "hyperparameter grid sweep");
    cmd_sweep->add_option("--task", sweep_args.task, "image|text")->capture_default_str();
    cmd_sweep->add_option("--grid", sweep_args.grid, "e.g. \"eta=2..7,sigma=0.1|0.5\"")->required();
    cmd_sweep->add_option("--bank", sweep_args.bank, "bank file (image task)");
    cmd_sweep->add_option("--episodes", sweep_args.episodes, "episode file (image task)");
    cmd_sweep->add_option("--mode", sweep_args.mode, "neha|nesa")->capture_default_str();
    cmd_sweep->add_option("--objective", sweep_args.objective, "combined|nno|hinge")
        ->capture_default_str();
    cmd_sweep->add_option("--metrics", sweep_args.metrics, "comma list, e.g. R@1,R@3")
        ->capture_default_str();
    cmd_sweep->add_option("--train-count", sweep_args.train_count, "episodes used for training");
    cmd_sweep->add_option("--epochs", sweep_args.cfg.epochs, "epochs per point")->capture_default_str();
    cmd_sweep->add_option("--lr", sweep_args.cfg.learning_rate, "learning rate")->capture_default_str();
    cmd_sweep->add_option("--batch", sweep_args.cfg.batch_size, "minibatch size")->capture_default_str();
    cmd_sweep->add_option("--lambda", sweep_args.cfg.lambda, "assist weight")->capture_default_str();
    cmd_sweep->add_option("--positions", sweep_args.positions, "text task positions")
        ->capture_default_str();
    cmd_sweep->add_option("--vocab-base", sweep_args.vocab_base, "text task base vocabulary")
        ->capture_default_str();
    cmd_sweep->add_option("--vocab-aux", sweep_args.vocab_aux, "text task auxiliary vocabulary")
        ->capture_default_str();
    cmd_sweep->add_option("--max-points", sweep_args.max_points, "grid size cap")
        ->capture_default_str();
    cmd_sweep->add_option("--threads", sweep_args.threads, "episode parallelism");
    cmd_sweep->add_option("--seed", sweep_args.cfg.seed, "rng seed")->required();
    cmd_sweep->add_option("--out", sweep_args.out, "output directory")->required();

    GradcheckArgs gc;
    auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    cmd_gc->add_option("--context-dim", gc.context_dim)->capture_default_str();
    cmd_gc->add_option("--hidden", gc.hidden)->capture_default_str();
    cmd_gc->add_option("--descriptor-dim", gc.descriptor_dim)->capture_default_str();
    cmd_gc->add_option("--eta-prime", gc.eta_prime)->capture_default_str();
    cmd_gc->add_option("--k", gc.k, "negatives per instance")->capture_default_str();
    cmd_gc->add_option("--objective", gc.objective, "combined|nno|hinge")->capture_default_str();
    cmd_gc->add_option("--head", gc.head, "main_plus_context|single_fc")->capture_default_str();
    cmd_gc->add_option("--step", gc.step, "central-difference step")->capture_default_str();
    cmd_gc->add_option("--lambda", gc.lambda)->capture_default_str();
    cmd_gc->add_option("--trials", gc.trials)->capture_default_str();
    cmd_gc->add_option("--seed", gc.seed, "rng seed")->required();
    cmd_gc->add_option("--out", gc.out, "output csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_index->parsed()) return run_index(index);
        if (cmd_knn->parsed()) return run_knn(knn_args);
        if (cmd_embed->parsed()) return run_embed(embed);
        if (cmd_train->parsed()) return run_train(train);
        if (cmd_eval->parsed()) return run_eval(eval);
        if (cmd_sweep->parsed()) return run_sweep(sweep_args);
        if (cmd_gc->parsed()) return run_gradcheck(gc);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
