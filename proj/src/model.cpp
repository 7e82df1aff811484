#include "ctxsub/model.hpp"

#include <cmath>

#include "ctxsub/parallel.hpp"
#include "ctxsub/rng.hpp"

namespace ctxsub {

namespace {

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, Rng& rng, double scale) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-scale, scale);
}

void check_shape(bool ok, const std::string& what) {
    if (!ok) raise(ErrorCode::ShapeMismatch, what);
}

Eigen::VectorXd negative_mean(std::span<const Eigen::VectorXd> negatives) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(negatives.front().size());
    for (const auto& n : negatives) m += n;
    return m / static_cast<double>(negatives.size());
}

void validate_instance(const HeadParams& params, const TrainInstance& inst, Objective objective) {
    const auto& s = params.shape;
    check_shape(inst.psi.size() == s.context_dim, "psi length " + std::to_string(inst.psi.size()) +
                                                      " != context_dim " + std::to_string(s.context_dim));
    check_shape(inst.positive.size() == s.descriptor_dim, "positive target dim mismatch");
    check_shape(!inst.negatives.empty(), "instance has no negatives");
    for (const auto& n : inst.negatives)
        check_shape(n.size() == s.descriptor_dim, "negative target dim mismatch");
    if (objective == Objective::Combined && s.kind == HeadKind::SingleFc)
        raise(ErrorCode::InvalidArgument, "combined objective needs the main_plus_context head");
    if (objective == Objective::Combined && s.kind == HeadKind::MainPlusContext) {
        check_shape(inst.pos_subspace.mean.size() == s.descriptor_dim &&
                        inst.neg_subspace.mean.size() == s.descriptor_dim,
                    "subspace means missing or of wrong dim");
        check_shape(inst.pos_subspace.basis.cols() == s.eta_prime &&
                        inst.neg_subspace.basis.cols() == s.eta_prime,
                    "subspace bases must have eta_prime columns");
    }
    if (objective == Objective::Nno)
        check_shape(inst.neighbor_mean.size() == s.descriptor_dim, "neighbor_mean missing or of wrong dim");
}

}  // namespace

const char* head_kind_name(HeadKind k) {
    return k == HeadKind::SingleFc ? "single_fc" : "main_plus_context";
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "single_fc") return HeadKind::SingleFc;
    if (name == "main_plus_context") return HeadKind::MainPlusContext;
    raise(ErrorCode::InvalidArgument, "unknown head kind '" + name + "'");
}

const char* objective_name(Objective o) {
    switch (o) {
        case Objective::Hinge: return "hinge";
        case Objective::Combined: return "combined";
        case Objective::Nno: return "nno";
    }
    return "combined";
}

Objective objective_from_name(const std::string& name) {
    if (name == "hinge") return Objective::Hinge;
    if (name == "combined") return Objective::Combined;
    if (name == "nno") return Objective::Nno;
    raise(ErrorCode::InvalidArgument, "unknown objective '" + name + "'");
}

HeadParams init_head(const HeadShape& shape, double init_scale, std::int64_t seed) {
    if (shape.context_dim <= 0 || shape.descriptor_dim <= 0)
        raise(ErrorCode::InvalidArgument, "head dims must be positive");
    if (shape.eta_prime < 0) raise(ErrorCode::InvalidArgument, "eta_prime must be >= 0");
    if (!(init_scale > 0.0)) raise(ErrorCode::InvalidArgument, "init_scale must be positive");

    HeadParams p;
    p.shape = shape;
    if (p.shape.hidden <= 0) p.shape.hidden = shape.descriptor_dim;
    const int c = p.shape.context_dim;
    const int h = p.shape.hidden;
    const int d = p.shape.descriptor_dim;

    Rng rng(seed);
    if (shape.kind == HeadKind::SingleFc) {
        p.w1.resize(0, 0);
        p.b1.resize(0);
        p.w2.resize(d, c);
        p.b2.resize(d);
        p.wc.resize(0, 0);
        p.bc.resize(0);
        p.shape.eta_prime = 0;
        fill_uniform(p.w2, rng, init_scale);
        fill_uniform(p.b2, rng, init_scale);
        return p;
    }
    const int ctx_rows = d * (1 + p.shape.eta_prime);
    p.w1.resize(h, c);
    p.b1.resize(h);
    p.w2.resize(d, h);
    p.b2.resize(d);
    p.wc.resize(ctx_rows, c);
    p.bc.resize(ctx_rows);
    fill_uniform(p.w1, rng, init_scale);
    fill_uniform(p.b1, rng, init_scale);
    fill_uniform(p.w2, rng, init_scale);
    fill_uniform(p.b2, rng, init_scale);
    fill_uniform(p.wc, rng, init_scale);
    fill_uniform(p.bc, rng, init_scale);
    return p;
}

HeadOutput head_forward(const HeadParams& params, const Eigen::VectorXd& psi) {
    const auto& s = params.shape;
    check_shape(psi.size() == s.context_dim,
                "psi length " + std::to_string(psi.size()) + " != context_dim " +
                    std::to_string(s.context_dim));
    HeadOutput out;
    if (s.kind == HeadKind::SingleFc) {
        out.psi_star = params.w2 * psi + params.b2;
        out.mu = Eigen::VectorXd::Zero(s.descriptor_dim);
        out.basis = Eigen::MatrixXd::Zero(s.descriptor_dim, 0);
        return out;
    }
    const Eigen::VectorXd z = params.w1 * psi + params.b1;
    const Eigen::VectorXd a = z.cwiseMax(0.0);
    const Eigen::VectorXd main = params.w2 * a + params.b2;
    const Eigen::VectorXd ctx = params.wc * psi + params.bc;
    out.mu = ctx.head(s.descriptor_dim);
    out.basis.resize(s.descriptor_dim, s.eta_prime);
    for (int n = 0; n < s.eta_prime; ++n)
        out.basis.col(n) = ctx.segment(static_cast<Eigen::Index>(s.descriptor_dim) * (1 + n), s.descriptor_dim);
    out.psi_star = main + out.mu;
    return out;
}

namespace {

LossBreakdown instance_loss(const HeadOutput& out, const TrainInstance& inst, Objective objective,
                            double lambda) {
    LossBreakdown b;
    b.lambda = lambda;
    b.primary = hinge_rank(out.psi_star, inst.positive, inst.negatives);
    switch (objective) {
        case Objective::Hinge:
            b.assisted = 0.0;
            b.total = b.primary;
            break;
        case Objective::Combined:
            b.assisted = hinge_assisted(out.mu, out.basis, inst.pos_subspace.mean, inst.pos_subspace.basis,
                                        inst.neg_subspace.mean, inst.neg_subspace.basis);
            b.total = b.primary + lambda * b.assisted;
            break;
        case Objective::Nno:
            b.assisted = (out.psi_star - inst.neighbor_mean).squaredNorm();
            b.total = b.primary + lambda * b.assisted;
            break;
    }
    return b;
}

}  // namespace

double head_loss(const HeadParams& params, const TrainInstance& instance, Objective objective,
                 double lambda) {
    validate_instance(params, instance, objective);
    return instance_loss(head_forward(params, instance.psi), instance, objective, lambda).total;
}

HeadGradient head_gradient(const HeadParams& params, const TrainInstance& instance, Objective objective,
                           double lambda) {
    validate_instance(params, instance, objective);
    const auto& s = params.shape;
    const Eigen::VectorXd& psi = instance.psi;

    HeadGradient g;
    g.w1 = Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols());
    g.b1 = Eigen::VectorXd::Zero(params.b1.size());
    g.w2 = Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols());
    g.b2 = Eigen::VectorXd::Zero(params.b2.size());
    g.wc = Eigen::MatrixXd::Zero(params.wc.rows(), params.wc.cols());
    g.bc = Eigen::VectorXd::Zero(params.bc.size());

    const HeadOutput out = head_forward(params, psi);
    g.loss = instance_loss(out, instance, objective, lambda);

    // d(total)/d(psi_star)
    const Eigen::VectorXd rank_dir = instance.positive - negative_mean(instance.negatives);
    Eigen::VectorXd d_psi_star = Eigen::VectorXd::Zero(s.descriptor_dim);
    if (g.loss.primary > 0.0) d_psi_star -= rank_dir;
    if (objective == Objective::Nno) d_psi_star += 2.0 * lambda * (out.psi_star - instance.neighbor_mean);

    if (s.kind == HeadKind::SingleFc) {
        g.w2 = d_psi_star * psi.transpose();
        g.b2 = d_psi_star;
        return g;
    }

    // main stream
    const Eigen::VectorXd z = params.w1 * psi + params.b1;
    const Eigen::VectorXd a = z.cwiseMax(0.0);
    g.w2 = d_psi_star * a.transpose();
    g.b2 = d_psi_star;
    Eigen::VectorXd dz = params.w2.transpose() * d_psi_star;
    for (Eigen::Index i = 0; i < dz.size(); ++i)
        if (z[i] <= 0.0) dz[i] = 0.0;
    g.w1 = dz * psi.transpose();
    g.b1 = dz;

    // context stream: residual path always feeds mu; the assisted hinge
    // contributes only when active
    Eigen::VectorXd d_ctx = Eigen::VectorXd::Zero(params.bc.size());
    d_ctx.head(s.descriptor_dim) = d_psi_star;
    if (objective == Objective::Combined && g.loss.assisted > 0.0) {
        d_ctx.head(s.descriptor_dim) -= lambda * (instance.pos_subspace.mean - instance.neg_subspace.mean);
        for (int n = 0; n < s.eta_prime; ++n)
            d_ctx.segment(static_cast<Eigen::Index>(s.descriptor_dim) * (1 + n), s.descriptor_dim) -=
                lambda * (instance.pos_subspace.basis.col(n) - instance.neg_subspace.basis.col(n));
    }
    g.wc = d_ctx * psi.transpose();
    g.bc = d_ctx;
    return g;
}

double grad_check(const HeadParams& params, const TrainInstance& instance, Objective objective,
                  double lambda, double step) {
    if (!(step > 0.0)) raise(ErrorCode::InvalidArgument, "step must be positive");
    const HeadGradient analytic = head_gradient(params, instance, objective, lambda);

    HeadParams work = params;
    double max_rel = 0.0;
    Eigen::MatrixXd HeadParams::* mats[] = {&HeadParams::w1, &HeadParams::w2, &HeadParams::wc};
    Eigen::MatrixXd HeadGradient::* gmats[] = {&HeadGradient::w1, &HeadGradient::w2, &HeadGradient::wc};
    Eigen::VectorXd HeadParams::* vecs[] = {&HeadParams::b1, &HeadParams::b2, &HeadParams::bc};
    Eigen::VectorXd HeadGradient::* gvecs[] = {&HeadGradient::b1, &HeadGradient::b2, &HeadGradient::bc};

    auto probe = [&](double& entry, double analytic_value) {
        const double saved = entry;
        entry = saved + step;
        const double up = head_loss(work, instance, objective, lambda);
        entry = saved - step;
        const double down = head_loss(work, instance, objective, lambda);
        entry = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double rel =
            std::abs(analytic_value - numeric) / std::max({std::abs(analytic_value), std::abs(numeric), 1e-8});
        if (rel > max_rel) max_rel = rel;
    };

    for (int b = 0; b < 3; ++b) {
        Eigen::MatrixXd& m = work.*mats[b];
        const Eigen::MatrixXd& gm = analytic.*gmats[b];
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) probe(m(i, j), gm(i, j));
        Eigen::VectorXd& v = work.*vecs[b];
        const Eigen::VectorXd& gv = analytic.*gvecs[b];
        for (Eigen::Index i = 0; i < v.size(); ++i) probe(v[i], gv[i]);
    }
    return max_rel;
}

std::pair<HeadParams, std::vector<double>> train_head(std::span<const TrainInstance> instances,
                                                      const HeadShape& shape, Objective objective,
                                                      const TrainConfig& config) {
    if (instances.empty()) raise(ErrorCode::InvalidArgument, "train_head needs at least one instance");
    if (config.epochs < 0) raise(ErrorCode::InvalidArgument, "epochs must be >= 0");
    if (config.batch_size < 1) raise(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    if (!(config.learning_rate > 0.0)) raise(ErrorCode::InvalidArgument, "learning_rate must be positive");

    HeadParams params = init_head(shape, config.init_scale, config.seed);
    for (const auto& inst : instances) validate_instance(params, inst, objective);

    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(config.epochs));
    Rng order_rng(config.seed + 1);
    const std::size_t n = instances.size();

    HeadGradient acc;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<std::size_t> order = order_rng.permutation(n);
        double loss_sum = 0.0;
        std::size_t at = 0;
        while (at < n) {
            const std::size_t batch_end = std::min(n, at + static_cast<std::size_t>(config.batch_size));
            const double batch_n = static_cast<double>(batch_end - at);
            acc.w1 = Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols());
            acc.b1 = Eigen::VectorXd::Zero(params.b1.size());
            acc.w2 = Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols());
            acc.b2 = Eigen::VectorXd::Zero(params.b2.size());
            acc.wc = Eigen::MatrixXd::Zero(params.wc.rows(), params.wc.cols());
            acc.bc = Eigen::VectorXd::Zero(params.bc.size());
            for (std::size_t i = at; i < batch_end; ++i) {
                const HeadGradient g = head_gradient(params, instances[order[i]], objective, config.lambda);
                acc.w1 += g.w1;
                acc.b1 += g.b1;
                acc.w2 += g.w2;
                acc.b2 += g.b2;
                acc.wc += g.wc;
                acc.bc += g.bc;
                loss_sum += g.loss.total;
            }
            const double scale = config.learning_rate / batch_n;
            params.w1 -= scale * acc.w1;
            params.b1 -= scale * acc.b1;
            params.w2 -= scale * acc.w2;
            params.b2 -= scale * acc.b2;
            params.wc -= scale * acc.wc;
            params.bc -= scale * acc.bc;
            at = batch_end;
        }
        const double epoch_mean = loss_sum / static_cast<double>(n);
        if (!std::isfinite(epoch_mean))
            raise(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + " mean loss is not finite");
        trace.push_back(epoch_mean);
    }
    return {std::move(params), std::move(trace)};
}

std::vector<TrainInstance> build_instances(std::span<const TargetEpisode> episodes,
                                           const DescriptorBank& bank, const SearchIndex& index,
                                           std::optional<EmbedMode> mode, const EmbedConfig& embed_config,
                                           int threads) {
    std::vector<TrainInstance> out(episodes.size());
    parallel_for(episodes.size(), threads, [&](std::size_t i) {
        const auto& ep = episodes[i];
        TrainInstance inst;
        inst.psi = ep.context;
        const auto pos_row = bank.find(ep.positive_id);
        if (!pos_row) raise(ErrorCode::UnknownId, "unknown id '" + ep.positive_id + "'");
        inst.positive = bank.row(*pos_row);
        inst.negatives.reserve(ep.negative_ids.size());
        for (const auto& id : ep.negative_ids) {
            const auto row = bank.find(id);
            if (!row) raise(ErrorCode::UnknownId, "unknown id '" + id + "'");
            inst.negatives.push_back(bank.row(*row));
        }
        if (mode) {
            auto pair = *mode == EmbedMode::Neha
                            ? neha(inst.positive, inst.negatives, bank, index, embed_config.eta,
                                   embed_config.eta_prime)
                            : nesa(inst.positive, inst.negatives, bank, index, embed_config.eta,
                                   embed_config.eta_prime, embed_config.sigma,
                                   embed_config.negative_weighting);
            inst.neighbor_mean = pair.first.mean;
            inst.pos_subspace = std::move(pair.first);
            inst.neg_subspace = std::move(pair.second);
        }
        out[i] = std::move(inst);
    });
    return out;
}

Eigen::Vector3d discriminator_forward(const DiscriminatorParams& params, const Eigen::VectorXd& psi) {
    check_shape(params.w.cols() == psi.size(), "discriminator input dim mismatch");
    return params.w * psi + params.b;
}

int discriminator_predict(const DiscriminatorParams& params, const Eigen::VectorXd& psi) {
    const Eigen::Vector3d logits = discriminator_forward(params, psi);
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

std::pair<DiscriminatorParams, std::vector<double>> discriminator_train(
    std::span<const DiscInstance> instances, const TrainConfig& config) {
    if (instances.empty()) raise(ErrorCode::InvalidArgument, "discriminator_train needs instances");
    if (config.batch_size < 1) raise(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    const Eigen::Index c = instances.front().psi.size();
    for (const auto& inst : instances)
        check_shape(inst.psi.size() == c, "discriminator instances must share the input dim");

    DiscriminatorParams params;
    params.w.resize(3, c);
    params.b.resize(3);
    Rng rng(config.seed);
    fill_uniform(params.w, rng, config.init_scale);
    fill_uniform(params.b, rng, config.init_scale);

    Rng order_rng(config.seed + 1);
    const std::size_t n = instances.size();
    std::vector<double> accuracy;
    accuracy.reserve(static_cast<std::size_t>(config.epochs));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<std::size_t> order = order_rng.permutation(n);
        std::size_t at = 0;
        while (at < n) {
            const std::size_t batch_end = std::min(n, at + static_cast<std::size_t>(config.batch_size));
            Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(3, c);
            Eigen::VectorXd gb = Eigen::VectorXd::Zero(3);
            for (std::size_t i = at; i < batch_end; ++i) {
                const auto& inst = instances[order[i]];
                Eigen::Vector3d logits = discriminator_forward(params, inst.psi);
                const double m = logits.maxCoeff();
                Eigen::Vector3d p = (logits.array() - m).exp();
                p /= p.sum();
                p[static_cast<int>(inst.label)] -= 1.0;
                gw += p * inst.psi.transpose();
                gb += p;
            }
            const double scale = config.learning_rate / static_cast<double>(batch_end - at);
            params.w -= scale * gw;
            params.b -= scale * gb;
            at = batch_end;
        }
        std::size_t correct = 0;
        for (const auto& inst : instances)
            if (discriminator_predict(params, inst.psi) == static_cast<int>(inst.label)) ++correct;
        accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
    }
    return {std::move(params), std::move(accuracy)};
}

}  // namespace ctxsub
