#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ctxsub/bank.hpp"
#include "ctxsub/embed.hpp"
#include "ctxsub/loss.hpp"
#include "ctxsub/search.hpp"

namespace ctxsub {

/// MainPlusContext is the two-stream matching head: FC->ReLU->FC on the
/// context vector plus a context FC producing (mu, basis), combined through
/// a residual add of mu into the main output. SingleFc is the plain
/// one-layer baseline head.
enum class HeadKind { SingleFc = 0, MainPlusContext = 1 };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

struct HeadShape {
    HeadKind kind = HeadKind::MainPlusContext;
    int context_dim = 0;     // c, the input psi length
    int hidden = 0;          // h, main-stream width (D when unset)
    int descriptor_dim = 0;  // D, psi_star length
    int eta_prime = 0;       // basis columns emitted by the context stream
};

/// Weights of the head's affine maps. For SingleFc only w2/b2 are used
/// (shape D x c); the other blocks are empty.
struct HeadParams {
    HeadShape shape;
    Eigen::MatrixXd w1;  // h x c
    Eigen::VectorXd b1;  // h
    Eigen::MatrixXd w2;  // D x h (SingleFc: D x c)
    Eigen::VectorXd b2;  // D
    Eigen::MatrixXd wc;  // D(1+eta_prime) x c
    Eigen::VectorXd bc;  // D(1+eta_prime)
};

struct HeadOutput {
    Eigen::VectorXd psi_star;  // D
    Eigen::VectorXd mu;        // D
    Eigen::MatrixXd basis;     // D x eta_prime
};

struct DiscriminatorParams {
    Eigen::MatrixXd w;  // 3 x c
    Eigen::VectorXd b;  // 3
};

enum class Objective { Hinge = 0, Combined = 1, Nno = 2 };

const char* objective_name(Objective o);
Objective objective_from_name(const std::string& name);

/// One training example: the context vector, its resolved targets, and the
/// per-episode assists (subspace pair for the combined objective, positive
/// neighbor mean for the NNO objective).
struct TrainInstance {
    Eigen::VectorXd psi;
    Eigen::VectorXd positive;
    std::vector<Eigen::VectorXd> negatives;
    ContextSubspace pos_subspace;
    ContextSubspace neg_subspace;
    Eigen::VectorXd neighbor_mean;
};

struct HeadGradient {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
    Eigen::MatrixXd wc;
    Eigen::VectorXd bc;
    LossBreakdown loss;
};

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 50;
    int batch_size = 16;
    double lambda = kDefaultLambda;
    std::int64_t seed = 0;
    double init_scale = 0.05;
};

/// Entries drawn uniform in [-init_scale, init_scale], in the fixed block
/// order w1, b1, w2, b2, wc, bc (row-major within each block).
HeadParams init_head(const HeadShape& shape, double init_scale, std::int64_t seed);

HeadOutput head_forward(const HeadParams& params, const Eigen::VectorXd& psi);

double head_loss(const HeadParams& params, const TrainInstance& instance, Objective objective,
                 double lambda);

/// Exact gradient of head_loss; hinge and ReLU kinks use subgradient 0.
HeadGradient head_gradient(const HeadParams& params, const TrainInstance& instance, Objective objective,
                           double lambda);

/// Max relative error between analytic and central-difference gradients
/// over every parameter entry, denominator max(|analytic|,|numeric|,1e-8).
double grad_check(const HeadParams& params, const TrainInstance& instance, Objective objective,
                  double lambda, double step);

/// Deterministic minibatch gradient descent: init from config.seed, one
/// fixed shuffle per epoch, batch-mean gradients. Returns final params and
/// the per-epoch mean total loss.
std::pair<HeadParams, std::vector<double>> train_head(std::span<const TrainInstance> instances,
                                                      const HeadShape& shape, Objective objective,
                                                      const TrainConfig& config);

/// Resolve episodes against a bank and, when an embedding mode is given,
/// attach the per-episode subspace pair plus the positive-neighbor mean.
/// Episodes are independent, so this parallelizes deterministically.
std::vector<TrainInstance> build_instances(std::span<const TargetEpisode> episodes,
                                           const DescriptorBank& bank, const SearchIndex& index,
                                           std::optional<EmbedMode> mode, const EmbedConfig& embed_config,
                                           int threads = 1);

struct DiscInstance {
    Eigen::VectorXd psi;
    TaskLabel label = TaskLabel::Text;
};

Eigen::Vector3d discriminator_forward(const DiscriminatorParams& params, const Eigen::VectorXd& psi);

/// Argmax over logits; exact ties resolve to the lowest class index.
int discriminator_predict(const DiscriminatorParams& params, const Eigen::VectorXd& psi);

/// Softmax cross-entropy training of the 3-way task classifier; returns
/// final params and the per-epoch training accuracy.
std::pair<DiscriminatorParams, std::vector<double>> discriminator_train(
    std::span<const DiscInstance> instances, const TrainConfig& config);

}  // namespace ctxsub
