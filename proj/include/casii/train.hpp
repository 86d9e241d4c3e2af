#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "casii/model.hpp"
#include "casii/nrl.hpp"
#include "casii/params.hpp"
#include "casii/synthdata.hpp"

namespace casii::train {

inline constexpr double kProbabilityClamp = 1e-12;

struct LossToggles {
    bool use_bot = true;
    bool use_top = true;
};

struct TrainConfig {
    double learning_rate = 2e-4;
    double weight_decay = 1e-5;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    std::size_t r = 5;
    std::size_t warmup_epochs = 10;
    std::size_t patience = 10;
    std::size_t max_epochs = 50;
    double val_ratio = 0.1;
    std::size_t runs = 5;
    std::uint64_t seed = 1;
    LossToggles toggles;
    std::size_t latent_dim = model::kDefaultLatentDim;
    std::size_t t_max = nrl::kDefaultTMax;
    model::Pooling pooling = model::Pooling::saliency;
    /// Run multi_run_select trainings on separate threads.
    bool parallel = false;

    void validate() const;
};

/// Everything the loss needs besides the forward trace.
struct LossSettings {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    std::size_t r = 5;
    LossToggles toggles;
    bool warmup_active = false;

    static LossSettings from(const TrainConfig& config, bool warmup_active);
};

/// `bot` and `top` are the unweighted instance terms, reported even when
/// warm-up or a toggle keeps them out of `total`.
struct LossTerms {
    double total = 0.0;
    double ce = 0.0;
    double bot = 0.0;
    double top = 0.0;
};

double bce_loss(double bag_probability, int label);

struct InstanceLosses {
    double bot = 0.0;
    double top = 0.0;
};

/// Pseudo-label losses on the bottom-r (target 0, every bag) and top-r
/// (target 1, positive bags only) saliency logits, each averaged over its set.
InstanceLosses instance_losses(const model::ForwardTrace& trace, int label, std::size_t r);

double total_loss(double ce, double bot, double top, double lambda1, double lambda2, bool warmup_active,
                  const LossToggles& toggles);

LossTerms evaluate_loss(const model::ForwardTrace& trace, int label, const LossSettings& settings);

/// Reverse-mode gradients of the total loss with respect to every parameter
/// block. The top/bottom index sets are held fixed. Throws Errc::numerical
/// naming the block when a gradient is not finite.
model::Gradients backward(const model::ForwardTrace& trace, const InstanceBag& bag, const nrl::KeyMatrix& keys,
                          const model::CasiiParams& params, int label, const LossSettings& settings);

struct AdamSettings {
    double learning_rate = 2e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    model::Gradients first_moment;
    model::Gradients second_moment;
    std::uint64_t step = 0;

    static AdamState like(const model::CasiiParams& params);
};

/// One Adam step with bias correction. Weight decay is decoupled and applied
/// to weight blocks only: w <- w - lr * wd * w before the moment update.
void adam_step(model::CasiiParams& params, const model::Gradients& grads, AdamState& state,
               const AdamSettings& settings);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    LossTerms train_loss;   // means over the epoch's steps
    double val_auc = 0.0;
    double val_loss = 0.0;  // mean bag cross-entropy on validation
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_auc = 0.0;
};

std::string history_csv(const TrainHistory& history);
void save_history_csv(const TrainHistory& history, const std::filesystem::path& path);

struct TrainResult {
    model::CasiiParams params;
    TrainHistory history;
};

/// Trains on fixed splits. Stops once validation has not improved for more
/// than `patience` post-warm-up epochs and returns the best checkpoint.
/// Improvement means a higher validation AUC, or an equal AUC with a lower
/// validation cross-entropy.
TrainResult train_on_split(const std::vector<InstanceBag>& train_bags, const std::vector<InstanceBag>& val_bags,
                           const nrl::KeyMatrix& keys, const TrainConfig& config);

/// Stratified val_ratio split of `bags` seeded by config.seed, then train_on_split.
TrainResult train(const std::vector<InstanceBag>& bags, const nrl::KeyMatrix& keys, const TrainConfig& config);

struct MultiRunResult {
    std::size_t best_run = 0;
    std::vector<std::uint64_t> run_seeds;
    std::vector<TrainResult> runs;

    const TrainResult& best() const { return runs.at(best_run); }
};

std::uint64_t run_seed(std::uint64_t base, std::size_t run);

/// config.runs independent trainings, each with its own derived seed and a
/// fresh split; returns all runs and the index of the highest validation AUC
/// (lowest index on ties).
MultiRunResult multi_run_select(const std::vector<InstanceBag>& bags, const nrl::KeyMatrix& keys,
                                const TrainConfig& config);

/// Probabilities for every bag, projecting the keys once.
std::vector<double> predict_all(const std::vector<InstanceBag>& bags, const nrl::KeyMatrix& keys,
                                const model::CasiiParams& params, model::Pooling pooling = model::Pooling::saliency);

struct GradCheckOptions {
    std::size_t dim = 6;
    std::size_t latent = 4;
    std::size_t tau = 5;
    std::size_t n = 7;
    std::size_t r = 2;
    std::uint64_t seed = 1;
    double step = 1e-6;
    /// Relative errors use max(|analytic|, |numeric|, floor) as denominator.
    double floor = 1e-4;
    /// Test hook: perturbs one analytic gradient entry so the check must fail.
    bool corrupt = false;
};

struct GradCheckReport {
    std::array<double, model::kBlockCount> max_rel_error{};
    std::array<std::string, model::kBlockCount> block_names;
    int label = 0;

    double worst() const;
};

/// Analytic gradients against central finite differences on a random instance.
GradCheckReport gradient_check(const GradCheckOptions& options);

}  // namespace casii::train
