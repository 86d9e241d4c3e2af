#include <algorithm>
#include <cmath>

#include "casii/error.hpp"
#include "casii/linalg.hpp"
#include "casii/train.hpp"

namespace casii::train {

LossSettings LossSettings::from(const TrainConfig& config, bool warmup_active) {
    LossSettings s;
    s.lambda1 = config.lambda1;
    s.lambda2 = config.lambda2;
    s.r = config.r;
    s.toggles = config.toggles;
    s.warmup_active = warmup_active;
    return s;
}

double bce_loss(double bag_probability, int label) {
    const double p = std::clamp(bag_probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

InstanceLosses instance_losses(const model::ForwardTrace& trace, int label, std::size_t r) {
    const auto sets = model::top_bottom_indices(trace.attention, r);
    InstanceLosses out;
    // -log(1 - sigmoid(s)) = softplus(s) and -log(sigmoid(s)) = softplus(-s).
    for (auto i : sets.bottom) out.bot += linalg::softplus(trace.saliency_logits(Eigen::Index(i)));
    out.bot /= double(sets.bottom.size());
    if (label == 1) {
        for (auto i : sets.top) out.top += linalg::softplus(-trace.saliency_logits(Eigen::Index(i)));
        out.top /= double(sets.top.size());
    }
    return out;
}

double total_loss(double ce, double bot, double top, double lambda1, double lambda2, bool warmup_active,
                  const LossToggles& toggles) {
    if (warmup_active) return ce;
    double total = ce;
    if (toggles.use_bot) total += lambda1 * bot;
    if (toggles.use_top) total += lambda2 * top;
    return total;
}

LossTerms evaluate_loss(const model::ForwardTrace& trace, int label, const LossSettings& settings) {
    LossTerms t;
    t.ce = bce_loss(trace.bag_probability, label);
    const auto inst = instance_losses(trace, label, settings.r);
    t.bot = inst.bot;
    t.top = inst.top;
    t.total = total_loss(t.ce, t.bot, t.top, settings.lambda1, settings.lambda2, settings.warmup_active,
                         settings.toggles);
    return t;
}

void TrainConfig::validate() const {
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(weight_decay >= 0.0, "weight_decay must be non-negative");
    require(val_ratio > 0.0 && val_ratio < 1.0, "val_ratio must lie in (0, 1)");
    require(r >= 1, "r must be at least 1");
    require(lambda1 >= 0.0 && lambda2 >= 0.0, "lambda1 and lambda2 must be non-negative");
    require(runs >= 1, "runs must be at least 1");
    require(max_epochs >= 1, "max_epochs must be at least 1");
    require(latent_dim >= 1, "latent_dim must be at least 1");
    require(t_max >= 1, "t_max must be at least 1");
}

}  // namespace casii::train
