#include <algorithm>
#include <string>

#include "casii/error.hpp"
#include "casii/linalg.hpp"
#include "casii/train.hpp"

namespace casii::train {

namespace {

// Gradient of x -> x / |x| applied column-wise: (g - y (y·g)) / |x|.
Eigen::MatrixXd normalize_backward(const Eigen::MatrixXd& unit, const Eigen::VectorXd& norms,
                                   const Eigen::MatrixXd& grad_unit) {
    const Eigen::RowVectorXd proj = unit.cwiseProduct(grad_unit).colwise().sum();
    Eigen::MatrixXd out = grad_unit - unit * proj.asDiagonal();
    return out * norms.cwiseInverse().asDiagonal();
}

// Through tanh(pre) given its output.
Eigen::MatrixXd tanh_backward(const Eigen::MatrixXd& activation, const Eigen::MatrixXd& grad) {
    return grad.cwiseProduct((1.0 - activation.array().square()).matrix());
}

}  // namespace

model::Gradients backward(const model::ForwardTrace& trace, const InstanceBag& bag, const nrl::KeyMatrix& keys,
                          const model::CasiiParams& params, int label, const LossSettings& settings) {
    const Eigen::Index n = trace.saliency_logits.size();
    require(std::size_t(n) == bag.size(), "trace does not belong to this bag");
    model::Gradients g = model::Gradients::zeros(params.dim(), params.latent(), params.tau());

    // Bag classifier. The clamp on P is flat outside [eps, 1 - eps].
    const double p = trace.bag_probability;
    const bool clamped = p <= kProbabilityClamp || p >= 1.0 - kProbabilityClamp;
    const double grad_logit = clamped ? 0.0 : p - double(label);
    g.classifier_weight = grad_logit * trace.bag_embedding;
    g.classifier_bias = grad_logit;
    const Eigen::VectorXd grad_embedding = grad_logit * params.classifier_weight;

    // z = V a reaches both the values and the attention weights.
    const Eigen::MatrixXd grad_values = grad_embedding * trace.attention.transpose();
    Eigen::VectorXd grad_logits = Eigen::VectorXd::Zero(n);
    if (trace.pooling == model::Pooling::saliency) {
        const Eigen::VectorXd grad_attention = trace.values.transpose() * grad_embedding;
        const double mean = trace.attention.dot(grad_attention);
        grad_logits = trace.attention.cwiseProduct((grad_attention.array() - mean).matrix());
    }

    if (!settings.warmup_active) {
        const auto sets = model::top_bottom_indices(trace.attention, settings.r);
        if (settings.toggles.use_bot) {
            const double w = settings.lambda1 / double(sets.bottom.size());
            for (auto i : sets.bottom) {
                const auto k = Eigen::Index(i);
                grad_logits(k) += w * linalg::sigmoid(trace.saliency_logits(k));
            }
        }
        if (settings.toggles.use_top && label == 1) {
            const double w = settings.lambda2 / double(sets.top.size());
            for (auto i : sets.top) {
                const auto k = Eigen::Index(i);
                grad_logits(k) += w * (linalg::sigmoid(trace.saliency_logits(k)) - 1.0);
            }
        }
    }

    // Saliency layer s = C w_s + b_s with C = Q̃ᵀK̃. The gradient reaching C is
    // the outer product grad_logits * w_sᵀ, so every product through C
    // factors into matrix-vector work.
    const Eigen::VectorXd query_mix = trace.projected_queries * grad_logits;  // Q̃ g, D_h
    g.saliency_weight = trace.keys.unit.transpose() * query_mix;             // Cᵀ g
    g.saliency_bias = grad_logits.sum();
    const Eigen::VectorXd key_mix = trace.keys.unit * params.saliency_weight;  // K̃ w_s, D_h

    const Eigen::MatrixXd grad_unit_queries = key_mix * grad_logits.transpose();              // D_h×n
    const Eigen::MatrixXd grad_unit_keys = query_mix * params.saliency_weight.transpose();    // D_h×tau

    const auto instances = bag.instances.view();
    const Eigen::MatrixXd grad_query_pre = tanh_backward(
        trace.query_activations,
        normalize_backward(trace.projected_queries, trace.query_norms, grad_unit_queries));
    g.query_weight.noalias() = instances * grad_query_pre.transpose();
    g.query_bias = grad_query_pre.rowwise().sum();

    const Eigen::MatrixXd grad_key_pre = tanh_backward(
        trace.keys.activations, normalize_backward(trace.keys.unit, trace.keys.norms, grad_unit_keys));
    g.key_weight.noalias() = keys.keys().view() * grad_key_pre.transpose();
    g.key_bias = grad_key_pre.rowwise().sum();

    const Eigen::MatrixXd grad_value_pre =
        grad_values.cwiseProduct((trace.values.array() > 0.0).cast<double>().matrix());
    g.value_weight.noalias() = instances * grad_value_pre.transpose();
    g.value_bias = grad_value_pre.rowwise().sum();

    if (auto bad = model::first_non_finite_block(g); !bad.empty()) {
        fail(Errc::numerical, "non-finite gradient in block " + std::string(bad));
    }
    return g;
}

}  // namespace casii::train
