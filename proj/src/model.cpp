#include "casii/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "casii/error.hpp"
#include "casii/linalg.hpp"

namespace casii::model {

namespace {

void check_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* stage) {
    if (!m.allFinite()) fail(Errc::numerical, std::string("NaN/Inf produced in forward stage: ") + stage);
}

void check_dims(std::size_t got, std::size_t expected, const std::string& what) {
    if (got != expected) {
        fail(Errc::dimension_mismatch, what + " has dimension " + std::to_string(got) +
                                           " but the parameters expect " + std::to_string(expected));
    }
}

}  // namespace

KeyProjection project_keys(const nrl::KeyMatrix& keys, const CasiiParams& params) {
    check_dims(keys.dim(), params.dim(), "key matrix");
    check_dims(keys.tau(), params.tau(), "key count");
    KeyProjection out;
    out.activations = (params.key_weight.transpose() * keys.keys().view()).colwise() + params.key_bias;
    out.activations = out.activations.array().tanh().matrix();
    check_finite(out.activations, "key projection");
    auto normalized = linalg::normalize_columns(out.activations);
    out.unit = std::move(normalized.unit);
    out.norms = std::move(normalized.norms);
    return out;
}

ForwardTrace forward(const InstanceBag& bag, const KeyProjection& keys, const CasiiParams& params, Pooling pooling) {
    check_dims(bag.dim(), params.dim(), "bag " + std::to_string(bag.id));
    check_dims(std::size_t(keys.unit.cols()), params.tau(), "projected key count");
    if (bag.size() == 0) fail(Errc::invalid_argument, "bag " + std::to_string(bag.id) + " is empty");

    ForwardTrace t;
    t.pooling = pooling;
    t.keys = keys;
    const auto instances = bag.instances.view();

    t.query_activations = (params.query_weight.transpose() * instances).colwise() + params.query_bias;
    t.query_activations = t.query_activations.array().tanh().matrix();
    check_finite(t.query_activations, "query projection");
    auto normalized = linalg::normalize_columns(t.query_activations);
    t.projected_queries = std::move(normalized.unit);
    t.query_norms = std::move(normalized.norms);

    t.values = (params.value_weight.transpose() * instances).colwise() + params.value_bias;
    t.values = t.values.cwiseMax(0.0);
    check_finite(t.values, "value projection");

    t.correlation.noalias() = t.projected_queries.transpose() * keys.unit;
    t.saliency_logits = (t.correlation * params.saliency_weight).array() + params.saliency_bias;
    check_finite(t.saliency_logits, "saliency logits");

    const Eigen::Index n = t.saliency_logits.size();
    if (pooling == Pooling::mean) {
        t.attention = Eigen::VectorXd::Constant(n, 1.0 / double(n));
    } else {
        const auto weights = linalg::softmax({t.saliency_logits.data(), std::size_t(n)});
        t.attention = Eigen::Map<const Eigen::VectorXd>(weights.data(), n);
    }

    t.bag_embedding.noalias() = t.values * t.attention;
    t.bag_logit = params.classifier_weight.dot(t.bag_embedding) + params.classifier_bias;
    if (!std::isfinite(t.bag_logit)) fail(Errc::numerical, "NaN/Inf produced in forward stage: bag classifier");
    t.bag_probability = linalg::sigmoid(t.bag_logit);
    return t;
}

ForwardTrace forward(const InstanceBag& bag, const nrl::KeyMatrix& keys, const CasiiParams& params, Pooling pooling) {
    return forward(bag, project_keys(keys, params), params, pooling);
}

double predict(const InstanceBag& bag, const nrl::KeyMatrix& keys, const CasiiParams& params, Pooling pooling) {
    return forward(bag, keys, params, pooling).bag_probability;
}

std::vector<std::size_t> attention_order(const Eigen::Ref<const Eigen::VectorXd>& attention) {
    std::vector<std::size_t> order(std::size_t(attention.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return attention(Eigen::Index(i)) > attention(Eigen::Index(j)); });
    return order;
}

TopBottom top_bottom_indices(const Eigen::Ref<const Eigen::VectorXd>& attention, std::size_t r) {
    require(r >= 1, "top/bottom count r must be at least 1");
    const std::size_t n = std::size_t(attention.size());
    const std::size_t k = std::min(r, n);

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto value = [&](std::size_t i) { return attention(Eigen::Index(i)); };

    TopBottom out;
    std::vector<std::size_t> top = idx;
    std::partial_sort(top.begin(), top.begin() + std::ptrdiff_t(k), top.end(), [&](std::size_t i, std::size_t j) {
        return value(i) > value(j) || (value(i) == value(j) && i < j);
    });
    out.top.assign(top.begin(), top.begin() + std::ptrdiff_t(k));

    std::vector<std::size_t> bottom = idx;
    std::partial_sort(bottom.begin(), bottom.begin() + std::ptrdiff_t(k), bottom.end(),
                      [&](std::size_t i, std::size_t j) { return value(i) < value(j) || (value(i) == value(j) && i < j); });
    out.bottom.assign(bottom.begin(), bottom.begin() + std::ptrdiff_t(k));
    return out;
}

}  // namespace casii::model
