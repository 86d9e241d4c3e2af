#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "casii/bag.hpp"
#include "casii/nrl.hpp"
#include "casii/params.hpp"

namespace casii::model {

/// How instance embeddings are pooled into the bag embedding. `mean` replaces
/// the saliency attention with uniform weights and exists as a baseline.
enum class Pooling { saliency, mean };

/// Projected keys: tanh activations before normalization plus the unit columns.
struct KeyProjection {
    Eigen::MatrixXd activations;  // D_h×tau, tanh(W_kᵀK + b_k)
    Eigen::VectorXd norms;        // column norms of `activations`
    Eigen::MatrixXd unit;         // D_h×tau
};

/// Every intermediate of one forward pass over a bag of n instances.
struct ForwardTrace {
    KeyProjection keys;
    Eigen::MatrixXd query_activations;  // D_h×n, before normalization
    Eigen::VectorXd query_norms;
    Eigen::MatrixXd projected_queries;  // D_h×n, unit columns
    Eigen::MatrixXd values;             // D_h×n, ReLU output
    Eigen::MatrixXd correlation;        // n×tau cosine matrix
    Eigen::VectorXd saliency_logits;    // n
    Eigen::VectorXd attention;          // n, sums to 1
    Eigen::VectorXd bag_embedding;      // D_h
    double bag_logit = 0.0;
    double bag_probability = 0.5;
    Pooling pooling = Pooling::saliency;

    std::size_t size() const noexcept { return std::size_t(attention.size()); }
};

KeyProjection project_keys(const nrl::KeyMatrix& keys, const CasiiParams& params);

ForwardTrace forward(const InstanceBag& bag, const KeyProjection& keys, const CasiiParams& params,
                     Pooling pooling = Pooling::saliency);
ForwardTrace forward(const InstanceBag& bag, const nrl::KeyMatrix& keys, const CasiiParams& params,
                     Pooling pooling = Pooling::saliency);

double predict(const InstanceBag& bag, const nrl::KeyMatrix& keys, const CasiiParams& params,
               Pooling pooling = Pooling::saliency);

struct TopBottom {
    std::vector<std::size_t> top;
    std::vector<std::size_t> bottom;
};

/// Indices of the r largest and r smallest attention weights, r clipped to n.
/// Ties go to the lower index; the two lists may overlap when 2r > n.
TopBottom top_bottom_indices(const Eigen::Ref<const Eigen::VectorXd>& attention, std::size_t r);

/// Indices sorted by attention, largest first, lower index on ties.
std::vector<std::size_t> attention_order(const Eigen::Ref<const Eigen::VectorXd>& attention);

}  // namespace casii::model
