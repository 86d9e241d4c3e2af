#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace casii::model {

inline constexpr std::size_t kDefaultLatentDim = 256;

/// One named, contiguous block of a parameter set. `is_weight` separates
/// weight matrices/vectors (subject to weight decay) from biases.
template <class T>
struct BasicBlock {
    std::string_view name;
    std::span<T> values;
    bool is_weight;
};
using Block = BasicBlock<double>;
using ConstBlock = BasicBlock<const double>;

inline constexpr std::size_t kBlockCount = 10;

/// Tensors of the cross-attention network and bag classifier. The same layout
/// carries parameters and their gradients; the tag keeps the two apart.
template <class Tag>
struct ParamSet {
    Eigen::MatrixXd key_weight;         // D×D_h
    Eigen::VectorXd key_bias;           // D_h
    Eigen::MatrixXd query_weight;       // D×D_h
    Eigen::VectorXd query_bias;         // D_h
    Eigen::MatrixXd value_weight;       // D×D_h
    Eigen::VectorXd value_bias;         // D_h
    Eigen::VectorXd saliency_weight;    // tau
    double saliency_bias = 0.0;
    Eigen::VectorXd classifier_weight;  // D_h
    double classifier_bias = 0.0;

    static ParamSet zeros(std::size_t dim, std::size_t latent, std::size_t tau) {
        const auto d = Eigen::Index(dim), h = Eigen::Index(latent), t = Eigen::Index(tau);
        ParamSet p;
        p.key_weight = Eigen::MatrixXd::Zero(d, h);
        p.key_bias = Eigen::VectorXd::Zero(h);
        p.query_weight = Eigen::MatrixXd::Zero(d, h);
        p.query_bias = Eigen::VectorXd::Zero(h);
        p.value_weight = Eigen::MatrixXd::Zero(d, h);
        p.value_bias = Eigen::VectorXd::Zero(h);
        p.saliency_weight = Eigen::VectorXd::Zero(t);
        p.classifier_weight = Eigen::VectorXd::Zero(h);
        return p;
    }

    std::size_t dim() const noexcept { return std::size_t(key_weight.rows()); }
    std::size_t latent() const noexcept { return std::size_t(key_weight.cols()); }
    std::size_t tau() const noexcept { return std::size_t(saliency_weight.size()); }

    /// Blocks in the fixed checkpoint order. Matrices are exposed in Eigen's
    /// column-major storage order.
    std::array<Block, kBlockCount> blocks() { return make_blocks<double>(*this); }
    std::array<ConstBlock, kBlockCount> blocks() const { return make_blocks<const double>(*this); }

    bool operator==(const ParamSet& other) const {
        auto a = blocks();
        auto b = other.blocks();
        for (std::size_t i = 0; i < kBlockCount; ++i) {
            if (a[i].values.size() != b[i].values.size()) return false;
            for (std::size_t j = 0; j < a[i].values.size(); ++j) {
                if (a[i].values[j] != b[i].values[j]) return false;
            }
        }
        return true;
    }

private:
    template <class T, class Self>
    static std::array<BasicBlock<T>, kBlockCount> make_blocks(Self& p) {
        auto span_of = [](auto& m) { return std::span<T>(m.data(), std::size_t(m.size())); };
        return {{
            {"key_weight", span_of(p.key_weight), true},
            {"key_bias", span_of(p.key_bias), false},
            {"query_weight", span_of(p.query_weight), true},
            {"query_bias", span_of(p.query_bias), false},
            {"value_weight", span_of(p.value_weight), true},
            {"value_bias", span_of(p.value_bias), false},
            {"saliency_weight", span_of(p.saliency_weight), true},
            {"saliency_bias", std::span<T>(&p.saliency_bias, 1), false},
            {"classifier_weight", span_of(p.classifier_weight), true},
            {"classifier_bias", std::span<T>(&p.classifier_bias, 1), false},
        }};
    }
};

struct ParamsTag {};
struct GradientsTag {};
using CasiiParams = ParamSet<ParamsTag>;
using Gradients = ParamSet<GradientsTag>;

/// Fan-aware uniform init: each weight block ~ U(-l, l) with
/// l = sqrt(6 / (fan_in + fan_out)); biases start at zero.
CasiiParams init_params(std::size_t dim, std::size_t latent, std::size_t tau, std::uint64_t seed);

/// Name of the first block holding a NaN/Inf, or an empty view when all are finite.
template <class Tag>
std::string_view first_non_finite_block(const ParamSet<Tag>& p) {
    for (const auto& b : p.blocks()) {
        for (double x : b.values) {
            if (!std::isfinite(x)) return b.name;
        }
    }
    return {};
}

std::string encode_params(const CasiiParams& params);
CasiiParams decode_params(std::string bytes, const std::string& what = "checkpoint");
void save_params(const CasiiParams& params, const std::filesystem::path& path);
CasiiParams load_params(const std::filesystem::path& path);

}  // namespace casii::model
