#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "casii/bag.hpp"

namespace casii::synth {

/// Generator settings for synthetic embedding bags.
///
/// Normal instances come from a mixture of `n_normal_clusters` Gaussians whose
/// means are random unit vectors; each negative bag draws its own mixture
/// weights. A tumor instance is drawn like a normal one and then displaced by
/// `tumor_shift` along a fixed direction orthogonal to the normal means, plus
/// `noise_sigma` noise. Per-bag witness rates are drawn log-uniformly from
/// [witness_min, witness_max].
struct SynthConfig {
    std::size_t dim = 64;
    std::size_t n_negative_bags = 100;
    std::size_t n_positive_bags = 100;
    std::size_t instances_min = 200;
    std::size_t instances_max = 500;
    double witness_min = 0.002;
    double witness_max = 0.3;
    std::size_t n_normal_clusters = 4;
    double cluster_spread = 0.5;
    double tumor_shift = 1.0;
    double noise_sigma = 0.1;
    std::uint64_t seed = 1;
    /// Seed for cluster geometry; defaults to `seed`. Sharing it between two
    /// configs with different `seed` gives independent samples of one world.
    std::optional<std::uint64_t> geometry_seed;

    /// Throws Errc::invalid_argument on inconsistent ranges.
    void validate() const;
    std::string fingerprint() const;
};

struct Dataset {
    std::size_t dim = 0;
    std::vector<InstanceBag> bags;
    /// Generator settings the data came from; empty for loaded files.
    std::string fingerprint;

    /// Bag-level checks plus dimension agreement across bags.
    void validate() const;
    const InstanceBag* find(BagId id) const;
    std::vector<InstanceBag> with_label(int label) const;
};

/// Bags are seeded individually, so `parallel` changes nothing but speed.
Dataset generate(const SynthConfig& config, bool parallel = false);

/// Number of positive instances in a positive bag of n instances.
std::size_t witness_count(double witness_rate, std::size_t n);

enum class WitnessGroup { negative, macro, micro };

inline constexpr double kMicroThreshold = 0.01;

WitnessGroup witness_group(const InstanceBag& bag, double micro_threshold = kMicroThreshold);
const char* to_string(WitnessGroup g);

/// Stratified seeded split: round(val_ratio * count) bags of each class go to
/// validation. Throws when either side would miss a class.
std::pair<std::vector<InstanceBag>, std::vector<InstanceBag>> split(const std::vector<InstanceBag>& bags,
                                                                    double val_ratio, std::uint64_t seed);

std::string encode_dataset(const Dataset& data);
Dataset decode_dataset(std::string bytes, const std::string& what = "dataset file");
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// SplitMix64 step; used to derive independent seeds from one base seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace casii::synth
