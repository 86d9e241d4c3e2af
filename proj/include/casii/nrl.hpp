#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "casii/bag.hpp"
#include "casii/linalg.hpp"

namespace casii::nrl {

inline constexpr std::size_t kDefaultTMax = 8;

/// Columns picked from one negative bag, highest leverage first.
struct Selection {
    linalg::Matrix columns;             // D×t
    std::vector<std::uint32_t> indices;  // original instance indices
    std::vector<double> scores;          // leverage score of every instance in the bag
    std::size_t rank = 0;
};

struct KeySource {
    BagId bag_id = 0;
    std::vector<std::uint32_t> indices;

    friend bool operator==(const KeySource&, const KeySource&) = default;
};

/// Frozen D×tau matrix of negative keys. Only const access is exposed; the
/// constructor checks tau == sum of per-bag counts and index distinctness.
class KeyMatrix {
public:
    KeyMatrix(linalg::Matrix keys, std::vector<KeySource> provenance);

    std::size_t dim() const noexcept { return keys_.rows(); }
    std::size_t tau() const noexcept { return keys_.cols(); }
    const linalg::Matrix& keys() const noexcept { return keys_; }
    const std::vector<KeySource>& provenance() const noexcept { return provenance_; }

    friend bool operator==(const KeyMatrix&, const KeyMatrix&) = default;

private:
    linalg::Matrix keys_;
    std::vector<KeySource> provenance_;
};

struct NrlOptions {
    std::size_t t_max = kDefaultTMax;
    /// Keep only the first N instances of each bag before selection; 0 keeps all.
    std::size_t max_instances_per_bag = 0;
};

/// Leverage scores of the columns of `a`, plus the numerical rank used.
std::pair<std::vector<double>, std::size_t> column_leverage(const linalg::Matrix& a);

/// Top t = min(t_max, n, rank) instances by leverage score; ties go to the
/// lower index.
Selection select_representative(const InstanceBag& bag, std::size_t t_max);

/// Concatenates the selections of every bag in ascending bag-id order.
KeyMatrix build_key_matrix(std::span<const InstanceBag> negative_bags, const NrlOptions& options = {});

std::string encode_keys(const KeyMatrix& keys);
KeyMatrix decode_keys(std::string bytes, const std::string& what = "key file");

void save_keys(const KeyMatrix& keys, const std::filesystem::path& path);
KeyMatrix load_keys(const std::filesystem::path& path);

}  // namespace casii::nrl
