#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "casii/linalg.hpp"

namespace casii {

using BagId = std::uint32_t;

/// A labeled bag of instance embeddings, one instance per column (D×n).
/// Per-instance labels are synthetic ground truth and never reach training.
struct InstanceBag {
    BagId id = 0;
    int label = 0;
    linalg::Matrix instances;
    std::optional<std::vector<std::uint8_t>> instance_labels;

    std::size_t dim() const noexcept { return instances.rows(); }
    std::size_t size() const noexcept { return instances.cols(); }

    /// Checks n >= 1, label in {0,1}, and that the bag label is the OR of the
    /// instance labels when those are present.
    void validate() const;

    std::size_t positive_instance_count() const;
};

}  // namespace casii
