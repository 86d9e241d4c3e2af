#include "casii/bag.hpp"

#include <algorithm>
#include <string>

#include "casii/error.hpp"

namespace casii {

void InstanceBag::validate() const {
    const std::string who = "bag " + std::to_string(id);
    if (size() == 0) fail(Errc::malformed, who + " has no instances");
    if (label != 0 && label != 1) fail(Errc::malformed, who + " has a label outside {0,1}");
    if (!instance_labels) return;
    if (instance_labels->size() != size()) fail(Errc::malformed, who + " instance label count differs from n");
    for (auto y : *instance_labels) {
        if (y > 1) fail(Errc::malformed, who + " has an instance label outside {0,1}");
    }
    const bool any_positive = positive_instance_count() > 0;
    if (any_positive != (label == 1)) {
        fail(Errc::malformed, who + " label disagrees with its instance labels");
    }
}

std::size_t InstanceBag::positive_instance_count() const {
    require(instance_labels.has_value(), "bag " + std::to_string(id) + " carries no instance labels");
    return static_cast<std::size_t>(std::count(instance_labels->begin(), instance_labels->end(), 1));
}

}  // namespace casii
