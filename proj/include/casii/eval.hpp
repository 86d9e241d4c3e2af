#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "casii/bag.hpp"
#include "casii/model.hpp"
#include "casii/synthdata.hpp"

namespace casii::eval {

inline constexpr double kDefaultThreshold = 0.5;

/// Area under the ROC curve as the Mann-Whitney statistic: the probability a
/// random positive outscores a random negative, ties counting one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct MetricsReport {
    double auc = 0.0;  // left at 0 with auc_defined=false for single-class input
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double threshold = kDefaultThreshold;
    bool auc_defined = false;
    bool precision_defined = false;
    bool recall_defined = false;
    bool f1_defined = false;
};

/// Confusion counts at `threshold` (score >= threshold is positive) and the
/// derived metrics. Undefined ratios are reported as 0 with their flag unset.
MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold = kDefaultThreshold);

std::string format_report(const MetricsReport& report);
std::string report_csv(const MetricsReport& report);

struct GroupStat {
    std::size_t count = 0;
    std::size_t correct = 0;
    double accuracy() const { return count ? double(correct) / double(count) : 0.0; }
};

/// Accuracy within each witness group; a group with no bags is absent.
struct GroupedAccuracy {
    std::optional<GroupStat> negative;
    std::optional<GroupStat> macro;
    std::optional<GroupStat> micro;
};

GroupedAccuracy grouped_accuracy(std::span<const double> probabilities, std::span<const InstanceBag> bags,
                                 double threshold = kDefaultThreshold,
                                 double micro_threshold = synth::kMicroThreshold);

std::string format_groups(const GroupedAccuracy& groups);

/// Fraction of true positives among the ceil(fraction * n) instances with the
/// highest attention. Requires a positive bag with instance labels.
double attention_localization(const model::ForwardTrace& trace, const InstanceBag& bag, double fraction = 0.1);

/// CSV rows bag_id,instance_index,saliency_logit,attention_weight,instance_label
/// sorted by attention, largest first; label -1 when unknown.
std::string attention_csv(const model::ForwardTrace& trace, const InstanceBag& bag);
void export_attention(const model::ForwardTrace& trace, const InstanceBag& bag, const std::filesystem::path& path);

/// Shortest round-trip text for a double.
std::string format_double(double x);

}  // namespace casii::eval
