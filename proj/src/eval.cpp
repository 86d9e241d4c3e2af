#include "casii/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "casii/error.hpp"

namespace casii::eval {

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    require(scores.size() == labels.size(), "roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::size_t positives = 0;
    for (int y : labels) {
        require(y == 0 || y == 1, "roc_auc: labels must be 0 or 1");
        positives += std::size_t(y == 1);
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) fail(Errc::invalid_argument, "roc_auc needs both classes");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of positive ranks with tied groups sharing their mean rank.
    double positive_rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double mean_rank = 0.5 * double(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) positive_rank_sum += mean_rank;
        }
        i = j;
    }
    const double np = double(positives), nn = double(negatives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
    require(scores.size() == labels.size(), "classification_metrics: scores and labels differ in length");
    require(!scores.empty(), "classification_metrics needs at least one score");
    MetricsReport m;
    m.threshold = threshold;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] == 1;
        if (predicted && actual) ++m.tp;
        else if (predicted) ++m.fp;
        else if (actual) ++m.fn;
        else ++m.tn;
    }
    if (m.tp + m.fp > 0) {
        m.precision = double(m.tp) / double(m.tp + m.fp);
        m.precision_defined = true;
    }
    if (m.tp + m.fn > 0) {
        m.recall = double(m.tp) / double(m.tp + m.fn);
        m.recall_defined = true;
    }
    if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        m.f1_defined = true;
    }
    if (m.tp + m.fn > 0 && m.tn + m.fp > 0) {
        m.auc = roc_auc(scores, labels);
        m.auc_defined = true;
    }
    return m;
}

std::string format_report(const MetricsReport& r) {
    auto cell = [](double v, bool defined) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4) << v;
        return defined ? os.str() : os.str() + "*";
    };
    std::ostringstream os;
    os << "AUC        F1         PRECISION  RECALL\n"
       << std::left << std::setw(11) << cell(r.auc, r.auc_defined) << std::setw(11) << cell(r.f1, r.f1_defined)
       << std::setw(11) << cell(r.precision, r.precision_defined) << cell(r.recall, r.recall_defined) << "\n"
       << "tp=" << r.tp << " fp=" << r.fp << " tn=" << r.tn << " fn=" << r.fn << " threshold=" << r.threshold
       << "\n";
    if (!(r.auc_defined && r.f1_defined && r.precision_defined && r.recall_defined)) {
        os << "(* undefined: zero denominator or single class, reported as 0)\n";
    }
    return os.str();
}

std::string report_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "auc,f1,precision,recall,tp,fp,tn,fn,threshold\n"
       << format_double(r.auc) << ',' << format_double(r.f1) << ',' << format_double(r.precision) << ','
       << format_double(r.recall) << ',' << r.tp << ',' << r.fp << ',' << r.tn << ',' << r.fn << ','
       << format_double(r.threshold) << '\n';
    return os.str();
}

GroupedAccuracy grouped_accuracy(std::span<const double> probabilities, std::span<const InstanceBag> bags,
                                 double threshold, double micro_threshold) {
    require(probabilities.size() == bags.size(), "grouped_accuracy: one prediction per bag required");
    GroupedAccuracy out;
    for (std::size_t i = 0; i < bags.size(); ++i) {
        const auto group = synth::witness_group(bags[i], micro_threshold);
        auto& slot = group == synth::WitnessGroup::negative ? out.negative
                     : group == synth::WitnessGroup::macro  ? out.macro
                                                             : out.micro;
        if (!slot) slot = GroupStat{};
        ++slot->count;
        const int predicted = probabilities[i] >= threshold ? 1 : 0;
        slot->correct += std::size_t(predicted == bags[i].label);
    }
    return out;
}

std::string format_groups(const GroupedAccuracy& g) {
    std::ostringstream os;
    auto line = [&](const char* name, const std::optional<GroupStat>& s) {
        os << std::left << std::setw(10) << name;
        if (s) {
            os << std::fixed << std::setprecision(4) << s->accuracy() << "  (" << s->correct << "/" << s->count << ")\n";
        } else {
            os << "absent\n";
        }
    };
    os << "group     accuracy\n";
    line("negative", g.negative);
    line("macro", g.macro);
    line("micro", g.micro);
    return os.str();
}

double attention_localization(const model::ForwardTrace& trace, const InstanceBag& bag, double fraction) {
    require(fraction > 0.0 && fraction <= 1.0, "localization fraction must lie in (0, 1]");
    if (bag.label != 1) fail(Errc::invalid_argument, "attention localization needs a positive bag");
    require(bag.instance_labels.has_value(), "attention localization needs instance labels");
    require(trace.size() == bag.size(), "trace does not belong to this bag");

    const std::size_t n = bag.size();
    const auto k = std::clamp<std::size_t>(std::size_t(std::ceil(fraction * double(n) - 1e-9)), 1, n);
    const auto order = model::attention_order(trace.attention);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += (*bag.instance_labels)[order[i]];
    return double(hits) / double(k);
}

std::string attention_csv(const model::ForwardTrace& trace, const InstanceBag& bag) {
    require(trace.size() == bag.size(), "trace does not belong to this bag");
    std::ostringstream os;
    os << "bag_id,instance_index,saliency_logit,attention_weight,instance_label\n";
    for (auto i : model::attention_order(trace.attention)) {
        const int label = bag.instance_labels ? int((*bag.instance_labels)[i]) : -1;
        os << bag.id << ',' << i << ',' << format_double(trace.saliency_logits(Eigen::Index(i))) << ','
           << format_double(trace.attention(Eigen::Index(i))) << ',' << label << '\n';
    }
    return os.str();
}

void export_attention(const model::ForwardTrace& trace, const InstanceBag& bag, const std::filesystem::path& path) {
    const std::string text = attention_csv(trace, bag);
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) fail(Errc::io, "write to " + path.string() + " failed");
}

}  // namespace casii::eval
