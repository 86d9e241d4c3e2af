#include <cmath>
#include <numeric>
#include <random>

#include "casii/error.hpp"
#include "casii/eval.hpp"
#include "doctest.h"

using namespace casii;

namespace {

InstanceBag labeled_bag(BagId id, std::vector<std::uint8_t> labels) {
    InstanceBag b;
    b.id = id;
    b.label = std::any_of(labels.begin(), labels.end(), [](auto y) { return y != 0; }) ? 1 : 0;
    b.instances = linalg::Matrix(1, labels.size());
    b.instance_labels = std::move(labels);
    return b;
}

model::ForwardTrace trace_with_attention(std::vector<double> attention) {
    model::ForwardTrace t;
    t.attention = Eigen::Map<Eigen::VectorXd>(attention.data(), Eigen::Index(attention.size()));
    t.saliency_logits = t.attention.array().log().matrix();
    return t;
}

// Brute-force pairwise AUC, ties counting one half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] != 1 || y[j] != 0) continue;
            pairs += 1.0;
            wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return wins / pairs;
}

}  // namespace

TEST_CASE("roc_auc examples") {
    CHECK(eval::roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}) == 1.0);
    CHECK(eval::roc_auc(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 1}) == 0.0);
    CHECK(eval::roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
    CHECK(eval::roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
    try {
        eval::roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("both classes") != std::string::npos);
    }
}

TEST_CASE("roc_auc properties") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> coarse(0, 6);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 4 + std::size_t(trial);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = coarse(rng) / 6.0;  // plenty of ties
            y[i] = int(i % 2);
        }
        std::shuffle(y.begin(), y.end(), rng);
        const double auc = eval::roc_auc(s, y);
        CHECK(auc == doctest::Approx(pairwise_auc(s, y)).epsilon(1e-12));

        // Strictly monotone transforms leave AUC unchanged.
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(eval::roc_auc(t, y) == doctest::Approx(auc).epsilon(1e-12));

        // Swapping labels gives the complement.
        std::vector<int> flipped(n);
        for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - y[i];
        CHECK(eval::roc_auc(s, flipped) == doctest::Approx(1.0 - auc).epsilon(1e-12));
    }
}

TEST_CASE("classification metrics") {
    const auto m = eval::classification_metrics(std::vector<double>{0.2, 0.6, 0.7, 0.4}, std::vector<int>{0, 0, 1, 1});
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
    CHECK(m.tn == 1);
    CHECK(m.fn == 1);
    CHECK(m.precision == 0.5);
    CHECK(m.recall == 0.5);
    CHECK(m.f1 == 0.5);
    CHECK(m.auc == 0.75);

    // 0.5 counts as positive.
    CHECK(eval::classification_metrics(std::vector<double>{0.5}, std::vector<int>{1}).tp == 1);

    // 49 positives with 43 found and 2 false alarms among 80 negatives.
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 49; ++i) {
        s.push_back(i < 43 ? 0.9 : 0.1);
        y.push_back(1);
    }
    for (int i = 0; i < 80; ++i) {
        s.push_back(i < 2 ? 0.8 : 0.2);
        y.push_back(0);
    }
    const auto t = eval::classification_metrics(s, y);
    CHECK(t.precision == doctest::Approx(0.9556).epsilon(1e-4));
    CHECK(t.recall == doctest::Approx(0.8776).epsilon(1e-4));

    const auto none = eval::classification_metrics(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 1});
    CHECK_FALSE(none.precision_defined);
    CHECK(none.precision == 0.0);
    CHECK_FALSE(none.f1_defined);
    CHECK(none.recall_defined);

    const auto single = eval::classification_metrics(std::vector<double>{0.1, 0.7}, std::vector<int>{0, 0});
    CHECK_FALSE(single.auc_defined);
    CHECK_FALSE(single.recall_defined);
    CHECK(eval::format_report(single).find("undefined") != std::string::npos);
    CHECK(eval::report_csv(m) == "auc,f1,precision,recall,tp,fp,tn,fn,threshold\n0.75,0.5,0.5,0.5,1,1,1,1,0.5\n");
}

TEST_CASE("grouped accuracy") {
    std::vector<std::uint8_t> micro(200, 0), macro(20, 0);
    micro[5] = 1;
    macro[0] = macro[1] = 1;
    const std::vector<InstanceBag> bags{labeled_bag(0, std::vector<std::uint8_t>(4, 0)),
                                        labeled_bag(1, std::vector<std::uint8_t>(4, 0)), labeled_bag(2, micro),
                                        labeled_bag(3, macro)};
    const auto g = eval::grouped_accuracy(std::vector<double>{0.1, 0.7, 0.2, 0.9}, bags);
    REQUIRE(g.negative);
    REQUIRE(g.micro);
    REQUIRE(g.macro);
    CHECK(g.negative->accuracy() == 0.5);
    CHECK(g.micro->accuracy() == 0.0);
    CHECK(g.macro->accuracy() == 1.0);

    const std::vector<InstanceBag> no_micro{bags[0], bags[3]};
    const auto h = eval::grouped_accuracy(std::vector<double>{0.1, 0.9}, no_micro);
    CHECK_FALSE(h.micro);
    CHECK(eval::format_groups(h).find("micro     absent") != std::string::npos);
}

TEST_CASE("attention localization examples") {
    std::vector<std::uint8_t> labels(10, 0);
    labels[9] = 1;
    const auto bag = labeled_bag(0, labels);
    std::vector<double> peaked(10, 0.01);
    peaked[9] = 0.91;
    CHECK(eval::attention_localization(trace_with_attention(peaked), bag) == 1.0);
    std::vector<double> wrong(10, 0.01);
    wrong[0] = 0.91;
    CHECK(eval::attention_localization(trace_with_attention(wrong), bag) == 0.0);

    // ceil(0.1 * 25) = 3 instances inspected.
    std::vector<std::uint8_t> l25(25, 0);
    l25[0] = l25[1] = 1;
    std::vector<double> a25(25, 0.03);
    a25[0] = 0.1;
    a25[1] = 0.09;
    a25[2] = 0.08;
    CHECK(eval::attention_localization(trace_with_attention(a25), labeled_bag(1, l25)) ==
          doctest::Approx(2.0 / 3.0));

    CHECK_THROWS_AS(eval::attention_localization(trace_with_attention({0.5, 0.5}), labeled_bag(2, {0, 0})), Error);
}

TEST_CASE("uniform attention localizes at chance") {
    // Monte-Carlo oracle: random attention over a bag with rate w has expected
    // top-k precision w.
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::uint8_t> labels(300, 0);
    for (std::size_t i = 0; i < 45; ++i) labels[i * 6] = 1;
    const auto bag = labeled_bag(0, labels);
    double total = 0.0;
    const int trials = 4000;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> a(300);
        for (auto& x : a) x = u(rng);
        total += eval::attention_localization(trace_with_attention(a), bag);
    }
    CHECK(total / trials == doctest::Approx(0.15).epsilon(0.05));
}

TEST_CASE("attention export") {
    const auto bag = labeled_bag(4, {0, 1, 0});
    const auto t = trace_with_attention({0.25, 0.5, 0.25});
    const std::string csv = eval::attention_csv(t, bag);
    const std::string header = "bag_id,instance_index,saliency_logit,attention_weight,instance_label\n";
    CHECK(csv.rfind(header, 0) == 0);
    const std::string body = csv.substr(header.size());
    CHECK(body.rfind("4,1,", 0) == 0);
    CHECK(body.find(",0.5,1\n") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    InstanceBag unlabeled = bag;
    unlabeled.instance_labels.reset();
    CHECK(eval::attention_csv(t, unlabeled).find(",0.5,-1\n") != std::string::npos);

    const auto path = std::filesystem::temp_directory_path() / "casii_test_attention.csv";
    eval::export_attention(t, bag, path);
    CHECK(std::filesystem::file_size(path) == csv.size());
    std::filesystem::remove(path);
}

TEST_CASE("format_double round-trips") {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5, 0.0}) CHECK(std::stod(eval::format_double(x)) == x);
    CHECK(eval::format_double(0.75) == "0.75");
}

TEST_CASE("an untrained model ranks bags near chance") {
    // Null-model oracle: fresh initialization has never seen a label.
    synth::SynthConfig c;
    c.dim = 16;
    c.instances_min = 20;
    c.instances_max = 40;
    const auto data = synth::generate(c);
    const auto keys = nrl::build_key_matrix(data.with_label(0), {4, 0});
    const auto params = model::init_params(16, 32, keys.tau(), 5);
    const auto projected = model::project_keys(keys, params);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& bag : data.bags) {
        scores.push_back(model::forward(bag, projected, params).bag_probability);
        labels.push_back(bag.label);
    }
    const double auc = eval::roc_auc(scores, labels);
    CHECK(auc > 0.35);
    CHECK(auc < 0.65);
}
