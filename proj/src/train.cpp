#include "casii/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "casii/error.hpp"
#include "casii/eval.hpp"

namespace casii::train {

namespace {

std::vector<int> labels_of(const std::vector<InstanceBag>& bags) {
    std::vector<int> out;
    out.reserve(bags.size());
    for (const auto& bag : bags) out.push_back(bag.label);
    return out;
}

void require_both_classes(const std::vector<InstanceBag>& bags, const char* which) {
    bool has[2] = {false, false};
    for (const auto& bag : bags) has[bag.label == 1] = true;
    if (!has[0] || !has[1]) {
        fail(Errc::invalid_argument, std::string(which) + " split must contain both negative and positive bags");
    }
}

}  // namespace

std::vector<double> predict_all(const std::vector<InstanceBag>& bags, const nrl::KeyMatrix& keys,
                                const model::CasiiParams& params, model::Pooling pooling) {
    const auto projected = model::project_keys(keys, params);
    std::vector<double> out;
    out.reserve(bags.size());
    for (const auto& bag : bags) out.push_back(model::forward(bag, projected, params, pooling).bag_probability);
    return out;
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream os;
    os << "epoch,loss_total,loss_ce,loss_bot,loss_top,val_auc\n";
    for (const auto& e : history.epochs) {
        os << e.epoch << ',' << eval::format_double(e.train_loss.total) << ',' << eval::format_double(e.train_loss.ce)
           << ',' << eval::format_double(e.train_loss.bot) << ',' << eval::format_double(e.train_loss.top) << ','
           << eval::format_double(e.val_auc) << '\n';
    }
    return os.str();
}

void save_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::io, "cannot open " + path.string() + " for writing");
    out << history_csv(history);
    if (!out) fail(Errc::io, "write to " + path.string() + " failed");
}

TrainResult train_on_split(const std::vector<InstanceBag>& train_bags, const std::vector<InstanceBag>& val_bags,
                           const nrl::KeyMatrix& keys, const TrainConfig& config) {
    config.validate();
    require_both_classes(train_bags, "training");
    require_both_classes(val_bags, "validation");
    for (const auto* set : {&train_bags, &val_bags}) {
        for (const auto& bag : *set) {
            if (bag.dim() != keys.dim()) {
                fail(Errc::dimension_mismatch, "bag " + std::to_string(bag.id) + " has dimension " +
                                                   std::to_string(bag.dim()) + " but the keys have " +
                                                   std::to_string(keys.dim()));
            }
        }
    }

    model::CasiiParams params =
        model::init_params(keys.dim(), config.latent_dim, keys.tau(), synth::mix_seed(config.seed, 0x696e6974ULL));
    AdamState adam = AdamState::like(params);
    AdamSettings adam_settings;
    adam_settings.learning_rate = config.learning_rate;
    adam_settings.weight_decay = config.weight_decay;

    std::mt19937_64 shuffle_rng(synth::mix_seed(config.seed, 0x73687566ULL));
    std::vector<std::size_t> order(train_bags.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::vector<int> val_labels = labels_of(val_bags);

    TrainResult result{params, {}};
    double best_val_loss = 0.0;
    bool have_best = false;
    std::size_t stale = 0;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const bool warmup = epoch < config.warmup_epochs;
        const LossSettings settings = LossSettings::from(config, warmup);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        LossTerms sum;
        for (auto idx : order) {
            const InstanceBag& bag = train_bags[idx];
            const auto trace = model::forward(bag, keys, params, config.pooling);
            const LossTerms loss = evaluate_loss(trace, bag.label, settings);
            sum.total += loss.total;
            sum.ce += loss.ce;
            sum.bot += loss.bot;
            sum.top += loss.top;
            const auto grads = backward(trace, bag, keys, params, bag.label, settings);
            adam_step(params, grads, adam, adam_settings);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        const double steps = double(order.size());
        rec.train_loss = {sum.total / steps, sum.ce / steps, sum.bot / steps, sum.top / steps};
        const auto val_scores = predict_all(val_bags, keys, params, config.pooling);
        rec.val_auc = eval::roc_auc(val_scores, val_labels);
        for (std::size_t i = 0; i < val_bags.size(); ++i) rec.val_loss += bce_loss(val_scores[i], val_labels[i]);
        rec.val_loss /= double(val_bags.size());
        result.history.epochs.push_back(rec);

        const bool improved = !have_best || rec.val_auc > result.history.best_val_auc ||
                              (rec.val_auc == result.history.best_val_auc && rec.val_loss < best_val_loss);
        if (improved) {
            have_best = true;
            result.history.best_val_auc = rec.val_auc;
            result.history.best_epoch = rec.epoch;
            best_val_loss = rec.val_loss;
            result.params = params;
            stale = 0;
        } else if (!warmup) {
            ++stale;
        }
        if (!warmup && stale > config.patience) break;
    }
    return result;
}

TrainResult train(const std::vector<InstanceBag>& bags, const nrl::KeyMatrix& keys, const TrainConfig& config) {
    config.validate();
    auto [train_bags, val_bags] = synth::split(bags, config.val_ratio, config.seed);
    return train_on_split(train_bags, val_bags, keys, config);
}

std::uint64_t run_seed(std::uint64_t base, std::size_t run) {
    return run == 0 ? base : synth::mix_seed(base, 0x72756e00ULL + run);
}

MultiRunResult multi_run_select(const std::vector<InstanceBag>& bags, const nrl::KeyMatrix& keys,
                                const TrainConfig& config) {
    config.validate();
    MultiRunResult out;
    out.runs.resize(config.runs);
    for (std::size_t i = 0; i < config.runs; ++i) out.run_seeds.push_back(run_seed(config.seed, i));

    auto run_one = [&](std::size_t i) {
        TrainConfig cfg = config;
        cfg.seed = out.run_seeds[i];
        out.runs[i] = train(bags, keys, cfg);
    };

    if (config.parallel && config.runs > 1) {
        std::vector<std::exception_ptr> errors(config.runs);
        std::vector<std::thread> workers;
        for (std::size_t i = 0; i < config.runs; ++i) {
            workers.emplace_back([&, i] {
                try {
                    run_one(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    } else {
        for (std::size_t i = 0; i < config.runs; ++i) run_one(i);
    }

    for (std::size_t i = 1; i < out.runs.size(); ++i) {
        if (out.runs[i].history.best_val_auc > out.runs[out.best_run].history.best_val_auc) out.best_run = i;
    }
    return out;
}

double GradCheckReport::worst() const { return *std::max_element(max_rel_error.begin(), max_rel_error.end()); }

GradCheckReport gradient_check(const GradCheckOptions& o) {
    require(o.dim >= 1 && o.latent >= 1 && o.tau >= 1 && o.n >= 1, "gradcheck dimensions must be positive");
    std::mt19937_64 rng(synth::mix_seed(o.seed, 0x67726164ULL));
    std::normal_distribution<double> normal;

    auto random_matrix = [&](std::size_t rows, std::size_t cols) {
        linalg::Matrix m(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) m(r, c) = normal(rng);
        }
        return m;
    };

    InstanceBag bag;
    bag.id = 0;
    bag.label = int(o.seed % 2);
    bag.instances = random_matrix(o.dim, o.n);
    const nrl::KeyMatrix keys(random_matrix(o.dim, o.tau), {{0, [&] {
                                                                std::vector<std::uint32_t> idx(o.tau);
                                                                std::iota(idx.begin(), idx.end(), 0u);
                                                                return idx;
                                                            }()}});

    model::CasiiParams params = model::init_params(o.dim, o.latent, o.tau, synth::mix_seed(o.seed, 1));
    // Non-zero biases and a wider classifier so every path carries signal.
    for (auto& block : params.blocks()) {
        if (block.is_weight) continue;
        for (double& x : block.values) x = 0.3 * normal(rng);
    }
    params.saliency_weight *= 3.0;
    params.classifier_weight *= 3.0;

    LossSettings settings;
    settings.r = o.r;
    settings.lambda1 = 1.0;
    settings.lambda2 = 1.0;

    auto loss_at = [&](const model::CasiiParams& p) {
        return evaluate_loss(model::forward(bag, keys, p), bag.label, settings).total;
    };

    const auto trace = model::forward(bag, keys, params);
    model::Gradients analytic = backward(trace, bag, keys, params, bag.label, settings);
    if (o.corrupt) analytic.query_weight(0, 0) += 1e-3;

    GradCheckReport report;
    report.label = bag.label;
    const auto analytic_blocks = analytic.blocks();
    for (std::size_t b = 0; b < model::kBlockCount; ++b) {
        report.block_names[b] = std::string(analytic_blocks[b].name);
        double worst = 0.0;
        for (std::size_t i = 0; i < analytic_blocks[b].values.size(); ++i) {
            model::CasiiParams plus = params;
            model::CasiiParams minus = params;
            plus.blocks()[b].values[i] += o.step;
            minus.blocks()[b].values[i] -= o.step;
            const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * o.step);
            const double exact = analytic_blocks[b].values[i];
            const double scale = std::max({std::abs(exact), std::abs(numeric), o.floor});
            worst = std::max(worst, std::abs(exact - numeric) / scale);
        }
        report.max_rel_error[b] = worst;
    }
    return report;
}

}  // namespace casii::train
