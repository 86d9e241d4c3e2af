// casii: command-line driver for data generation, key building, training,
// evaluation, attention export and the gradient self-check.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "casii/config_file.hpp"
#include "casii/error.hpp"
#include "casii/eval.hpp"
#include "casii/nrl.hpp"
#include "casii/synthdata.hpp"
#include "casii/train.hpp"

namespace {

using namespace casii;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::invalid_argument: return kUsage;
        case Errc::numerical:
        case Errc::no_convergence: return kNumerical;
        default: return kData;
    }
}

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

model::Pooling parse_pooling(const std::string& name) {
    if (name == "saliency") return model::Pooling::saliency;
    if (name == "mean") return model::Pooling::mean;
    fail(Errc::invalid_argument, "pooling must be saliency or mean, got " + name);
}

std::string dataset_summary(const synth::Dataset& data) {
    std::size_t counts[3] = {0, 0, 0};
    bool labeled = true;
    for (const auto& bag : data.bags) {
        if (!bag.instance_labels) {
            labeled = false;
            break;
        }
        ++counts[int(synth::witness_group(bag))];
    }
    std::ostringstream os;
    os << "bags=" << data.bags.size() << " dim=" << data.dim;
    if (labeled) os << " negative=" << counts[0] << " macro=" << counts[1] << " micro=" << counts[2];
    return os.str();
}

// ---------------------------------------------------------------- generate-data

struct GenerateArgs {
    std::string config_path;
    std::string out;
    synth::SynthConfig flags;
    std::optional<std::uint64_t> geometry_seed;
    bool parallel = false;
};

void add_generate(CLI::App& app, GenerateArgs& a, std::function<void()>& run) {
    auto* sub = app.add_subcommand("generate-data", "Generate a synthetic bag dataset");
    sub->add_option("--config", a.config_path, "key=value generator settings")->check(CLI::ExistingFile);
    sub->add_option("--out", a.out, "dataset file to write")->required();
    auto& f = a.flags;
    sub->add_option("--seed", f.seed, "sampling seed");
    sub->add_option("--geometry-seed", a.geometry_seed, "cluster geometry seed (defaults to --seed)");
    sub->add_option("--dim", f.dim, "embedding dimension");
    sub->add_option("--negative-bags", f.n_negative_bags);
    sub->add_option("--positive-bags", f.n_positive_bags);
    sub->add_option("--instances-min", f.instances_min);
    sub->add_option("--instances-max", f.instances_max);
    sub->add_option("--witness-min", f.witness_min, "smallest positive-instance fraction");
    sub->add_option("--witness-max", f.witness_max, "largest positive-instance fraction");
    sub->add_option("--clusters", f.n_normal_clusters, "number of normal clusters");
    sub->add_option("--cluster-spread", f.cluster_spread);
    sub->add_option("--tumor-shift", f.tumor_shift, "distance of the tumor cluster from its anchor");
    sub->add_option("--noise-sigma", f.noise_sigma);
    sub->add_flag("--parallel", a.parallel, "generate bags on several threads");

    run = [&a, sub] {
        synth::SynthConfig config;
        if (!a.config_path.empty()) config::apply(config::read(a.config_path), config);
        // Explicit flags override the file.
        auto given = [sub](const char* name) { return sub->get_option(name)->count() > 0; };
        const auto& f = a.flags;
        if (given("--seed")) config.seed = f.seed;
        if (a.geometry_seed) config.geometry_seed = a.geometry_seed;
        if (given("--dim")) config.dim = f.dim;
        if (given("--negative-bags")) config.n_negative_bags = f.n_negative_bags;
        if (given("--positive-bags")) config.n_positive_bags = f.n_positive_bags;
        if (given("--instances-min")) config.instances_min = f.instances_min;
        if (given("--instances-max")) config.instances_max = f.instances_max;
        if (given("--witness-min")) config.witness_min = f.witness_min;
        if (given("--witness-max")) config.witness_max = f.witness_max;
        if (given("--clusters")) config.n_normal_clusters = f.n_normal_clusters;
        if (given("--cluster-spread")) config.cluster_spread = f.cluster_spread;
        if (given("--tumor-shift")) config.tumor_shift = f.tumor_shift;
        if (given("--noise-sigma")) config.noise_sigma = f.noise_sigma;

        const auto data = synth::generate(config, a.parallel);
        synth::save_dataset(data, a.out);
        std::cout << "wrote " << a.out << ": " << dataset_summary(data) << "\n";
    };
}

// ---------------------------------------------------------------- build-keys

struct KeysArgs {
    std::string data;
    std::string out;
    nrl::NrlOptions options;
};

void add_build_keys(CLI::App& app, KeysArgs& a, std::function<void()>& run) {
    auto* sub = app.add_subcommand("build-keys", "Select representative negative instances as keys");
    sub->add_option("--data", a.data, "dataset file")->required();
    sub->add_option("--out", a.out, "key file to write")->required();
    sub->add_option("--t-max", a.options.t_max, "keys per negative bag at most")->check(CLI::PositiveNumber);
    sub->add_option("--max-instances-per-bag", a.options.max_instances_per_bag,
                    "consider only the first N instances of each bag (0 = all)");

    run = [&a] {
        const auto data = synth::load_dataset(a.data);
        const auto negatives = data.with_label(0);
        if (negatives.empty()) fail(Errc::malformed, a.data + " contains no negative bags");
        const auto keys = nrl::build_key_matrix(negatives, a.options);
        nrl::save_keys(keys, a.out);
        std::cout << "wrote " << a.out << ": tau=" << keys.tau() << " from " << keys.provenance().size()
                  << " negative bags\n";
        std::cout << "bag_id,t\n";
        for (const auto& src : keys.provenance()) std::cout << src.bag_id << ',' << src.indices.size() << '\n';
    };
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string keys;
    std::string out;
    std::string history_prefix;
    std::string config_path;
    std::string pooling;
    bool no_bot = false;
    bool no_top = false;
    train::TrainConfig flags;
};

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& run) {
    auto* sub = app.add_subcommand("train", "Train with the multi-run selection protocol");
    sub->add_option("--data", a.data, "dataset file")->required();
    sub->add_option("--keys", a.keys, "key file")->required();
    sub->add_option("--out", a.out, "checkpoint of the selected run")->required();
    sub->add_option("--history-prefix", a.history_prefix,
                    "history CSVs go to <prefix>_run<i>.csv (default: --out without extension)");
    sub->add_option("--config", a.config_path, "key=value training settings")->check(CLI::ExistingFile);
    auto& f = a.flags;
    sub->add_flag("--no-bot", a.no_bot, "disable the bottom-r instance loss");
    sub->add_flag("--no-top", a.no_top, "disable the top-r instance loss");
    sub->add_option("--lambda1", f.lambda1, "weight of the bottom-r loss");
    sub->add_option("--lambda2", f.lambda2, "weight of the top-r loss");
    sub->add_option("--r", f.r, "instances in each top/bottom set");
    sub->add_option("--warmup", f.warmup_epochs, "epochs before instance losses switch on");
    sub->add_option("--patience", f.patience);
    sub->add_option("--max-epochs", f.max_epochs);
    sub->add_option("--runs", f.runs, "independent runs; the best validation AUC is kept");
    sub->add_option("--seed", f.seed);
    sub->add_option("--lr", f.learning_rate);
    sub->add_option("--weight-decay", f.weight_decay);
    sub->add_option("--val-ratio", f.val_ratio);
    sub->add_option("--latent-dim", f.latent_dim);
    sub->add_option("--pooling", a.pooling, "saliency (default) or mean");
    sub->add_flag("--parallel", f.parallel, "run trainings on separate threads");

    run = [&a, sub] {
        train::TrainConfig config;
        if (!a.config_path.empty()) config::apply(config::read(a.config_path), config);
        auto given = [sub](const char* name) { return sub->get_option(name)->count() > 0; };
        const auto& f = a.flags;
        if (a.no_bot) config.toggles.use_bot = false;
        if (a.no_top) config.toggles.use_top = false;
        if (given("--lambda1")) config.lambda1 = f.lambda1;
        if (given("--lambda2")) config.lambda2 = f.lambda2;
        if (given("--r")) config.r = f.r;
        if (given("--warmup")) config.warmup_epochs = f.warmup_epochs;
        if (given("--patience")) config.patience = f.patience;
        if (given("--max-epochs")) config.max_epochs = f.max_epochs;
        if (given("--runs")) config.runs = f.runs;
        if (given("--seed")) config.seed = f.seed;
        if (given("--lr")) config.learning_rate = f.learning_rate;
        if (given("--weight-decay")) config.weight_decay = f.weight_decay;
        if (given("--val-ratio")) config.val_ratio = f.val_ratio;
        if (given("--latent-dim")) config.latent_dim = f.latent_dim;
        if (!a.pooling.empty()) config.pooling = parse_pooling(a.pooling);
        if (f.parallel) config.parallel = true;
        config.validate();

        const auto data = synth::load_dataset(a.data);
        const auto keys = nrl::load_keys(a.keys);
        if (data.dim != keys.dim()) {
            fail(Errc::dimension_mismatch, "dataset dimension " + std::to_string(data.dim) +
                                               " does not match key dimension " + std::to_string(keys.dim()));
        }

        const auto result = train::multi_run_select(data.bags, keys, config);
        std::filesystem::path prefix = a.history_prefix;
        if (prefix.empty()) prefix = std::filesystem::path(a.out).replace_extension();
        for (std::size_t i = 0; i < result.runs.size(); ++i) {
            const auto& h = result.runs[i].history;
            const std::string path = prefix.string() + "_run" + std::to_string(i) + ".csv";
            train::save_history_csv(h, path);
            std::cout << "run " << i << " seed=" << result.run_seeds[i] << " epochs=" << h.epochs.size()
                      << " best_epoch=" << h.best_epoch << " val_auc=" << eval::format_double(h.best_val_auc)
                      << " history=" << path << "\n";
        }
        double lo = 1.0, hi = 0.0, sum = 0.0;
        for (const auto& run : result.runs) {
            lo = std::min(lo, run.history.best_val_auc);
            hi = std::max(hi, run.history.best_val_auc);
            sum += run.history.best_val_auc;
        }
        std::cout << "val_auc over runs: min=" << eval::format_double(lo)
                  << " mean=" << eval::format_double(sum / double(result.runs.size()))
                  << " max=" << eval::format_double(hi) << "\n";
        model::save_params(result.best().params, a.out);
        std::cout << "selected run " << result.best_run
                  << " best_val_auc=" << eval::format_double(result.best().history.best_val_auc) << " -> " << a.out
                  << "\n";
    };
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string data;
    std::string keys;
    std::string model;
    std::string csv;
    std::string pooling;
    bool group = false;
    double threshold = eval::kDefaultThreshold;
};

struct Artifacts {
    synth::Dataset data;
    nrl::KeyMatrix keys;
    model::CasiiParams params;
};

Artifacts load_artifacts(const std::string& data_path, const std::string& keys_path, const std::string& model_path) {
    Artifacts a{synth::load_dataset(data_path), nrl::load_keys(keys_path), model::load_params(model_path)};
    if (a.params.dim() != a.keys.dim() || a.params.tau() != a.keys.tau()) {
        fail(Errc::dimension_mismatch, "checkpoint expects D=" + std::to_string(a.params.dim()) +
                                           " tau=" + std::to_string(a.params.tau()) + " but keys have D=" +
                                           std::to_string(a.keys.dim()) + " tau=" + std::to_string(a.keys.tau()));
    }
    if (a.data.dim != a.keys.dim()) {
        fail(Errc::dimension_mismatch, "dataset dimension " + std::to_string(a.data.dim) +
                                           " does not match key dimension " + std::to_string(a.keys.dim()));
    }
    return a;
}

void add_eval(CLI::App& app, EvalArgs& a, std::function<void()>& run) {
    auto* sub = app.add_subcommand("eval", "Score a dataset with a trained checkpoint");
    sub->add_option("--data", a.data)->required();
    sub->add_option("--keys", a.keys)->required();
    sub->add_option("--model", a.model)->required();
    sub->add_flag("--group", a.group, "accuracy per witness group (needs instance labels)");
    sub->add_option("--threshold", a.threshold, "positive when P >= threshold");
    sub->add_option("--csv", a.csv, "also write the metrics as CSV");
    sub->add_option("--pooling", a.pooling, "saliency (default) or mean");

    run = [&a] {
        const auto pooling = a.pooling.empty() ? model::Pooling::saliency : parse_pooling(a.pooling);
        const auto art = load_artifacts(a.data, a.keys, a.model);
        if (a.group) {
            for (const auto& bag : art.data.bags) {
                if (!bag.instance_labels) {
                    fail(Errc::malformed, "--group needs instance labels; bag " + std::to_string(bag.id) +
                                              " has none");
                }
            }
        }
        const auto scores = train::predict_all(art.data.bags, art.keys, art.params, pooling);
        std::vector<int> labels;
        for (const auto& bag : art.data.bags) labels.push_back(bag.label);
        const auto report = eval::classification_metrics(scores, labels, a.threshold);
        std::cout << eval::format_report(report);
        if (a.group) std::cout << eval::format_groups(eval::grouped_accuracy(scores, art.data.bags, a.threshold));
        if (!a.csv.empty()) {
            std::ofstream out(a.csv, std::ios::trunc);
            if (!out) fail(Errc::io, "cannot open " + a.csv + " for writing");
            out << eval::report_csv(report);
        }
    };
}

// ---------------------------------------------------------------- attend

struct AttendArgs {
    std::string data;
    std::string keys;
    std::string model;
    std::string out;
    BagId bag_id = 0;
};

void add_attend(CLI::App& app, AttendArgs& a, std::function<void()>& run) {
    auto* sub = app.add_subcommand("attend", "Export per-instance attention for one bag");
    sub->add_option("--data", a.data)->required();
    sub->add_option("--keys", a.keys)->required();
    sub->add_option("--model", a.model)->required();
    sub->add_option("--bag-id", a.bag_id)->required();
    sub->add_option("--out", a.out, "attention CSV to write")->required();

    run = [&a] {
        const auto art = load_artifacts(a.data, a.keys, a.model);
        const InstanceBag* bag = art.data.find(a.bag_id);
        if (!bag) fail(Errc::invalid_argument, "no bag with id " + std::to_string(a.bag_id) + " in " + a.data);
        const auto trace = model::forward(*bag, art.keys, art.params);
        eval::export_attention(trace, *bag, a.out);
        std::cout << "wrote " << a.out << ": " << bag->size() << " instances, P=" << eval::format_double(trace.bag_probability)
                  << "\n";
        if (bag->instance_labels && bag->label == 1) {
            std::cout << "top-10% localization precision="
                      << eval::format_double(eval::attention_localization(trace, *bag)) << " witness_rate="
                      << eval::format_double(double(bag->positive_instance_count()) / double(bag->size())) << "\n";
        }
    };
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
    std::uint64_t seed = 1;
    std::size_t seeds = 1;
    std::vector<std::size_t> dims;
    bool corrupt = false;
};

constexpr double kGradTolerance = 1e-5;

void add_gradcheck(CLI::App& app, GradArgs& a, std::function<void()>& run, int& status) {
    auto* sub = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    sub->add_option("--seed", a.seed, "first seed");
    sub->add_option("--seeds", a.seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
    sub->add_option("--dims", a.dims, "D,D_h,tau,n")->delimiter(',')->expected(4);
    sub->add_flag("--corrupt", a.corrupt, "perturb one analytic entry (negative control)");

    run = [&a, &status] {
        train::GradCheckOptions o;
        if (!a.dims.empty()) {
            o.dim = a.dims[0];
            o.latent = a.dims[1];
            o.tau = a.dims[2];
            o.n = a.dims[3];
        }
        o.corrupt = a.corrupt;
        std::array<double, model::kBlockCount> worst{};
        std::array<std::string, model::kBlockCount> names;
        for (std::size_t s = 0; s < a.seeds; ++s) {
            o.seed = a.seed + s;
            const auto report = train::gradient_check(o);
            names = report.block_names;
            for (std::size_t b = 0; b < model::kBlockCount; ++b) worst[b] = std::max(worst[b], report.max_rel_error[b]);
        }
        bool ok = true;
        std::cout << "block              max_rel_error\n";
        for (std::size_t b = 0; b < model::kBlockCount; ++b) {
            const bool pass = worst[b] < kGradTolerance;
            ok = ok && pass;
            std::ostringstream num;
            num << std::scientific << std::setprecision(3) << worst[b];
            std::cout << std::left << std::setw(19) << names[b] << num.str() << (pass ? "" : "  FAIL") << "\n";
        }
        std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance 1e-05, " << a.seeds
                  << " seed(s))\n";
        if (!ok) status = kNumerical;
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"casii: multiple-instance learning with negative-instance cross-attention"};
    app.require_subcommand(1);

    GenerateArgs gen;
    KeysArgs keys;
    TrainArgs tr;
    EvalArgs ev;
    AttendArgs at;
    GradArgs gc;
    int status = kOk;
    std::function<void()> run_gen, run_keys, run_train, run_eval, run_attend, run_grad;
    add_generate(app, gen, run_gen);
    add_build_keys(app, keys, run_keys);
    add_train(app, tr, run_train);
    add_eval(app, ev, run_eval);
    add_attend(app, at, run_attend);
    add_gradcheck(app, gc, run_grad, status);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "casii: usage error: " << one_line(e.what()) << "\n";
        return kUsage;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (name == "generate-data") run_gen();
        else if (name == "build-keys") run_keys();
        else if (name == "train") run_train();
        else if (name == "eval") run_eval();
        else if (name == "attend") run_attend();
        else run_grad();
    } catch (const Error& e) {
        std::cerr << "casii " << name << ": error: " << one_line(e.what()) << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "casii " << name << ": error: " << one_line(e.what()) << "\n";
        return kData;
    }
    return status;
}
