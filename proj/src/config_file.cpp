#include "casii/config_file.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "casii/error.hpp"

namespace casii::config {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end) fail(Errc::invalid_argument, "bad value for " + key + ": " + value);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
    if (value == "0" || value == "false" || value == "no" || value == "off") return false;
    fail(Errc::invalid_argument, "bad boolean for " + key + ": " + value);
}

using Setter = std::function<void(const std::string&, const std::string&)>;

void apply_table(const KeyValues& kv, const std::map<std::string, Setter>& table, const char* section) {
    for (const auto& [key, value] : kv) {
        const auto it = table.find(key);
        if (it == table.end()) fail(Errc::invalid_argument, std::string("unknown ") + section + " key: " + key);
        it->second(key, value);
    }
}

template <class T>
Setter number(T& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<T>(k, v); };
}

}  // namespace

KeyValues parse(const std::string& text) {
    KeyValues out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(Errc::invalid_argument, "config line " + std::to_string(lineno) + " has no '='");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) fail(Errc::invalid_argument, "config line " + std::to_string(lineno) + " has an empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

KeyValues read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void apply(const KeyValues& kv, synth::SynthConfig& c) {
    const std::map<std::string, Setter> table = {
        {"dim", number(c.dim)},
        {"n_negative_bags", number(c.n_negative_bags)},
        {"n_positive_bags", number(c.n_positive_bags)},
        {"instances_min", number(c.instances_min)},
        {"instances_max", number(c.instances_max)},
        {"witness_min", number(c.witness_min)},
        {"witness_max", number(c.witness_max)},
        {"n_normal_clusters", number(c.n_normal_clusters)},
        {"cluster_spread", number(c.cluster_spread)},
        {"tumor_shift", number(c.tumor_shift)},
        {"noise_sigma", number(c.noise_sigma)},
        {"seed", number(c.seed)},
        {"geometry_seed", [&c](const std::string& k, const std::string& v) {
             c.geometry_seed = parse_number<std::uint64_t>(k, v);
         }},
    };
    apply_table(kv, table, "data");
}

void apply(const KeyValues& kv, train::TrainConfig& c) {
    const std::map<std::string, Setter> table = {
        {"learning_rate", number(c.learning_rate)},
        {"weight_decay", number(c.weight_decay)},
        {"lambda1", number(c.lambda1)},
        {"lambda2", number(c.lambda2)},
        {"r", number(c.r)},
        {"warmup_epochs", number(c.warmup_epochs)},
        {"patience", number(c.patience)},
        {"max_epochs", number(c.max_epochs)},
        {"val_ratio", number(c.val_ratio)},
        {"runs", number(c.runs)},
        {"seed", number(c.seed)},
        {"use_bot", [&c](const std::string& k, const std::string& v) { c.toggles.use_bot = parse_bool(k, v); }},
        {"use_top", [&c](const std::string& k, const std::string& v) { c.toggles.use_top = parse_bool(k, v); }},
        {"latent_dim", number(c.latent_dim)},
        {"t_max", number(c.t_max)},
        {"parallel", [&c](const std::string& k, const std::string& v) { c.parallel = parse_bool(k, v); }},
        {"pooling", [&c](const std::string& k, const std::string& v) {
             if (v == "saliency") c.pooling = model::Pooling::saliency;
             else if (v == "mean") c.pooling = model::Pooling::mean;
             else fail(Errc::invalid_argument, "bad value for " + k + ": " + v);
         }},
    };
    apply_table(kv, table, "train");
}

}  // namespace casii::config
