#include "casii/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "casii/error.hpp"

namespace casii::synth {

namespace {

constexpr std::string_view kMagic = "CSID";
constexpr std::uint32_t kVersion = 1;

Eigen::VectorXd random_unit(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    do {
        for (auto& x : v) x = normal(rng);
    } while (v.norm() == 0.0);
    return v / v.norm();
}

struct Geometry {
    std::vector<Eigen::VectorXd> normal_means;
    Eigen::VectorXd tumor_direction;  // unit, orthogonal to the normal means when D allows
};

Geometry make_geometry(const SynthConfig& c) {
    std::mt19937_64 rng(mix_seed(c.geometry_seed.value_or(c.seed), 0x6e6f726dULL));
    Geometry g;
    for (std::size_t k = 0; k < c.n_normal_clusters; ++k) g.normal_means.push_back(random_unit(c.dim, rng));
    Eigen::VectorXd direction = random_unit(c.dim, rng);
    // Gram-Schmidt against the means; a mean that leaves too little of the
    // direction behind is skipped.
    std::vector<Eigen::VectorXd> basis;
    for (const auto& mean : g.normal_means) {
        Eigen::VectorXd b = mean;
        for (const auto& q : basis) b -= q * q.dot(b);
        if (b.norm() < 1e-8) continue;
        b.normalize();
        Eigen::VectorXd rest = direction - b * b.dot(direction);
        if (rest.norm() < 1e-8) continue;
        direction = rest.normalized();
        basis.push_back(b);
    }
    g.tumor_direction = direction;
    return g;
}

InstanceBag make_bag(const SynthConfig& c, const Geometry& geo, BagId id, int label) {
    std::mt19937_64 rng(mix_seed(c.seed, 0x62616700ULL + id));
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<std::size_t> size_dist(c.instances_min, c.instances_max);
    const std::size_t n = size_dist(rng);

    // Each bag mixes the normal clusters in its own proportions.
    std::uniform_real_distribution<double> weight_dist(0.2, 1.0);
    std::vector<double> weights(c.n_normal_clusters);
    for (auto& w : weights) w = weight_dist(rng);
    std::discrete_distribution<std::size_t> cluster_dist(weights.begin(), weights.end());

    std::vector<std::uint8_t> labels(n, 0);
    if (label == 1) {
        std::uniform_real_distribution<double> log_rate(std::log(c.witness_min), std::log(c.witness_max));
        const double rate = std::exp(log_rate(rng));
        const std::size_t positives = witness_count(rate, n);
        std::vector<std::size_t> positions(n);
        std::iota(positions.begin(), positions.end(), std::size_t{0});
        std::shuffle(positions.begin(), positions.end(), rng);
        for (std::size_t i = 0; i < positives; ++i) labels[positions[i]] = 1;
    }

    // A tumor instance is a normal draw moved off the normal manifold, so with
    // tumor_shift = noise_sigma = 0 the two classes share one distribution.
    const double scale = 1.0 / std::sqrt(double(c.dim));
    linalg::Matrix instances(c.dim, n);
    for (std::size_t j = 0; j < n; ++j) {
        const bool tumor = labels[j] == 1;
        const Eigen::VectorXd& mean = geo.normal_means[cluster_dist(rng)];
        for (std::size_t d = 0; d < c.dim; ++d) {
            double x = mean(Eigen::Index(d)) + c.cluster_spread * scale * normal(rng);
            if (tumor) x += c.tumor_shift * geo.tumor_direction(Eigen::Index(d)) + c.noise_sigma * scale * normal(rng);
            // Storage is f32; round here so generated and reloaded data agree.
            instances(d, j) = double(float(x));
        }
    }

    InstanceBag bag;
    bag.id = id;
    bag.label = label;
    bag.instances = std::move(instances);
    bag.instance_labels = std::move(labels);
    return bag;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void SynthConfig::validate() const {
    require(dim >= 1, "dim must be at least 1");
    require(n_negative_bags + n_positive_bags >= 1, "at least one bag is required");
    require(instances_min >= 1 && instances_min <= instances_max, "instances range must satisfy 1 <= min <= max");
    require(witness_min > 0.0 && witness_min <= witness_max && witness_max <= 1.0,
            "witness range must satisfy 0 < min <= max <= 1");
    require(n_normal_clusters >= 1, "n_normal_clusters must be at least 1");
    require(cluster_spread >= 0.0 && tumor_shift >= 0.0 && noise_sigma >= 0.0,
            "cluster_spread, tumor_shift, and noise_sigma must be non-negative");
}

std::string SynthConfig::fingerprint() const {
    std::ostringstream os;
    os << std::setprecision(17) << "dim=" << dim << ";neg=" << n_negative_bags << ";pos=" << n_positive_bags
       << ";inst=" << instances_min << "-" << instances_max << ";witness=" << witness_min << "-" << witness_max
       << ";clusters=" << n_normal_clusters << ";spread=" << cluster_spread << ";shift=" << tumor_shift
       << ";noise=" << noise_sigma << ";seed=" << seed << ";geometry=" << geometry_seed.value_or(seed);
    return os.str();
}

std::size_t witness_count(double witness_rate, std::size_t n) {
    const auto k = std::size_t(std::ceil(witness_rate * double(n) - 1e-9));
    return std::clamp<std::size_t>(k, 1, n);
}

Dataset generate(const SynthConfig& config, bool parallel) {
    config.validate();
    const Geometry geo = make_geometry(config);
    Dataset data;
    data.dim = config.dim;
    data.fingerprint = config.fingerprint();
    const std::size_t total = config.n_negative_bags + config.n_positive_bags;
    data.bags.resize(total);
    auto make = [&](std::size_t i) {
        data.bags[i] = make_bag(config, geo, BagId(i), i < config.n_negative_bags ? 0 : 1);
    };
    const std::size_t workers = parallel ? std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), total) : 1;
    if (workers <= 1) {
        for (std::size_t i = 0; i < total; ++i) make(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < total; i += workers) make(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    return data;
}

void Dataset::validate() const {
    for (const auto& bag : bags) {
        bag.validate();
        if (bag.dim() != dim) {
            fail(Errc::dimension_mismatch, "bag " + std::to_string(bag.id) + " has dimension " +
                                               std::to_string(bag.dim()) + ", dataset declares " + std::to_string(dim));
        }
    }
}

const InstanceBag* Dataset::find(BagId id) const {
    for (const auto& bag : bags) {
        if (bag.id == id) return &bag;
    }
    return nullptr;
}

std::vector<InstanceBag> Dataset::with_label(int label) const {
    std::vector<InstanceBag> out;
    for (const auto& bag : bags) {
        if (bag.label == label) out.push_back(bag);
    }
    return out;
}

WitnessGroup witness_group(const InstanceBag& bag, double micro_threshold) {
    if (!bag.instance_labels) {
        fail(Errc::invalid_argument, "bag " + std::to_string(bag.id) + " has no instance labels to group by");
    }
    if (bag.label == 0) return WitnessGroup::negative;
    const double rate = double(bag.positive_instance_count()) / double(bag.size());
    return rate < micro_threshold ? WitnessGroup::micro : WitnessGroup::macro;
}

const char* to_string(WitnessGroup g) {
    switch (g) {
        case WitnessGroup::negative: return "negative";
        case WitnessGroup::macro: return "macro";
        case WitnessGroup::micro: return "micro";
    }
    return "?";
}

std::pair<std::vector<InstanceBag>, std::vector<InstanceBag>> split(const std::vector<InstanceBag>& bags,
                                                                    double val_ratio, std::uint64_t seed) {
    require(val_ratio > 0.0 && val_ratio < 1.0, "val_ratio must lie in (0, 1)");
    std::vector<bool> to_val(bags.size(), false);
    for (int label : {0, 1}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < bags.size(); ++i) {
            if (bags[i].label == label) members.push_back(i);
        }
        if (members.size() < 2) {
            fail(Errc::invalid_argument, "class " + std::to_string(label) +
                                             " has fewer than two bags; cannot appear on both sides of the split");
        }
        const auto wanted = std::size_t(std::llround(val_ratio * double(members.size())));
        const std::size_t n_val = std::clamp<std::size_t>(wanted, 1, members.size() - 1);
        std::mt19937_64 rng(mix_seed(seed, 0x73706c00ULL + std::uint64_t(label)));
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i = 0; i < n_val; ++i) to_val[members[i]] = true;
    }
    std::pair<std::vector<InstanceBag>, std::vector<InstanceBag>> out;
    for (std::size_t i = 0; i < bags.size(); ++i) (to_val[i] ? out.second : out.first).push_back(bags[i]);
    return out;
}

std::string encode_dataset(const Dataset& data) {
    detail::ByteWriter w;
    w.magic(kMagic);
    w.u32(kVersion);
    w.u32(std::uint32_t(data.dim));
    w.u32(std::uint32_t(data.bags.size()));
    for (const auto& bag : data.bags) {
        require(bag.dim() == data.dim, "bag dimension differs from dataset dimension");
        w.u32(bag.id);
        w.u8(std::uint8_t(bag.label));
        w.u8(bag.instance_labels ? 1 : 0);
        w.u32(std::uint32_t(bag.size()));
        if (bag.instance_labels) {
            for (auto y : *bag.instance_labels) w.u8(y);
        }
        for (std::size_t j = 0; j < bag.size(); ++j) {
            for (std::size_t d = 0; d < bag.dim(); ++d) w.f32(float(bag.instances(d, j)));
        }
    }
    return w.bytes();
}

Dataset decode_dataset(std::string bytes, const std::string& what) {
    detail::ByteReader rd(std::move(bytes), what);
    rd.expect_magic(kMagic);
    rd.expect_version(kVersion);
    Dataset data;
    data.dim = rd.u32();
    const std::uint32_t count = rd.u32();
    if (data.dim == 0) fail(Errc::malformed, what + ": zero embedding dimension");

    for (std::uint32_t b = 0; b < count; ++b) {
        InstanceBag bag;
        bag.id = rd.u32();
        bag.label = rd.u8();
        const std::uint8_t has_labels = rd.u8();
        if (has_labels > 1) fail(Errc::malformed, what + ": bad instance-label flag");
        const std::uint32_t n = rd.u32();
        if (has_labels) {
            rd.need(n);
            std::vector<std::uint8_t> labels(n);
            for (auto& y : labels) y = rd.u8();
            bag.instance_labels = std::move(labels);
        }
        rd.need(std::size_t(n) * data.dim * 4);
        std::vector<double> values(std::size_t(n) * data.dim);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t d = 0; d < data.dim; ++d) values[d * n + j] = double(rd.f32());
        }
        try {
            bag.instances = linalg::Matrix(data.dim, n, std::move(values));
            bag.validate();
        } catch (const Error& e) {
            fail(Errc::malformed, what + ": " + e.what());
        }
        data.bags.push_back(std::move(bag));
    }
    rd.expect_end();
    return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    detail::write_file(path, encode_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path) {
    return decode_dataset(detail::read_file(path), path.string());
}

}  // namespace casii::synth
