#include "casii/nrl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "binary_io.hpp"
#include "casii/error.hpp"

namespace casii::nrl {

namespace {

constexpr std::string_view kMagic = "CSIK";
constexpr std::uint32_t kVersion = 1;

// Scores are compared on a 1e-12 grid so that columns whose scores differ only
// by eigen-solver rounding fall back to the index tie rule.
long long score_bucket(double score) { return std::llround(score * 1e12); }

}  // namespace

KeyMatrix::KeyMatrix(linalg::Matrix keys, std::vector<KeySource> provenance)
    : keys_(std::move(keys)), provenance_(std::move(provenance)) {
    std::size_t total = 0;
    for (const auto& src : provenance_) {
        std::set<std::uint32_t> seen(src.indices.begin(), src.indices.end());
        if (seen.size() != src.indices.size()) {
            fail(Errc::malformed, "duplicate instance index in keys from bag " + std::to_string(src.bag_id));
        }
        total += src.indices.size();
    }
    if (total != keys_.cols()) {
        fail(Errc::malformed, "key count " + std::to_string(keys_.cols()) +
                                  " does not match provenance total " + std::to_string(total));
    }
}

std::pair<std::vector<double>, std::size_t> column_leverage(const linalg::Matrix& a) {
    const linalg::LeadingEigen lead = linalg::leading_gram_eigen(a);
    return {linalg::leverage_scores(lead.eigen, lead.rank), lead.rank};
}

Selection select_representative(const InstanceBag& bag, std::size_t t_max) {
    if (bag.label != 0) fail(Errc::invalid_argument, "NRL accepts negative bags only (bag " + std::to_string(bag.id) + ")");
    if (bag.size() == 0) fail(Errc::invalid_argument, "NRL got an empty bag (bag " + std::to_string(bag.id) + ")");

    Selection out;
    std::tie(out.scores, out.rank) = column_leverage(bag.instances);

    std::vector<std::uint32_t> order(bag.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t i, std::uint32_t j) {
        return score_bucket(out.scores[i]) > score_bucket(out.scores[j]);
    });

    const std::size_t t = std::min({t_max, bag.size(), out.rank});
    out.indices.assign(order.begin(), order.begin() + std::ptrdiff_t(t));
    linalg::Matrix columns(bag.dim(), t);
    for (std::size_t c = 0; c < t; ++c) {
        for (std::size_t r = 0; r < bag.dim(); ++r) columns(r, c) = bag.instances(r, out.indices[c]);
    }
    out.columns = std::move(columns);
    return out;
}

KeyMatrix build_key_matrix(std::span<const InstanceBag> negative_bags, const NrlOptions& options) {
    if (negative_bags.empty()) fail(Errc::invalid_argument, "no negative bags to build keys from");
    require(options.t_max >= 1, "t_max must be at least 1");
    const std::size_t dim = negative_bags.front().dim();

    std::vector<const InstanceBag*> ordered;
    for (const auto& bag : negative_bags) {
        if (bag.dim() != dim) {
            fail(Errc::dimension_mismatch, "bag " + std::to_string(bag.id) + " has dimension " +
                                               std::to_string(bag.dim()) + ", expected " + std::to_string(dim));
        }
        ordered.push_back(&bag);
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });

    std::vector<KeySource> provenance;
    std::vector<std::vector<double>> key_columns;
    for (const InstanceBag* bag : ordered) {
        Selection sel;
        if (options.max_instances_per_bag > 0 && bag->size() > options.max_instances_per_bag) {
            InstanceBag head;
            head.id = bag->id;
            head.label = bag->label;
            head.instances = linalg::Matrix::from_eigen(
                bag->instances.view().leftCols(Eigen::Index(options.max_instances_per_bag)));
            sel = select_representative(head, options.t_max);
        } else {
            sel = select_representative(*bag, options.t_max);
        }
        for (std::size_t c = 0; c < sel.columns.cols(); ++c) key_columns.push_back(sel.columns.column(c));
        provenance.push_back({bag->id, std::move(sel.indices)});
    }

    linalg::Matrix keys(dim, key_columns.size());
    for (std::size_t c = 0; c < key_columns.size(); ++c) {
        for (std::size_t r = 0; r < dim; ++r) keys(r, c) = key_columns[c][r];
    }
    return KeyMatrix(std::move(keys), std::move(provenance));
}

std::string encode_keys(const KeyMatrix& keys) {
    detail::ByteWriter w;
    w.magic(kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(keys.dim()));
    w.u32(static_cast<std::uint32_t>(keys.tau()));
    w.u32(static_cast<std::uint32_t>(keys.provenance().size()));
    for (const auto& src : keys.provenance()) {
        w.u32(src.bag_id);
        w.u32(static_cast<std::uint32_t>(src.indices.size()));
        for (auto idx : src.indices) w.u32(idx);
    }
    for (std::size_t c = 0; c < keys.tau(); ++c) {
        for (std::size_t r = 0; r < keys.dim(); ++r) w.f64(keys.keys()(r, c));
    }
    return w.bytes();
}

KeyMatrix decode_keys(std::string bytes, const std::string& what) {
    detail::ByteReader rd(std::move(bytes), what);
    rd.expect_magic(kMagic);
    rd.expect_version(kVersion);
    const std::uint32_t dim = rd.u32();
    const std::uint32_t tau = rd.u32();
    const std::uint32_t sources = rd.u32();
    if (dim == 0 || tau == 0) fail(Errc::malformed, what + ": zero dimension or key count");

    std::vector<KeySource> provenance;
    std::size_t total = 0;
    for (std::uint32_t m = 0; m < sources; ++m) {
        KeySource src;
        src.bag_id = rd.u32();
        const std::uint32_t t = rd.u32();
        rd.need(std::size_t(t) * 4);
        src.indices.resize(t);
        for (auto& idx : src.indices) idx = rd.u32();
        total += t;
        provenance.push_back(std::move(src));
    }
    if (total != tau) fail(Errc::malformed, what + ": provenance total disagrees with tau");

    rd.need(std::size_t(tau) * dim * 8);
    std::vector<double> data(std::size_t(dim) * tau);
    for (std::size_t c = 0; c < tau; ++c) {
        for (std::size_t r = 0; r < dim; ++r) data[r * tau + c] = rd.f64();
    }
    rd.expect_end();
    try {
        return KeyMatrix(linalg::Matrix(dim, tau, std::move(data)), std::move(provenance));
    } catch (const Error& e) {
        fail(Errc::malformed, what + ": " + e.what());
    }
}

void save_keys(const KeyMatrix& keys, const std::filesystem::path& path) {
    detail::write_file(path, encode_keys(keys));
}

KeyMatrix load_keys(const std::filesystem::path& path) { return decode_keys(detail::read_file(path), path.string()); }

}  // namespace casii::nrl
