#include "casii/params.hpp"

#include <cmath>
#include <random>

#include "binary_io.hpp"
#include "casii/error.hpp"

namespace casii::model {

namespace {

constexpr std::string_view kMagic = "CSIM";
constexpr std::uint32_t kVersion = 1;

template <class Vec>
void fill_uniform(Vec& values, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < values.size(); ++i) values.data()[i] = dist(rng);
}

}  // namespace

CasiiParams init_params(std::size_t dim, std::size_t latent, std::size_t tau, std::uint64_t seed) {
    require(dim >= 1 && latent >= 1 && tau >= 1, "init_params needs D, D_h, tau >= 1");
    CasiiParams p = CasiiParams::zeros(dim, latent, tau);
    std::mt19937_64 rng(seed);
    const double d = double(dim), h = double(latent), t = double(tau);
    fill_uniform(p.key_weight, d, h, rng);
    fill_uniform(p.query_weight, d, h, rng);
    fill_uniform(p.value_weight, d, h, rng);
    fill_uniform(p.saliency_weight, t, 1.0, rng);
    fill_uniform(p.classifier_weight, h, 1.0, rng);
    return p;
}

std::string encode_params(const CasiiParams& params) {
    detail::ByteWriter w;
    w.magic(kMagic);
    w.u32(kVersion);
    w.u32(std::uint32_t(params.dim()));
    w.u32(std::uint32_t(params.latent()));
    w.u32(std::uint32_t(params.tau()));
    for (const auto& block : params.blocks()) {
        for (double x : block.values) w.f64(x);
    }
    return w.bytes();
}

CasiiParams decode_params(std::string bytes, const std::string& what) {
    detail::ByteReader rd(std::move(bytes), what);
    rd.expect_magic(kMagic);
    rd.expect_version(kVersion);
    const std::uint32_t dim = rd.u32();
    const std::uint32_t latent = rd.u32();
    const std::uint32_t tau = rd.u32();
    if (dim == 0 || latent == 0 || tau == 0) fail(Errc::malformed, what + ": zero dimension in header");

    CasiiParams p = CasiiParams::zeros(dim, latent, tau);
    for (auto& block : p.blocks()) {
        rd.need(block.values.size() * 8);
        for (double& x : block.values) x = rd.f64();
    }
    rd.expect_end();
    if (auto bad = first_non_finite_block(p); !bad.empty()) {
        fail(Errc::malformed, what + ": non-finite value in " + std::string(bad));
    }
    return p;
}

void save_params(const CasiiParams& params, const std::filesystem::path& path) {
    detail::write_file(path, encode_params(params));
}

CasiiParams load_params(const std::filesystem::path& path) {
    return decode_params(detail::read_file(path), path.string());
}

}  // namespace casii::model
