#include <random>

#include "casii/error.hpp"
#include "casii/nrl.hpp"
#include "doctest.h"

using namespace casii;
using linalg::Matrix;

namespace {

InstanceBag make_bag(BagId id, Matrix instances, int label = 0) {
    InstanceBag bag;
    bag.id = id;
    bag.label = label;
    bag.instances = std::move(instances);
    return bag;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = normal(rng);
    }
    return m;
}

// Rank-one D×n matrix u vᵀ with no zero entries in v.
Matrix rank_one(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    std::vector<double> left(rows), right(cols);
    for (auto& x : left) x = u(rng);
    for (auto& x : right) x = u(rng);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = left[r] * right[c];
    }
    return m;
}

}  // namespace

TEST_CASE("select_representative picks the highest-leverage column") {
    // Columns (1,1) and (2,2): scores 0.2 / 0.8.
    const auto sel = nrl::select_representative(make_bag(0, Matrix(2, 2, {1, 2, 1, 2})), 1);
    REQUIRE(sel.indices.size() == 1);
    CHECK(sel.indices[0] == 1);
    CHECK(sel.rank == 1);
    CHECK(sel.scores[0] == doctest::Approx(0.2));
    CHECK(sel.scores[1] == doctest::Approx(0.8));
    CHECK(sel.columns(0, 0) == 2.0);
    CHECK(sel.columns(1, 0) == 2.0);
}

TEST_CASE("ties go to the lower index") {
    // Four identical unit columns: rank 1, every score 0.25.
    const auto sel = nrl::select_representative(make_bag(0, Matrix(2, 4, {1, 1, 1, 1, 0, 0, 0, 0})), 8);
    REQUIRE(sel.indices.size() == 1);
    CHECK(sel.indices[0] == 0);

    // Orthogonal columns of equal norm: all scores equal, full rank.
    const auto eq = nrl::select_representative(make_bag(0, Matrix(3, 3, {2, 0, 0, 0, 2, 0, 0, 0, 2})), 2);
    CHECK(eq.indices == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("t saturates at n and rank") {
    std::mt19937_64 rng(1);
    const auto all = nrl::select_representative(make_bag(0, random_matrix(8, 5, rng)), 20);
    CHECK(all.indices.size() == 5);
    // Sorted by descending score.
    for (std::size_t i = 1; i < all.indices.size(); ++i) {
        CHECK(all.scores[all.indices[i - 1]] >= all.scores[all.indices[i]] - 1e-12);
    }

    const auto wide = nrl::select_representative(make_bag(0, random_matrix(3, 10, rng)), 8);
    CHECK(wide.rank == 3);
    CHECK(wide.indices.size() == 3);
}

TEST_CASE("select_representative refuses positive and empty bags") {
    try {
        nrl::select_representative(make_bag(0, Matrix(2, 2, {1, 0, 0, 1}), 1), 2);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("negative bags only") != std::string::npos);
    }
    CHECK_THROWS_AS(nrl::select_representative(make_bag(0, Matrix(2, 2, {0, 0, 0, 0})), 2), Error);
}

TEST_CASE("build_key_matrix concatenates in ascending bag id") {
    std::mt19937_64 rng(2);
    const Matrix a = random_matrix(4, 6, rng);
    const Matrix b = random_matrix(4, 9, rng);
    std::vector<InstanceBag> bags{make_bag(7, b), make_bag(3, a)};
    const auto keys = nrl::build_key_matrix(bags, {2, 0});
    CHECK(keys.tau() == 4);
    CHECK(keys.dim() == 4);
    REQUIRE(keys.provenance().size() == 2);
    CHECK(keys.provenance()[0].bag_id == 3);
    CHECK(keys.provenance()[1].bag_id == 7);

    const auto sel_a = nrl::select_representative(bags[1], 2);
    const auto sel_b = nrl::select_representative(bags[0], 2);
    // Column 3 of the key matrix is the top column of the second bag.
    for (std::size_t d = 0; d < 4; ++d) {
        CHECK(keys.keys()(d, 0) == a(d, sel_a.indices[0]));
        CHECK(keys.keys()(d, 2) == b(d, sel_b.indices[0]));
        CHECK(keys.keys()(d, 3) == b(d, sel_b.indices[1]));
    }

    const auto single = nrl::build_key_matrix(std::vector<InstanceBag>{bags[1]}, {2, 0});
    CHECK(single.keys() == sel_a.columns);
}

TEST_CASE("rank-one bags contribute one key each") {
    std::mt19937_64 rng(3);
    std::vector<InstanceBag> bags;
    for (BagId id = 0; id < 6; ++id) bags.push_back(make_bag(id, rank_one(5, 12, rng)));
    CHECK(nrl::build_key_matrix(bags, {5, 0}).tau() == 6);
}

TEST_CASE("key matrix properties on random bags") {
    std::mt19937_64 rng(4);
    std::vector<InstanceBag> bags;
    for (BagId id = 0; id < 5; ++id) bags.push_back(make_bag(id * 2, random_matrix(6, 4 + id * 3, rng)));
    const auto small = nrl::build_key_matrix(bags, {2, 0});
    const auto large = nrl::build_key_matrix(bags, {4, 0});

    // Every key column is an exact copy of an instance of its bag.
    std::size_t col = 0;
    for (std::size_t p = 0; p < large.provenance().size(); ++p) {
        const auto& src = large.provenance()[p];
        const auto& bag = bags[p];
        CHECK(src.bag_id == bag.id);
        for (auto idx : src.indices) {
            for (std::size_t d = 0; d < 6; ++d) CHECK(large.keys()(d, col) == bag.instances(d, idx));
            ++col;
        }
        // Prefix property: the t_max = 2 selection is the head of the t_max = 4 one.
        const auto& head = small.provenance()[p].indices;
        REQUIRE(head.size() <= src.indices.size());
        CHECK(std::equal(head.begin(), head.end(), src.indices.begin()));
    }
    CHECK(col == large.tau());

    CHECK(nrl::encode_keys(nrl::build_key_matrix(bags, {4, 0})) == nrl::encode_keys(large));
}

TEST_CASE("max_instances_per_bag truncates before selection") {
    // The winning column sits past the cut.
    // Columns (1,1), (2,2), (1,0): scores 0.1, 0.4, 0.5; the first two alone score 0.2, 0.8.
    const auto bag = make_bag(0, Matrix(2, 3, {1, 2, 1, 1, 2, 0}));
    const auto full = nrl::build_key_matrix(std::vector<InstanceBag>{bag}, {1, 0});
    const auto cut = nrl::build_key_matrix(std::vector<InstanceBag>{bag}, {1, 2});
    CHECK(full.provenance()[0].indices[0] == 2);
    CHECK(cut.provenance()[0].indices[0] == 1);
}

TEST_CASE("build_key_matrix errors") {
    CHECK_THROWS_AS(nrl::build_key_matrix(std::vector<InstanceBag>{}), Error);
    std::vector<InstanceBag> mixed{make_bag(0, Matrix(2, 2, {1, 0, 0, 1})), make_bag(1, Matrix(3, 1, {1, 2, 3}))};
    try {
        nrl::build_key_matrix(mixed);
        FAIL("expected mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::dimension_mismatch);
    }
}

TEST_CASE("KeyMatrix constructor checks provenance") {
    CHECK_THROWS_AS(nrl::KeyMatrix(Matrix(1, 2, {1, 2}), {{0, {0}}}), Error);
    CHECK_THROWS_AS(nrl::KeyMatrix(Matrix(1, 2, {1, 2}), {{0, {1, 1}}}), Error);
    CHECK_NOTHROW(nrl::KeyMatrix(Matrix(1, 2, {1, 2}), {{0, {1}}, {4, {1}}}));
}

TEST_CASE("key files round-trip and reject corruption") {
    std::mt19937_64 rng(5);
    std::vector<InstanceBag> bags;
    for (BagId id = 0; id < 4; ++id) bags.push_back(make_bag(id, random_matrix(7, 10, rng)));
    const auto keys = nrl::build_key_matrix(bags, {3, 0});
    const std::string bytes = nrl::encode_keys(keys);
    CHECK(bytes.substr(0, 4) == "CSIK");
    CHECK(nrl::decode_keys(bytes) == keys);
    CHECK(nrl::encode_keys(nrl::decode_keys(bytes)) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "casii_test_keys.bin";
    nrl::save_keys(keys, path);
    CHECK(nrl::load_keys(path) == keys);
    std::filesystem::remove(path);

    auto expect_code = [](const std::string& b, Errc code) {
        try {
            nrl::decode_keys(b);
            FAIL("expected decode failure");
        } catch (const Error& e) {
            CHECK(e.code() == code);
        }
    };
    std::string magic = bytes;
    magic[0] = 'X';
    expect_code(magic, Errc::bad_magic);
    std::string version = bytes;
    version[4] = 9;
    expect_code(version, Errc::version_mismatch);
    expect_code(bytes.substr(0, bytes.size() - 3), Errc::truncated);
    expect_code(bytes + "x", Errc::malformed);

    try {
        nrl::load_keys("/nonexistent/dir/keys.bin");
        FAIL("expected io error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::io);
    }
}
