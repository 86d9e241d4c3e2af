#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "casii/nrl.hpp"
#include "casii/params.hpp"
#include "casii/synthdata.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace casii;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "casii_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run_cli(const std::string& args) {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string(CASII_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::size_t count_lines(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

// Small labeled dataset plus keys and a short-trained model, shared by cases.
struct Fixture {
    std::string data = path("data.bin");
    std::string keys = path("keys.bin");
    std::string model = path("model.bin");
    Fixture() {
        if (fs::exists(model)) return;
        std::ofstream(path("gen.cfg")) << "dim = 6\nn_negative_bags = 10\nn_positive_bags = 10\n"
                                          "instances_min = 15\ninstances_max = 30\nwitness_min = 0.05\n"
                                          "witness_max = 0.4\ntumor_shift = 2\n";
        REQUIRE(run_cli("generate-data --config " + path("gen.cfg") + " --out " + data).code == 0);
        REQUIRE(run_cli("build-keys --data " + data + " --t-max 3 --out " + keys).code == 0);
        REQUIRE(run_cli("train --data " + data + " --keys " + keys + " --out " + model +
                      " --runs 1 --max-epochs 4 --warmup 1 --latent-dim 6 --val-ratio 0.2 --lr 0.005")
                    .code == 0);
    }
};

}  // namespace

TEST_CASE("generate-data") {
    Fixture f;
    const auto data = synth::load_dataset(f.data);
    CHECK(data.bags.size() == 20);
    CHECK(data.dim == 6);

    const auto a = run_cli("generate-data --config " + path("gen.cfg") + " --seed 9 --out " + path("a.bin"));
    CHECK(a.code == 0);
    CHECK(a.out.find("negative=10") != std::string::npos);
    CHECK(run_cli("generate-data --config " + path("gen.cfg") + " --seed 9 --parallel --out " + path("b.bin")).code ==
          0);
    CHECK(slurp(path("a.bin")) == slurp(path("b.bin")));
    CHECK(slurp(path("a.bin")) != slurp(f.data));

    const auto bad = run_cli("generate-data --witness-min 0.5 --witness-max 0.1 --out " + path("bad.bin"));
    CHECK(bad.code == 1);
    CHECK_FALSE(fs::exists(path("bad.bin")));
    CHECK(count_lines(bad.err) == 1);

    CHECK(run_cli("generate-data").code == 1);
    CHECK(run_cli("no-such-command").code == 1);
}

TEST_CASE("build-keys") {
    Fixture f;
    const auto keys = nrl::load_keys(f.keys);
    CHECK(keys.tau() == 30);  // 10 full-rank negative bags, 3 keys each

    // Rank-one negative bags contribute one key each.
    synth::Dataset d;
    d.dim = 4;
    for (BagId id = 0; id < 3; ++id) {
        InstanceBag bag;
        bag.id = id;
        bag.instances = linalg::Matrix(4, 6);
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 6; ++c) bag.instances(r, c) = double(r + 1) * double(c + id + 1);
        }
        d.bags.push_back(bag);
    }
    synth::save_dataset(d, path("rank1.bin"));
    const auto r = run_cli("build-keys --data " + path("rank1.bin") + " --t-max 8 --out " + path("rank1_keys.bin"));
    CHECK(r.code == 0);
    CHECK(r.out.find("tau=3") != std::string::npos);
    CHECK(r.out.find("0,1\n1,1\n2,1\n") != std::string::npos);

    CHECK(run_cli("build-keys --data " + path("missing.bin") + " --out " + path("k.bin")).code == 2);
    CHECK_FALSE(fs::exists(path("k.bin")));
}

TEST_CASE("train") {
    Fixture f;
    CHECK(fs::exists(path("model_run0.csv")));
    CHECK(model::load_params(f.model).dim() == 6);

    const std::string base = "train --data " + f.data + " --keys " + f.keys +
                             " --max-epochs 3 --warmup 1 --latent-dim 4 --val-ratio 0.2 ";
    const auto multi = run_cli(base + "--runs 3 --out " + path("multi.bin"));
    CHECK(multi.code == 0);
    for (int i = 0; i < 3; ++i) CHECK(fs::exists(path("multi_run" + std::to_string(i) + ".csv")));
    CHECK(fs::exists(path("multi.bin")));
    CHECK(multi.out.find("selected run") != std::string::npos);

    // Same seed and flags give the same history bytes.
    CHECK(run_cli(base + "--runs 3 --out " + path("again.bin")).code == 0);
    for (int i = 0; i < 3; ++i) {
        CHECK(slurp(path("multi_run" + std::to_string(i) + ".csv")) ==
              slurp(path("again_run" + std::to_string(i) + ".csv")));
    }
    CHECK(slurp(path("multi.bin")) == slurp(path("again.bin")));

    for (const char* toggles : {"", "--no-bot", "--no-top", "--no-bot --no-top"}) {
        CAPTURE(toggles);
        const auto r = run_cli(base + "--runs 1 " + toggles + " --out " + path("abl.bin"));
        CHECK(r.code == 0);
        const std::string csv = slurp(path("abl_run0.csv"));
        CHECK(csv.rfind("epoch,loss_total,loss_ce,loss_bot,loss_top,val_auc\n", 0) == 0);
        CHECK(count_lines(csv) == 4);
    }

    // Keys of a different dimension.
    CHECK(run_cli("generate-data --dim 5 --negative-bags 3 --positive-bags 3 --instances-min 5 --instances-max 8 "
                "--out " + path("d5.bin"))
              .code == 0);
    CHECK(run_cli("build-keys --data " + path("d5.bin") + " --out " + path("k5.bin")).code == 0);
    const auto mismatch = run_cli("train --data " + f.data + " --keys " + path("k5.bin") + " --out " + path("x.bin"));
    CHECK(mismatch.code == 2);
    CHECK(mismatch.err.find("dimension") != std::string::npos);
    CHECK_FALSE(fs::exists(path("x.bin")));

    CHECK(run_cli(base + "--lr -1 --out " + path("x.bin")).code == 1);
}

TEST_CASE("eval") {
    Fixture f;
    const std::string args = "eval --data " + f.data + " --keys " + f.keys + " --model " + f.model;
    const auto r = run_cli(args + " --group --csv " + path("metrics.csv"));
    CHECK(r.code == 0);
    CHECK(r.out.find("AUC        F1         PRECISION  RECALL") != std::string::npos);
    CHECK(r.out.find("macro") != std::string::npos);
    CHECK(slurp(path("metrics.csv")).rfind("auc,f1,precision,recall,tp,fp,tn,fn,threshold\n", 0) == 0);

    // Strip instance labels.
    auto data = synth::load_dataset(f.data);
    for (auto& bag : data.bags) bag.instance_labels.reset();
    synth::save_dataset(data, path("unlabeled.bin"));
    const std::string unlabeled = "eval --data " + path("unlabeled.bin") + " --keys " + f.keys + " --model " + f.model;
    CHECK(run_cli(unlabeled).code == 0);
    const auto grouped = run_cli(unlabeled + " --group");
    CHECK(grouped.code != 0);
    CHECK(grouped.out.empty());

    CHECK(run_cli("eval --data " + f.data + " --keys " + f.keys + " --model " + path("nope.bin")).code == 2);
    CHECK(run_cli("eval --data " + f.data + " --keys " + path("k5.bin") + " --model " + f.model).code == 2);
}

TEST_CASE("attend") {
    Fixture f;
    const auto data = synth::load_dataset(f.data);
    const auto& bag = data.bags.back();
    const std::string base = "attend --data " + f.data + " --keys " + f.keys + " --model " + f.model;
    const auto r = run_cli(base + " --bag-id " + std::to_string(bag.id) + " --out " + path("att.csv"));
    CHECK(r.code == 0);
    CHECK(r.out.find("localization precision=") != std::string::npos);

    std::istringstream csv(slurp(path("att.csv")));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "bag_id,instance_index,saliency_logit,attention_weight,instance_label");
    std::size_t rows = 0;
    double total = 0.0;
    while (std::getline(csv, line)) {
        ++rows;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
        REQUIRE(cells.size() == 5);
        total += std::stod(cells[3]);
    }
    CHECK(rows == bag.size());
    CHECK(std::abs(total - 1.0) < 1e-9);

    const auto missing = run_cli(base + " --bag-id 999 --out " + path("none.csv"));
    CHECK(missing.code != 0);
    CHECK_FALSE(fs::exists(path("none.csv")));
}

TEST_CASE("gradcheck") {
    const auto ok = run_cli("gradcheck --seed 3 --seeds 2");
    CHECK(ok.code == 0);
    CHECK(ok.out.find("gradcheck passed") != std::string::npos);
    CHECK(count_lines(ok.out) == 12);
    CHECK(run_cli("gradcheck --seed 3 --seeds 2").out == ok.out);

    CHECK(run_cli("gradcheck --dims 3,2,2,4").code == 0);
    const auto bad = run_cli("gradcheck --corrupt");
    CHECK(bad.code == 3);
    CHECK(bad.out.find("FAIL") != std::string::npos);
    CHECK(run_cli("gradcheck --dims 3,2").code == 1);
}

TEST_CASE("read-only inputs stay untouched") {
    Fixture f;
    const std::string data = slurp(f.data), keys = slurp(f.keys), model = slurp(f.model);
    run_cli("eval --data " + f.data + " --keys " + f.keys + " --model " + f.model + " --group");
    run_cli("attend --data " + f.data + " --keys " + f.keys + " --model " + f.model + " --bag-id 0 --out " +
          path("att0.csv"));
    run_cli("build-keys --data " + f.data + " --out " + path("k2.bin"));
    CHECK(slurp(f.data) == data);
    CHECK(slurp(f.keys) == keys);
    CHECK(slurp(f.model) == model);
    CHECK(slurp(path("k2.bin")).size() > 0);
}
