#include "scott/cpd.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = SCOTT_CLI;
const std::string kData = SCOTT_DATA_DIR;

struct Run {
    int code = -1;
    std::string err;
};

Run run(const std::string& args) {
    const fs::path err = fs::temp_directory_path() / "scott_cli_stderr.txt";
    const std::string cmd = kCli + " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream f(err);
    std::stringstream ss;
    ss << f.rdbuf();
    r.err = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::set<std::string> listing(const fs::path& dir) {
    std::set<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
    return out;
}

std::size_t lines(const fs::path& p) {
    std::ifstream f(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line)) ++n;
    return n;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("scott_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write_config(const std::string& name, const json& j) {
        const auto p = dir_ / name;
        std::ofstream(p) << j.dump(2);
        return p.string();
    }

    json tiny_tsc() const {
        return json{{"task", "tsc"},
                    {"dataset", {{"path", kData + "/ucr/Chinatown"}, {"type", "traffic"}, {"znormalize", true}}},
                    {"model", {{"encoder", {{"dim", 8}, {"heads", 1}, {"head_dim", 8}}}}},
                    {"train", {{"encoder_epochs", 3}, {"classifier_epochs", 10}}}};
    }

    json tiny_cpd() const {
        return json{{"task", "cpd"},
                    {"dataset",
                     {{"kind", "synthetic-variance"}, {"train_length", 600}, {"test_length", 300}, {"test_count", 1},
                      {"min_segment", 50}, {"max_segment", 120}}},
                    {"window", {{"lambda", 30}, {"beta", 10}}},
                    {"model", {{"encoder", {{"dim", 8}, {"heads", 1}, {"head_dim", 8}, {"dilations", {1, 2}}}}}},
                    {"train", {{"encoder_epochs", 1}, {"classifier_epochs", 3}}}};
    }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, UnknownSubcommandIsUsageError) {
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("train --no-such-flag").code, 2);
}

TEST_F(Cli, MissingSeedIsConfigError) {
    auto cfg = write_config("c.json", tiny_tsc());
    const auto out = dir_ / "out";
    auto r = run("train --config " + cfg + " --out-dir " + out.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("seed"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, MissingDatasetNamesPath) {
    auto cfg = write_config("c.json", tiny_tsc());
    const auto out = dir_ / "out";
    auto r = run("train --config " + cfg + " --seed 1 --out-dir " + out.string() + " --dataset /nonexistent/Foo");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("/nonexistent/Foo"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, BadConfigKeyRejected) {
    json j = tiny_tsc();
    j["trian"] = json::object();
    auto cfg = write_config("c.json", j);
    auto r = run("train --config " + cfg + " --seed 1 --out-dir " + (dir_ / "o").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("trian"), std::string::npos);
    std::ofstream(dir_ / "broken.json") << "{";
    EXPECT_EQ(run("train --config " + (dir_ / "broken.json").string() + " --seed 1 --out-dir " + (dir_ / "o").string()).code, 2);
}

TEST_F(Cli, IngestSummarises) {
    auto out = dir_ / "ingest";
    auto r = run("ingest --dataset " + kData + "/ucr/GunPoint --out-dir " + out.string());
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = json::parse(slurp(out / "dataset.json"));
    EXPECT_EQ(j.at("n_train"), 50);
    EXPECT_EQ(j.at("n_test"), 150);
    EXPECT_EQ(j.at("length"), 150);
    EXPECT_EQ(j.at("classes"), 2);
}

TEST_F(Cli, TrainWritesArtifactsAndIsDeterministic) {
    auto cfg = write_config("c.json", tiny_tsc());
    const auto a = dir_ / "a", b = dir_ / "b";
    ASSERT_EQ(run("train --config " + cfg + " --seed 5 --out-dir " + a.string()).code, 0);
    ASSERT_EQ(run("train --config " + cfg + " --seed 5 --out-dir " + b.string()).code, 0);
    EXPECT_EQ(listing(a), (std::set<std::string>{"checkpoint.json", "train_report.json", "metrics.json"}));
    EXPECT_EQ(slurp(a / "metrics.json"), slurp(b / "metrics.json"));
    EXPECT_EQ(slurp(a / "checkpoint.json"), slurp(b / "checkpoint.json"));
    auto m = json::parse(slurp(a / "metrics.json"));
    EXPECT_GE(m.at("accuracy").get<double>(), 0.0);
    EXPECT_LE(m.at("accuracy").get<double>(), 1.0);

    // eval reproduces the accuracy from the checkpoint
    const auto e = dir_ / "e";
    ASSERT_EQ(run("eval --config " + cfg + " --seed 5 --checkpoint " + (a / "checkpoint.json").string() +
                  " --out-dir " + e.string())
                  .code,
              0);
    auto em = json::parse(slurp(e / "eval_metrics.json"));
    EXPECT_EQ(em.at("accuracy"), m.at("accuracy"));
}

TEST_F(Cli, SeedFlagOverridesConfig) {
    json j = tiny_tsc();
    j["seed"] = 1;
    auto cfg = write_config("c.json", j);
    ASSERT_EQ(run("train --config " + cfg + " --seed 2 --out-dir " + (dir_ / "a").string()).code, 0);
    auto m = json::parse(slurp(dir_ / "a" / "metrics.json"));
    EXPECT_EQ(m.at("seed"), 2);
}

TEST_F(Cli, LossBenchGrid) {
    json j{{"loss_bench", {{"sizes", {64, 128}}, {"batches", {16, 32, 64}}, {"length", 32}, {"repeats", 1}}}};
    auto cfg = write_config("c.json", j);
    const auto out = dir_ / "lb";
    ASSERT_EQ(run("loss-bench --config " + cfg + " --seed 3 --out-dir " + out.string()).code, 0);
    std::ifstream f(out / "loss_bench.csv");
    std::string line;
    std::getline(f, line);
    EXPECT_EQ(line.rfind("training_size,batch_size,n_views,original_seconds,simplified_seconds", 0), 0u);
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        ++rows;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        ASSERT_EQ(v.size(), 9u);
        EXPECT_GT(v[3], 0.0);
        EXPECT_GT(v[4], 0.0);
        EXPECT_LT(v[8], 1e-8);
        EXPECT_NEAR(v[6], v[7], 1e-6 * std::max(1.0, std::abs(v[6])));
    }
    EXPECT_EQ(rows, 6u);
}

TEST_F(Cli, CpdTrainSimulateAndEarlyDetect) {
    auto cfg = write_config("c.json", tiny_cpd());
    const auto model = dir_ / "model";
    auto r = run("train --config " + cfg + " --seed 4 --out-dir " + model.string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ckpt = (model / "checkpoint.json").string();

    auto s = scott::generate_variance_stream(250, 50, 100, 9);
    scott::save_series_csv((dir_ / "labelled.csv").string(), s);
    const auto sim = dir_ / "sim";
    ASSERT_EQ(run("cpd-simulate --seed 4 --checkpoint " + ckpt + " --dataset " + (dir_ / "labelled.csv").string() +
                  " --out-dir " + sim.string())
                  .code,
              0);
    EXPECT_EQ(lines(sim / "annotations.csv"), s.size() + 1);
    EXPECT_TRUE(fs::exists(sim / "metrics.json"));
    EXPECT_TRUE(json::parse(slurp(sim / "metrics.json")).contains("auprc"));

    scott::TimeSeries bare(s.values);
    scott::save_series_csv((dir_ / "bare.csv").string(), bare);
    const auto sim2 = dir_ / "sim2";
    ASSERT_EQ(run("cpd-simulate --seed 4 --checkpoint " + ckpt + " --dataset " + (dir_ / "bare.csv").string() +
                  " --out-dir " + sim2.string())
                  .code,
              0);
    EXPECT_EQ(lines(sim2 / "annotations.csv"), s.size() + 1);
    EXPECT_FALSE(fs::exists(sim2 / "metrics.json"));

    // a window that disagrees with the checkpoint is a config error
    EXPECT_EQ(run("cpd-simulate --seed 4 --lambda 40 --checkpoint " + ckpt + " --dataset " +
                  (dir_ / "bare.csv").string() + " --out-dir " + (dir_ / "sim3").string())
                  .code,
              2);

    json j = tiny_cpd();
    j["max_shift"] = 2;
    j["retrain_per_shift"] = false;
    auto ecfg = write_config("e.json", j);
    const auto ed = dir_ / "ed";
    ASSERT_EQ(run("early-detect --config " + ecfg + " --seed 4 --out-dir " + ed.string()).code, 0);
    EXPECT_EQ(lines(ed / "early_detect.csv"), 4u);
    // shift 0 is the plain run
    std::ifstream f(ed / "early_detect.csv");
    std::string header, row0;
    std::getline(f, header);
    std::getline(f, row0);
    auto m = json::parse(slurp(model / "metrics.json"));
    std::stringstream ss(row0);
    std::string shift, auprc;
    std::getline(ss, shift, ',');
    std::getline(ss, auprc, ',');
    EXPECT_EQ(shift, "0");
    EXPECT_DOUBLE_EQ(std::stod(auprc), m.at("auprc").get<double>());
}
