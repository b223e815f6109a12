#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "delaysched/harness.hpp"

using namespace delaysched;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

HarnessConfig config_from_string(const std::string& text) {
    std::stringstream ss(text);
    return parse_config(ss);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config: full round trip of a valid file") {
    HarnessConfig cfg = config_from_string(R"(
# global settings
base_seed = 42
threads = 2
trace = 0

[experiment sweep]
algorithm = batched
regime = bandit
horizon = 1024 2048
capacity = 2 4
actions = 4
seeds = 3
delay = fixed
delay_value = 50
loss = stochastic_gap
gap = 0.25
)");
    REQUIRE(cfg.base_seed == 42);
    REQUIRE(cfg.threads == 2);
    REQUIRE(cfg.experiments.size() == 1);
    const ExperimentConfig& e = cfg.experiments.front();
    REQUIRE(e.name == "sweep");
    REQUIRE(e.horizons == std::vector<std::int64_t>{1024, 2048});
    REQUIRE(e.capacities == std::vector<std::int64_t>{2, 4});
    REQUIRE(e.delay_value == 50);
}

TEST_CASE("config: diagnostics carry the line and key") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            config_from_string(text);
            FAIL("expected ConfigError");
        } catch (const ConfigError& ex) {
            REQUIRE(std::string(ex.what()).find(needle) != std::string::npos);
        }
    };
    expect_error("base_seed = 1\nbogus_key = 2\n[experiment a]\nhorizon = 4\n", "bogus_key");
    expect_error("[experiment a]\nhorizon = x\n", "line 2");
    expect_error("[experiment a]\nalgorithm = quantum\nhorizon = 4\n", "algorithm");
    expect_error("[experiment a]\ncapacity = 4\n", "horizon");
    expect_error("base_seed = 1\n", "no [experiment]");
    expect_error("[experiment a]\nhorizon = 4\nhorizon = 8\n", "duplicate");
}

TEST_CASE("harness: baseline smoke run produces a sane summary row") {
    TempDir dir("delaysched_harness_smoke");
    HarnessConfig cfg = config_from_string(R"(
base_seed = 7
[experiment smoke]
algorithm = baseline
regime = bandit
horizon = 100
actions = 3
seeds = 1
delay = fixed
delay_value = 5
)");
    cfg.out_dir = dir.path.string();
    std::vector<RunPoint> pts = run_experiments(cfg);
    REQUIRE(pts.size() == 1);
    REQUIRE(pts[0].regret.mean >= -30.0);
    REQUIRE(pts[0].max_occupancy <= 5 + 1);  // sigma_max + 1 for fixed d = 5
    REQUIRE(fs::exists(dir.path / "summary.csv"));
    REQUIRE(fs::exists(dir.path / "checkpoints_smoke_T100_C0.csv"));
}

TEST_CASE("harness: capacity sweep shows non-increasing regret within noise") {
    TempDir dir("delaysched_harness_sweep");
    HarnessConfig cfg = config_from_string(R"(
base_seed = 11
[experiment sweep]
algorithm = batched
regime = bandit
horizon = 4096
capacity = 2 16
actions = 4
seeds = 60
delay = fixed
delay_value = 50
loss = stochastic_gap
gap = 0.25
)");
    cfg.out_dir = dir.path.string();
    std::vector<RunPoint> pts = run_experiments(cfg);
    REQUIRE(pts.size() == 2);
    const RunPoint& tight = pts[0];   // C = 2
    const RunPoint& roomy = pts[1];   // C = 16
    REQUIRE(roomy.regret.mean <=
            tight.regret.mean + 3.0 * (tight.regret.se + roomy.regret.se));
}

TEST_CASE("harness: identical config twice gives byte-identical outputs") {
    auto run_once = [](const std::string& dirname) {
        TempDir dir(dirname);
        HarnessConfig cfg = config_from_string(R"(
base_seed = 5
trace = 1
[experiment det]
algorithm = scheduled
policy = bernoulli
regime = bandit
horizon = 256
capacity = 8
actions = 3
seeds = 4
delay = geometric
delay_mean = 10
)");
        cfg.out_dir = dir.path.string();
        run_experiments(cfg);
        std::string all;
        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(dir.path)) files.push_back(f.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) all += f.filename().string() + "\n" + slurp(f.string());
        return all;
    };
    REQUIRE(run_once("delaysched_det_a") == run_once("delaysched_det_b"));
}

TEST_CASE("harness: thread count does not change the output") {
    auto run_with_threads = [](int threads, const std::string& dirname) {
        TempDir dir(dirname);
        HarnessConfig cfg = config_from_string(R"(
base_seed = 9
[experiment thr]
algorithm = scheduled
policy = pareto
regime = bandit
horizon = 256
capacity = 6
actions = 3
seeds = 8
delay = geometric
delay_mean = 12
)");
        cfg.out_dir = dir.path.string();
        cfg.threads = threads;
        run_experiments(cfg);
        return slurp((dir.path / "summary.csv").string());
    };
    REQUIRE(run_with_threads(1, "delaysched_thr1") == run_with_threads(4, "delaysched_thr4"));
}

TEST_CASE("scaling_fit: exact power laws and exclusion of bad points") {
    std::vector<std::pair<std::int64_t, double>> sqrt_points, linear_points;
    for (std::int64_t T : {1024LL, 2048LL, 4096LL, 8192LL, 16384LL, 32768LL}) {
        sqrt_points.push_back({T, 3.0 * std::sqrt(static_cast<double>(T))});
        linear_points.push_back({T, 0.25 * static_cast<double>(T)});
    }
    ScalingFit f1 = scaling_fit("sqrt", sqrt_points);
    REQUIRE(f1.valid);
    REQUIRE(f1.slope == Catch::Approx(0.5).margin(1e-12));
    ScalingFit f2 = scaling_fit("linear", linear_points);
    REQUIRE(f2.slope == Catch::Approx(1.0).margin(1e-12));

    sqrt_points[2].second = -1.0;  // excluded with a warning
    ScalingFit f3 = scaling_fit("holey", sqrt_points);
    REQUIRE(f3.points_dropped == 1);
    REQUIRE(f3.valid);
    REQUIRE(f3.slope == Catch::Approx(0.5).margin(1e-12));
    REQUIRE_FALSE(f3.note.empty());

    ScalingFit f4 = scaling_fit("short", {{1024, 10.0}, {2048, 14.0}, {4096, 20.0}});
    REQUIRE_FALSE(f4.valid);
}

TEST_CASE("overflow report: absurd capacity never flags, saturation is visible") {
    // C as large as T: the set is never full
    SchedulerMcConfig mc;
    mc.capacity = 1000;
    mc.delays.assign(1000, 3);
    mc.seeds = 200;
    mc.base_seed = 4;
    mc.policy.policy = PolicyKind::fixed_p;
    mc.policy.fixed_p = 1.0;
    SchedulerMcResult res = run_scheduler_mc(mc);
    REQUIRE(overflow_flags(res.checkpoints, res.full0_count, mc.seeds, 0.01).empty());
    for (std::int64_t c : res.full0_count) REQUIRE(c == 0);

    // p = 1 with C = 1 and fixed d = 5: the single slot is busy almost always
    SchedulerMcConfig sat;
    sat.capacity = 1;
    sat.delays.assign(1000, 5);
    sat.seeds = 50;
    sat.base_seed = 4;
    sat.policy.policy = PolicyKind::fixed_p;
    sat.policy.fixed_p = 1.0;
    SchedulerMcResult sres = run_scheduler_mc(sat);
    double rate = static_cast<double>(sres.total_overflow_rounds) /
                  (1000.0 * static_cast<double>(sat.seeds));
    REQUIRE(rate >= 0.6);
    auto flags = overflow_flags(sres.checkpoints, sres.full0_count, sat.seeds, 0.01);
    REQUIRE_FALSE(flags.empty());
}

TEST_CASE("wilson interval sanity") {
    WilsonInterval w = wilson_interval(0, 1000);
    REQUIRE(w.lo == 0.0);
    REQUIRE(w.hi < 0.01);
    w = wilson_interval(500, 1000);
    REQUIRE(w.lo < 0.5);
    REQUIRE(w.hi > 0.5);
    REQUIRE(w.hi - w.lo < 0.07);
}

TEST_CASE("derived stream keys never collide across seeds or tags") {
    std::vector<std::uint64_t> keys;
    for (std::uint64_t i = 0; i < 2000; ++i)
        for (std::uint64_t tag : {0ULL, 1ULL, 7ULL, 8ULL}) keys.push_back(derive_key(99, i, tag));
    std::sort(keys.begin(), keys.end());
    REQUIRE(std::adjacent_find(keys.begin(), keys.end()) == keys.end());
}
