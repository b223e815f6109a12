// Experiment CLI: `delaysched run <config>` executes every experiment in a
// config file and writes plot-ready CSVs; `delaysched report <results-dir>`
// fits regret-scaling exponents over horizon sweeps and flags overflow
// checkpoints whose Wilson lower bound exceeds the target delta.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "delaysched/harness.hpp"

namespace fs = std::filesystem;
using namespace delaysched;

namespace {

struct SummaryRow {
    std::string experiment;
    std::int64_t T = 0;
    std::int64_t C = 0;
    double mean_regret = 0.0;
};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    return out;
}

std::vector<SummaryRow> read_summary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::vector<SummaryRow> rows;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;  // column header
            continue;
        }
        auto f = split_csv(line);
        if (f.size() < 17) continue;
        SummaryRow r;
        r.experiment = f[0];
        r.T = std::stoll(f[5]);
        r.C = std::stoll(f[7]);
        r.mean_regret = std::stod(f[10]);
        rows.push_back(r);
    }
    return rows;
}

int cmd_run(const std::string& config_path, long long seeds_override,
            const std::string& out_override, bool trace_override, int threads_override) {
    HarnessConfig cfg = parse_config_file(config_path);
    if (const char* env_out = std::getenv("DELAYSCHED_OUT")) cfg.out_dir = env_out;
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (trace_override) cfg.trace = true;
    if (threads_override > 0) cfg.threads = threads_override;
    if (seeds_override > 0)
        for (auto& e : cfg.experiments) e.seeds = seeds_override;

    auto t0 = std::chrono::steady_clock::now();
    std::vector<RunPoint> points = run_experiments(cfg);
    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();

    for (const RunPoint& p : points) {
        std::cout << p.experiment << " T=" << p.T << " C=" << p.C
                  << " mean_regret=" << p.regret.mean << " se=" << p.regret.se
                  << " overflow_rate=" << p.overflow_rate << " observed_frac="
                  << p.mean_observed_frac << " max_occ=" << p.max_occupancy << '\n';
    }
    std::cout << "wrote " << cfg.out_dir << "/summary.csv (" << points.size()
              << " configurations, " << secs << " s wall clock)\n";
    return 0;
}

int cmd_report(const std::string& results_dir) {
    auto rows = read_summary(results_dir + "/summary.csv");
    if (rows.empty()) {
        std::cerr << "report: no summary rows found in " << results_dir << "\n";
        return 1;
    }

    // scaling fits per (experiment, capacity) group over its horizon sweep
    std::map<std::string, std::vector<std::pair<std::int64_t, double>>> groups;
    for (const auto& r : rows)
        groups[r.experiment + "/C=" + std::to_string(r.C)].push_back({r.T, r.mean_regret});
    std::ofstream sc(results_dir + "/scaling.csv");
    sc << "# delaysched-scaling-v1\n";
    sc << "group,slope,points_used,points_dropped,valid,note\n";
    for (auto& [name, pts] : groups) {
        ScalingFit fit = scaling_fit(name, pts);
        sc << name << ',' << fit.slope << ',' << fit.points_used << ',' << fit.points_dropped
           << ',' << (fit.valid ? 1 : 0) << ",\"" << fit.note << "\"\n";
        if (fit.valid)
            std::cout << "scaling " << name << ": slope " << fit.slope << " over "
                      << fit.points_used << " horizons\n";
        else
            std::cout << "scaling " << name << ": not fit (" << fit.note << ")\n";
    }

    // overflow flags from every checkpoints file
    int flagged = 0;
    for (const auto& entry : fs::directory_iterator(results_dir)) {
        std::string fname = entry.path().filename().string();
        if (fname.rfind("checkpoints_", 0) != 0) continue;
        std::ifstream in(entry.path());
        std::string line;
        std::vector<std::int64_t> cps, fulls;
        std::int64_t seeds = 0;
        double delta = 0.0;
        bool header_seen = false;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (!header_seen) {
                header_seen = true;
                continue;
            }
            auto f = split_csv(line);
            if (f.size() < 11) continue;
            cps.push_back(std::stoll(f[0]));
            fulls.push_back(std::stoll(f[3]));
            seeds = std::stoll(f[8]);
            delta = std::stod(f[9]);
        }
        if (seeds < 1000)
            std::cout << "overflow " << fname << ": only " << seeds
                      << " seeds; bands are not meaningful below 1000\n";
        for (const OverflowFlag& fl : overflow_flags(cps, fulls, seeds, delta)) {
            std::cout << "overflow FLAG " << fname << " t=" << fl.t << " rate=" << fl.rate
                      << " wilson_lo=" << fl.wilson_lo << " delta=" << fl.delta << '\n';
            ++flagged;
        }
    }
    std::cout << "report complete: " << groups.size() << " scaling groups, " << flagged
              << " flagged overflow checkpoints\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Delay-scheduling simulation harness"};
    app.require_subcommand(1);

    std::string config_path, results_dir, out_dir;
    long long seeds = 0;
    int threads = 0;
    bool trace = false;

    CLI::App* run = app.add_subcommand("run", "run experiments from a config file");
    run->add_option("config", config_path, "config file path")->required();
    run->add_option("--seeds", seeds, "override seed count for every experiment");
    run->add_option("--out", out_dir, "output directory (overrides config and DELAYSCHED_OUT)");
    run->add_option("--threads", threads, "worker threads for seed-parallel runs");
    run->add_flag("--trace", trace, "write per-seed trace and scheduler-log CSVs");

    CLI::App* report = app.add_subcommand("report", "scaling and overflow reports from results");
    report->add_option("results", results_dir, "results directory with summary.csv")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (run->parsed()) return cmd_run(config_path, seeds, out_dir, trace, threads);
        return cmd_report(results_dir);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
}
