#pragma once

// Experiment harness: config-file parsing, the Monte-Carlo driver with
// deterministic per-seed streams, CSV emission, and the scaling / overflow
// reports. Also a scheduler-only Monte Carlo used for capacity studies, where
// the learner is irrelevant by precommitment.
//
// Config format: flat key = value lines with one [experiment <name>] section
// per experiment; '#' or ';' start a comment. Keys taking sweeps (horizon,
// capacity) accept space-separated lists. The schema is documented in the
// README and in parse_config() below.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "delaysched/env.hpp"
#include "delaysched/learners.hpp"
#include "delaysched/schedulers.hpp"
#include "delaysched/stats.hpp"

namespace delaysched {

// ---------------------------------------------------------------------------
// Scheduler-only Monte Carlo. Scheduling policies are precommitted, so
// occupancy and observation statistics do not depend on the learner at all;
// this path runs them at full speed.

struct SchedulerMcConfig {
    PolicyConfig policy;
    std::int64_t capacity = 1;
    std::vector<std::int64_t> delays;  // length T, 1-based round t at index t-1
    std::int64_t seeds = 1;
    std::uint64_t base_seed = 1;
    std::vector<std::int64_t> probe_rounds;  // conditional observation probes
};

struct SchedulerMcResult {
    std::vector<std::int64_t> checkpoints;
    std::vector<std::int64_t> full0_count;  // #seeds with |S_t^0| == C at the checkpoint
    std::vector<double> occ1_sum;           // sum over seeds of |S_t^1|
    std::vector<double> occ1_sumsq;
    std::vector<std::int64_t> probe_eligible;
    std::vector<std::int64_t> probe_observed;
    std::int64_t max_occupancy = 0;
    std::int64_t total_overflow_rounds = 0;
};

inline SchedulerMcResult run_scheduler_mc(const SchedulerMcConfig& cfg) {
    const auto T = static_cast<std::int64_t>(cfg.delays.size());
    if (T < 1) throw std::invalid_argument("scheduler mc: empty delay sequence");
    validate_policy(cfg.policy, cfg.capacity);

    SchedulerMcResult res;
    std::vector<std::int64_t> cp_index(static_cast<std::size_t>(T) + 1, -1);
    for (std::int64_t t = 1; t <= T; ++t)
        if ((t & (t - 1)) == 0 || t == T) {
            cp_index[static_cast<std::size_t>(t)] =
                static_cast<std::int64_t>(res.checkpoints.size());
            res.checkpoints.push_back(t);
        }
    res.full0_count.assign(res.checkpoints.size(), 0);
    res.occ1_sum.assign(res.checkpoints.size(), 0.0);
    res.occ1_sumsq.assign(res.checkpoints.size(), 0.0);
    std::vector<std::int64_t> probe_index(static_cast<std::size_t>(T) + 1, -1);
    for (std::size_t i = 0; i < cfg.probe_rounds.size(); ++i) {
        std::int64_t t = cfg.probe_rounds[i];
        if (t < 1 || t > T) throw std::invalid_argument("scheduler mc: probe round out of range");
        probe_index[static_cast<std::size_t>(t)] = static_cast<std::int64_t>(i);
    }
    res.probe_eligible.assign(cfg.probe_rounds.size(), 0);
    res.probe_observed.assign(cfg.probe_rounds.size(), 0);

    std::vector<ObservationEvent> events;
    std::vector<std::int64_t> preempted;
    for (std::int64_t seed = 0; seed < cfg.seeds; ++seed) {
        TrackingScheduler sched(cfg.policy, cfg.capacity, cfg.base_seed,
                                static_cast<std::uint64_t>(seed));
        for (std::int64_t t = 1; t <= T; ++t) {
            std::int64_t occ0 = sched.occupancy();
            bool eligible = occ0 < cfg.capacity;
            if (!eligible) ++res.total_overflow_rounds;
            std::int64_t d_t = cfg.delays[static_cast<std::size_t>(t - 1)];
            SchedulerDecision dec = sched.on_round(t, d_t);
            std::int64_t pi = probe_index[static_cast<std::size_t>(t)];
            if (pi >= 0 && eligible) {
                ++res.probe_eligible[static_cast<std::size_t>(pi)];
                bool observed = cfg.policy.policy == PolicyKind::pareto_proxy
                                    ? dec.proxy_delay >= d_t
                                    : dec.admit;
                if (observed) ++res.probe_observed[static_cast<std::size_t>(pi)];
            }
            std::int64_t ci = cp_index[static_cast<std::size_t>(t)];
            if (ci >= 0) {
                if (!eligible) ++res.full0_count[static_cast<std::size_t>(ci)];
                auto occ1 = static_cast<double>(sched.occupancy());
                res.occ1_sum[static_cast<std::size_t>(ci)] += occ1;
                res.occ1_sumsq[static_cast<std::size_t>(ci)] += occ1 * occ1;
            }
            sched.tick(t, events, preempted);
        }
        res.max_occupancy = std::max(res.max_occupancy, sched.max_occupancy());
    }
    return res;
}

// ---------------------------------------------------------------------------
// Experiment configuration.

struct ExperimentConfig {
    std::string name;
    std::string algorithm = "baseline";  // baseline | batched | scheduled | expectation
    Regime regime = Regime::bandit;
    PolicyKind policy = PolicyKind::bernoulli_clairvoyant;
    bool rates_explicit = false;
    RateKind rates = RateKind::baseline_seldin;
    std::vector<std::int64_t> horizons;
    std::vector<std::int64_t> capacities;  // {0} for baseline
    double cap_expect = 1.0;
    std::int64_t batch = 0;  // 0 = default rule
    bool alpha_auto = true;
    double alpha = 0.0;
    bool delta_auto = true;  // auto: T^{-1/2}
    double delta = 0.0;
    bool fixed_p_auto = true;  // auto: known-(T, D) recipe
    double fixed_p = 0.0;
    int num_actions = 2;
    std::int64_t seeds = 1;

    DelayKind delay_kind = DelayKind::fixed;
    std::int64_t delay_value = 0;
    double delay_mean = 0.0;
    std::int64_t delay_lo = 0, delay_hi = 0;
    LossKind loss_kind = LossKind::stochastic_gap;
    double gap = 0.25;
    int best_arm = 0;
    double loss_mean = 0.25;
    std::int64_t drift_period = 1;
    std::string instance_csv;
};

struct HarnessConfig {
    std::uint64_t base_seed = 1;
    std::string out_dir = "results";
    int threads = 1;
    bool trace = false;
    std::vector<ExperimentConfig> experiments;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

struct KeyValue {
    std::string value;
    int line = 0;
    bool used = false;
};

struct Section {
    std::string name;
    int line = 0;
    std::map<std::string, KeyValue> kv;
};

[[noreturn]] inline void config_fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

inline std::vector<std::int64_t> parse_int_list(const std::string& v, int line,
                                                const std::string& key) {
    std::vector<std::int64_t> out;
    std::stringstream ss(v);
    std::string tok;
    while (ss >> tok) {
        try {
            out.push_back(std::stoll(tok));
        } catch (const std::exception&) {
            config_fail(line, "key '" + key + "': cannot parse integer '" + tok + "'");
        }
    }
    if (out.empty()) config_fail(line, "key '" + key + "': empty list");
    return out;
}

}  // namespace detail

inline HarnessConfig parse_config(std::istream& in) {
    std::vector<detail::Section> sections;
    sections.push_back({});  // global section
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        std::size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') detail::config_fail(line_no, "unterminated section header");
            std::string head = detail::trim(line.substr(1, line.size() - 2));
            if (head.rfind("experiment", 0) != 0)
                detail::config_fail(line_no, "expected [experiment <name>]");
            std::string name = detail::trim(head.substr(10));
            if (name.empty()) detail::config_fail(line_no, "experiment section needs a name");
            detail::Section s;
            s.name = name;
            s.line = line_no;
            sections.push_back(s);
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) detail::config_fail(line_no, "expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) detail::config_fail(line_no, "empty key");
        if (sections.back().kv.count(key))
            detail::config_fail(line_no, "duplicate key '" + key + "'");
        sections.back().kv[key] = {value, line_no, false};
    }

    HarnessConfig cfg;
    auto& global = sections.front().kv;
    auto take = [](std::map<std::string, detail::KeyValue>& kv, const std::string& key,
                   std::string* out) {
        auto it = kv.find(key);
        if (it == kv.end()) return 0;
        it->second.used = true;
        *out = it->second.value;
        return it->second.line;
    };
    std::string v;
    if (int l = take(global, "base_seed", &v)) {
        try {
            cfg.base_seed = std::stoull(v);
        } catch (const std::exception&) {
            detail::config_fail(l, "base_seed: not an integer");
        }
    }
    take(global, "out_dir", &cfg.out_dir);
    if (int l = take(global, "threads", &v)) {
        cfg.threads = std::stoi(v);
        if (cfg.threads < 1) detail::config_fail(l, "threads must be >= 1");
    }
    if (int l = take(global, "trace", &v)) {
        if (v != "0" && v != "1") detail::config_fail(l, "trace must be 0 or 1");
        cfg.trace = v == "1";
    }
    for (auto& [key, kv] : global)
        if (!kv.used) detail::config_fail(kv.line, "unknown global key '" + key + "'");

    for (std::size_t si = 1; si < sections.size(); ++si) {
        auto& sec = sections[si];
        ExperimentConfig e;
        e.name = sec.name;
        auto want = [&](const std::string& key, std::string* out) { return take(sec.kv, key, out); };

        if (int l = want("algorithm", &v)) {
            if (v != "baseline" && v != "batched" && v != "scheduled" && v != "expectation")
                detail::config_fail(l, "algorithm must be baseline|batched|scheduled|expectation");
            e.algorithm = v;
        }
        if (int l = want("regime", &v)) {
            if (v == "bandit")
                e.regime = Regime::bandit;
            else if (v == "fullinfo")
                e.regime = Regime::fullinfo;
            else
                detail::config_fail(l, "regime must be bandit|fullinfo");
        }
        if (int l = want("policy", &v)) {
            if (v == "bernoulli")
                e.policy = PolicyKind::bernoulli_clairvoyant;
            else if (v == "pareto")
                e.policy = PolicyKind::pareto_proxy;
            else if (v == "fixed_p")
                e.policy = PolicyKind::fixed_p;
            else
                detail::config_fail(l, "policy must be bernoulli|pareto|fixed_p");
        }
        if (int l = want("rates", &v)) {
            if (v != "auto") {
                e.rates_explicit = true;
                if (v == "baseline_seldin")
                    e.rates = RateKind::baseline_seldin;
                else if (v == "batch_bandit")
                    e.rates = RateKind::batch_bandit;
                else if (v == "batch_fullinfo")
                    e.rates = RateKind::batch_fullinfo;
                else if (v == "cnp_bandit")
                    e.rates = RateKind::cnp_bandit;
                else if (v == "cnp_fullinfo")
                    e.rates = RateKind::cnp_fullinfo;
                else if (v == "ncp_bandit")
                    e.rates = RateKind::ncp_bandit;
                else if (v == "ncp_fullinfo")
                    e.rates = RateKind::ncp_fullinfo;
                else if (v == "fixed_const")
                    e.rates = RateKind::fixed_const;
                else
                    detail::config_fail(l, "unknown rates '" + v + "'");
            }
        }
        if (int l = want("horizon", &v)) e.horizons = detail::parse_int_list(v, l, "horizon");
        if (int l = want("capacity", &v)) e.capacities = detail::parse_int_list(v, l, "capacity");
        if (int l = want("capacity_expect", &v)) {
            e.cap_expect = std::stod(v);
            if (!(e.cap_expect > 0.0)) detail::config_fail(l, "capacity_expect must be positive");
        }
        if (int l = want("batch", &v)) {
            if (v == "auto")
                e.batch = 0;
            else {
                e.batch = std::stoll(v);
                if (e.batch < 1) detail::config_fail(l, "batch must be >= 1 or auto");
            }
        }
        if (want("alpha", &v) && v != "auto") {
            e.alpha_auto = false;
            e.alpha = std::stod(v);
        }
        if (want("delta", &v) && v != "auto") {
            e.delta_auto = false;
            e.delta = std::stod(v);
        }
        if (want("fixed_p", &v) && v != "auto") {
            e.fixed_p_auto = false;
            e.fixed_p = std::stod(v);
        }
        if (int l = want("actions", &v)) {
            e.num_actions = std::stoi(v);
            if (e.num_actions < 2) detail::config_fail(l, "actions must be >= 2");
        }
        if (int l = want("seeds", &v)) {
            e.seeds = std::stoll(v);
            if (e.seeds < 1) detail::config_fail(l, "seeds must be >= 1");
        }
        if (int l = want("delay", &v)) {
            if (v == "fixed")
                e.delay_kind = DelayKind::fixed;
            else if (v == "geometric")
                e.delay_kind = DelayKind::iid_geometric;
            else if (v == "uniform")
                e.delay_kind = DelayKind::iid_uniform;
            else
                detail::config_fail(l, "delay must be fixed|geometric|uniform");
        }
        if (want("delay_value", &v)) e.delay_value = std::stoll(v);
        if (want("delay_mean", &v)) e.delay_mean = std::stod(v);
        if (want("delay_min", &v)) e.delay_lo = std::stoll(v);
        if (want("delay_max", &v)) e.delay_hi = std::stoll(v);
        if (int l = want("loss", &v)) {
            if (v == "stochastic_gap")
                e.loss_kind = LossKind::stochastic_gap;
            else if (v == "adversarial_drift")
                e.loss_kind = LossKind::adversarial_drift;
            else if (v == "explicit")
                e.loss_kind = LossKind::explicit_matrix;
            else
                detail::config_fail(l, "loss must be stochastic_gap|adversarial_drift|explicit");
        }
        if (want("gap", &v)) e.gap = std::stod(v);
        if (want("best_arm", &v)) e.best_arm = std::stoi(v);
        if (want("loss_mean", &v)) e.loss_mean = std::stod(v);
        if (want("drift_period", &v)) e.drift_period = std::stoll(v);
        want("instance_csv", &e.instance_csv);

        for (auto& [key, kv] : sec.kv)
            if (!kv.used)
                detail::config_fail(kv.line, "unknown key '" + key + "' in experiment '" +
                                                 sec.name + "'");
        if (e.horizons.empty())
            detail::config_fail(sec.line, "experiment '" + e.name + "' needs a horizon");
        if (e.capacities.empty()) {
            if (e.algorithm == "baseline" || e.algorithm == "expectation")
                e.capacities = {0};
            else
                detail::config_fail(sec.line, "experiment '" + e.name + "' needs a capacity");
        }
        cfg.experiments.push_back(std::move(e));
    }
    if (cfg.experiments.empty()) throw ConfigError("config: no [experiment] sections found");
    return cfg;
}

inline HarnessConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

// ---------------------------------------------------------------------------
// Driver.

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct RunPoint {
    std::string experiment;
    std::string algorithm;
    Regime regime = Regime::bandit;
    std::string policy;
    std::string rates;
    std::int64_t T = 0;
    int K = 0;
    std::int64_t C = 0;
    std::int64_t batch = 0;
    std::int64_t seeds = 0;
    MeanSe regret;
    double mean_player_loss = 0.0;
    double overflow_rate = 0.0;
    double mean_observed_frac = 0.0;
    std::int64_t max_occupancy = 0;
    std::string config_hash;
    // per-checkpoint aggregates
    std::vector<std::int64_t> checkpoints;
    std::vector<double> cp_regret_mean, cp_regret_se;
    std::vector<std::int64_t> cp_full0;
    std::vector<double> cp_occ1_mean;
    double delta_used = 0.0;
};

inline const char* regime_name(Regime r) { return r == Regime::bandit ? "bandit" : "fullinfo"; }

inline const char* rate_name(RateKind k) {
    switch (k) {
        case RateKind::baseline_seldin: return "baseline_seldin";
        case RateKind::batch_bandit: return "batch_bandit";
        case RateKind::batch_fullinfo: return "batch_fullinfo";
        case RateKind::cnp_bandit: return "cnp_bandit";
        case RateKind::cnp_fullinfo: return "cnp_fullinfo";
        case RateKind::ncp_bandit: return "ncp_bandit";
        case RateKind::ncp_fullinfo: return "ncp_fullinfo";
        case RateKind::fixed_const: return "fixed_const";
    }
    return "?";
}

inline const char* policy_name(PolicyKind p) {
    switch (p) {
        case PolicyKind::bernoulli_clairvoyant: return "bernoulli";
        case PolicyKind::pareto_proxy: return "pareto";
        case PolicyKind::fixed_p: return "fixed_p";
    }
    return "?";
}

// The rate schedule an experiment resolves to when none is given explicitly.
inline RateKind resolve_rates(const ExperimentConfig& e) {
    if (e.rates_explicit) return e.rates;
    if (e.algorithm == "baseline") return RateKind::baseline_seldin;
    if (e.algorithm == "batched")
        return e.regime == Regime::bandit ? RateKind::batch_bandit : RateKind::batch_fullinfo;
    if (e.algorithm == "expectation")
        return e.regime == Regime::bandit ? RateKind::cnp_bandit : RateKind::cnp_fullinfo;
    switch (e.policy) {
        case PolicyKind::bernoulli_clairvoyant:
            return e.regime == Regime::bandit ? RateKind::cnp_bandit : RateKind::cnp_fullinfo;
        case PolicyKind::pareto_proxy:
            return e.regime == Regime::bandit ? RateKind::ncp_bandit : RateKind::ncp_fullinfo;
        case PolicyKind::fixed_p:
            return RateKind::fixed_const;
    }
    return RateKind::baseline_seldin;
}

namespace detail {

inline InstanceSpec make_instance_spec(const ExperimentConfig& e, std::int64_t T,
                                       std::uint64_t seed) {
    InstanceSpec spec;
    spec.horizon = T;
    spec.num_actions = e.num_actions;
    spec.seed = seed;
    spec.delay_kind = e.delay_kind;
    spec.fixed_delay = e.delay_value;
    spec.geometric_mean = e.delay_mean;
    spec.uniform_lo = e.delay_lo;
    spec.uniform_hi = e.delay_hi;
    spec.loss_kind = e.loss_kind;
    spec.gap = e.gap;
    spec.best_arm = e.best_arm;
    spec.base_mean = e.loss_mean;
    spec.drift_period = e.drift_period;
    return spec;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string point_hash(const ExperimentConfig& e, std::int64_t T, std::int64_t C,
                              std::uint64_t base_seed) {
    std::ostringstream os;
    os << e.name << '|' << e.algorithm << '|' << regime_name(e.regime) << '|'
       << policy_name(e.policy) << '|' << T << '|' << C << '|' << e.batch << '|' << e.num_actions
       << '|' << e.seeds << '|' << e.gap << '|' << e.loss_mean << '|' << e.best_arm << '|'
       << static_cast<int>(e.delay_kind) << '|' << e.delay_value << '|' << e.delay_mean << '|'
       << e.delay_lo << '|' << e.delay_hi << '|' << static_cast<int>(e.loss_kind) << '|'
       << e.drift_period << '|' << e.cap_expect << '|' << e.alpha << '|' << e.delta << '|'
       << e.fixed_p << '|' << base_seed;
    return hash_hex(fnv1a(os.str()));
}

}  // namespace detail

// Validates an experiment point before any seed runs: algorithm/policy/rate
// pairing and the overflow condition for the resolved parameters.
inline void validate_point(const ExperimentConfig& e, std::int64_t T, std::int64_t C) {
    RateKind rk = resolve_rates(e);
    if (e.algorithm == "scheduled") {
        validate_pairing(e.policy, rk, e.regime);
        if (e.policy != PolicyKind::fixed_p) {
            PolicyConfig pc;
            pc.policy = e.policy;
            pc.delta = e.delta_auto ? 1.0 / std::sqrt(static_cast<double>(T)) : e.delta;
            pc.alpha = e.alpha_auto ? chernoff_alpha(C, pc.delta) : e.alpha;
            validate_policy(pc, C);
        } else if (!e.fixed_p_auto && !(e.fixed_p > 0.0 && e.fixed_p <= 1.0)) {
            throw std::invalid_argument("experiment '" + e.name + "': fixed_p out of (0, 1]");
        }
    } else if (e.algorithm == "batched") {
        bool regime_ok = (rk == RateKind::batch_bandit && e.regime == Regime::bandit) ||
                         (rk == RateKind::batch_fullinfo && e.regime == Regime::fullinfo);
        if (!regime_ok)
            throw std::invalid_argument("experiment '" + e.name +
                                        "': batched runs need the matching batch rates");
        if (C < 1)
            throw std::invalid_argument("experiment '" + e.name + "': capacity must be >= 1");
    } else if (e.algorithm == "expectation") {
        if (!(e.cap_expect > 0.0))
            throw std::invalid_argument("experiment '" + e.name +
                                        "': capacity_expect must be positive");
    }
}

// Runs all seeds of one (experiment, horizon, capacity) point. Seeds may run
// on several threads; aggregation is an ordered reduction by seed index, so
// the output is identical no matter the thread count.
inline RunPoint run_point(const ExperimentConfig& e, std::int64_t T, std::int64_t C,
                          std::uint64_t base_seed, int threads, bool trace,
                          std::vector<RunResult>* keep_runs = nullptr) {
    RunPoint pt;
    pt.experiment = e.name;
    pt.algorithm = e.algorithm;
    pt.regime = e.regime;
    pt.T = T;
    pt.K = e.num_actions;
    pt.C = C;
    pt.seeds = e.seeds;
    pt.config_hash = detail::point_hash(e, T, C, base_seed);
    std::uint64_t hash_key = fnv1a(pt.config_hash);

    double delta = e.delta_auto ? 1.0 / std::sqrt(static_cast<double>(T)) : e.delta;
    pt.delta_used = delta;

    std::vector<RunResult> results(static_cast<std::size_t>(e.seeds));
    std::atomic<std::int64_t> next{0};
    std::string first_error;
    std::mutex err_mu;

    auto worker = [&]() {
        while (true) {
            std::int64_t i = next.fetch_add(1);
            if (i >= e.seeds) return;
            try {
                std::uint64_t inst_seed = derive_key(base_seed ^ hash_key,
                                                     static_cast<std::uint64_t>(i), 8);
                std::uint64_t run_seed = derive_key(base_seed ^ hash_key,
                                                    static_cast<std::uint64_t>(i), 7);
                Instance inst = e.instance_csv.empty()
                                    ? generate(detail::make_instance_spec(e, T, inst_seed))
                                    : load_instance_csv(e.instance_csv);
                RunOptions opts;
                opts.record_transcript = trace || keep_runs != nullptr;
                RunResult r;
                if (e.algorithm == "baseline") {
                    RateParams rp;
                    rp.kind = resolve_rates(e);
                    r = run_baseline(inst, e.regime, rp, run_seed, opts);
                } else if (e.algorithm == "batched") {
                    r = run_batched(inst, e.regime, C, e.batch, run_seed, opts);
                } else if (e.algorithm == "scheduled") {
                    PolicyConfig pc;
                    pc.policy = e.policy;
                    pc.delta = delta;
                    if (e.policy == PolicyKind::fixed_p) {
                        DelayStats ds = delay_stats(inst);
                        pc.fixed_p = e.fixed_p_auto
                                         ? fixed_const_setup(e.regime, inst.T, inst.K,
                                                             ds.total_delay, C)
                                               .p
                                         : e.fixed_p;
                    } else {
                        pc.alpha = e.alpha_auto ? chernoff_alpha(C, delta) : e.alpha;
                    }
                    r = run_scheduled(inst, e.regime, C, pc, resolve_rates(e), run_seed, opts);
                } else if (e.algorithm == "expectation") {
                    r = run_expectation_capacity(inst, e.regime, e.cap_expect, run_seed, opts);
                } else {
                    throw std::invalid_argument("unknown algorithm: " + e.algorithm);
                }
                results[static_cast<std::size_t>(i)] = std::move(r);
            } catch (const std::exception& ex) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (first_error.empty())
                    first_error = "seed " + std::to_string(i) + ": " + ex.what();
                next.store(e.seeds);
                return;
            }
        }
    };

    int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(e.seeds)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (!first_error.empty()) throw std::runtime_error("run failed: " + first_error);

    // ordered reduction by seed index
    std::vector<double> regrets;
    regrets.reserve(results.size());
    double player_sum = 0.0, observed_frac_sum = 0.0;
    std::int64_t overflow_total = 0;
    const RegretTrace& t0 = results.front().trace;
    pt.checkpoints = t0.checkpoints;
    std::vector<std::vector<double>> cp_regrets(pt.checkpoints.size());
    pt.cp_full0.assign(pt.checkpoints.size(), 0);
    pt.cp_occ1_mean.assign(pt.checkpoints.size(), 0.0);
    for (const RunResult& r : results) {
        const RegretTrace& tr = r.trace;
        regrets.push_back(tr.final_regret);
        player_sum += tr.final_player_loss;
        observed_frac_sum += static_cast<double>(tr.observations) / static_cast<double>(T);
        overflow_total += tr.overflow_rounds;
        pt.max_occupancy = std::max(pt.max_occupancy, tr.max_occupancy);
        for (std::size_t c = 0; c < pt.checkpoints.size(); ++c) {
            cp_regrets[c].push_back(tr.regret[c]);
            pt.cp_full0[c] += tr.full0[c];
            pt.cp_occ1_mean[c] += static_cast<double>(tr.occupancy1[c]);
        }
    }
    pt.regret = mean_se(regrets);
    pt.mean_player_loss = player_sum / static_cast<double>(e.seeds);
    pt.overflow_rate = static_cast<double>(overflow_total) /
                       (static_cast<double>(T) * static_cast<double>(e.seeds));
    pt.mean_observed_frac = observed_frac_sum / static_cast<double>(e.seeds);
    for (std::size_t c = 0; c < pt.checkpoints.size(); ++c) {
        MeanSe ms = mean_se(cp_regrets[c]);
        pt.cp_regret_mean.push_back(ms.mean);
        pt.cp_regret_se.push_back(ms.se);
        pt.cp_occ1_mean[c] /= static_cast<double>(e.seeds);
    }
    if (keep_runs) *keep_runs = std::move(results);
    return pt;
}

// ---------------------------------------------------------------------------
// Reports.

struct ScalingFit {
    std::string experiment;
    double slope = 0.0;
    int points_used = 0;
    int points_dropped = 0;  // non-positive mean regrets excluded
    bool valid = false;      // >= 4 horizons spanning >= 16x
    std::string note;
};

inline ScalingFit scaling_fit(const std::string& name,
                              const std::vector<std::pair<std::int64_t, double>>& t_regret) {
    ScalingFit fit;
    fit.experiment = name;
    std::vector<double> lx, ly;
    for (const auto& [T, r] : t_regret) {
        if (r <= 0.0) {
            ++fit.points_dropped;
            continue;
        }
        lx.push_back(std::log(static_cast<double>(T)));
        ly.push_back(std::log(r));
    }
    fit.points_used = static_cast<int>(lx.size());
    if (fit.points_dropped > 0)
        fit.note = "warning: dropped " + std::to_string(fit.points_dropped) +
                   " non-positive mean regrets";
    if (fit.points_used < 4) {
        fit.note += (fit.note.empty() ? "" : "; ") + std::string("need >= 4 horizons");
        return fit;
    }
    double span = std::exp(*std::max_element(lx.begin(), lx.end()) -
                           *std::min_element(lx.begin(), lx.end()));
    if (span < 16.0) {
        fit.note += (fit.note.empty() ? "" : "; ") + std::string("horizon span below 16x");
        return fit;
    }
    fit.slope = ls_slope(lx, ly);
    fit.valid = true;
    return fit;
}

struct OverflowFlag {
    std::int64_t t = 0;
    double rate = 0.0;
    double wilson_lo = 0.0;
    double delta = 0.0;
};

// Flags every checkpoint whose Wilson lower confidence bound exceeds delta.
inline std::vector<OverflowFlag> overflow_flags(const std::vector<std::int64_t>& checkpoints,
                                                const std::vector<std::int64_t>& full_counts,
                                                std::int64_t seeds, double delta) {
    std::vector<OverflowFlag> flags;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        WilsonInterval w = wilson_interval(full_counts[i], seeds);
        if (w.lo > delta) {
            OverflowFlag f;
            f.t = checkpoints[i];
            f.rate = static_cast<double>(full_counts[i]) / static_cast<double>(seeds);
            f.wilson_lo = w.lo;
            f.delta = delta;
            flags.push_back(f);
        }
    }
    return flags;
}

// ---------------------------------------------------------------------------
// CSV emission. All rows carry the config hash; doubles are printed with %.17g
// so identical runs produce byte-identical files.

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_summary_csv(const std::string& path, const std::vector<RunPoint>& points) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# delaysched-summary-v1\n";
    out << "experiment,algorithm,regime,policy,rates,T,K,C,batch,seeds,mean_regret,se_regret,"
           "mean_player_loss,overflow_rate,mean_observed_frac,max_occupancy,config_hash\n";
    for (const RunPoint& p : points) {
        out << p.experiment << ',' << p.algorithm << ',' << regime_name(p.regime) << ','
            << p.policy << ',' << p.rates << ',' << p.T << ',' << p.K << ',' << p.C << ','
            << p.batch << ',' << p.seeds << ',' << detail::fmt_double(p.regret.mean) << ','
            << detail::fmt_double(p.regret.se) << ',' << detail::fmt_double(p.mean_player_loss)
            << ',' << detail::fmt_double(p.overflow_rate) << ','
            << detail::fmt_double(p.mean_observed_frac) << ',' << p.max_occupancy << ','
            << p.config_hash << '\n';
    }
}

inline void write_checkpoints_csv(const std::string& path, const RunPoint& p) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# delaysched-checkpoints-v1\n";
    out << "t,mean_regret,se_regret,overflow_count,overflow_rate,wilson_lo,wilson_hi,"
           "mean_occupancy,seeds,delta,config_hash\n";
    for (std::size_t i = 0; i < p.checkpoints.size(); ++i) {
        WilsonInterval w = wilson_interval(p.cp_full0[i], p.seeds);
        out << p.checkpoints[i] << ',' << detail::fmt_double(p.cp_regret_mean[i]) << ','
            << detail::fmt_double(p.cp_regret_se[i]) << ',' << p.cp_full0[i] << ','
            << detail::fmt_double(static_cast<double>(p.cp_full0[i]) /
                                  static_cast<double>(p.seeds))
            << ',' << detail::fmt_double(w.lo) << ',' << detail::fmt_double(w.hi) << ','
            << detail::fmt_double(p.cp_occ1_mean[i]) << ',' << p.seeds << ','
            << detail::fmt_double(p.delta_used) << ',' << p.config_hash << '\n';
    }
}

inline void write_trace_csv(const std::string& path, const RunResult& r,
                            const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# delaysched-trace-v1 config=" << config_hash << '\n';
    out << "t,action,admitted,observed,p_t,alpha_inv,beta_inv,cum_loss\n";
    for (const TranscriptRow& row : r.transcript.rows) {
        out << row.t << ',' << row.action << ',' << (row.admitted ? 1 : 0) << ',' << row.observed
            << ',' << detail::fmt_double(row.p) << ',' << detail::fmt_double(row.inv_alpha) << ','
            << detail::fmt_double(row.inv_beta) << ',' << detail::fmt_double(row.cum_loss)
            << '\n';
    }
}

inline void write_sched_log_csv(const std::string& path, const RunResult& r,
                                const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# delaysched-schedlog-v1 config=" << config_hash << '\n';
    out << "t,occupancy,admitted,observed_round\n";
    std::size_t next_del = 0;
    for (const TranscriptRow& row : r.transcript.rows) {
        if (row.observed == 0) {
            out << row.t << ',' << row.pending << ',' << (row.admitted ? 1 : 0) << ",-1\n";
        } else {
            for (std::int64_t k = 0; k < row.observed; ++k) {
                std::int64_t src = next_del < r.deliveries_log.size()
                                       ? r.deliveries_log[next_del++].second
                                       : -1;
                out << row.t << ',' << row.pending << ',' << (row.admitted ? 1 : 0) << ',' << src
                    << '\n';
            }
        }
    }
}

// Runs every experiment point, writes summary.csv and per-point checkpoint
// files (plus per-seed traces when tracing), and returns the points.
inline std::vector<RunPoint> run_experiments(const HarnessConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    for (const ExperimentConfig& e : cfg.experiments)
        for (std::int64_t T : e.horizons)
            for (std::int64_t C : e.capacities) validate_point(e, T, C);
    std::vector<RunPoint> points;
    for (const ExperimentConfig& e : cfg.experiments) {
        for (std::int64_t T : e.horizons) {
            for (std::int64_t C : e.capacities) {
                std::vector<RunResult> runs;
                RunPoint pt = run_point(e, T, C, cfg.base_seed, cfg.threads, cfg.trace,
                                        cfg.trace ? &runs : nullptr);
                pt.policy = e.algorithm == "scheduled" || e.algorithm == "expectation"
                                ? policy_name(e.policy)
                                : "-";
                pt.rates = rate_name(resolve_rates(e));
                pt.batch = e.algorithm == "batched" ? e.batch : 0;
                std::string stem = e.name + "_T" + std::to_string(T) + "_C" + std::to_string(C);
                write_checkpoints_csv(cfg.out_dir + "/checkpoints_" + stem + ".csv", pt);
                if (cfg.trace) {
                    for (std::size_t i = 0; i < runs.size(); ++i) {
                        write_trace_csv(cfg.out_dir + "/trace_" + stem + "_" + std::to_string(i) +
                                            ".csv",
                                        runs[i], pt.config_hash);
                        write_sched_log_csv(cfg.out_dir + "/sched_" + stem + "_" +
                                                std::to_string(i) + ".csv",
                                            runs[i], pt.config_hash);
                    }
                }
                points.push_back(std::move(pt));
            }
        }
    }
    write_summary_csv(cfg.out_dir + "/summary.csv", points);
    return points;
}

}  // namespace delaysched
