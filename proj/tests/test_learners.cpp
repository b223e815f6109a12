#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "delaysched/env.hpp"
#include "delaysched/learners.hpp"

using namespace delaysched;

namespace {

InstanceSpec gap_spec(std::int64_t T, int K, std::uint64_t seed, std::int64_t d) {
    InstanceSpec s;
    s.horizon = T;
    s.num_actions = K;
    s.seed = seed;
    s.delay_kind = DelayKind::fixed;
    s.fixed_delay = d;
    s.loss_kind = LossKind::stochastic_gap;
    s.gap = 0.25;
    s.best_arm = 0;
    return s;
}

// Capacity that forces p_t = 1 for zero delays: C >= (1+alpha) * 2 H_T.
std::int64_t transparent_capacity(std::int64_t T, double alpha) {
    HarmonicAccum h;
    for (std::int64_t t = 1; t <= T; ++t) h.advance();
    return static_cast<std::int64_t>(std::ceil((1.0 + alpha) * 2.0 * h.value)) + 1;
}

}  // namespace

TEST_CASE("baseline: zero delays, full-info stays under the no-delay bound") {
    // explicit 2-arm instance with a dominated arm
    InstanceSpec s;
    s.horizon = 10000;
    s.num_actions = 2;
    s.seed = 3;
    s.delay_kind = DelayKind::fixed;
    s.fixed_delay = 0;
    s.loss_kind = LossKind::explicit_matrix;
    s.explicit_losses.reserve(20000);
    for (int t = 0; t < 10000; ++t) {
        s.explicit_losses.push_back(0.3);
        s.explicit_losses.push_back(0.7);
    }
    Instance inst = generate(s);
    RunResult r = run_baseline(inst, Regime::fullinfo, RateParams{}, 11);
    REQUIRE(r.trace.final_regret <= 2.0 * std::sqrt(10000.0 * std::log(2.0)));
    REQUIRE(r.trace.observations == 10000);
}

TEST_CASE("baseline: identical loss columns give exactly zero pseudo-regret") {
    InstanceSpec s;
    s.horizon = 300;
    s.num_actions = 2;
    s.seed = 5;
    s.delay_kind = DelayKind::fixed;
    s.fixed_delay = 3;
    s.loss_kind = LossKind::explicit_matrix;
    RngStream noise(17);
    for (int t = 0; t < 300; ++t) {
        double v = noise.u01();
        s.explicit_losses.push_back(v);
        s.explicit_losses.push_back(v);
    }
    Instance inst = generate(s);
    RunResult r = run_baseline(inst, Regime::bandit, RateParams{}, 21);
    REQUIRE(r.trace.final_regret == 0.0);
}

TEST_CASE("baseline: a single round plays uniformly and risks at most one unit") {
    Instance inst = generate(gap_spec(1, 4, 9, 0));
    RunResult r = run_baseline(inst, Regime::bandit, RateParams{}, 1);
    REQUIRE(r.trace.final_regret <= 1.0);
    REQUIRE(r.trace.checkpoints == std::vector<std::int64_t>{1});
}

TEST_CASE("baseline: player loss is monotone across checkpoints") {
    InstanceSpec s = gap_spec(256, 3, 12, 4);
    RunResult r = run_baseline(generate(s), Regime::bandit, RateParams{}, 5);
    for (std::size_t i = 1; i < r.trace.player_loss.size(); ++i)
        REQUIRE(r.trace.player_loss[i] >= r.trace.player_loss[i - 1]);
}

TEST_CASE("batch delay formula") {
    REQUIRE(batch_delay(2, 4, 3) == 1);  // ceil(6/3) - ceil(2/3)
    REQUIRE(batch_delay(5, 0, 5) == 0);
    REQUIRE(batch_delay(1, 10, 1) == 10);  // b = 1 degenerates to the raw delay
    REQUIRE(batch_delay(3, 7, 4) == 2);
}

TEST_CASE("batched: b = 1 reproduces the baseline action trace exactly") {
    InstanceSpec s = gap_spec(512, 3, 77, 0);
    s.delay_kind = DelayKind::iid_geometric;
    s.geometric_mean = 5.0;
    Instance inst = generate(s);
    DelayStats ds = delay_stats(inst);

    RunOptions opts;
    opts.record_actions = true;
    RateParams batch_rates;
    batch_rates.kind = RateKind::batch_bandit;
    RunResult base = run_baseline(inst, Regime::bandit, batch_rates, 4242, opts);
    RunResult bat = run_batched(inst, Regime::bandit, ds.d_max + 1, 1, 4242, opts);
    REQUIRE(base.actions == bat.actions);
    REQUIRE(base.final_cum_estimate == bat.final_cum_estimate);

    // full-information variant
    RateParams fi;
    fi.kind = RateKind::batch_fullinfo;
    RunResult base_fi = run_baseline(inst, Regime::fullinfo, fi, 4242, opts);
    RunResult bat_fi = run_batched(inst, Regime::fullinfo, ds.d_max + 1, 1, 4242, opts);
    REQUIRE(base_fi.actions == bat_fi.actions);
}

TEST_CASE("batched: default batch size keeps occupancy within C") {
    Instance inst = generate(gap_spec(2000, 4, 8, 50));
    RunResult r = run_batched(inst, Regime::bandit, 2, 0, 99);  // b = 50
    REQUIRE(r.trace.max_occupancy <= 2);
    REQUIRE(r.trace.observations > 0);
}

TEST_CASE("batched: rejects impossible capacity") {
    Instance inst = generate(gap_spec(100, 2, 8, 10));
    REQUIRE_THROWS_AS(run_batched(inst, Regime::bandit, 1, 0, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(run_batched(inst, Regime::bandit, 3, 1, 1), std::invalid_argument);
}

TEST_CASE("batched: within-horizon batch delay mass equals pending mass") {
    InstanceSpec s = gap_spec(600, 3, 2024, 0);
    s.delay_kind = DelayKind::iid_uniform;
    s.uniform_lo = 0;
    s.uniform_hi = 60;
    Instance inst = generate(s);
    const std::int64_t b = 10;
    RunOptions opts;
    opts.record_transcript = true;
    RunResult r = run_batched(inst, Regime::bandit, 8, b, 33, opts);
    const std::int64_t num_batches = (inst.T + b - 1) / b;
    std::int64_t pending_mass = 0, delay_mass = 0;
    for (const TranscriptRow& row : r.transcript.rows) {
        pending_mass += row.pending;
        std::int64_t u = row.rep;
        if (u <= inst.T) {
            std::int64_t db = batch_delay(u, inst.delay(u), b);
            delay_mass += std::min(db, num_batches - row.step);
        }
    }
    REQUIRE(pending_mass == delay_mass);
}

TEST_CASE("scheduled: transparent scheduler reproduces the baseline exactly") {
    InstanceSpec s = gap_spec(512, 3, 31, 0);
    Instance inst = generate(s);
    PolicyConfig pc;
    pc.policy = PolicyKind::bernoulli_clairvoyant;
    pc.alpha = 1.0;
    pc.delta = 1.0 / std::sqrt(512.0);
    std::int64_t C = transparent_capacity(512, pc.alpha);

    RunOptions opts;
    opts.record_actions = true;
    opts.record_transcript = true;
    RunResult sch = run_scheduled(inst, Regime::bandit, C, pc, RateKind::cnp_bandit, 606, opts);
    RateParams cnp;
    cnp.kind = RateKind::cnp_bandit;
    RunResult base = run_baseline(inst, Regime::bandit, cnp, 606, opts);
    REQUIRE(sch.actions == base.actions);
    REQUIRE(sch.final_cum_estimate == base.final_cum_estimate);
    REQUIRE(sch.trace.observations == base.trace.observations);

    // with all mu_s = 1 the clairvoyant rate degenerates to sqrt(1/t)
    for (const TranscriptRow& row : sch.transcript.rows) {
        REQUIRE(row.mu == 1.0);
        REQUIRE(row.inv_alpha == std::sqrt(static_cast<double>(row.step)));
        REQUIRE(row.p == 1.0);
    }
}

TEST_CASE("scheduled: mismatched scheduler/rate pairing is rejected") {
    Instance inst = generate(gap_spec(64, 2, 1, 2));
    PolicyConfig pc;
    pc.policy = PolicyKind::bernoulli_clairvoyant;
    pc.alpha = 2.0;
    pc.delta = 0.5;
    REQUIRE_THROWS_AS(run_scheduled(inst, Regime::bandit, 4, pc, RateKind::ncp_bandit, 1),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(run_scheduled(inst, Regime::fullinfo, 4, pc, RateKind::cnp_bandit, 1),
                      std::invalid_argument);
    pc.policy = PolicyKind::pareto_proxy;
    REQUIRE_THROWS_AS(run_scheduled(inst, Regime::bandit, 4, pc, RateKind::cnp_bandit, 1),
                      std::invalid_argument);
    pc.policy = PolicyKind::fixed_p;
    pc.fixed_p = 0.5;
    REQUIRE_THROWS_AS(run_scheduled(inst, Regime::bandit, 4, pc, RateKind::ncp_bandit, 1),
                      std::invalid_argument);
}

TEST_CASE("scheduled: proxy policy with ncp rates runs clean and audits") {
    InstanceSpec s = gap_spec(1024, 3, 414, 0);
    s.delay_kind = DelayKind::iid_geometric;
    s.geometric_mean = 10.0;
    Instance inst = generate(s);
    PolicyConfig pc;
    pc.policy = PolicyKind::pareto_proxy;
    pc.delta = 1.0 / 32.0;
    pc.alpha = chernoff_alpha(8, pc.delta);
    RunOptions opts;
    opts.record_transcript = true;
    RunResult r = run_scheduled(inst, Regime::bandit, 8, pc, RateKind::ncp_bandit, 5150, opts);
    REQUIRE(r.trace.max_occupancy <= 8);
    REQUIRE(r.trace.observations > 0);
    REQUIRE(rate_check(r.transcript).ok);

    RunResult rf = run_scheduled(inst, Regime::fullinfo, 8, pc, RateKind::ncp_fullinfo, 515, opts);
    REQUIRE(rate_check(rf.transcript).ok);
}

TEST_CASE("scheduled: fixed-p policy with constant rates") {
    InstanceSpec s = gap_spec(2048, 4, 88, 9);
    Instance inst = generate(s);
    PolicyConfig pc;
    pc.policy = PolicyKind::fixed_p;
    pc.fixed_p = 0.25;
    RunOptions opts;
    opts.record_transcript = true;
    opts.record_observed = true;
    RunResult r = run_scheduled(inst, Regime::bandit, 6, pc, RateKind::fixed_const, 10, opts);
    REQUIRE(rate_check(r.transcript).ok);
    for (const TranscriptRow& row : r.transcript.rows) {
        REQUIRE(row.inv_alpha == r.transcript.rows.front().inv_alpha);
        REQUIRE(row.inv_beta == r.transcript.rows.front().inv_beta);
    }
}

TEST_CASE("expectation-capacity: generous C_E matches the plain scheduled run") {
    InstanceSpec s = gap_spec(512, 4, 3131, 6);
    Instance inst = generate(s);
    RunOptions opts;
    opts.record_actions = true;
    // bandit recipe at T = 512: C = ceil(max(3, K) ln T)
    auto C = static_cast<std::int64_t>(std::ceil(4.0 * std::log(512.0)));
    PolicyConfig pc;
    pc.policy = PolicyKind::bernoulli_clairvoyant;
    pc.alpha = 1.0;
    pc.delta = 1.0 / std::sqrt(512.0);
    RunResult direct = run_scheduled(inst, Regime::bandit, C, pc, RateKind::cnp_bandit, 747, opts);
    RunResult expc = run_expectation_capacity(inst, Regime::bandit, 1e9, 747, opts);
    REQUIRE(direct.actions == expc.actions);
    REQUIRE(direct.trace.observations == expc.trace.observations);
}

TEST_CASE("expectation-capacity: inflated normalizer shows up in the admission probability") {
    // full-info recipe with K = 4, T = 10^4 gives C = ceil(3 ln T) = 28;
    // C_E = 0.5 inflates nu_1 to 2 * 56, so p_1 = 0.125/(d_1 + 1).
    InstanceSpec s = gap_spec(10000, 4, 5, 3);
    Instance inst = generate(s);
    RunOptions opts;
    opts.record_transcript = true;
    RunResult r = run_expectation_capacity(inst, Regime::fullinfo, 0.5, 12, opts);
    const TranscriptRow& row = r.transcript.rows.front();
    REQUIRE(row.p == Catch::Approx(0.125 / 4.0).margin(1e-15));
    REQUIRE(rate_check(r.transcript).ok);
}

TEST_CASE("rate policy: printed-formula spot values") {
    // batch bandit at tau = 1 with no pending mass: entropy part off
    {
        RateParams prm;
        prm.kind = RateKind::batch_bandit;
        prm.num_actions = 4;
        RatePolicy rp(prm);
        StepInputs in;
        in.step = 1;
        in.pending = 0;
        RegWeights w = rp.begin_step(in);
        REQUIRE(w.inv_alpha == 1.0);
        REQUIRE(w.inv_beta == 0.0);
    }
    // cnp full-info with sum(mu_s + d_s) = 100 and K = 4
    {
        RateParams prm;
        prm.kind = RateKind::cnp_fullinfo;
        prm.regime = Regime::fullinfo;
        prm.num_actions = 4;
        RatePolicy rp(prm);
        StepInputs in;
        in.mu = 40.0;
        in.d = 60;
        RegWeights w = rp.begin_step(in);
        REQUIRE(1.0 / w.inv_beta ==
                Catch::Approx(std::sqrt(std::log(4.0) / 100.0)).epsilon(1e-12));
        REQUIRE(1.0 / w.inv_beta == Catch::Approx(0.1177410).margin(1e-6));
    }
    // ncp bandit with an empty observed set: only the cap terms survive
    {
        RateParams prm;
        prm.kind = RateKind::ncp_bandit;
        prm.num_actions = 4;
        prm.capacity = 28;
        prm.d_max_bound = 50.0;
        RatePolicy rp(prm);
        StepInputs in;
        in.mu_max = 5.0;
        RegWeights w = rp.begin_step(in);
        REQUIRE(w.inv_alpha == Catch::Approx(std::sqrt(28.0 * 25.0)).epsilon(1e-15));
        REQUIRE(1.0 / w.inv_beta ==
                Catch::Approx(std::sqrt(std::log(4.0) / (28.0 * 5.0 * 50.0))).epsilon(1e-12));
    }
}

TEST_CASE("rate_check: catches corrupted transcripts") {
    Instance inst = generate(gap_spec(256, 3, 5, 4));
    RunOptions opts;
    opts.record_transcript = true;
    RunResult r = run_baseline(inst, Regime::bandit, RateParams{}, 3, opts);
    REQUIRE(rate_check(r.transcript).ok);

    Transcript bad = r.transcript;
    bad.rows[100].inv_alpha += 1e-9;
    RateAuditReport rep = rate_check(bad);
    REQUIRE_FALSE(rep.ok);
    REQUIRE(rep.first_bad_step == bad.rows[100].step);
}

TEST_CASE("observation-independence: Z depends only on the scheduler stream") {
    InstanceSpec s = gap_spec(600, 3, 202, 0);
    s.delay_kind = DelayKind::iid_geometric;
    s.geometric_mean = 8.0;
    Instance inst = generate(s);
    PolicyConfig pc;
    pc.policy = PolicyKind::pareto_proxy;
    pc.delta = 0.25;
    pc.alpha = chernoff_alpha(6, pc.delta);

    RunOptions opts;
    opts.record_actions = true;
    opts.record_observed = true;
    opts.record_transcript = true;
    opts.override_streams = true;
    opts.scheduler_stream_seed = 9001;
    opts.learner_stream_seed = 1;
    RunResult a = run_scheduled(inst, Regime::bandit, 6, pc, RateKind::ncp_bandit, 0, opts);
    opts.learner_stream_seed = 2;
    RunResult b = run_scheduled(inst, Regime::bandit, 6, pc, RateKind::ncp_bandit, 0, opts);
    REQUIRE(a.observed == b.observed);  // identical admission/observation law
    REQUIRE(a.deliveries_log == b.deliveries_log);

    // same learner stream, different scheduler streams: actions agree up to
    // the first differing delivery
    opts.learner_stream_seed = 1;
    opts.scheduler_stream_seed = 9002;
    RunResult c = run_scheduled(inst, Regime::bandit, 6, pc, RateKind::ncp_bandit, 0, opts);
    std::int64_t first_diff = inst.T + 1;
    std::size_t n = std::min(a.deliveries_log.size(), c.deliveries_log.size());
    for (std::size_t i = 0; i <= n; ++i) {
        bool end_a = i == a.deliveries_log.size();
        bool end_c = i == c.deliveries_log.size();
        if (end_a && end_c) break;
        if (end_a || end_c || a.deliveries_log[i] != c.deliveries_log[i]) {
            std::int64_t ta = end_a ? inst.T + 1 : a.deliveries_log[i].first;
            std::int64_t tc = end_c ? inst.T + 1 : c.deliveries_log[i].first;
            first_diff = std::min(ta, tc);
            break;
        }
    }
    REQUIRE(first_diff > 1);
    for (std::int64_t t = 1; t <= std::min(first_diff, inst.T); ++t)
        REQUIRE(a.actions[static_cast<std::size_t>(t - 1)] ==
                c.actions[static_cast<std::size_t>(t - 1)]);
}

TEST_CASE("rate inequality: sum x_t eta_t <= 2 / eta_T on random sequences") {
    RngStream rng(606060);
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = 100;
        double running = 0.0, lhs = 0.0;
        for (int i = 0; i < n; ++i) {
            double x = rng.u01() < 0.1 ? 0.0 : 10.0 * rng.u01();
            running += x;
            if (x > 0.0) lhs += x / std::sqrt(running);
        }
        if (running > 0.0) REQUIRE(lhs <= 2.0 * std::sqrt(running));
    }
}

TEST_CASE("estimator telescoping: cumulative estimate equals the delivered sum") {
    InstanceSpec s = gap_spec(400, 3, 40, 0);
    s.delay_kind = DelayKind::iid_uniform;
    s.uniform_lo = 0;
    s.uniform_hi = 30;
    Instance inst = generate(s);
    RunOptions opts;
    opts.record_deliveries = true;
    PolicyConfig pc;
    pc.policy = PolicyKind::bernoulli_clairvoyant;
    pc.alpha = 1.5;
    pc.delta = 0.2;
    for (Regime regime : {Regime::bandit, Regime::fullinfo}) {
        RateKind rk = regime == Regime::bandit ? RateKind::cnp_bandit : RateKind::cnp_fullinfo;
        RunResult r = run_scheduled(inst, regime, 8, pc, rk, 2025, opts);
        std::vector<double> sum(static_cast<std::size_t>(inst.K), 0.0);
        for (std::size_t i = 0; i < r.delivered_rounds.size(); ++i)
            for (int k = 0; k < inst.K; ++k)
                sum[static_cast<std::size_t>(k)] +=
                    r.delivered_vectors[i * static_cast<std::size_t>(inst.K) +
                                        static_cast<std::size_t>(k)];
        REQUIRE(sum == r.final_cum_estimate);
    }
}

TEST_CASE("small capacity on fixed delays: batching stays within a constant of unlimited") {
    // d = 50, K = 4: capacity min{ceil(K/ln K), d} = 3 suffices for batching
    // (b = 25) to track the unlimited-capacity baseline up to a small factor.
    const std::int64_t T = 32768;
    const int seeds = 50;
    std::vector<double> base, batched;
    for (int i = 0; i < seeds; ++i) {
        InstanceSpec s = gap_spec(T, 4, 7777 + static_cast<std::uint64_t>(i), 50);
        Instance inst = generate(s);
        base.push_back(
            run_baseline(inst, Regime::bandit, RateParams{}, 800 + i).trace.final_regret);
        batched.push_back(
            run_batched(inst, Regime::bandit, 3, 0, 800 + i).trace.final_regret);
    }
    double mb = 0.0, mt = 0.0;
    for (int i = 0; i < seeds; ++i) {
        mb += base[static_cast<std::size_t>(i)];
        mt += batched[static_cast<std::size_t>(i)];
    }
    REQUIRE(mt <= 3.0 * mb);
}
