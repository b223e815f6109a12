#pragma once

// Full algorithm loops: the unlimited-capacity delayed-FTRL baseline, batch
// partitioning, FTRL with a precommitted scheduler under each learning-rate
// schedule, and the expectation-capacity variant. Also the offline rate audit
// that replays a run transcript and recomputes every learning rate.
//
// Rate schedules (natural log throughout):
//   baseline_seldin  alpha_t = sqrt(1/t),            beta_t = sqrt(log K / sum_{s<=t} d_s)
//   batch_*          alpha_tau = sqrt(1/tau),        beta_tau = sqrt(log K / D^b_tau)
//                    (full-info: beta_tau = sqrt(log K / (tau + D^b_tau)))
//   cnp_*            alpha_t = sqrt(1/sum mu_s),     beta_t = sqrt(log K / sum d_s)
//                    (full-info: beta_t = sqrt(log K / sum (mu_s + d_s)))
//   ncp_*            alpha_t = sqrt(1/(sum z_s^2 + C mu_max_t^2)),
//                    beta_t = sqrt(log K / (sum z_s d_s + C mu_max_t d_max))
//                    (full-info: beta_t = sqrt(log K / (sum z_s (z_s+d_s)
//                                                + C mu_max_t (mu_max_t + d_max))))
//   fixed_const      constants (defaults from the known-(T, D) recipe)
//
// Emitted weights are the inverses (inv_alpha = 1/alpha_t, inv_beta = 1/beta_t)
// and must be non-decreasing in t. A zero accumulator in a bandit beta yields
// inv_beta = 0 (entropy part off; the Tsallis part keeps the solve well
// posed); in the full-information baseline the accumulator is floored at 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "delaysched/check.hpp"
#include "delaysched/env.hpp"
#include "delaysched/rng.hpp"
#include "delaysched/schedulers.hpp"
#include "delaysched/simplex_ftrl.hpp"

namespace delaysched {

enum class Regime { bandit, fullinfo };

enum class RateKind {
    baseline_seldin,
    batch_bandit,
    batch_fullinfo,
    cnp_bandit,
    cnp_fullinfo,
    ncp_bandit,
    ncp_fullinfo,
    fixed_const,
};

inline bool rate_is_fullinfo(RateKind k) {
    return k == RateKind::batch_fullinfo || k == RateKind::cnp_fullinfo ||
           k == RateKind::ncp_fullinfo;
}

struct RateParams {
    RateKind kind = RateKind::baseline_seldin;
    Regime regime = Regime::bandit;
    int num_actions = 2;
    std::int64_t capacity = 0;     // ncp_* term
    double d_max_bound = 0.0;      // ncp_* term
    double fixed_inv_alpha = 0.0;  // fixed_const
    double fixed_inv_beta = 0.0;   // fixed_const
};

struct StepInputs {
    std::int64_t step = 0;     // round t, or batch index tau
    std::int64_t pending = 0;  // outstanding tracked rounds at step start (batch/baseline)
    double mu = 1.0;           // inverse observation probability (cnp)
    std::int64_t d = 0;        // current delay when visible (cnp/baseline)
    double mu_max = 1.0;       // cap max{1, (1+alpha) nu_t (d_max+1)/C} (ncp)
};

class RatePolicy {
public:
    explicit RatePolicy(RateParams prm) : prm_(prm), log_k_(std::log(prm.num_actions)) {
        if (prm.num_actions < 2) throw std::invalid_argument("rates: need K >= 2");
    }

    const RateParams& params() const { return prm_; }

    RegWeights begin_step(const StepInputs& in) {
        RegWeights w;
        switch (prm_.kind) {
            case RateKind::baseline_seldin:
                ++steps_;
                sum_d_ += static_cast<double>(in.d);
                w.inv_alpha = prm_.regime == Regime::bandit
                                  ? std::sqrt(static_cast<double>(steps_))
                                  : 0.0;
                w.inv_beta = beta_inv_from(sum_d_, prm_.regime == Regime::fullinfo);
                break;
            case RateKind::batch_bandit:
                ++steps_;
                batch_delay_ += static_cast<double>(in.pending);
                w.inv_alpha = std::sqrt(static_cast<double>(steps_));
                w.inv_beta = beta_inv_from(batch_delay_, false);
                break;
            case RateKind::batch_fullinfo:
                ++steps_;
                batch_delay_ += static_cast<double>(in.pending);
                w.inv_alpha = 0.0;
                w.inv_beta = beta_inv_from(static_cast<double>(steps_) + batch_delay_, false);
                break;
            case RateKind::cnp_bandit:
                sum_mu_ += in.mu;
                sum_d_ += static_cast<double>(in.d);
                w.inv_alpha = std::sqrt(sum_mu_);
                w.inv_beta = beta_inv_from(sum_d_, false);
                break;
            case RateKind::cnp_fullinfo:
                sum_mu_d_ += in.mu + static_cast<double>(in.d);
                w.inv_alpha = 0.0;
                w.inv_beta = beta_inv_from(sum_mu_d_, false);
                break;
            case RateKind::ncp_bandit:
                w.inv_alpha = std::sqrt(sum_z2_ + static_cast<double>(prm_.capacity) * in.mu_max *
                                                      in.mu_max);
                w.inv_beta = beta_inv_from(sum_zd_ + static_cast<double>(prm_.capacity) *
                                                         in.mu_max * prm_.d_max_bound,
                                           false);
                break;
            case RateKind::ncp_fullinfo:
                w.inv_alpha = 0.0;
                w.inv_beta =
                    beta_inv_from(sum_zzd_ + static_cast<double>(prm_.capacity) * in.mu_max *
                                                 (in.mu_max + prm_.d_max_bound),
                                  false);
                break;
            case RateKind::fixed_const:
                w.inv_alpha = prm_.regime == Regime::bandit ? prm_.fixed_inv_alpha : 0.0;
                w.inv_beta = prm_.fixed_inv_beta;
                break;
        }
        return w;
    }

    // Feed of an observed round (ncp schedules only): z = Z_s mu_s, d = d_s.
    void on_delivery(double z, std::int64_t d) {
        sum_z2_ += z * z;
        sum_zd_ += z * static_cast<double>(d);
        sum_zzd_ += z * (z + static_cast<double>(d));
    }

private:
    double beta_inv_from(double accum, bool floor_at_one) const {
        if (accum <= 0.0) {
            if (!floor_at_one) return 0.0;
            accum = 1.0;
        }
        return std::sqrt(accum / log_k_);
    }

    RateParams prm_;
    double log_k_;
    std::int64_t steps_ = 0;
    double sum_d_ = 0.0;
    double sum_mu_ = 0.0;
    double sum_mu_d_ = 0.0;
    double batch_delay_ = 0.0;  // D^b_tau = sum of outstanding batch counts
    double sum_z2_ = 0.0;
    double sum_zd_ = 0.0;
    double sum_zzd_ = 0.0;
};

// Batch-level delay of a representative u with delay d_u under batch size b:
// the number of whole batches between u's batch and its feedback's batch.
inline std::int64_t batch_delay(std::int64_t u, std::int64_t d_u, std::int64_t b) {
    auto ceil_div = [](std::int64_t x, std::int64_t y) { return (x + y - 1) / y; };
    return ceil_div(u + d_u, b) - ceil_div(u, b);
}

// Constant rates and fixed observation probability from the known-(T, D)
// recipe for the non-clairvoyant non-preemptive scheduler.
struct FixedConstSetup {
    double p = 1.0;
    double inv_alpha = 0.0;
    double inv_beta = 0.0;
};

inline FixedConstSetup fixed_const_setup(Regime regime, std::int64_t T, int K, std::int64_t D,
                                         std::int64_t C) {
    if (T < 1 || K < 2 || C < 1 || D < 0) throw std::invalid_argument("fixed_const: bad inputs");
    double logk = std::log(static_cast<double>(K));
    double dt = static_cast<double>(D + T);
    FixedConstSetup s;
    if (regime == Regime::bandit) {
        s.p = std::cbrt(static_cast<double>(C) * C * static_cast<double>(T) * K / (dt * dt));
        double alpha = std::cbrt(static_cast<double>(C) * std::sqrt(static_cast<double>(K)) /
                                 (static_cast<double>(T) * dt));
        double beta = std::sqrt(logk / dt);
        s.inv_alpha = 1.0 / alpha;
        s.inv_beta = 1.0 / beta;
    } else {
        s.p = std::cbrt(static_cast<double>(C) * C * static_cast<double>(T) * logk / (dt * dt));
        double beta = std::cbrt(static_cast<double>(C) * logk * logk / (static_cast<double>(T) * dt));
        s.inv_alpha = 0.0;
        s.inv_beta = 1.0 / beta;
    }
    if (s.p > 1.0) s.p = 1.0;
    if (!(s.p > 0.0)) throw std::invalid_argument("fixed_const: degenerate probability");
    return s;
}

// ---------------------------------------------------------------------------
// Run transcripts and traces.

struct TranscriptRow {
    std::int64_t t = 0;        // first round of the step
    std::int64_t step = 0;     // FTRL step index
    double mu = 1.0;
    std::int64_t d = -1;       // delay fed to the rates, -1 if hidden
    std::int64_t pending = 0;
    double mu_max = 1.0;
    double inv_alpha = 0.0;
    double inv_beta = 0.0;
    int action = -1;
    bool admitted = false;
    double p = 1.0;             // admission probability where defined
    std::int64_t observed = 0;  // deliveries during this step
    std::int64_t rep = -1;      // batch representative round (batched runs)
    double cum_loss = 0.0;
};

struct DeliveryRow {
    std::int64_t step = 0;  // step whose emission preceded this delivery
    double z = 0.0;
    std::int64_t d = 0;
};

struct Transcript {
    RateParams rate_params;
    std::vector<TranscriptRow> rows;
    std::vector<DeliveryRow> deliveries;
};

struct RegretTrace {
    std::vector<std::int64_t> checkpoints;
    std::vector<double> player_loss;
    std::vector<double> best_loss;
    std::vector<double> regret;
    std::vector<std::int64_t> occupancy0;  // |S_t^0| at the checkpoint round
    std::vector<std::uint8_t> full0;       // |S_t^0| == C at the checkpoint round
    std::vector<std::int64_t> occupancy1;  // |S_t^1| at the checkpoint round
    std::int64_t overflow_rounds = 0;      // #rounds with |S_t^0| == C
    std::int64_t observations = 0;
    std::int64_t max_occupancy = 0;        // max |S_t^1|
    double final_player_loss = 0.0;
    double final_best_loss = 0.0;
    double final_regret = 0.0;
};

struct RunOptions {
    bool record_actions = false;
    bool record_observed = false;
    bool record_transcript = false;
    bool record_deliveries = false;
    int solve_budget = 200;
    // Stream overrides (tests of scheduler/learner independence): when set,
    // the scheduler and learner streams are derived from these seeds instead
    // of the run's master seed.
    bool override_streams = false;
    std::uint64_t scheduler_stream_seed = 0;
    std::uint64_t learner_stream_seed = 0;
};

struct RunResult {
    RegretTrace trace;
    std::vector<std::int32_t> actions;     // per round, when recorded
    std::vector<std::uint8_t> observed;    // Z_t per round, when recorded
    Transcript transcript;                 // when recorded
    std::vector<double> final_cum_estimate;
    std::vector<std::int64_t> delivered_rounds;  // when record_deliveries
    std::vector<double> delivered_vectors;       // K entries per delivered round
    std::vector<std::pair<std::int64_t, std::int64_t>> deliveries_log;  // (t, source round)
};

namespace detail {

inline bool is_checkpoint(std::int64_t t, std::int64_t T) {
    return (t & (t - 1)) == 0 || t == T;
}

struct TraceBuilder {
    std::int64_t T;
    std::int64_t capacity;  // <= 0 means unlimited (baseline)
    RegretTrace out;
    std::vector<double> arm_cum;
    double player_cum = 0.0;

    TraceBuilder(std::int64_t T_, int K, std::int64_t cap) : T(T_), capacity(cap) {
        arm_cum.assign(static_cast<std::size_t>(K), 0.0);
    }

    void play(const Instance& inst, std::int64_t t, int action) {
        player_cum += inst.loss(t, action);
        for (int i = 0; i < inst.K; ++i) arm_cum[static_cast<std::size_t>(i)] += inst.loss(t, i);
    }

    void round_occupancy(std::int64_t occ0, std::int64_t occ1) {
        if (capacity > 0 && occ0 == capacity) ++out.overflow_rounds;
        out.max_occupancy = std::max(out.max_occupancy, occ1);
        last_occ0_ = occ0;
        last_occ1_ = occ1;
    }

    void checkpoint(std::int64_t t) {
        if (!is_checkpoint(t, T)) return;
        double best = *std::min_element(arm_cum.begin(), arm_cum.end());
        out.checkpoints.push_back(t);
        out.player_loss.push_back(player_cum);
        out.best_loss.push_back(best);
        out.regret.push_back(player_cum - best);
        out.occupancy0.push_back(last_occ0_);
        out.full0.push_back(capacity > 0 && last_occ0_ == capacity ? 1 : 0);
        out.occupancy1.push_back(last_occ1_);
    }

    RegretTrace finish() {
        double best = *std::min_element(arm_cum.begin(), arm_cum.end());
        out.final_player_loss = player_cum;
        out.final_best_loss = best;
        out.final_regret = player_cum - best;
        return std::move(out);
    }

private:
    std::int64_t last_occ0_ = 0;
    std::int64_t last_occ1_ = 0;
};

// Delivery buckets keyed by arrival round; rounds past the horizon never fire.
struct DeliveryBuckets {
    std::vector<std::vector<std::int64_t>> by_round;
    explicit DeliveryBuckets(std::int64_t T) : by_round(static_cast<std::size_t>(T) + 1) {}
    void add(std::int64_t source_round, std::int64_t arrival, std::int64_t T) {
        if (arrival <= T) by_round[static_cast<std::size_t>(arrival)].push_back(source_round);
    }
    const std::vector<std::int64_t>& at(std::int64_t t) const {
        return by_round[static_cast<std::size_t>(t)];
    }
};

struct PendingPlay {
    int action = 0;
    double prob = 1.0;
};

inline void add_estimate(std::vector<double>& cum, const Instance& inst, Regime regime,
                         std::int64_t s, const PendingPlay* play, double p, RunResult* rec,
                         bool record_deliveries) {
    std::vector<double> est;
    if (record_deliveries) est.assign(static_cast<std::size_t>(inst.K), 0.0);
    if (regime == Regime::bandit) {
        DS_CHECK(play != nullptr);
        double v = importance_weighted_value(inst.loss(s, play->action), play->prob, p);
        if (!std::isfinite(v))
            throw std::runtime_error("estimator overflow at round " + std::to_string(s));
        cum[static_cast<std::size_t>(play->action)] += v;
        if (record_deliveries) est[static_cast<std::size_t>(play->action)] = v;
    } else {
        for (int i = 0; i < inst.K; ++i) {
            double v = inst.loss(s, i) / p;
            if (!std::isfinite(v))
                throw std::runtime_error("estimator overflow at round " + std::to_string(s));
            cum[static_cast<std::size_t>(i)] += v;
            if (record_deliveries) est[static_cast<std::size_t>(i)] = v;
        }
    }
    if (record_deliveries && rec) {
        rec->delivered_rounds.push_back(s);
        rec->delivered_vectors.insert(rec->delivered_vectors.end(), est.begin(), est.end());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generic delayed FTRL with unlimited capacity: tracks every round, and with
// zero delays degenerates to vanilla FTRL. Serves as the C = infinity curve.
inline RunResult run_baseline(const Instance& inst, Regime regime, RateParams rates,
                              std::uint64_t master_seed, const RunOptions& opts = {}) {
    validate(inst);
    rates.regime = regime;
    rates.num_actions = inst.K;
    RatePolicy policy(rates);
    RngStream lrng(opts.override_streams ? opts.learner_stream_seed : master_seed, 0,
                   stream_tag::learner);
    DelayStats ds = delay_stats(inst);

    RunResult res;
    if (opts.record_actions) res.actions.reserve(static_cast<std::size_t>(inst.T));
    if (opts.record_observed) res.observed.assign(static_cast<std::size_t>(inst.T), 0);
    res.transcript.rate_params = rates;

    detail::TraceBuilder trace(inst.T, inst.K, 0);
    detail::DeliveryBuckets buckets(inst.T);
    std::unordered_map<std::int64_t, detail::PendingPlay> pending;
    pending.reserve(static_cast<std::size_t>(std::min<std::int64_t>(ds.sigma_max + 2, 1 << 20)));

    CumEstimate cum;
    cum.values.assign(static_cast<std::size_t>(inst.K), 0.0);
    double warm = std::numeric_limits<double>::quiet_NaN();
    std::int64_t admitted = 0, delivered = 0;

    for (std::int64_t t = 1; t <= inst.T; ++t) {
        std::int64_t occ0 = admitted - delivered;
        std::int64_t d_t = inst.delay(t);
        StepInputs in;
        in.step = t;
        in.pending = occ0;
        in.mu = 1.0;
        in.d = d_t;
        in.mu_max = 1.0;
        RegWeights w = policy.begin_step(in);

        SolveInfo si;
        SimplexPoint x = solve(cum, w, &si, opts.solve_budget,
                               std::isfinite(warm) ? &warm : nullptr);
        if (w.inv_alpha > 0.0) warm = si.lambda;
        int a = sample_action(x, lrng);
        if (opts.record_actions) res.actions.push_back(a);
        trace.play(inst, t, a);
        trace.round_occupancy(occ0, occ0 + 1);

        // every round is tracked
        ++admitted;
        if (regime == Regime::bandit)
            pending[t] = {a, x.probs[static_cast<std::size_t>(a)]};
        buckets.add(t, t + d_t, inst.T);
        DS_CHECK(static_cast<std::int64_t>(regime == Regime::bandit ? pending.size() : 0) <=
                 ds.sigma_max + 1);

        std::int64_t obs_here = 0;
        for (std::int64_t s : buckets.at(t)) {
            const detail::PendingPlay* play = nullptr;
            if (regime == Regime::bandit) {
                auto it = pending.find(s);
                DS_CHECK(it != pending.end());
                play = &it->second;
            }
            detail::add_estimate(cum.values, inst, regime, s, play, 1.0, &res,
                                 opts.record_deliveries);
            policy.on_delivery(1.0, inst.delay(s));
            if (opts.record_transcript) {
                res.transcript.deliveries.push_back({t, 1.0, inst.delay(s)});
                res.deliveries_log.emplace_back(t, s);
            }
            if (regime == Regime::bandit) pending.erase(s);
            ++delivered;
            ++obs_here;
            ++trace.out.observations;
            if (opts.record_observed) res.observed[static_cast<std::size_t>(s - 1)] = 1;
        }

        if (opts.record_transcript) {
            TranscriptRow row;
            row.t = t;
            row.step = t;
            row.mu = 1.0;
            row.d = d_t;
            row.pending = occ0;
            row.mu_max = 1.0;
            row.inv_alpha = w.inv_alpha;
            row.inv_beta = w.inv_beta;
            row.action = a;
            row.admitted = true;
            row.p = 1.0;
            row.observed = obs_here;
            row.cum_loss = trace.player_cum;
            res.transcript.rows.push_back(row);
        }
        trace.checkpoint(t);
    }
    res.trace = trace.finish();
    res.final_cum_estimate = cum.values;
    return res;
}

// ---------------------------------------------------------------------------
// Batch partitioning: one action per batch, one uniformly chosen tracked
// representative per batch, final batch padded with zero-loss zero-delay
// rounds. Runs in the non-clairvoyant non-preemptive framework.
inline RunResult run_batched(const Instance& inst, Regime regime, std::int64_t capacity,
                             std::int64_t batch_size, std::uint64_t master_seed,
                             const RunOptions& opts = {}, RateParams rates = {}) {
    validate(inst);
    DelayStats ds = delay_stats(inst);
    if (capacity < 1) throw std::invalid_argument("run_batched: capacity must be >= 1");
    if (ds.d_max > 0 && capacity < 2)
        throw std::invalid_argument("run_batched: capacity must be >= 2 when delays are present");
    std::int64_t b = batch_size;
    if (b <= 0)
        b = ds.d_max == 0
                ? 1
                : std::max<std::int64_t>(1, (ds.d_max + capacity - 2) / (capacity - 1));
    if (ds.d_max > 0) {
        std::int64_t need = 1 + (ds.d_max + b - 1) / b;
        if (need > capacity)
            throw std::invalid_argument("run_batched: batch size too small for capacity " +
                                        std::to_string(capacity));
    }

    if (rates.kind == RateKind::baseline_seldin)  // default pairing for this loop
        rates.kind = regime == Regime::bandit ? RateKind::batch_bandit : RateKind::batch_fullinfo;
    rates.regime = regime;
    rates.num_actions = inst.K;
    RatePolicy policy(rates);
    RngStream lrng(opts.override_streams ? opts.learner_stream_seed : master_seed, 0,
                   stream_tag::learner);
    RngStream srng(opts.override_streams ? opts.scheduler_stream_seed : master_seed, 0,
                   stream_tag::scheduler);

    RunResult res;
    if (opts.record_actions) res.actions.reserve(static_cast<std::size_t>(inst.T));
    if (opts.record_observed) res.observed.assign(static_cast<std::size_t>(inst.T), 0);
    res.transcript.rate_params = rates;

    detail::TraceBuilder trace(inst.T, inst.K, capacity);
    detail::DeliveryBuckets buckets(inst.T);
    std::unordered_map<std::int64_t, detail::PendingPlay> pending;

    CumEstimate cum;
    cum.values.assign(static_cast<std::size_t>(inst.K), 0.0);
    double warm = std::numeric_limits<double>::quiet_NaN();
    std::int64_t admitted = 0, delivered = 0;
    const std::int64_t num_batches = (inst.T + b - 1) / b;

    for (std::int64_t tau = 1; tau <= num_batches; ++tau) {
        std::int64_t pending_count = admitted - delivered;  // sigma^b_tau
        StepInputs in;
        in.step = tau;
        in.pending = pending_count;
        RegWeights w = policy.begin_step(in);

        SolveInfo si;
        SimplexPoint x = solve(cum, w, &si, opts.solve_budget,
                               std::isfinite(warm) ? &warm : nullptr);
        if (w.inv_alpha > 0.0) warm = si.lambda;
        int a = sample_action(x, lrng);

        // Representative uniform in the batch; a draw past T is a padded
        // zero-loss zero-delay round whose estimator contributes nothing.
        std::int64_t first = (tau - 1) * b + 1;
        std::int64_t u = first + static_cast<std::int64_t>(srng.below(static_cast<std::uint64_t>(b)));

        std::int64_t obs_here = 0;
        for (std::int64_t t = first; t <= std::min(tau * b, inst.T); ++t) {
            if (opts.record_actions) res.actions.push_back(a);
            trace.play(inst, t, a);
            std::int64_t occ0 = admitted - delivered;
            std::int64_t occ1 = occ0;
            if (t == u) {
                ++admitted;
                occ1 = admitted - delivered;
                DS_CHECK(occ1 <= capacity);
                pending[u] = {a, x.probs[static_cast<std::size_t>(a)]};
                buckets.add(u, u + inst.delay(u), inst.T);
            }
            trace.round_occupancy(occ0, occ1);
            for (std::int64_t s : buckets.at(t)) {
                auto it = pending.find(s);
                DS_CHECK(it != pending.end());
                const detail::PendingPlay* play = &it->second;
                detail::add_estimate(cum.values, inst, regime, s, play, 1.0, &res,
                                     opts.record_deliveries);
                if (opts.record_transcript) {
                    res.transcript.deliveries.push_back({tau, 1.0, inst.delay(s)});
                    res.deliveries_log.emplace_back(t, s);
                }
                pending.erase(it);
                ++delivered;
                ++obs_here;
                ++trace.out.observations;
                if (opts.record_observed) res.observed[static_cast<std::size_t>(s - 1)] = 1;
            }
            trace.checkpoint(t);
        }

        if (opts.record_transcript) {
            TranscriptRow row;
            row.t = first;
            row.step = tau;
            row.pending = pending_count;
            row.d = -1;
            row.rep = u;
            row.inv_alpha = w.inv_alpha;
            row.inv_beta = w.inv_beta;
            row.action = a;
            row.admitted = u <= inst.T;
            row.p = 1.0;
            row.observed = obs_here;
            row.cum_loss = trace.player_cum;
            res.transcript.rows.push_back(row);
        }
    }
    res.trace = trace.finish();
    res.final_cum_estimate = cum.values;
    return res;
}

// ---------------------------------------------------------------------------
// FTRL with a precommitted scheduler (bernoulli / pareto proxy / fixed p) and
// the paired learning-rate schedule.
inline void validate_pairing(PolicyKind policy, RateKind rates, Regime regime) {
    bool ok = false;
    switch (policy) {
        case PolicyKind::bernoulli_clairvoyant:
            ok = (rates == RateKind::cnp_bandit && regime == Regime::bandit) ||
                 (rates == RateKind::cnp_fullinfo && regime == Regime::fullinfo);
            break;
        case PolicyKind::pareto_proxy:
            ok = (rates == RateKind::ncp_bandit && regime == Regime::bandit) ||
                 (rates == RateKind::ncp_fullinfo && regime == Regime::fullinfo);
            break;
        case PolicyKind::fixed_p:
            ok = rates == RateKind::fixed_const;
            break;
    }
    if (!ok) throw std::invalid_argument("run_scheduled: scheduler/rate pairing is invalid");
}

inline RunResult run_scheduled(const Instance& inst, Regime regime, std::int64_t capacity,
                               const PolicyConfig& policy_cfg, RateKind rate_kind,
                               std::uint64_t master_seed, const RunOptions& opts = {},
                               const RateParams* rate_override = nullptr) {
    validate(inst);
    validate_pairing(policy_cfg.policy, rate_kind, regime);
    DelayStats ds = delay_stats(inst);

    RateParams rates;
    if (rate_override) {
        rates = *rate_override;
    } else {
        rates.kind = rate_kind;
        if (rate_kind == RateKind::fixed_const) {
            FixedConstSetup fc =
                fixed_const_setup(regime, inst.T, inst.K, ds.total_delay, capacity);
            rates.fixed_inv_alpha = fc.inv_alpha;
            rates.fixed_inv_beta = fc.inv_beta;
        }
    }
    rates.kind = rate_kind;
    rates.regime = regime;
    rates.num_actions = inst.K;
    rates.capacity = capacity;
    if (rates.d_max_bound <= 0.0)
        rates.d_max_bound = policy_cfg.d_max_bound >= 0
                                ? static_cast<double>(policy_cfg.d_max_bound)
                                : static_cast<double>(ds.d_max);
    RatePolicy policy(rates);

    TrackingScheduler sched(policy_cfg, capacity,
                            opts.override_streams ? opts.scheduler_stream_seed : master_seed);
    RngStream lrng(opts.override_streams ? opts.learner_stream_seed : master_seed, 0,
                   stream_tag::learner);
    HarmonicAccum rate_h;  // learner-side nu_t, same forward sums as the scheduler's

    RunResult res;
    if (opts.record_actions) res.actions.reserve(static_cast<std::size_t>(inst.T));
    if (opts.record_observed) res.observed.assign(static_cast<std::size_t>(inst.T), 0);
    res.transcript.rate_params = rates;

    detail::TraceBuilder trace(inst.T, inst.K, capacity);
    std::unordered_map<std::int64_t, detail::PendingPlay> pending;
    CumEstimate cum;
    cum.values.assign(static_cast<std::size_t>(inst.K), 0.0);
    double warm = std::numeric_limits<double>::quiet_NaN();
    const bool clairvoyant = policy_cfg.policy == PolicyKind::bernoulli_clairvoyant;
    std::vector<ObservationEvent> events;
    std::vector<std::int64_t> preempted;

    for (std::int64_t t = 1; t <= inst.T; ++t) {
        std::int64_t occ0 = sched.occupancy();
        std::int64_t d_t = inst.delay(t);
        rate_h.advance();
        double nu_t = 2.0 * rate_h.value * policy_cfg.nu_multiplier;

        StepInputs in;
        in.step = t;
        in.pending = occ0;
        if (clairvoyant) {
            in.mu = std::max(1.0, (1.0 + policy_cfg.alpha) * nu_t *
                                      static_cast<double>(d_t + 1) /
                                      static_cast<double>(capacity));
            in.d = d_t;
        }
        if (policy_cfg.policy == PolicyKind::pareto_proxy)
            in.mu_max = std::max(1.0, (1.0 + policy_cfg.alpha) * nu_t *
                                          (rates.d_max_bound + 1.0) /
                                          static_cast<double>(capacity));
        RegWeights w = policy.begin_step(in);

        SolveInfo si;
        SimplexPoint x = solve(cum, w, &si, opts.solve_budget,
                               std::isfinite(warm) ? &warm : nullptr);
        if (w.inv_alpha > 0.0) warm = si.lambda;
        int a = sample_action(x, lrng);
        if (opts.record_actions) res.actions.push_back(a);
        trace.play(inst, t, a);

        SchedulerDecision dec = sched.on_round(t, d_t);
        trace.round_occupancy(occ0, sched.occupancy());
        if (dec.admit && regime == Regime::bandit)
            pending[t] = {a, x.probs[static_cast<std::size_t>(a)]};
        DS_CHECK(static_cast<std::int64_t>(pending.size()) <= capacity);

        std::int64_t obs_here = 0;
        sched.tick(t, events, preempted);
        for (const ObservationEvent& ev : events) {
            const detail::PendingPlay* play = nullptr;
            if (regime == Regime::bandit) {
                auto it = pending.find(ev.round);
                DS_CHECK(it != pending.end());
                play = &it->second;
            }
            detail::add_estimate(cum.values, inst, regime, ev.round, play, ev.p, &res,
                                 opts.record_deliveries);
            double mu_s = std::max(1.0, 1.0 / ev.p);
            policy.on_delivery(mu_s, ev.delay);
            if (opts.record_transcript) {
                res.transcript.deliveries.push_back({t, mu_s, ev.delay});
                res.deliveries_log.emplace_back(t, ev.round);
            }
            if (regime == Regime::bandit) pending.erase(ev.round);
            ++obs_here;
            ++trace.out.observations;
            if (opts.record_observed) res.observed[static_cast<std::size_t>(ev.round - 1)] = 1;
        }
        for (std::int64_t s : preempted) pending.erase(s);

        if (opts.record_transcript) {
            TranscriptRow row;
            row.t = t;
            row.step = t;
            row.mu = in.mu;
            row.d = clairvoyant ? d_t : -1;
            row.pending = occ0;
            row.mu_max = in.mu_max;
            row.inv_alpha = w.inv_alpha;
            row.inv_beta = w.inv_beta;
            row.action = a;
            row.admitted = dec.admit;
            row.p = policy_cfg.policy == PolicyKind::pareto_proxy
                        ? std::min(1.0, dec.proxy_scale / static_cast<double>(d_t + 1))
                        : dec.p;
            row.observed = obs_here;
            row.cum_loss = trace.player_cum;
            res.transcript.rows.push_back(row);
        }
        trace.checkpoint(t);
    }
    res.trace = trace.finish();
    res.trace.max_occupancy = sched.max_occupancy();
    res.final_cum_estimate = cum.values;
    return res;
}

// Expectation-capacity variant: same loop with the inflated normalizer
// nu_t = 2 H_t max{1, C/C_E}, hard capacity from the standard recipe
// (ceil(max{3,K} ln T) bandit, ceil(max{3, ln K} ln T) full-info), alpha = 1.
inline RunResult run_expectation_capacity(const Instance& inst, Regime regime, double cap_expect,
                                          std::uint64_t master_seed, const RunOptions& opts = {}) {
    if (!(cap_expect > 0.0))
        throw std::invalid_argument("run_expectation_capacity: C_E must be positive");
    double log_t = std::log(static_cast<double>(inst.T));
    double base = regime == Regime::bandit
                      ? std::max(3.0, static_cast<double>(inst.K))
                      : std::max(3.0, std::log(static_cast<double>(inst.K)));
    auto capacity = static_cast<std::int64_t>(std::ceil(std::max(1.0, base * log_t)));
    PolicyConfig cfg;
    cfg.policy = PolicyKind::bernoulli_clairvoyant;
    cfg.alpha = 1.0;
    cfg.delta = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(inst.T, 2)));
    cfg.nu_multiplier = std::max(1.0, static_cast<double>(capacity) / cap_expect);
    RateKind rk = regime == Regime::bandit ? RateKind::cnp_bandit : RateKind::cnp_fullinfo;
    return run_scheduled(inst, regime, capacity, cfg, rk, master_seed, opts);
}

// ---------------------------------------------------------------------------
// Offline rate audit: replays a transcript with fresh accumulators and the
// printed formulas, requiring bitwise agreement with the rates used online
// and monotone inv_alpha / inv_beta.

struct RateAuditReport {
    bool ok = true;
    std::int64_t first_bad_step = -1;
    std::string message;
    std::int64_t rows_checked = 0;
};

inline RateAuditReport rate_check(const Transcript& tr) {
    const RateParams& prm = tr.rate_params;
    double log_k = std::log(static_cast<double>(prm.num_actions));
    RateAuditReport rep;
    double sum_d = 0.0, sum_mu = 0.0, sum_mud = 0.0, batch_delay = 0.0;
    double sum_z2 = 0.0, sum_zd = 0.0, sum_zzd = 0.0;
    std::int64_t steps = 0;
    double prev_ia = -1.0, prev_ib = -1.0;
    std::size_t next_delivery = 0;

    auto fail = [&](std::int64_t step, const std::string& msg) {
        rep.ok = false;
        rep.first_bad_step = step;
        rep.message = msg;
        return rep;
    };
    auto beta_from = [&](double accum, bool floor_at_one) {
        if (accum <= 0.0) {
            if (!floor_at_one) return 0.0;
            accum = 1.0;
        }
        return std::sqrt(accum / log_k);
    };

    for (const TranscriptRow& row : tr.rows) {
        ++steps;
        double ia = 0.0, ib = 0.0;
        switch (prm.kind) {
            case RateKind::baseline_seldin:
                sum_d += static_cast<double>(row.d);
                ia = prm.regime == Regime::bandit ? std::sqrt(static_cast<double>(steps)) : 0.0;
                ib = beta_from(sum_d, prm.regime == Regime::fullinfo);
                break;
            case RateKind::batch_bandit:
                batch_delay += static_cast<double>(row.pending);
                ia = std::sqrt(static_cast<double>(steps));
                ib = beta_from(batch_delay, false);
                break;
            case RateKind::batch_fullinfo:
                batch_delay += static_cast<double>(row.pending);
                ia = 0.0;
                ib = beta_from(static_cast<double>(steps) + batch_delay, false);
                break;
            case RateKind::cnp_bandit:
                sum_mu += row.mu;
                sum_d += static_cast<double>(row.d);
                ia = std::sqrt(sum_mu);
                ib = beta_from(sum_d, false);
                break;
            case RateKind::cnp_fullinfo:
                sum_mud += row.mu + static_cast<double>(row.d);
                ia = 0.0;
                ib = beta_from(sum_mud, false);
                break;
            case RateKind::ncp_bandit:
                ia = std::sqrt(sum_z2 +
                               static_cast<double>(prm.capacity) * row.mu_max * row.mu_max);
                ib = beta_from(
                    sum_zd + static_cast<double>(prm.capacity) * row.mu_max * prm.d_max_bound,
                    false);
                break;
            case RateKind::ncp_fullinfo:
                ia = 0.0;
                ib = beta_from(sum_zzd + static_cast<double>(prm.capacity) * row.mu_max *
                                             (row.mu_max + prm.d_max_bound),
                               false);
                break;
            case RateKind::fixed_const:
                ia = prm.regime == Regime::bandit ? prm.fixed_inv_alpha : 0.0;
                ib = prm.fixed_inv_beta;
                break;
        }
        if (ia != row.inv_alpha)
            return fail(row.step, "inv_alpha mismatch: online " + std::to_string(row.inv_alpha) +
                                      " vs offline " + std::to_string(ia));
        if (ib != row.inv_beta)
            return fail(row.step, "inv_beta mismatch: online " + std::to_string(row.inv_beta) +
                                      " vs offline " + std::to_string(ib));
        if (ia < prev_ia || ib < prev_ib)
            return fail(row.step, "learning-rate inverses decreased");
        prev_ia = ia;
        prev_ib = ib;
        while (next_delivery < tr.deliveries.size() &&
               tr.deliveries[next_delivery].step == row.step) {
            const DeliveryRow& del = tr.deliveries[next_delivery++];
            sum_z2 += del.z * del.z;
            sum_zd += del.z * static_cast<double>(del.d);
            sum_zzd += del.z * (del.z + static_cast<double>(del.d));
        }
        ++rep.rows_checked;
    }
    if (next_delivery != tr.deliveries.size())
        return fail(-1, "transcript deliveries out of order");
    return rep;
}

}  // namespace delaysched
