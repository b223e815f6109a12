#pragma once

// Scheduling policies over a bounded tracking set.
//
// A scheduler owns the tracking set of capacity C and decides, round by round,
// whether to start tracking the current round. Feedback from a tracked round s
// is delivered at round s + d_s provided s stayed in the set the whole time.
// Policies here are precommitted: decisions consume only the scheduler's own
// random stream and, in the clairvoyant case, the current round's delay. The
// scheduler never sees losses or actions.
//
// Policies:
//   * bernoulli_clairvoyant — admit with p_t = min{1, C / ((1+alpha) nu_t (d_t+1))},
//     nu_t = 2 H_t (times an optional inflation factor). Non-preemptive.
//   * pareto_proxy — draw a proxy delay  ~ floor(Pareto(C/((1+alpha) nu_t), 1) - 1)
//     and track round t until the end of round t + min(d_t, proxy); a proxy of
//     -1 means the round is never tracked. Preemptive, non-clairvoyant.
//   * fixed_p — admit with a constant probability. Non-preemptive,
//     non-clairvoyant.
//
// The Chernoff parameter alpha of the first two policies must satisfy the
// overflow condition  ln(1+alpha) - alpha/(1+alpha) >= ln(1/delta) / C,
// which bounds the probability of finding the set full by delta.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "delaysched/check.hpp"
#include "delaysched/rng.hpp"

namespace delaysched {

// t-th harmonic number by forward summation.
inline double harmonic(std::int64_t t) {
    if (t < 1) throw std::invalid_argument("harmonic: t must be >= 1");
    double h = 0.0;
    for (std::int64_t s = 1; s <= t; ++s) h += 1.0 / static_cast<double>(s);
    return h;
}

// Incremental forward summation of H_t; produces the same doubles as harmonic().
struct HarmonicAccum {
    std::int64_t t = 0;
    double value = 0.0;
    void advance() {
        ++t;
        value += 1.0 / static_cast<double>(t);
    }
};

// Left side of the overflow condition; strictly increasing from 0 to infinity.
inline double chernoff_gap(double alpha) {
    return std::log1p(alpha) - alpha / (1.0 + alpha);
}

// Minimal alpha > 0 with chernoff_gap(alpha) >= ln(1/delta)/C, by bisection to
// relative tolerance 1e-10 (the returned point always satisfies the condition).
inline double chernoff_alpha(std::int64_t capacity, double delta) {
    if (capacity < 1) throw std::invalid_argument("chernoff_alpha: capacity must be >= 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("chernoff_alpha: delta must lie in (0, 1)");
    double target = std::log(1.0 / delta) / static_cast<double>(capacity);
    double hi = 1.0;
    while (chernoff_gap(hi) < target) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-10 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        if (chernoff_gap(mid) >= target)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

// p_t = min{1, C / ((1+alpha) * nu_t * (d+1))}.
inline double observation_probability(std::int64_t capacity, double alpha, double nu_t,
                                      std::int64_t d) {
    double q = static_cast<double>(capacity) /
               ((1.0 + alpha) * nu_t * static_cast<double>(d + 1));
    return q < 1.0 ? q : 1.0;
}

// Draws floor(Pareto(scale, 1) - 1) by inverse CDF; -1 means "never track".
// Tail law: Pr(proxy >= d) = min{1, scale/(d+1)} for every integer d >= 0.
inline std::int64_t sample_proxy_delay(double scale, RngStream& rng) {
    if (!(scale > 0.0)) throw std::invalid_argument("sample_proxy_delay: scale must be positive");
    double u = rng.u01_pos();
    double v = scale / u - 1.0;
    if (v < 0.0) return -1;
    if (v >= 9.0e18) return std::numeric_limits<std::int64_t>::max() / 4;
    return static_cast<std::int64_t>(v);
}

enum class PolicyKind { bernoulli_clairvoyant, pareto_proxy, fixed_p };

struct PolicyConfig {
    PolicyKind policy = PolicyKind::bernoulli_clairvoyant;
    double alpha = 1.0;          // Chernoff parameter (bernoulli/pareto)
    double delta = 0.0;          // target overflow probability used to validate alpha
    double fixed_p = 1.0;        // fixed_p policy only
    double nu_multiplier = 1.0;  // >= 1; expectation-capacity runs use max{1, C/C_E}
    std::int64_t d_max_bound = -1;  // known bound for NCP rates; -1 = take it from the instance
};

inline void validate_policy(const PolicyConfig& cfg, std::int64_t capacity) {
    if (capacity < 1) throw std::invalid_argument("policy: capacity must be >= 1");
    if (cfg.nu_multiplier < 1.0)
        throw std::invalid_argument("policy: normalizer multiplier must be >= 1");
    switch (cfg.policy) {
        case PolicyKind::bernoulli_clairvoyant:
        case PolicyKind::pareto_proxy: {
            if (!(cfg.alpha > 0.0)) throw std::invalid_argument("policy: alpha must be positive");
            if (!(cfg.delta > 0.0 && cfg.delta < 1.0))
                throw std::invalid_argument("policy: delta must lie in (0, 1)");
            double target = std::log(1.0 / cfg.delta) / static_cast<double>(capacity);
            if (chernoff_gap(cfg.alpha) + 1e-12 < target)
                throw std::invalid_argument(
                    "policy: (alpha, delta, C) violate the overflow condition");
            break;
        }
        case PolicyKind::fixed_p:
            if (!(cfg.fixed_p > 0.0 && cfg.fixed_p <= 1.0))
                throw std::invalid_argument("policy: fixed p must lie in (0, 1]");
            break;
    }
}

struct SchedulerDecision {
    bool admit = false;
    double p = 1.0;              // quantifying probability (bernoulli / fixed_p)
    double proxy_scale = 0.0;    // Pareto scale c_t; p_s = min{1, c/(d_s+1)} at delivery
    std::int64_t proxy_delay = -1;
};

struct ObservationEvent {
    std::int64_t round = 0;
    std::int64_t delay = 0;
    double p = 1.0;  // probability used for importance weighting
};

class TrackingScheduler {
public:
    TrackingScheduler(PolicyConfig cfg, std::int64_t capacity, std::uint64_t master_seed,
                      std::uint64_t lane = 0)
        : cfg_(cfg), capacity_(capacity), rng_(master_seed, lane, stream_tag::scheduler) {
        validate_policy(cfg_, capacity_);
        entries_.reserve(static_cast<std::size_t>(std::min<std::int64_t>(capacity_, 4096)));
    }

    std::int64_t capacity() const { return capacity_; }
    std::int64_t occupancy() const { return static_cast<std::int64_t>(entries_.size()); }
    std::int64_t max_occupancy() const { return max_occupancy_; }
    double current_nu() const { return 2.0 * h_.value * cfg_.nu_multiplier; }

    // Admission step of round t. true_delay is environment-side information
    // used to schedule the delivery event; the Bernoulli policy is the only
    // one that reads it when deciding (clairvoyance). Coins and proxy draws
    // are consumed every round so the stream is an i.i.d. sequence.
    SchedulerDecision on_round(std::int64_t t, std::int64_t true_delay) {
        DS_CHECK(t == h_.t + 1);
        h_.advance();
        bool room = occupancy() < capacity_;
        SchedulerDecision dec;
        switch (cfg_.policy) {
            case PolicyKind::bernoulli_clairvoyant: {
                DS_CHECK(true_delay >= 0);
                dec.p = observation_probability(capacity_, cfg_.alpha, current_nu(), true_delay);
                bool coin = rng_.bernoulli(dec.p);
                dec.admit = room && coin;
                break;
            }
            case PolicyKind::pareto_proxy: {
                dec.proxy_scale =
                    static_cast<double>(capacity_) / ((1.0 + cfg_.alpha) * current_nu());
                dec.proxy_delay = sample_proxy_delay(dec.proxy_scale, rng_);
                dec.admit = room && dec.proxy_delay >= 0;
                break;
            }
            case PolicyKind::fixed_p: {
                dec.p = cfg_.fixed_p;
                bool coin = rng_.bernoulli(dec.p);
                dec.admit = room && coin;
                break;
            }
        }
        if (dec.admit) {
            Entry e;
            e.round = t;
            e.expiry = t + true_delay;
            e.proxy_expiry = cfg_.policy == PolicyKind::pareto_proxy
                                 ? t + dec.proxy_delay
                                 : std::numeric_limits<std::int64_t>::max();
            e.p = dec.p;
            e.scale = dec.proxy_scale;
            entries_.push_back(e);
        }
        DS_CHECK(occupancy() <= capacity_);
        max_occupancy_ = std::max(max_occupancy_, occupancy());
        return dec;
    }

    // End-of-round bookkeeping: delivers feedback whose delay expires at t and
    // then drops proxy-expired rounds. Delivery wins the tie when a proxy
    // expires in the same round as the feedback. Buffers are cleared and
    // refilled so hot loops can reuse their capacity.
    void tick(std::int64_t t, std::vector<ObservationEvent>& events,
              std::vector<std::int64_t>& preempted) {
        events.clear();
        preempted.clear();
        std::size_t keep = 0;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const Entry& e = entries_[i];
            if (e.expiry == t) {
                ObservationEvent ev;
                ev.round = e.round;
                ev.delay = t - e.round;
                ev.p = cfg_.policy == PolicyKind::pareto_proxy
                           ? std::min(1.0, e.scale / static_cast<double>(ev.delay + 1))
                           : e.p;
                events.push_back(ev);
            } else if (e.proxy_expiry <= t) {
                preempted.push_back(e.round);
            } else {
                entries_[keep++] = e;
            }
        }
        entries_.resize(keep);
    }

    // Convenience wrapper for tests.
    std::vector<ObservationEvent> tick(std::int64_t t) {
        std::vector<ObservationEvent> events;
        std::vector<std::int64_t> preempted;
        tick(t, events, preempted);
        return events;
    }

private:
    struct Entry {
        std::int64_t round = 0;
        std::int64_t expiry = 0;
        std::int64_t proxy_expiry = 0;
        double p = 1.0;
        double scale = 0.0;
    };

    PolicyConfig cfg_;
    std::int64_t capacity_;
    RngStream rng_;
    HarmonicAccum h_;
    std::vector<Entry> entries_;
    std::int64_t max_occupancy_ = 0;
};

}  // namespace delaysched
