#pragma once

// Problem instances: loss matrices and delay sequences fixed before the game
// starts, plus the delay statistics (sigma_t, D, sigma_max, d_max) that the
// theory checks and capacity reports are built on.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "delaysched/check.hpp"
#include "delaysched/rng.hpp"

namespace delaysched {

struct Instance {
    std::int64_t T = 0;
    int K = 0;
    std::vector<double> losses;       // row-major, losses[(t-1)*K + i]
    std::vector<std::int64_t> delays;  // delays[t-1]

    double loss(std::int64_t t, int i) const { return losses[static_cast<std::size_t>(t - 1) * K + i]; }
    std::int64_t delay(std::int64_t t) const { return delays[static_cast<std::size_t>(t - 1)]; }
};

struct DelayStats {
    std::int64_t total_delay = 0;             // D = sum_t d_t
    std::vector<std::int64_t> outstanding;    // sigma_t, 1-based round t at index t-1
    std::int64_t sigma_max = 0;
    std::int64_t d_max = 0;
};

enum class DelayKind { fixed, iid_geometric, iid_uniform, explicit_list };
enum class LossKind { stochastic_gap, adversarial_drift, explicit_matrix };

struct InstanceSpec {
    std::int64_t horizon = 0;
    int num_actions = 0;
    std::uint64_t seed = 0;

    DelayKind delay_kind = DelayKind::fixed;
    std::int64_t fixed_delay = 0;       // fixed
    double geometric_mean = 0.0;        // iid_geometric
    std::int64_t uniform_lo = 0;        // iid_uniform
    std::int64_t uniform_hi = 0;
    std::vector<std::int64_t> explicit_delays;

    LossKind loss_kind = LossKind::stochastic_gap;
    double gap = 0.25;                  // stochastic_gap: suboptimal arms have mean base_mean + gap
    int best_arm = 0;
    double base_mean = 0.25;
    std::int64_t drift_period = 1;      // adversarial_drift
    std::vector<double> explicit_losses;  // row-major T x K
};

inline void validate(const InstanceSpec& spec) {
    if (spec.horizon < 1) throw std::invalid_argument("instance: horizon must be >= 1");
    if (spec.num_actions < 2) throw std::invalid_argument("instance: need at least 2 actions");
    switch (spec.delay_kind) {
        case DelayKind::fixed:
            if (spec.fixed_delay < 0 || spec.fixed_delay > spec.horizon)
                throw std::invalid_argument("instance: fixed delay must lie in [0, T]");
            break;
        case DelayKind::iid_geometric:
            if (!(spec.geometric_mean > 0.0))
                throw std::invalid_argument("instance: geometric delay mean must be positive");
            break;
        case DelayKind::iid_uniform:
            if (spec.uniform_lo < 0 || spec.uniform_hi < spec.uniform_lo ||
                spec.uniform_hi > spec.horizon)
                throw std::invalid_argument("instance: uniform delay range must lie in [0, T]");
            break;
        case DelayKind::explicit_list:
            if (static_cast<std::int64_t>(spec.explicit_delays.size()) != spec.horizon)
                throw std::invalid_argument("instance: explicit delays must have length T");
            for (std::int64_t d : spec.explicit_delays)
                if (d < 0 || d > spec.horizon)
                    throw std::invalid_argument("instance: explicit delay out of [0, T]");
            break;
    }
    switch (spec.loss_kind) {
        case LossKind::stochastic_gap:
            if (!(spec.gap > 0.0 && spec.gap < 1.0))
                throw std::invalid_argument("instance: gap must lie in (0, 1)");
            if (spec.best_arm < 0 || spec.best_arm >= spec.num_actions)
                throw std::invalid_argument("instance: best arm index out of range");
            if (spec.base_mean < 0.0 || spec.base_mean + spec.gap > 1.0)
                throw std::invalid_argument("instance: arm means must stay within [0, 1]");
            break;
        case LossKind::adversarial_drift:
            if (spec.drift_period < 1)
                throw std::invalid_argument("instance: drift period must be >= 1");
            break;
        case LossKind::explicit_matrix:
            if (spec.explicit_losses.size() !=
                static_cast<std::size_t>(spec.horizon) * spec.num_actions)
                throw std::invalid_argument("instance: explicit losses must be a T x K matrix");
            for (double l : spec.explicit_losses)
                if (!(l >= 0.0 && l <= 1.0))
                    throw std::invalid_argument("instance: losses must lie in [0, 1]");
            break;
    }
}

// Instantiates the pre-committed adversary: identical spec+seed gives a
// bit-identical instance.
inline Instance generate(const InstanceSpec& spec) {
    validate(spec);
    Instance inst;
    inst.T = spec.horizon;
    inst.K = spec.num_actions;
    inst.delays.resize(static_cast<std::size_t>(inst.T));
    inst.losses.resize(static_cast<std::size_t>(inst.T) * inst.K);

    RngStream rng(spec.seed, 0, stream_tag::instance);

    switch (spec.delay_kind) {
        case DelayKind::fixed:
            std::fill(inst.delays.begin(), inst.delays.end(), spec.fixed_delay);
            break;
        case DelayKind::iid_geometric:
            for (auto& d : inst.delays) d = std::min<std::int64_t>(rng.geometric(spec.geometric_mean), inst.T);
            break;
        case DelayKind::iid_uniform:
            for (auto& d : inst.delays) d = rng.uniform_int(spec.uniform_lo, spec.uniform_hi);
            break;
        case DelayKind::explicit_list:
            inst.delays = spec.explicit_delays;
            break;
    }

    switch (spec.loss_kind) {
        case LossKind::stochastic_gap:
            for (std::int64_t t = 1; t <= inst.T; ++t) {
                for (int i = 0; i < inst.K; ++i) {
                    double mean = (i == spec.best_arm) ? spec.base_mean : spec.base_mean + spec.gap;
                    inst.losses[static_cast<std::size_t>(t - 1) * inst.K + i] =
                        rng.bernoulli(mean) ? 1.0 : 0.0;
                }
            }
            break;
        case LossKind::adversarial_drift:
            // Deterministic periodic swap of the leading arm.
            for (std::int64_t t = 1; t <= inst.T; ++t) {
                int leader = static_cast<int>(((t - 1) / spec.drift_period) % inst.K);
                for (int i = 0; i < inst.K; ++i)
                    inst.losses[static_cast<std::size_t>(t - 1) * inst.K + i] =
                        (i == leader) ? 0.25 : 0.75;
            }
            break;
        case LossKind::explicit_matrix:
            inst.losses = spec.explicit_losses;
            break;
    }
    return inst;
}

inline void validate(const Instance& inst) {
    if (inst.T < 1 || inst.K < 2) throw std::invalid_argument("instance: bad dimensions");
    if (inst.delays.size() != static_cast<std::size_t>(inst.T) ||
        inst.losses.size() != static_cast<std::size_t>(inst.T) * inst.K)
        throw std::invalid_argument("instance: inconsistent array sizes");
    for (std::int64_t d : inst.delays)
        if (d < 0 || d > inst.T) throw std::invalid_argument("instance: delay out of [0, T]");
    for (double l : inst.losses)
        if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("instance: loss out of [0, 1]");
}

// sigma_t = #{s < t : s + d_s >= t}; D = sum d_t. Computed with a difference
// array: round s is pending for rounds s+1 .. min(s+d_s, T).
inline DelayStats delay_stats(const Instance& inst) {
    DelayStats st;
    st.outstanding.assign(static_cast<std::size_t>(inst.T), 0);
    std::vector<std::int64_t> diff(static_cast<std::size_t>(inst.T) + 2, 0);
    for (std::int64_t s = 1; s <= inst.T; ++s) {
        std::int64_t d = inst.delay(s);
        st.total_delay += d;
        st.d_max = std::max(st.d_max, d);
        std::int64_t last = std::min(s + d, inst.T);
        if (last >= s + 1) {
            diff[static_cast<std::size_t>(s + 1)] += 1;
            diff[static_cast<std::size_t>(last + 1)] -= 1;
        }
    }
    std::int64_t running = 0;
    for (std::int64_t t = 1; t <= inst.T; ++t) {
        running += diff[static_cast<std::size_t>(t)];
        st.outstanding[static_cast<std::size_t>(t - 1)] = running;
        st.sigma_max = std::max(st.sigma_max, running);
    }
    return st;
}

// Best single action in hindsight; ties break toward the smaller index.
inline std::pair<int, double> best_fixed_action(const Instance& inst) {
    std::vector<double> totals(static_cast<std::size_t>(inst.K), 0.0);
    for (std::int64_t t = 1; t <= inst.T; ++t)
        for (int i = 0; i < inst.K; ++i) totals[static_cast<std::size_t>(i)] += inst.loss(t, i);
    int best = 0;
    for (int i = 1; i < inst.K; ++i)
        if (totals[static_cast<std::size_t>(i)] < totals[static_cast<std::size_t>(best)]) best = i;
    return {best, totals[static_cast<std::size_t>(best)]};
}

// Loads an explicit instance from CSV with header `t,d,l_1,...,l_K`.
inline Instance load_instance_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open instance file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty instance file: " + path);
    std::stringstream hdr(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(hdr, col, ',')) cols.push_back(col);
    if (cols.size() < 4 || cols[0] != "t" || cols[1] != "d")
        throw std::runtime_error("instance csv: expected header t,d,l_1,...,l_K in " + path);
    int K = static_cast<int>(cols.size()) - 2;

    Instance inst;
    inst.K = K;
    std::int64_t expect_t = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (static_cast<int>(fields.size()) != K + 2)
            throw std::runtime_error("instance csv: wrong column count at row t=" +
                                     std::to_string(expect_t));
        if (std::stoll(fields[0]) != expect_t)
            throw std::runtime_error("instance csv: rounds must be 1..T in order");
        inst.delays.push_back(std::stoll(fields[1]));
        for (int i = 0; i < K; ++i) inst.losses.push_back(std::stod(fields[2 + i]));
        ++expect_t;
    }
    inst.T = expect_t - 1;
    validate(inst);
    return inst;
}

}  // namespace delaysched
