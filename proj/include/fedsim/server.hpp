#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedsim/client.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct GlobalModel {
    ParamVector params;
    std::size_t round = 1;
};

struct AggregatorSpec {
    enum class Kind { FedAvg, Meta };
    Kind kind = Kind::Meta;
    double eta = 1.0;  // fedavg only
};

// Uniform sample without replacement, ascending ids, deterministic per
// (seed, round).
inline std::vector<int> sample_clients(const std::vector<int>& all_ids, std::size_t m,
                                       std::uint64_t rng_seed, std::size_t round) {
    if (m < 1 || m > all_ids.size())
        throw std::invalid_argument("sample_clients: m out of range");
    std::vector<int> pool = all_ids;
    auto rng = make_rng(mix_seed(rng_seed, 0x5a3c1eU, round));
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(m);
    std::sort(pool.begin(), pool.end());
    return pool;
}

namespace detail {

// Sum of weight*delta over updates in ascending client-id order, so runs are
// bit-reproducible regardless of how updates were produced.
inline ParamVector weighted_delta_sum(const std::vector<RoundUpdate>& updates,
                                      std::size_t n_params, bool use_lambda) {
    if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
    std::vector<const RoundUpdate*> ordered;
    ordered.reserve(updates.size());
    for (const auto& u : updates) ordered.push_back(&u);
    std::sort(ordered.begin(), ordered.end(),
              [](const RoundUpdate* a, const RoundUpdate* b) { return a->client_id < b->client_id; });

    ParamVector sum(n_params, 0.0);
    for (const RoundUpdate* u : ordered) {
        if (u->delta.size() != n_params)
            throw std::invalid_argument("aggregate: delta length mismatch");
        check_finite(u->delta, "aggregate delta");
        const double w = use_lambda ? u->lambda : 1.0;
        for (std::size_t k = 0; k < n_params; ++k) sum[k] += w * u->delta[k];
    }
    return sum;
}

}  // namespace detail

// Boosted Reptile-style update: G' = G + (1/m) * sum(lambda_i * delta_i).
inline GlobalModel aggregate_meta(const GlobalModel& g, const std::vector<RoundUpdate>& updates) {
    ParamVector sum = detail::weighted_delta_sum(updates, g.params.size(), true);
    GlobalModel out;
    out.params.resize(g.params.size());
    const double scale = 1.0 / static_cast<double>(updates.size());
    for (std::size_t k = 0; k < g.params.size(); ++k)
        out.params[k] = g.params[k] + scale * sum[k];
    check_finite(out.params, "aggregate_meta result");
    out.round = g.round + 1;
    return out;
}

// FedAvg delta form: G' = G + (eta/m) * sum(delta_i). Lambda is ignored.
inline GlobalModel aggregate_fedavg(const GlobalModel& g, const std::vector<RoundUpdate>& updates,
                                    double eta) {
    ParamVector sum = detail::weighted_delta_sum(updates, g.params.size(), false);
    GlobalModel out;
    out.params.resize(g.params.size());
    const double scale = eta / static_cast<double>(updates.size());
    for (std::size_t k = 0; k < g.params.size(); ++k)
        out.params[k] = g.params[k] + scale * sum[k];
    check_finite(out.params, "aggregate_fedavg result");
    out.round = g.round + 1;
    return out;
}

inline GlobalModel aggregate(const GlobalModel& g, const std::vector<RoundUpdate>& updates,
                             const AggregatorSpec& spec) {
    return spec.kind == AggregatorSpec::Kind::Meta ? aggregate_meta(g, updates)
                                                   : aggregate_fedavg(g, updates, spec.eta);
}

}  // namespace fedsim
