#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fedsim/attack.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct TrainConfig {
    std::size_t epochs = 2;
    std::size_t batch_size = 64;
    double lr = 0.1;

    void validate() const {
        // lr == 0 is allowed as a no-learning probe; sgd steps are skipped.
        if (epochs == 0 || batch_size == 0 || lr < 0.0)
            throw std::invalid_argument("TrainConfig: epochs, batch_size and lr must be positive");
    }
};

struct ClientState {
    int id = 0;
    bool malicious = false;
    ShardPair shard;
    // Persistent local model; malicious clients keep theirs across rounds.
    std::optional<ParamVector> local_params;
    double boost = 1.0;  // lambda_i, 1 for benign
};

struct RoundUpdate {
    int client_id = 0;
    double lambda = 1.0;
    ParamVector delta;  // theta_i - theta
    double mean_loss = 0.0;
};

// Global model accuracy on the poisoned shard (attacker labels). The dynamic
// weighting factor p of the symbiosis loss. Empty poisoned set -> 0.
inline double compute_p(const ParamVector& global_params, const ModelSpec& spec,
                        const Dataset& poisoned) {
    if (poisoned.empty()) return 0.0;
    return evaluate_accuracy(global_params, spec, poisoned);
}

namespace detail {

inline Batch gather_batch(const Batch& pool, const std::vector<std::size_t>& order,
                          std::size_t begin, std::size_t end) {
    Batch b;
    b.inputs = Matrix(end - begin, pool.inputs.cols);
    b.labels.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const std::size_t src = order[i];
        std::copy(pool.inputs.row(src), pool.inputs.row(src) + pool.inputs.cols,
                  b.inputs.row(i - begin));
        b.labels[i - begin] = pool.labels[src];
    }
    return b;
}

}  // namespace detail

// One local training round. Benign clients reset to the global model and run
// plain cross-entropy SGD; malicious clients continue from their persistent
// local model and minimize (1-p)*L_class + p*L_dist against the global
// snapshot, with p the global model's accuracy on their poisoned data
// (optionally overridden for the fixed-p baseline).
inline RoundUpdate client_update(ClientState& state, const ParamVector& global_params,
                                 const ModelSpec& spec, const TrainConfig& cfg,
                                 std::uint64_t rng_seed,
                                 std::optional<double> p_override = std::nullopt) {
    cfg.validate();
    if (state.shard.clean.empty() && state.shard.poisoned.empty())
        throw std::invalid_argument("client_update: empty shard");
    if (global_params.size() != spec.n_params())
        throw std::invalid_argument("client_update: global params length mismatch");

    double p = 0.0;
    if (state.malicious) {
        p = p_override ? *p_override : compute_p(global_params, spec, state.shard.poisoned);
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("client_update: p outside [0,1]");
        if (!state.local_params) state.local_params = global_params;
    } else {
        state.local_params = global_params;
    }
    ParamVector theta = *state.local_params;

    // Training pool: clean data, then poisoned (malicious only by invariant).
    Batch pool = to_batch(state.shard.clean);
    if (!state.shard.poisoned.empty()) {
        Batch adv = to_batch(state.shard.poisoned);
        const std::size_t base = pool.inputs.rows;
        Matrix merged(base + adv.inputs.rows, pool.inputs.cols);
        std::copy(pool.inputs.data.begin(), pool.inputs.data.end(), merged.data.begin());
        std::copy(adv.inputs.data.begin(), adv.inputs.data.end(),
                  merged.data.begin() + base * pool.inputs.cols);
        pool.inputs = std::move(merged);
        pool.labels.insert(pool.labels.end(), adv.labels.begin(), adv.labels.end());
    }

    LossSpec loss;
    if (state.malicious) {
        loss.kind = LossSpec::Kind::Combined;
        loss.p = p;
        loss.reference = &global_params;
    }

    auto rng = make_rng(rng_seed);
    std::vector<std::size_t> order(pool.labels.size());
    std::iota(order.begin(), order.end(), 0);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            Batch batch = detail::gather_batch(pool, order, begin, end);
            LossResult res = loss_and_grad(theta, spec, batch, loss);
            if (cfg.lr > 0.0) theta = sgd_step(theta, res.grad, cfg.lr);
            loss_sum += res.loss;
            ++n_batches;
        }
    }

    state.local_params = theta;

    RoundUpdate update;
    update.client_id = state.id;
    update.lambda = state.malicious ? state.boost : 1.0;
    update.delta.resize(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k)
        update.delta[k] = theta[k] - global_params[k];
    update.mean_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
    return update;
}

}  // namespace fedsim
