#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/config.hpp"
#include "fedsim/data.hpp"
#include "fedsim/server.hpp"

namespace fedsim {

struct MetricsRow {
    std::size_t round = 0;
    double main_accuracy = 0.0;
    std::vector<double> backdoor_accuracy;  // one per trigger column
    double mean_loss = 0.0;
};

struct ExperimentResult {
    std::vector<std::string> trigger_names;  // column order for backdoor_accuracy
    std::vector<MetricsRow> rows;
    GlobalModel final_model;
    ModelSpec model_spec;
};

// Fraction of test samples whose true label differs from pi that the model
// maps to pi once the trigger is stamped on.
inline double backdoor_accuracy(const ParamVector& params, const ModelSpec& spec,
                                const Dataset& test, const TriggerSpec& trigger) {
    if (test.empty()) throw std::invalid_argument("backdoor_accuracy: empty test set");
    Dataset eligible;
    eligible.height = test.height;
    eligible.width = test.width;
    eligible.num_classes = test.num_classes;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (test.labels[i] != trigger.target_label)
            eligible.push_back(test.images[i], test.labels[i]);
    if (eligible.empty())
        throw std::invalid_argument("backdoor_accuracy: no samples with true label != pi");
    Dataset triggered = apply_trigger(eligible, trigger, false);
    Batch b = to_batch(triggered);
    const std::vector<int> pred = predict(params, spec, b.inputs);
    std::size_t hits = 0;
    for (int p : pred)
        if (p == trigger.target_label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace detail {

struct LoadedData {
    Dataset train;
    Dataset test;
};

inline LoadedData load_experiment_data(const ExperimentConfig& cfg) {
    LoadedData d;
    if (cfg.dataset.type == DatasetConfig::Type::Synth) {
        d.train = synth_digits(cfg.dataset.n_train, cfg.dataset.side, cfg.dataset.classes,
                               mix_seed(cfg.seed, 0x7261u));
        d.test = synth_digits(cfg.dataset.n_test, cfg.dataset.side, cfg.dataset.classes,
                              mix_seed(cfg.seed, 0x7465u));
    } else {
        d.train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
        d.test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
        d.test.num_classes = d.train.num_classes =
            std::max(d.train.num_classes, d.test.num_classes);
    }
    return d;
}

// Redraw with seed+1 until every shard reaches the minimum size; a client
// with no data cannot train.
inline std::vector<std::vector<std::size_t>> partition_with_min_size(const Dataset& train,
                                                                     const ExperimentConfig& cfg) {
    for (std::uint64_t attempt = 0; attempt <= 100; ++attempt) {
        PartitionPlan plan{cfg.n_clients, cfg.alpha, cfg.seed + attempt};
        auto shards = dirichlet_partition_indices(train, plan);
        bool ok = true;
        for (const auto& s : shards)
            if (s.size() < cfg.min_shard_size) { ok = false; break; }
        if (ok) return shards;
    }
    throw std::runtime_error("partition: could not satisfy min_shard_size in 100 redraws");
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    detail::LoadedData data = detail::load_experiment_data(cfg);
    if (data.train.empty() || data.test.empty())
        throw std::runtime_error("run_experiment: empty train or test dataset");

    ModelSpec spec;
    spec.layer_sizes.push_back(data.train.height * data.train.width);
    for (std::size_t h : cfg.hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(data.train.num_classes);
    spec.validate();

    // Metric columns: every trigger named by any schedule plus explicit
    // report_triggers, first-seen order, deduped by name.
    std::vector<TriggerSpec> triggers;
    auto add_trigger = [&](const TriggerSpec& t) {
        t.validate(data.train.height, data.train.width, data.train.num_classes);
        for (const auto& seen : triggers)
            if (seen.name == t.name) return;
        triggers.push_back(t);
    };
    for (const auto& m : cfg.malicious)
        for (const auto& e : m.schedule.entries) add_trigger(e.trigger);
    for (const auto& t : cfg.report_triggers) add_trigger(t);

    auto shard_indices = detail::partition_with_min_size(data.train, cfg);

    std::vector<ClientState> states(cfg.n_clients);
    std::vector<Dataset> source_shards(cfg.n_clients);
    std::map<int, const MaliciousConfig*> mal_by_id;
    for (const auto& m : cfg.malicious) mal_by_id[m.client_id] = &m;
    std::vector<int> all_ids;
    for (std::size_t i = 0; i < cfg.n_clients; ++i) {
        source_shards[i] = subset(data.train, shard_indices[i]);
        states[i].id = static_cast<int>(i);
        auto it = mal_by_id.find(static_cast<int>(i));
        if (it != mal_by_id.end()) {
            states[i].malicious = true;
            states[i].boost = it->second->boost;
        } else {
            states[i].shard = clean_only_shard(source_shards[i]);
        }
        all_ids.push_back(static_cast<int>(i));
    }

    GlobalModel global;
    global.params = init_params(spec, mix_seed(cfg.seed, 0x696eu));
    global.round = 1;

    ExperimentResult result;
    for (const auto& t : triggers) result.trigger_names.push_back(t.name);
    result.model_spec = spec;

    for (std::size_t t = 1; t <= cfg.rounds; ++t) {
        try {
            // Episode boundaries: rebuild the poisoned split from the original
            // shard, never from previously triggered images.
            for (const auto& m : cfg.malicious) {
                const std::size_t start = episode_start(m.schedule, t);
                if (t == 1 || start == t) {
                    const TriggerSpec& trig = trigger_at(m.schedule, t);
                    states[m.client_id].shard =
                        poison_shard(source_shards[m.client_id], trig, m.poison_fraction,
                                     mix_seed(cfg.seed, start, m.client_id));
                }
            }

            const std::vector<int> ids =
                sample_clients(all_ids, cfg.clients_per_round, cfg.seed, t);
            std::vector<RoundUpdate> updates;
            for (int id : ids) {
                std::optional<double> p_override;
                if (states[id].malicious && cfg.fixed_p) p_override = cfg.fixed_p;
                updates.push_back(client_update(states[id], global.params, spec, cfg.train,
                                                mix_seed(cfg.seed, t, id), p_override));
            }
            global = aggregate(global, updates, cfg.aggregator);

            MetricsRow row;
            row.round = t;
            row.main_accuracy = evaluate_accuracy(global.params, spec, data.test);
            for (const auto& trig : triggers)
                row.backdoor_accuracy.push_back(
                    backdoor_accuracy(global.params, spec, data.test, trig));
            double loss_sum = 0.0;
            for (const auto& u : updates) loss_sum += u.mean_loss;
            row.mean_loss = loss_sum / static_cast<double>(updates.size());
            result.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            throw std::runtime_error("round " + std::to_string(t) + ": " + e.what());
        }
    }

    result.final_model = std::move(global);
    return result;
}

inline std::string metrics_csv(const ExperimentResult& result) {
    std::ostringstream out;
    out << "round,main_acc";
    for (const auto& name : result.trigger_names) out << ",backdoor_acc_" << name;
    out << ",mean_loss\n";
    out << std::fixed << std::setprecision(6);
    for (const auto& row : result.rows) {
        out << row.round << ',' << row.main_accuracy;
        for (double acc : row.backdoor_accuracy) out << ',' << acc;
        out << ',' << row.mean_loss << '\n';
    }
    return out.str();
}

// metrics.csv plus summary.json (final accuracies, rounds-to-threshold per
// trigger; null when the threshold was never reached).
inline void write_metrics(const ExperimentResult& result, const std::string& out_dir,
                          double backdoor_threshold = 0.8) {
    if (result.rows.empty()) throw std::invalid_argument("write_metrics: no rows");
    std::filesystem::create_directories(out_dir);

    const std::filesystem::path dir(out_dir);
    {
        std::ofstream csv(dir / "metrics.csv");
        if (!csv) throw std::runtime_error("write_metrics: cannot write to " + out_dir);
        csv << metrics_csv(result);
    }

    nlohmann::json summary;
    const MetricsRow& last = result.rows.back();
    summary["rounds"] = last.round;
    summary["final_main_accuracy"] = last.main_accuracy;
    summary["backdoor_threshold"] = backdoor_threshold;
    nlohmann::json final_backdoor = nlohmann::json::object();
    nlohmann::json rounds_to_threshold = nlohmann::json::object();
    for (std::size_t k = 0; k < result.trigger_names.size(); ++k) {
        const std::string& name = result.trigger_names[k];
        final_backdoor[name] = last.backdoor_accuracy[k];
        nlohmann::json reached = nullptr;
        for (const auto& row : result.rows)
            if (row.backdoor_accuracy[k] >= backdoor_threshold) {
                reached = row.round;
                break;
            }
        rounds_to_threshold[name] = reached;
    }
    summary["final_backdoor_accuracy"] = final_backdoor;
    summary["rounds_to_threshold"] = rounds_to_threshold;

    std::ofstream js(dir / "summary.json");
    if (!js) throw std::runtime_error("write_metrics: cannot write to " + out_dir);
    js << summary.dump(2) << '\n';
}

}  // namespace fedsim
