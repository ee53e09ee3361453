#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/attack.hpp"
#include "fedsim/client.hpp"
#include "fedsim/server.hpp"

namespace fedsim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    enum class Type { Synth, Mnist };
    Type type = Type::Synth;
    // synth
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::size_t side = 8;
    std::size_t classes = 5;
    // mnist
    std::string train_images, train_labels, test_images, test_labels;
};

struct MaliciousConfig {
    int client_id = 0;
    double boost = 0.0;  // 0 = unset, defaulted to n_clients / clients_per_round
    double poison_fraction = 0.12;
    EpisodeSchedule schedule;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::vector<std::size_t> hidden = {32};
    std::size_t n_clients = 0;
    std::size_t clients_per_round = 0;
    std::size_t rounds = 0;
    AggregatorSpec aggregator;
    double alpha = 0.9;
    std::uint64_t seed = 0;
    std::size_t min_shard_size = 1;
    std::vector<MaliciousConfig> malicious;
    TrainConfig train;
    std::optional<double> fixed_p;
    std::vector<TriggerSpec> report_triggers;  // always-reported metric columns
    double backdoor_threshold = 0.8;           // for rounds-to-threshold in the summary

    void validate() const;
};

namespace cfgdetail {

using nlohmann::json;

inline void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected object");
}

inline void reject_unknown(const json& j, const std::set<std::string>& allowed,
                           const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown key");
}

template <typename T>
T get_required(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + "." + key + ": missing required field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": type mismatch");
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": type mismatch");
    }
}

inline TriggerSpec parse_trigger(const json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, {"glyph", "target_label", "row", "col", "intensity", "name"}, path);
    TriggerSpec t;
    const auto glyph_name = get_required<std::string>(j, "glyph", path);
    try {
        t.glyph = builtin_glyph(glyph_name);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ".glyph: " + e.what());
    }
    t.glyph.intensity = get_or<double>(j, "intensity", path, 1.0);
    t.target_label = get_required<int>(j, "target_label", path);
    t.row = get_or<std::size_t>(j, "row", path, 0);
    t.col = get_or<std::size_t>(j, "col", path, 0);
    t.name = get_or<std::string>(j, "name", path, glyph_name);
    return t;
}

}  // namespace cfgdetail

inline void ExperimentConfig::validate() const {
    if (n_clients == 0) throw ConfigError("n_clients: must be positive");
    if (clients_per_round == 0 || clients_per_round > n_clients)
        throw ConfigError("clients_per_round: must be in [1, n_clients]");
    if (rounds == 0) throw ConfigError("rounds: must be >= 1");
    if (alpha <= 0.0) throw ConfigError("alpha: must be positive");
    if (fixed_p && (*fixed_p < 0.0 || *fixed_p > 1.0))
        throw ConfigError("fixed_p: must be in [0,1]");
    train.validate();
    std::set<int> seen_ids;
    for (std::size_t i = 0; i < malicious.size(); ++i) {
        const std::string path = "malicious[" + std::to_string(i) + "]";
        const auto& m = malicious[i];
        if (m.client_id < 0 || static_cast<std::size_t>(m.client_id) >= n_clients)
            throw ConfigError(path + ".client_id: out of range [0, n_clients)");
        if (!seen_ids.insert(m.client_id).second)
            throw ConfigError(path + ".client_id: duplicate malicious id");
        if (m.poison_fraction < 0.0 || m.poison_fraction > 1.0)
            throw ConfigError(path + ".poison_fraction: must be in [0,1]");
        if (m.boost < 1.0) throw ConfigError(path + ".boost: must be >= 1");
        try {
            m.schedule.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path + ".schedule: " + e.what());
        }
    }
}

inline ExperimentConfig parse_config(const std::string& text) {
    using cfgdetail::get_or;
    using cfgdetail::get_required;
    using nlohmann::json;

    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    cfgdetail::require_object(j, "config");
    cfgdetail::reject_unknown(j,
                              {"dataset", "model", "n_clients", "clients_per_round", "rounds",
                               "aggregator", "alpha", "seed", "min_shard_size", "malicious",
                               "train", "fixed_p", "report_triggers", "backdoor_threshold"},
                              "config");

    ExperimentConfig cfg;

    const json& ds = j.contains("dataset") ? j.at("dataset") : json::object();
    if (!j.contains("dataset")) throw ConfigError("dataset: missing required field");
    cfgdetail::require_object(ds, "dataset");
    const auto ds_type = get_required<std::string>(ds, "type", "dataset");
    if (ds_type == "synth") {
        cfgdetail::reject_unknown(ds, {"type", "n_train", "n_test", "side", "classes"}, "dataset");
        cfg.dataset.type = DatasetConfig::Type::Synth;
        cfg.dataset.n_train = get_or<std::size_t>(ds, "n_train", "dataset", 2000);
        cfg.dataset.n_test = get_or<std::size_t>(ds, "n_test", "dataset", 500);
        cfg.dataset.side = get_or<std::size_t>(ds, "side", "dataset", 8);
        cfg.dataset.classes = get_or<std::size_t>(ds, "classes", "dataset", 5);
    } else if (ds_type == "mnist") {
        cfgdetail::reject_unknown(
            ds, {"type", "train_images", "train_labels", "test_images", "test_labels"}, "dataset");
        cfg.dataset.type = DatasetConfig::Type::Mnist;
        cfg.dataset.train_images = get_required<std::string>(ds, "train_images", "dataset");
        cfg.dataset.train_labels = get_required<std::string>(ds, "train_labels", "dataset");
        cfg.dataset.test_images = get_required<std::string>(ds, "test_images", "dataset");
        cfg.dataset.test_labels = get_required<std::string>(ds, "test_labels", "dataset");
    } else {
        throw ConfigError("dataset.type: must be \"synth\" or \"mnist\"");
    }

    if (j.contains("model")) {
        cfgdetail::require_object(j.at("model"), "model");
        cfgdetail::reject_unknown(j.at("model"), {"hidden"}, "model");
        cfg.hidden = get_or<std::vector<std::size_t>>(j.at("model"), "hidden", "model", {32});
    }

    cfg.n_clients = get_required<std::size_t>(j, "n_clients", "config");
    cfg.clients_per_round = get_required<std::size_t>(j, "clients_per_round", "config");
    cfg.rounds = get_required<std::size_t>(j, "rounds", "config");
    cfg.alpha = get_or<double>(j, "alpha", "config", 0.9);
    cfg.seed = get_or<std::uint64_t>(j, "seed", "config", 0);
    cfg.min_shard_size = get_or<std::size_t>(j, "min_shard_size", "config", 1);
    cfg.backdoor_threshold = get_or<double>(j, "backdoor_threshold", "config", 0.8);

    if (j.contains("aggregator")) {
        const json& ag = j.at("aggregator");
        cfgdetail::require_object(ag, "aggregator");
        cfgdetail::reject_unknown(ag, {"kind", "eta"}, "aggregator");
        const auto kind = get_required<std::string>(ag, "kind", "aggregator");
        if (kind == "meta") {
            if (ag.contains("eta")) throw ConfigError("aggregator.eta: only valid for fedavg");
            cfg.aggregator.kind = AggregatorSpec::Kind::Meta;
        } else if (kind == "fedavg") {
            cfg.aggregator.kind = AggregatorSpec::Kind::FedAvg;
            cfg.aggregator.eta = get_or<double>(ag, "eta", "aggregator", 1.0);
            if (cfg.aggregator.eta <= 0.0) throw ConfigError("aggregator.eta: must be positive");
        } else {
            throw ConfigError("aggregator.kind: must be \"fedavg\" or \"meta\"");
        }
    }

    if (j.contains("train")) {
        const json& tr = j.at("train");
        cfgdetail::require_object(tr, "train");
        cfgdetail::reject_unknown(tr, {"epochs", "batch_size", "lr"}, "train");
        cfg.train.epochs = get_or<std::size_t>(tr, "epochs", "train", 2);
        cfg.train.batch_size = get_or<std::size_t>(tr, "batch_size", "train", 64);
        cfg.train.lr = get_or<double>(tr, "lr", "train", 0.1);
    }

    if (j.contains("fixed_p")) cfg.fixed_p = get_required<double>(j, "fixed_p", "config");

    if (j.contains("malicious")) {
        const json& mal = j.at("malicious");
        if (!mal.is_array()) throw ConfigError("malicious: expected array");
        for (std::size_t i = 0; i < mal.size(); ++i) {
            const std::string path = "malicious[" + std::to_string(i) + "]";
            const json& mj = mal.at(i);
            cfgdetail::require_object(mj, path);
            cfgdetail::reject_unknown(mj, {"client_id", "boost", "poison_fraction", "schedule"},
                                      path);
            MaliciousConfig m;
            m.client_id = get_required<int>(mj, "client_id", path);
            m.boost = get_or<double>(mj, "boost", path,
                                     static_cast<double>(cfg.n_clients) /
                                         static_cast<double>(cfg.clients_per_round));
            m.poison_fraction = get_or<double>(mj, "poison_fraction", path, 0.12);
            if (!mj.contains("schedule"))
                throw ConfigError(path + ".schedule: missing required field");
            const json& sched = mj.at("schedule");
            if (!sched.is_array()) throw ConfigError(path + ".schedule: expected array");
            for (std::size_t e = 0; e < sched.size(); ++e) {
                const std::string epath = path + ".schedule[" + std::to_string(e) + "]";
                const json& ej = sched.at(e);
                cfgdetail::require_object(ej, epath);
                EpisodeSchedule::Entry entry;
                entry.start_round = get_required<std::size_t>(ej, "start_round", epath);
                json trig = ej;
                trig.erase("start_round");
                entry.trigger = cfgdetail::parse_trigger(trig, epath);
                m.schedule.entries.push_back(std::move(entry));
            }
            cfg.malicious.push_back(std::move(m));
        }
    }

    if (j.contains("report_triggers")) {
        const json& rt = j.at("report_triggers");
        if (!rt.is_array()) throw ConfigError("report_triggers: expected array");
        for (std::size_t i = 0; i < rt.size(); ++i)
            cfg.report_triggers.push_back(
                cfgdetail::parse_trigger(rt.at(i), "report_triggers[" + std::to_string(i) + "]"));
    }

    cfg.validate();
    return cfg;
}

}  // namespace fedsim
