#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Fixed 5x5 letter bitmaps; set cells get the glyph intensity when stamped.
struct Glyph {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> mask;  // rows*cols, 0/1
    double intensity = 1.0;

    bool set(std::size_t r, std::size_t c) const { return mask[r * cols + c] != 0; }

    std::size_t cells_set() const {
        return std::accumulate(mask.begin(), mask.end(), std::size_t{0});
    }
};

// ASCII-art fixtures for the built-in glyphs live in docs/glyphs.txt;
// tests assert exact pixel placement against them.
inline Glyph glyph_from_rows(const std::array<const char*, 5>& art, double intensity = 1.0) {
    Glyph g;
    g.rows = 5;
    g.cols = 5;
    g.intensity = intensity;
    for (const char* row : art)
        for (std::size_t c = 0; c < 5; ++c) g.mask.push_back(row[c] == '#' ? 1 : 0);
    return g;
}

inline Glyph builtin_glyph(const std::string& name) {
    if (name == "delta")
        return glyph_from_rows({"..#..",
                                ".#.#.",
                                ".#.#.",
                                "#...#",
                                "#####"});
    if (name == "X")
        return glyph_from_rows({"#...#",
                                ".#.#.",
                                "..#..",
                                ".#.#.",
                                "#...#"});
    if (name == "W")
        return glyph_from_rows({"#...#",
                                "#...#",
                                "#.#.#",
                                "#.#.#",
                                ".#.#."});
    if (name == "F")
        return glyph_from_rows({"#####",
                                "#....",
                                "####.",
                                "#....",
                                "#...."});
    if (name == "N")
        return glyph_from_rows({"#...#",
                                "##..#",
                                "#.#.#",
                                "#..##",
                                "#...#"});
    if (name == "O")
        return glyph_from_rows({".###.",
                                "#...#",
                                "#...#",
                                "#...#",
                                ".###."});
    if (name == "K")
        return glyph_from_rows({"#...#",
                                "#..#.",
                                "###..",
                                "#..#.",
                                "#...#"});
    if (name == "A")
        return glyph_from_rows({".###.",
                                "#...#",
                                "#####",
                                "#...#",
                                "#...#"});
    if (name == "C")
        return glyph_from_rows({".####",
                                "#....",
                                "#....",
                                "#....",
                                ".####"});
    if (name == "M")
        return glyph_from_rows({"#...#",
                                "##.##",
                                "#.#.#",
                                "#...#",
                                "#...#"});
    throw std::invalid_argument("unknown builtin glyph: " + name);
}

struct TriggerSpec {
    Glyph glyph;
    std::size_t row = 0;  // top-left anchor
    std::size_t col = 0;
    int target_label = 0;  // attacker-chosen label pi
    std::string name;

    void validate(std::size_t height, std::size_t width, std::size_t num_classes) const {
        if (glyph.cells_set() == 0) throw std::invalid_argument("trigger: empty glyph mask");
        if (row + glyph.rows > height || col + glyph.cols > width)
            throw std::invalid_argument("trigger: glyph out of image bounds");
        if (target_label < 0 || static_cast<std::size_t>(target_label) >= num_classes)
            throw std::invalid_argument("trigger: target label out of class range");
    }
};

// One trigger per episode; the entry with the largest start_round <= round wins.
struct EpisodeSchedule {
    struct Entry {
        std::size_t start_round;
        TriggerSpec trigger;
    };
    std::vector<Entry> entries;

    void validate() const {
        if (entries.empty()) throw std::invalid_argument("schedule: no entries");
        if (entries.front().start_round != 1)
            throw std::invalid_argument("schedule: first entry must start at round 1");
        for (std::size_t i = 1; i < entries.size(); ++i)
            if (entries[i].start_round <= entries[i - 1].start_round)
                throw std::invalid_argument("schedule: start_rounds not strictly increasing");
    }
};

inline const TriggerSpec& trigger_at(const EpisodeSchedule& schedule, std::size_t round) {
    if (round < 1) throw std::invalid_argument("trigger_at: round must be >= 1");
    const TriggerSpec* best = nullptr;
    for (const auto& e : schedule.entries)
        if (e.start_round <= round) best = &e.trigger;
    if (!best) throw std::invalid_argument("trigger_at: no entry covers round");
    return *best;
}

// Returns the round of the schedule entry active at `round` (episode start).
inline std::size_t episode_start(const EpisodeSchedule& schedule, std::size_t round) {
    std::size_t best = 0;
    for (const auto& e : schedule.entries)
        if (e.start_round <= round) best = e.start_round;
    return best;
}

inline std::vector<double> apply_trigger(const std::vector<double>& image, std::size_t height,
                                         std::size_t width, const TriggerSpec& trigger) {
    if (trigger.row + trigger.glyph.rows > height || trigger.col + trigger.glyph.cols > width)
        throw std::invalid_argument("apply_trigger: glyph out of image bounds");
    std::vector<double> out = image;
    for (std::size_t r = 0; r < trigger.glyph.rows; ++r)
        for (std::size_t c = 0; c < trigger.glyph.cols; ++c)
            if (trigger.glyph.set(r, c))
                out[(trigger.row + r) * width + trigger.col + c] = trigger.glyph.intensity;
    return out;
}

inline Dataset apply_trigger(const Dataset& ds, const TriggerSpec& trigger, bool relabel) {
    Dataset out;
    out.height = ds.height;
    out.width = ds.width;
    out.num_classes = ds.num_classes;
    out.name = ds.name;
    for (std::size_t i = 0; i < ds.size(); ++i)
        out.push_back(apply_trigger(ds.images[i], ds.height, ds.width, trigger),
                      relabel ? trigger.target_label : ds.labels[i]);
    return out;
}

// Clean/poisoned split of one client's shard. The two index sets are disjoint
// and union to the original shard.
struct ShardPair {
    Dataset clean;
    Dataset poisoned;
    double poison_fraction = 0.0;
    std::vector<std::size_t> clean_indices;     // into the source shard
    std::vector<std::size_t> poisoned_indices;  // into the source shard
};

inline ShardPair poison_shard(const Dataset& shard, const TriggerSpec& trigger, double fraction,
                              std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("poison_shard: fraction outside [0,1]");
    const std::size_t n_poison =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(shard.size())));

    std::vector<std::size_t> order(shard.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    ShardPair pair;
    pair.poison_fraction = fraction;
    pair.poisoned_indices.assign(order.begin(), order.begin() + n_poison);
    pair.clean_indices.assign(order.begin() + n_poison, order.end());
    std::sort(pair.poisoned_indices.begin(), pair.poisoned_indices.end());
    std::sort(pair.clean_indices.begin(), pair.clean_indices.end());
    pair.clean = subset(shard, pair.clean_indices);
    pair.poisoned = apply_trigger(subset(shard, pair.poisoned_indices), trigger, true);
    return pair;
}

inline ShardPair clean_only_shard(const Dataset& shard) {
    ShardPair pair;
    pair.clean = shard;
    pair.poisoned.height = shard.height;
    pair.poisoned.width = shard.width;
    pair.poisoned.num_classes = shard.num_classes;
    pair.clean_indices.resize(shard.size());
    std::iota(pair.clean_indices.begin(), pair.clean_indices.end(), 0);
    return pair;
}

}  // namespace fedsim
