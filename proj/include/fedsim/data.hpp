#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/nn.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Images are H x W intensity grids in [0,1], stored flat row-major.
struct Dataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_classes = 0;
    std::vector<std::vector<double>> images;
    std::vector<int> labels;
    std::string name;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }

    void push_back(std::vector<double> image, int label) {
        images.push_back(std::move(image));
        labels.push_back(label);
    }
};

struct PartitionPlan {
    std::size_t n_clients = 1;
    double alpha = 0.9;
    std::uint64_t seed = 0;
};

inline Batch to_batch(const Dataset& ds) {
    Batch b;
    b.inputs = Matrix(ds.size(), ds.height * ds.width);
    for (std::size_t i = 0; i < ds.size(); ++i)
        std::copy(ds.images[i].begin(), ds.images[i].end(), b.inputs.row(i));
    b.labels = ds.labels;
    return b;
}

inline double evaluate_accuracy(const ParamVector& params, const ModelSpec& spec,
                                const Dataset& ds) {
    Batch b = to_batch(ds);
    return evaluate_accuracy(params, spec, b.inputs, b.labels);
}

namespace detail {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline std::uint32_t read_be32(std::istream& in, const std::string& field) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw std::runtime_error("idx: truncated " + field);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace detail

// MNIST-style IDX pair: big-endian magics 0x803 (images) / 0x801 (labels),
// byte intensities scaled by 1/255.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot open images file " + images_path);
    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw std::runtime_error("idx: cannot open labels file " + labels_path);

    if (detail::read_be32(img, "images magic") != detail::kIdxImagesMagic)
        throw std::runtime_error("idx: bad magic in images file " + images_path);
    if (detail::read_be32(lbl, "labels magic") != detail::kIdxLabelsMagic)
        throw std::runtime_error("idx: bad magic in labels file " + labels_path);

    const std::uint32_t n_images = detail::read_be32(img, "images count");
    const std::uint32_t rows = detail::read_be32(img, "images rows");
    const std::uint32_t cols = detail::read_be32(img, "images cols");
    const std::uint32_t n_labels = detail::read_be32(lbl, "labels count");
    if (n_images != n_labels)
        throw std::runtime_error("idx: count mismatch, images=" + std::to_string(n_images) +
                                 " labels=" + std::to_string(n_labels));

    Dataset ds;
    ds.height = rows;
    ds.width = cols;
    ds.name = images_path;
    ds.images.reserve(n_images);
    ds.labels.reserve(n_images);
    std::vector<unsigned char> pixel_buf(std::size_t(rows) * cols);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        img.read(reinterpret_cast<char*>(pixel_buf.data()), pixel_buf.size());
        if (!img) throw std::runtime_error("idx: truncated images payload");
        std::vector<double> image(pixel_buf.size());
        for (std::size_t k = 0; k < pixel_buf.size(); ++k) image[k] = pixel_buf[k] / 255.0;
        char c;
        lbl.read(&c, 1);
        if (!lbl) throw std::runtime_error("idx: truncated labels payload");
        const int label = static_cast<unsigned char>(c);
        max_label = std::max(max_label, label);
        ds.push_back(std::move(image), label);
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot write images file " + images_path);
    std::ofstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw std::runtime_error("idx: cannot write labels file " + labels_path);

    detail::write_be32(img, detail::kIdxImagesMagic);
    detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_be32(img, static_cast<std::uint32_t>(ds.height));
    detail::write_be32(img, static_cast<std::uint32_t>(ds.width));
    detail::write_be32(lbl, detail::kIdxLabelsMagic);
    detail::write_be32(lbl, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.images[i]) {
            const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
            img.write(reinterpret_cast<const char*>(&byte), 1);
        }
        const auto label = static_cast<unsigned char>(ds.labels[i]);
        lbl.write(reinterpret_cast<const char*>(&label), 1);
    }
}

// Synthetic digits: one noisy template per class. Class-separable by
// construction, so a small MLP learns it in a few hundred SGD steps.
inline Dataset synth_digits(std::size_t n, std::size_t side, std::size_t k, std::uint64_t seed) {
    if (side < 8) throw std::invalid_argument("synth_digits: side must be >= 8");
    if (k < 2 || k > 10) throw std::invalid_argument("synth_digits: k must be in [2,10]");

    // Templates depend only on (side, k), not on the sample draw.
    // Template cells top out at 0.6 so full-intensity trigger pixels stay
    // outside the clean intensity range.
    auto template_rng = make_rng(mix_seed(0x7e39u, side, k));
    std::vector<std::vector<double>> templates(k, std::vector<double>(side * side, 0.0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& tpl : templates)
        for (double& cell : tpl) cell = unit(template_rng) < 0.35 ? 0.6 : 0.0;

    Dataset ds;
    ds.height = side;
    ds.width = side;
    ds.num_classes = k;
    ds.name = "synth";
    auto rng = make_rng(seed);
    std::normal_distribution<double> noise(0.0, 0.15);
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = pick(rng);
        std::vector<double> image(side * side);
        for (std::size_t j = 0; j < image.size(); ++j)
            image[j] = std::clamp(templates[cls][j] + noise(rng), 0.0, 1.0);
        ds.push_back(std::move(image), static_cast<int>(cls));
    }
    return ds;
}

// Per-class Dirichlet split: one Dirichlet(alpha) draw over clients per class,
// then each of that class's indices is assigned multinomially.
inline std::vector<std::vector<std::size_t>> dirichlet_partition_indices(const Dataset& ds,
                                                                         const PartitionPlan& plan) {
    if (ds.empty()) throw std::invalid_argument("dirichlet_partition: empty dataset");
    if (plan.n_clients == 0) throw std::invalid_argument("dirichlet_partition: n_clients == 0");
    if (plan.alpha <= 0.0) throw std::invalid_argument("dirichlet_partition: alpha must be > 0");

    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

    auto rng = make_rng(plan.seed);
    std::gamma_distribution<double> gamma(plan.alpha, 1.0);
    std::vector<std::vector<std::size_t>> shards(plan.n_clients);
    for (auto& indices : by_class) {
        std::vector<double> weights(plan.n_clients);
        double total = 0.0;
        for (double& w : weights) {
            w = gamma(rng);
            total += w;
        }
        if (total <= 0.0) { weights.assign(plan.n_clients, 1.0); total = plan.n_clients; }
        std::discrete_distribution<std::size_t> assign(weights.begin(), weights.end());
        for (std::size_t idx : indices) shards[assign(rng)].push_back(idx);
    }
    for (auto& shard : shards) std::sort(shard.begin(), shard.end());
    return shards;
}

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.height = ds.height;
    out.width = ds.width;
    out.num_classes = ds.num_classes;
    out.name = ds.name;
    for (std::size_t idx : indices) out.push_back(ds.images[idx], ds.labels[idx]);
    return out;
}

inline std::vector<Dataset> dirichlet_partition(const Dataset& ds, const PartitionPlan& plan) {
    std::vector<Dataset> shards;
    for (const auto& indices : dirichlet_partition_indices(ds, plan))
        shards.push_back(subset(ds, indices));
    return shards;
}

}  // namespace fedsim
