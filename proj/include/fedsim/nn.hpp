#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/matrix.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Flat view of every weight and bias of a model, layer by layer
// (weights row-major out x in, then biases).
using ParamVector = std::vector<double>;

struct ModelSpec {
    // input dim, hidden dims..., class count. ReLU on hidden, identity output.
    std::vector<std::size_t> layer_sizes;

    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t num_classes() const { return layer_sizes.back(); }

    std::size_t n_params() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
        return n;
    }

    void validate() const {
        if (layer_sizes.size() < 2)
            throw std::invalid_argument("ModelSpec: need at least 2 layers");
        if (layer_sizes.back() < 2)
            throw std::invalid_argument("ModelSpec: need at least 2 classes");
        for (auto s : layer_sizes)
            if (s == 0) throw std::invalid_argument("ModelSpec: zero layer size");
    }
};

struct Batch {
    Matrix inputs;            // B x input_dim
    std::vector<int> labels;  // B entries in [0, K)
};

inline void check_finite(const ParamVector& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::runtime_error(std::string(what) + ": non-finite value");
}

// Glorot-uniform weights, zero biases. Deterministic per (spec, seed).
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamVector params;
    params.reserve(spec.n_params());
    auto rng = make_rng(seed);
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const std::size_t fan_in = spec.layer_sizes[l];
        const std::size_t fan_out = spec.layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t k = 0; k < fan_in * fan_out; ++k) params.push_back(dist(rng));
        for (std::size_t k = 0; k < fan_out; ++k) params.push_back(0.0);
    }
    return params;
}

namespace detail {

struct LayerView {
    const double* weights;  // fan_out x fan_in, row-major
    const double* biases;   // fan_out
    std::size_t fan_in;
    std::size_t fan_out;
};

inline std::vector<LayerView> layer_views(const ParamVector& params, const ModelSpec& spec) {
    if (params.size() != spec.n_params())
        throw std::invalid_argument("params length does not match ModelSpec");
    std::vector<LayerView> views;
    const double* p = params.data();
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        LayerView v;
        v.fan_in = spec.layer_sizes[l];
        v.fan_out = spec.layer_sizes[l + 1];
        v.weights = p;
        v.biases = p + v.fan_in * v.fan_out;
        p += (v.fan_in + 1) * v.fan_out;
        views.push_back(v);
    }
    return views;
}

// z = a W^T + b
inline Matrix linear(const Matrix& a, const LayerView& v) {
    Matrix z(a.rows, v.fan_out);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* zi = z.row(i);
        for (std::size_t o = 0; o < v.fan_out; ++o) {
            const double* w = v.weights + o * v.fan_in;
            double acc = v.biases[o];
            for (std::size_t k = 0; k < v.fan_in; ++k) acc += w[k] * ai[k];
            zi[o] = acc;
        }
    }
    return z;
}

}  // namespace detail

inline Matrix forward(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs) {
    if (inputs.cols != spec.input_dim())
        throw std::invalid_argument("forward: input dim mismatch");
    auto views = detail::layer_views(params, spec);
    Matrix a = inputs;
    for (std::size_t l = 0; l < views.size(); ++l) {
        a = detail::linear(a, views[l]);
        if (l + 1 < views.size())
            for (double& x : a.data) x = std::max(x, 0.0);
    }
    return a;
}

struct LossSpec {
    enum class Kind { Class, Dist, Combined };
    Kind kind = Kind::Class;
    double p = 0.0;                          // Combined only
    const ParamVector* reference = nullptr;  // Dist/Combined: the global model
};

struct LossResult {
    double loss = 0.0;
    ParamVector grad;
};

namespace detail {

inline LossResult class_loss_and_grad(const ParamVector& params, const ModelSpec& spec,
                                      const Batch& batch) {
    auto views = layer_views(params, spec);
    const std::size_t B = batch.inputs.rows;
    if (B == 0) throw std::invalid_argument("loss_and_grad: empty batch");
    if (batch.labels.size() != B)
        throw std::invalid_argument("loss_and_grad: labels/inputs size mismatch");

    // Forward, keeping post-activation outputs per layer.
    std::vector<Matrix> acts;  // acts[0] = inputs, acts[l+1] = output of layer l
    acts.push_back(batch.inputs);
    for (std::size_t l = 0; l < views.size(); ++l) {
        Matrix z = linear(acts.back(), views[l]);
        if (l + 1 < views.size())
            for (double& x : z.data) x = std::max(x, 0.0);
        acts.push_back(std::move(z));
    }

    // Softmax cross-entropy, max-subtracted; delta = (probs - onehot) / B.
    const Matrix& logits = acts.back();
    const std::size_t K = spec.num_classes();
    Matrix delta(B, K);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const int label = batch.labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= K)
            throw std::invalid_argument("loss_and_grad: label out of range");
        const double* row = logits.row(i);
        double m = row[0];
        for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - m);
        const double log_sum = std::log(sum);
        loss += log_sum - (row[label] - m);
        double* d = delta.row(i);
        for (std::size_t k = 0; k < K; ++k) d[k] = std::exp(row[k] - m) / sum;
        d[label] -= 1.0;
    }
    loss /= static_cast<double>(B);
    for (double& x : delta.data) x /= static_cast<double>(B);

    LossResult out;
    out.loss = loss;
    out.grad.assign(params.size(), 0.0);

    // Backward. Gradient layout mirrors the parameter layout.
    std::size_t offset = params.size();
    for (std::size_t l = views.size(); l-- > 0;) {
        const auto& v = views[l];
        offset -= (v.fan_in + 1) * v.fan_out;
        double* gw = out.grad.data() + offset;
        double* gb = gw + v.fan_in * v.fan_out;
        const Matrix& a_prev = acts[l];
        for (std::size_t i = 0; i < B; ++i) {
            const double* d = delta.row(i);
            const double* a = a_prev.row(i);
            for (std::size_t o = 0; o < v.fan_out; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                double* gwo = gw + o * v.fan_in;
                for (std::size_t k = 0; k < v.fan_in; ++k) gwo[k] += dv * a[k];
                gb[o] += dv;
            }
        }
        if (l > 0) {
            // delta_prev = (delta W) masked by relu'(a_prev)
            Matrix prev(B, v.fan_in);
            for (std::size_t i = 0; i < B; ++i) {
                const double* d = delta.row(i);
                const double* a = a_prev.row(i);
                double* pd = prev.row(i);
                for (std::size_t k = 0; k < v.fan_in; ++k) {
                    if (a[k] <= 0.0) { pd[k] = 0.0; continue; }
                    double acc = 0.0;
                    for (std::size_t o = 0; o < v.fan_out; ++o)
                        acc += d[o] * v.weights[o * v.fan_in + k];
                    pd[k] = acc;
                }
            }
            delta = std::move(prev);
        }
    }
    return out;
}

inline LossResult dist_loss_and_grad(const ParamVector& params, const ParamVector& reference) {
    if (params.size() != reference.size())
        throw std::invalid_argument("dist loss: length mismatch");
    LossResult out;
    out.grad.resize(params.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double d = params[k] - reference[k];
        acc += d * d;
        out.grad[k] = d;
    }
    out.loss = acc / 2.0;
    return out;
}

}  // namespace detail

// Loss and exact analytic gradient for any LossSpec. Combined endpoints are
// exact branches so p=0 reproduces Class and p=1 reproduces Dist bitwise.
inline LossResult loss_and_grad(const ParamVector& params, const ModelSpec& spec,
                                const Batch& batch, const LossSpec& loss) {
    switch (loss.kind) {
        case LossSpec::Kind::Class:
            return detail::class_loss_and_grad(params, spec, batch);
        case LossSpec::Kind::Dist:
            if (!loss.reference) throw std::invalid_argument("dist loss: missing reference params");
            return detail::dist_loss_and_grad(params, *loss.reference);
        case LossSpec::Kind::Combined: {
            if (loss.p < 0.0 || loss.p > 1.0)
                throw std::invalid_argument("combined loss: p outside [0,1]");
            if (loss.p == 0.0) return detail::class_loss_and_grad(params, spec, batch);
            if (!loss.reference)
                throw std::invalid_argument("combined loss: missing reference params");
            if (loss.p == 1.0) return detail::dist_loss_and_grad(params, *loss.reference);
            LossResult cls = detail::class_loss_and_grad(params, spec, batch);
            LossResult dst = detail::dist_loss_and_grad(params, *loss.reference);
            LossResult out;
            out.loss = (1.0 - loss.p) * cls.loss + loss.p * dst.loss;
            out.grad.resize(params.size());
            for (std::size_t k = 0; k < params.size(); ++k)
                out.grad[k] = (1.0 - loss.p) * cls.grad[k] + loss.p * dst.grad[k];
            return out;
        }
    }
    throw std::logic_error("unreachable");
}

// Half squared euclidean parameter distance, (1/2) * sum (a_k - b_k)^2.
// Unnormalized: its gradient (a - b) is what keeps a boosted malicious
// local model anchored to the global model.
inline double param_distance(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("param_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        acc += d * d;
    }
    return acc / 2.0;
}

inline ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
    if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be positive");
    if (params.size() != grad.size()) throw std::invalid_argument("sgd_step: length mismatch");
    check_finite(grad, "sgd_step gradient");
    ParamVector out(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) out[k] = params[k] - lr * grad[k];
    return out;
}

// Argmax prediction per row, ties toward the lowest class index.
inline std::vector<int> predict(const ParamVector& params, const ModelSpec& spec,
                                const Matrix& inputs) {
    Matrix logits = forward(params, spec, inputs);
    std::vector<int> out(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* row = logits.row(i);
        std::size_t best = 0;
        for (std::size_t k = 1; k < logits.cols; ++k)
            if (row[k] > row[best]) best = k;
        out[i] = static_cast<int>(best);
    }
    return out;
}

inline double evaluate_accuracy(const ParamVector& params, const ModelSpec& spec,
                                const Matrix& inputs, const std::vector<int>& labels) {
    if (inputs.rows == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    if (labels.size() != inputs.rows)
        throw std::invalid_argument("evaluate_accuracy: labels/inputs size mismatch");
    const std::vector<int> pred = predict(params, spec, inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace fedsim
