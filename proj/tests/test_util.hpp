#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fedsim/nn.hpp"

namespace fedsim::test {

// Central finite-difference gradient, independent of the backprop path.
inline ParamVector finite_diff_grad(const ParamVector& params, const ModelSpec& spec,
                                    const Batch& batch, const LossSpec& loss,
                                    double h = 1e-5) {
    ParamVector grad(params.size());
    ParamVector probe = params;
    for (std::size_t k = 0; k < params.size(); ++k) {
        probe[k] = params[k] + h;
        const double up = loss_and_grad(probe, spec, batch, loss).loss;
        probe[k] = params[k] - h;
        const double down = loss_and_grad(probe, spec, batch, loss).loss;
        probe[k] = params[k];
        grad[k] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double max_rel_error(const ParamVector& a, const ParamVector& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double denom = std::max({1e-4, std::fabs(a[k]), std::fabs(b[k])});
        worst = std::max(worst, std::fabs(a[k] - b[k]) / denom);
    }
    return worst;
}

inline Batch random_batch(std::mt19937_64& rng, std::size_t batch_size, std::size_t input_dim,
                          std::size_t num_classes) {
    Batch b;
    b.inputs = Matrix(batch_size, input_dim);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(num_classes) - 1);
    for (double& x : b.inputs.data) x = unit(rng);
    b.labels.resize(batch_size);
    for (int& l : b.labels) l = cls(rng);
    return b;
}

inline ParamVector random_params(std::mt19937_64& rng, std::size_t n, double scale = 0.5) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    ParamVector p(n);
    for (double& x : p) x = dist(rng);
    return p;
}

}  // namespace fedsim::test
