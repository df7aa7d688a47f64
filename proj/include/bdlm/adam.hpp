#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bdlm/error.hpp"
#include "bdlm/mat.hpp"

namespace bdlm {

// Adam over a flattened view of model tensors. The view order is fixed by
// each model's param_views(), which also defines serialization order.
struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;
    Vec m, v;

    explicit Adam(double learning_rate = 1e-4) : lr(learning_rate) {}

    void step(const std::vector<std::span<double>>& params,
              const std::vector<std::span<const double>>& grads) {
        require(params.size() == grads.size(), "adam: view count mismatch");
        size_t total = 0;
        for (const auto& p : params) total += p.size();
        if (m.empty()) {
            m.assign(total, 0.0);
            v.assign(total, 0.0);
        }
        require(m.size() == total, "adam: parameter count changed");
        ++t;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        size_t off = 0;
        for (size_t k = 0; k < params.size(); ++k) {
            auto p = params[k];
            auto g = grads[k];
            require(p.size() == g.size(), "adam: view size mismatch");
            for (size_t i = 0; i < p.size(); ++i) {
                double gi = g[i];
                double& mi = m[off + i];
                double& vi = v[off + i];
                mi = beta1 * mi + (1.0 - beta1) * gi;
                vi = beta2 * vi + (1.0 - beta2) * gi * gi;
                double mhat = mi / bc1;
                double vhat = vi / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
            off += p.size();
        }
    }
};

}  // namespace bdlm
