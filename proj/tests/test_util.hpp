#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sketchgen/nn.hpp"

namespace sketchgen::testutil {

// Central-difference gradient check in double precision. `build` must
// construct the loss on a fresh tape from the current values of `leaves`
// (parameter nodes or persistent input leaves) without drawing randomness.
// Large tensors are spot-checked on an evenly spaced subset of entries.
struct FdReport {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

inline FdReport fd_check(std::vector<ad::Node<double>*> leaves,
                         const std::function<ad::NodePtr<double>(ad::Tape<double>&)>& build,
                         double h = 1e-4, int64_t max_per_tensor = 96) {
    using ad::Tape;

    auto eval = [&]() {
        Tape<double> t;
        t.set_recording(false);
        return build(t)->value[0];
    };

    // Analytic pass.
    std::vector<Tensor<double>> analytic;
    {
        Tape<double> t;
        ad::NodePtr<double> loss = build(t);
        for (auto* l : leaves) l->has_grad = false;
        t.zero_grads();
        t.backward(loss);
        for (auto* l : leaves) {
            if (l->has_grad) analytic.push_back(l->grad);
            else analytic.push_back(Tensor<double>(l->value.dims()));
        }
    }

    FdReport rep;
    for (size_t li = 0; li < leaves.size(); ++li) {
        ad::Node<double>* leaf = leaves[li];
        const int64_t n = leaf->value.size();
        const int64_t stride = std::max<int64_t>(1, n / max_per_tensor);
        for (int64_t i = 0; i < n; i += stride) {
            const double keep = leaf->value[i];
            leaf->value[i] = keep + h;
            const double up = eval();
            leaf->value[i] = keep - h;
            const double dn = eval();
            leaf->value[i] = keep;
            const double fd = (up - dn) / (2 * h);
            const double an = analytic[li][i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - an) / denom);
            ++rep.checked;
        }
    }
    return rep;
}

inline Tensor<double> random_tensor(Rng& rng, std::vector<int64_t> dims, double scale = 1.0) {
    Tensor<double> t(std::move(dims));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

inline Tensor<float> random_tensor_f(Rng& rng, std::vector<int64_t> dims, double scale = 1.0) {
    Tensor<float> t(std::move(dims));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal(0.0, scale));
    return t;
}

} // namespace sketchgen::testutil
