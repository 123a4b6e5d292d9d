#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sketchgen/tensor.hpp"

// Loss functions as pure scalar maps from network outputs. The trainer builds
// equivalent autodiff nodes for optimization; these forms are the reference
// surface for reports and tests. All batch expectations are arithmetic means
// in index order.
namespace sketchgen::losses {

struct LossWeights {
    double lambda_class = 1.0;
    double lambda_id = 1.0;
    double lambda_style = 1.0;
    double lambda_kl = 0.001;
    double clip_lo = 0.01;
    double clip_hi = 100.0;

    void clip() {
        lambda_class = std::clamp(lambda_class, clip_lo, clip_hi);
        lambda_id = std::clamp(lambda_id, clip_lo, clip_hi);
        lambda_style = std::clamp(lambda_style, clip_lo, clip_hi);
    }
};

// One training step's scalar losses. adv is always adv1 + adv2 and total_d is
// its exact negation.
struct LossReport {
    double adv1 = 0, adv2 = 0, adv = 0;
    double class_d = 0, class_g = 0;
    double style = 0;
    double id_d = 0, id_g = 0;
    double kl = 0;
    double total_ge = 0, total_d = 0;
};

namespace detail {
template <typename C>
double mean_log(const C& scores) {
    if (scores.size() == 0) throw std::invalid_argument("empty score vector");
    double acc = 0;
    for (const auto s : scores) {
        const double d = static_cast<double>(s);
        if (!(d > 0.0 && d < 1.0)) throw std::domain_error("score outside (0,1)");
        acc += std::log(d);
    }
    return acc / static_cast<double>(scores.size());
}
template <typename C>
double mean_log_one_minus(const C& scores) {
    if (scores.size() == 0) throw std::invalid_argument("empty score vector");
    double acc = 0;
    for (const auto s : scores) {
        const double d = static_cast<double>(s);
        if (!(d > 0.0 && d < 1.0)) throw std::domain_error("score outside (0,1)");
        acc += std::log1p(-d);
    }
    return acc / static_cast<double>(scores.size());
}
} // namespace detail

// E[log D(x)] + E[log(1 - D(G(m, z_s)))]; the discriminator drives this up.
template <typename C>
double adv_loss_1(const C& real_scores, const C& fake_scores_random) {
    return detail::mean_log(real_scores) + detail::mean_log_one_minus(fake_scores_random);
}

// Same form with fakes from the reference-style path G(m, E(x_s)).
template <typename C>
double adv_loss_2(const C& real_scores, const C& fake_scores_reference) {
    return detail::mean_log(real_scores) + detail::mean_log_one_minus(fake_scores_reference);
}

inline double adv_loss(double adv1, double adv2) { return adv1 + adv2; }

// Batch-averaged -log softmax(logits)[label].
template <typename T>
double cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    const int64_t n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n)
        throw std::invalid_argument("label count mismatch");
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const int lb = labels[static_cast<size_t>(i)];
        if (lb < 0 || lb >= c) throw std::out_of_range("label out of range");
        const T* row = logits.data() + i * c;
        double mx = static_cast<double>(row[0]);
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0;
        for (int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        acc += std::log(denom) + mx - static_cast<double>(row[lb]);
    }
    return acc / static_cast<double>(n);
}

template <typename T>
double class_loss_d(const Tensor<T>& logits, const std::vector<int>& labels) {
    return cross_entropy(logits, labels);
}

// Sum of the recognizer cross-entropies on both generated paths; the
// recognizer itself is held fixed when this is optimized.
template <typename T>
double class_loss_g(const Tensor<T>& logits_reference_path, const Tensor<T>& logits_random_path,
                    const std::vector<int>& labels) {
    return class_loss_d(logits_reference_path, labels) + class_loss_d(logits_random_path, labels);
}

template <typename T>
double style_recon_loss(const Tensor<T>& z_style, const Tensor<T>& reconstructed) {
    if (!z_style.same_shape(reconstructed))
        throw std::invalid_argument("style vectors differ in shape");
    if (z_style.size() == 0) throw std::invalid_argument("empty style vector");
    double acc = 0;
    for (int64_t i = 0; i < z_style.size(); ++i)
        acc += std::abs(static_cast<double>(z_style[i]) - static_cast<double>(reconstructed[i]));
    return acc / static_cast<double>(z_style.size());
}

template <typename T>
double id_loss_d(const Tensor<T>& logits, const std::vector<int>& painters) {
    return cross_entropy(logits, painters);
}

// Cross-entropy against the style sample's painter label.
template <typename T>
double id_loss_g(const Tensor<T>& logits_on_generated, const std::vector<int>& style_painters) {
    return cross_entropy(logits_on_generated, style_painters);
}

// Closed-form KL of diagonal Gaussians against the standard normal, batch
// mean of 0.5 * sum_d (mu^2 + sigma^2 - 1 - log sigma^2).
template <typename T>
double kl_loss(const Tensor<T>& mean, const Tensor<T>& log_variance) {
    if (!mean.same_shape(log_variance)) throw std::invalid_argument("posterior shape mismatch");
    const int64_t n = mean.dim(0);
    double acc = 0;
    for (int64_t i = 0; i < mean.size(); ++i) {
        const double mu = static_cast<double>(mean[i]);
        const double lv = static_cast<double>(log_variance[i]);
        if (!std::isfinite(mu) || !std::isfinite(lv))
            throw std::domain_error("non-finite posterior");
        acc += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    return acc / static_cast<double>(n);
}

// Weighted generator/encoder objective; the adversarial term enters with unit
// weight.
inline double total_ge_loss(const LossReport& r, const LossWeights& w) {
    return r.adv + w.lambda_class * r.class_g + w.lambda_id * r.id_g + w.lambda_style * r.style +
           w.lambda_kl * r.kl;
}

struct CriticObjectives {
    double l_d = 0, l_r = 0, l_i = 0;
};

inline CriticObjectives critic_objectives(const LossReport& r) {
    return CriticObjectives{-r.adv, r.class_d, r.id_d};
}

} // namespace sketchgen::losses
