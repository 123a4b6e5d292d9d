#pragma once

#include <Eigen/Dense>
#include <string>

#include "sketchgen/tensor.hpp"

namespace sketchgen::metrics {

// 10*log10(max^2 / MSE); identical images return the 100 dB cap.
double psnr(const TensorF& a, const TensorF& b, double max_value = 1.0);

// exp of the split-mean KL between per-row class posteriors and the split
// marginal, averaged over contiguous splits. probability_rows is N x C.
double inception_score(const Tensor<double>& probability_rows, int splits);

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance; // unbiased (N-1)
};

GaussianStats gaussian_stats(const Tensor<double>& features);

// Frechet distance between the two moment summaries. The matrix square root
// is taken by symmetric eigendecomposition of sqrt(Sr) * Sf * sqrt(Sr);
// eigenvalues below -1e-6 raise, small negatives are clipped to zero.
double fid(const GaussianStats& real, const GaussianStats& fake);

// Unbiased polynomial-kernel MMD^2 with k(x,y) = (x.y/F + 1)^3, diagonal terms
// excluded, averaged over 10 subsets of up to 100 points. When both sets fit
// in one subset the estimate is exact and deterministic.
double kid(const Tensor<double>& real_features, const Tensor<double>& fake_features,
           uint64_t seed = 0);

struct MetricsReport {
    double fid = 0, kid = 0, is_score = 0, psnr = 0;
    double c_acc = 0, p_acc = 0;
    bool has_accuracy = false;
    int64_t real_count = 0, fake_count = 0;

    // Flat text record with the conventional column names. The distribution
    // metrics use the toy probe embedding, so they are proxy values.
    std::string to_text() const;
};

} // namespace sketchgen::metrics
