#include "sketchgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "sketchgen/errors.hpp"
#include "sketchgen/rng.hpp"

namespace sketchgen::metrics {

double psnr(const TensorF& a, const TensorF& b, double max_value) {
    if (!a.same_shape(b)) throw DataError("psnr: image shapes differ");
    if (a.size() == 0) throw DataError("psnr: empty images");
    double mse = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(max_value * max_value / mse));
}

double inception_score(const Tensor<double>& probs, int splits) {
    const int64_t n = probs.dim(0), c = probs.dim(1);
    if (n == 0) throw DataError("inception_score: no rows");
    splits = std::max(1, std::min<int>(splits, static_cast<int>(n)));
    double total = 0;
    for (int s = 0; s < splits; ++s) {
        const int64_t lo = n * s / splits, hi = n * (s + 1) / splits;
        std::vector<double> marginal(static_cast<size_t>(c), 0.0);
        for (int64_t i = lo; i < hi; ++i)
            for (int64_t j = 0; j < c; ++j) marginal[static_cast<size_t>(j)] += probs.at(i, j);
        for (auto& m : marginal) m /= static_cast<double>(hi - lo);
        double mean_kl = 0;
        for (int64_t i = lo; i < hi; ++i) {
            double kl = 0;
            for (int64_t j = 0; j < c; ++j) {
                const double p = probs.at(i, j);
                if (p > 0) kl += p * std::log(p / marginal[static_cast<size_t>(j)]);
            }
            mean_kl += kl;
        }
        total += std::exp(mean_kl / static_cast<double>(hi - lo));
    }
    return total / splits;
}

GaussianStats gaussian_stats(const Tensor<double>& features) {
    const int64_t n = features.dim(0), f = features.dim(1);
    if (n == 0) throw DataError("gaussian_stats: no rows");
    GaussianStats s;
    s.mean = Eigen::VectorXd::Zero(f);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f; ++j) s.mean(j) += features.at(i, j);
    s.mean /= static_cast<double>(n);
    s.covariance = Eigen::MatrixXd::Zero(f, f);
    if (n > 1) {
        for (int64_t i = 0; i < n; ++i) {
            Eigen::VectorXd d(f);
            for (int64_t j = 0; j < f; ++j) d(j) = features.at(i, j) - s.mean(j);
            s.covariance.noalias() += d * d.transpose();
        }
        s.covariance /= static_cast<double>(n - 1);
    }
    return s;
}

namespace {

// PSD square root with the shared eigenvalue policy: error below -1e-6,
// clip to zero above.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed in fid");
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
        if (ev(i) < -1e-6)
            throw NumericError(std::string("strongly negative eigenvalue in ") + what);
        ev(i) = std::sqrt(std::max(0.0, ev(i)));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace

double fid(const GaussianStats& real, const GaussianStats& fake) {
    if (real.mean.size() != fake.mean.size())
        throw DataError("fid: feature dimensions differ");
    const Eigen::VectorXd d = real.mean - fake.mean;
    const Eigen::MatrixXd a = psd_sqrt(real.covariance, "real covariance");
    // sqrt(Sr) Sf sqrt(Sr) is symmetric and carries the spectrum of Sr*Sf.
    const Eigen::MatrixXd prod = a * fake.covariance * a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (prod + prod.transpose()));
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed in fid");
    double trace_sqrt = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        const double ev = es.eigenvalues()(i);
        if (ev < -1e-6) throw NumericError("strongly negative eigenvalue in fid product");
        trace_sqrt += std::sqrt(std::max(0.0, ev));
    }
    double out = d.squaredNorm() + real.covariance.trace() + fake.covariance.trace() -
                 2.0 * trace_sqrt;
    if (out < 0) {
        if (out < -1e-6) throw NumericError("fid evaluated below the numerical floor");
        out = 0;
    }
    return out;
}

namespace {

double poly_kernel(const double* x, const double* y, int64_t f) {
    double dot = 0;
    for (int64_t i = 0; i < f; ++i) dot += x[i] * y[i];
    const double v = dot / static_cast<double>(f) + 1.0;
    return v * v * v;
}

double mmd2_unbiased(const Tensor<double>& xs, const std::vector<int64_t>& xi,
                     const Tensor<double>& ys, const std::vector<int64_t>& yi) {
    const int64_t f = xs.dim(1);
    const int64_t m = static_cast<int64_t>(xi.size()), n = static_cast<int64_t>(yi.size());
    double kxx = 0, kyy = 0, kxy = 0;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < m; ++j)
            if (i != j) kxx += poly_kernel(xs.data() + xi[i] * f, xs.data() + xi[j] * f, f);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            if (i != j) kyy += poly_kernel(ys.data() + yi[i] * f, ys.data() + yi[j] * f, f);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            kxy += poly_kernel(xs.data() + xi[i] * f, ys.data() + yi[j] * f, f);
    return kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n);
}

} // namespace

double kid(const Tensor<double>& real_features, const Tensor<double>& fake_features,
           uint64_t seed) {
    const int64_t n = real_features.dim(0), m = fake_features.dim(0);
    if (real_features.dim(1) != fake_features.dim(1))
        throw DataError("kid: feature dimensions differ");
    if (n < 2 || m < 2) throw DataError("kid needs at least 2 points per set");

    const int64_t subset = std::min<int64_t>({100, n, m});
    const int rounds = (subset == n && subset == m) ? 1 : 10;
    Rng rng = Rng::derive(seed, 0x1D1D);

    auto pick = [&rng](int64_t total, int64_t k) {
        std::vector<int64_t> ix(static_cast<size_t>(total));
        for (int64_t i = 0; i < total; ++i) ix[static_cast<size_t>(i)] = i;
        if (k < total) {
            rng.shuffle(ix.begin(), ix.end());
            ix.resize(static_cast<size_t>(k));
        }
        return ix;
    };

    double acc = 0;
    for (int r = 0; r < rounds; ++r)
        acc += mmd2_unbiased(real_features, pick(n, subset), fake_features, pick(m, subset));
    return acc / rounds;
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << "FID " << fid << "\n";
    os << "KID " << kid << "\n";
    os << "IS " << is_score << "\n";
    os << "PSNR " << psnr << "\n";
    if (has_accuracy) {
        os << "C_ACC " << c_acc << "\n";
        os << "P_ACC " << p_acc << "\n";
    } else {
        os << "C_ACC absent\n";
        os << "P_ACC absent\n";
    }
    os << "real_count " << real_count << "\n";
    os << "fake_count " << fake_count << "\n";
    return os.str();
}

} // namespace sketchgen::metrics
