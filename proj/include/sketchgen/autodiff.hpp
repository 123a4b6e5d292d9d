#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "sketchgen/kernels.hpp"
#include "sketchgen/tensor.hpp"

// Reverse-mode autodiff over a per-step tape. Nodes are created in forward
// (topological) order; backward walks the tape in reverse. Parameter nodes
// live outside the tape (owned by their modules) and persist across steps;
// op closures accumulate into them directly. A backward pass can be stopped
// at "barrier" nodes, which receive their gradient but do not propagate it
// further; the trainer uses this to price each loss at the generator's final
// shared block without paying for a full backward per loss.
namespace sketchgen::ad {

using sketchgen::Tensor;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void()> backward;

    void ensure_grad() {
        if (!has_grad) {
            if (!grad.same_shape(value)) grad = Tensor<T>(value.dims());
            else grad.fill(T(0));
            has_grad = true;
        }
    }
    // Accumulate helper used by op closures.
    void accum(const Tensor<T>& g) {
        ensure_grad();
        const T* s = g.data();
        T* d = grad.data();
        const int64_t n = grad.size();
        for (int64_t i = 0; i < n; ++i) d[i] += s[i];
    }
};

template <typename T>
using NodePtr = Node<T>*;

// A persistent leaf (parameter or buffer owner creates these).
template <typename T>
std::unique_ptr<Node<T>> make_leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_unique<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
class Tape {
public:
    // When not recording, ops compute values only: no closures, no caches.
    void set_recording(bool r) { recording_ = r; }
    bool recording() const { return recording_; }

    NodePtr<T> input(Tensor<T> value, bool requires_grad = false) {
        NodePtr<T> n = new_node();
        n->value = std::move(value);
        n->requires_grad = requires_grad && recording_;
        return n;
    }

    NodePtr<T> new_node() {
        nodes_.push_back(std::make_unique<Node<T>>());
        return nodes_.back().get();
    }

    NodePtr<T> make_op(Tensor<T> value, std::initializer_list<NodePtr<T>> parents,
                       std::function<void()> backward) {
        NodePtr<T> n = new_node();
        n->value = std::move(value);
        if (recording_) {
            for (NodePtr<T> p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
            if (n->requires_grad) n->backward = std::move(backward);
        }
        return n;
    }

    void zero_grads() {
        for (auto& n : nodes_) n->has_grad = false;
    }

    void backward(NodePtr<T> loss) { backward(loss, {}); }

    void backward(NodePtr<T> loss, const std::vector<NodePtr<T>>& barriers) {
        if (loss->value.size() != 1) throw std::invalid_argument("backward root must be scalar");
        std::unordered_set<const Node<T>*> stop(barriers.begin(), barriers.end());
        loss->ensure_grad();
        loss->grad[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>* n = it->get();
            if (!n->has_grad || !n->backward) continue;
            if (stop.count(n)) continue;
            n->backward();
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    std::vector<std::unique_ptr<Node<T>>> nodes_;
    bool recording_ = true;
};

// ---------------------------------------------------------------------------
// Ops. All take the tape plus node pointers and return a new node.
// ---------------------------------------------------------------------------

template <typename T>
NodePtr<T> conv2d(Tape<T>& t, NodePtr<T> x, NodePtr<T> w, NodePtr<T> b, int64_t stride,
                  int64_t pad) {
    const auto& xd = x->value.dims();
    const auto& wd = w->value.dims();
    if (xd.size() != 4 || wd.size() != 4 || xd[1] != wd[1])
        throw std::invalid_argument("conv2d shape mismatch: x " + x->value.shape_str() + " w " +
                                    w->value.shape_str());
    const auto g =
        kernels::ConvGeom::make(xd[0], xd[1], xd[2], xd[3], wd[0], wd[2], wd[3], stride, pad);
    Tensor<T> y({g.n, g.co, g.ho, g.wo});

    const bool want_param_grad = t.recording() && (w->requires_grad || (b && b->requires_grad));
    auto col_cache = want_param_grad ? std::make_shared<std::vector<T>>() : nullptr;
    kernels::conv2d_forward(x->value.data(), w->value.data(), b ? b->value.data() : nullptr, g,
                            y.data(), col_cache.get());

    NodePtr<T> out = t.make_op(std::move(y), {x, w}, nullptr);
    if (t.recording() && (out->requires_grad = x->requires_grad || want_param_grad)) {
        out->backward = [x, w, b, g, col_cache, out]() {
            const T* dy = out->grad.data();
            if (x->requires_grad) {
                x->ensure_grad();
                kernels::conv2d_backward_input(dy, w->value.data(), g, x->grad.data());
            }
            if (col_cache) {
                T* dw = nullptr;
                T* db = nullptr;
                if (w->requires_grad) {
                    w->ensure_grad();
                    dw = w->grad.data();
                }
                if (b && b->requires_grad) {
                    b->ensure_grad();
                    db = b->grad.data();
                }
                if (dw || db)
                    kernels::conv2d_backward_params(dy, col_cache->data(), g, dw, db);
            }
        };
    }
    return out;
}

template <typename T>
NodePtr<T> linear(Tape<T>& t, NodePtr<T> x, NodePtr<T> w, NodePtr<T> b) {
    const int64_t n = x->value.dim(0), ci = x->value.dim(1), co = w->value.dim(0);
    if (w->value.dim(1) != ci) throw std::invalid_argument("linear shape mismatch");
    Tensor<T> y({n, co});
    for (int64_t i = 0; i < n; ++i) {
        const T* xi = x->value.data() + i * ci;
        T* yi = y.data() + i * co;
        for (int64_t o = 0; o < co; ++o) {
            const T* wo = w->value.data() + o * ci;
            T acc = b ? b->value[o] : T(0);
#pragma omp simd reduction(+ : acc)
            for (int64_t k = 0; k < ci; ++k) acc += xi[k] * wo[k];
            yi[o] = acc;
        }
    }
    NodePtr<T> out = t.make_op(std::move(y), {x, w}, nullptr);
    if (t.recording() &&
        (out->requires_grad = x->requires_grad || w->requires_grad || (b && b->requires_grad))) {
        out->backward = [x, w, b, out, n, ci, co]() {
            const T* g = out->grad.data();
            if (x->requires_grad) {
                x->ensure_grad();
                // dx += g * W
                kernels::gemm_accumulate(g, w->value.data(), x->grad.data(), n, co, ci);
            }
            if (w->requires_grad) {
                w->ensure_grad();
                for (int64_t i = 0; i < n; ++i) {
                    const T* xi = x->value.data() + i * ci;
                    for (int64_t o = 0; o < co; ++o) {
                        const T gv = g[i * co + o];
                        T* wrow = w->grad.data() + o * ci;
#pragma omp simd
                        for (int64_t k = 0; k < ci; ++k) wrow[k] += gv * xi[k];
                    }
                }
            }
            if (b && b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t o = 0; o < co; ++o) b->grad[o] += g[i * co + o];
            }
        };
    }
    return out;
}

// Batch normalization over (N, H, W) per channel. gamma/beta are [C] for the
// plain variant or [N, C] for the conditional variant (per-sample modulation).
// In training mode stats come from the batch and running buffers are updated
// in place; in eval mode the running buffers are used and treated as constants.
template <typename T>
NodePtr<T> batch_norm(Tape<T>& t, NodePtr<T> x, NodePtr<T> gamma, NodePtr<T> beta,
                      Tensor<T>* running_mean, Tensor<T>* running_var, bool training, T momentum,
                      T eps) {
    const auto& d = x->value.dims();
    const int64_t n = d[0], c = d[1], hw = d[2] * d[3];
    const bool per_sample = gamma->value.rank() == 2;
    if (per_sample && (gamma->value.dim(0) != n || gamma->value.dim(1) != c))
        throw std::invalid_argument("conditional gamma shape mismatch");
    if (!per_sample && gamma->value.dim(0) != c)
        throw std::invalid_argument("gamma shape mismatch");

    auto mean = std::make_shared<Tensor<T>>(std::vector<int64_t>{c});
    auto var = std::make_shared<Tensor<T>>(std::vector<int64_t>{c});
    if (training) {
        kernels::bn_batch_stats(x->value.data(), n, c, hw, mean->data(), var->data());
        if (running_mean && running_var) {
            const T m = static_cast<T>(n * hw);
            const T unbias = m > T(1) ? m / (m - T(1)) : T(1);
            for (int64_t ch = 0; ch < c; ++ch) {
                (*running_mean)[ch] =
                    (T(1) - momentum) * (*running_mean)[ch] + momentum * (*mean)[ch];
                (*running_var)[ch] =
                    (T(1) - momentum) * (*running_var)[ch] + momentum * (*var)[ch] * unbias;
            }
        }
    } else {
        if (!running_mean || !running_var)
            throw std::invalid_argument("eval-mode batch_norm needs running stats");
        *mean = *running_mean;
        *var = *running_var;
    }

    auto xhat = std::make_shared<Tensor<T>>(x->value.dims());
    Tensor<T> y(x->value.dims());
    kernels::bn_normalize_affine(x->value.data(), n, c, hw, mean->data(), var->data(), eps,
                                 gamma->value.data(), beta->value.data(), per_sample,
                                 xhat->data(), y.data());

    NodePtr<T> out = t.make_op(std::move(y), {x, gamma, beta}, nullptr);
    if (out->requires_grad) {
        out->backward = [x, gamma, beta, out, xhat, mean, var, training, eps, n, c, hw,
                         per_sample]() {
            const T* g = out->grad.data();
            const T* xh = xhat->data();
            const T m = static_cast<T>(n * hw);

            if (gamma->requires_grad || beta->requires_grad) {
                if (gamma->requires_grad) gamma->ensure_grad();
                if (beta->requires_grad) beta->ensure_grad();
                for (int64_t nn = 0; nn < n; ++nn)
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const int64_t a = per_sample ? nn * c + ch : ch;
                        const T* gp = g + (nn * c + ch) * hw;
                        const T* hp = xh + (nn * c + ch) * hw;
                        T sg = T(0), sgh = T(0);
#pragma omp simd reduction(+ : sg, sgh)
                        for (int64_t j = 0; j < hw; ++j) {
                            sg += gp[j];
                            sgh += gp[j] * hp[j];
                        }
                        if (beta->requires_grad) beta->grad[a] += sg;
                        if (gamma->requires_grad) gamma->grad[a] += sgh;
                    }
            }

            if (!x->requires_grad) return;
            x->ensure_grad();
            const bool par = kernels::parallel_enabled() && c > 1;
#pragma omp parallel for schedule(static) if (par)
            for (int64_t ch = 0; ch < c; ++ch) {
                const T inv_sd = T(1) / std::sqrt((*var)[ch] + eps);
                if (training) {
                    // dxhat folds the per-sample (or per-channel) gamma in.
                    T sum_dh = T(0), sum_dh_h = T(0);
                    for (int64_t nn = 0; nn < n; ++nn) {
                        const T gv = gamma->value[per_sample ? nn * c + ch : ch];
                        const T* gp = g + (nn * c + ch) * hw;
                        const T* hp = xh + (nn * c + ch) * hw;
#pragma omp simd reduction(+ : sum_dh, sum_dh_h)
                        for (int64_t j = 0; j < hw; ++j) {
                            sum_dh += gv * gp[j];
                            sum_dh_h += gv * gp[j] * hp[j];
                        }
                    }
                    const T mean_dh = sum_dh / m;
                    const T mean_dh_h = sum_dh_h / m;
                    for (int64_t nn = 0; nn < n; ++nn) {
                        const T gv = gamma->value[per_sample ? nn * c + ch : ch];
                        const T* gp = g + (nn * c + ch) * hw;
                        const T* hp = xh + (nn * c + ch) * hw;
                        T* dx = x->grad.data() + (nn * c + ch) * hw;
#pragma omp simd
                        for (int64_t j = 0; j < hw; ++j)
                            dx[j] += inv_sd * (gv * gp[j] - mean_dh - hp[j] * mean_dh_h);
                    }
                } else {
                    for (int64_t nn = 0; nn < n; ++nn) {
                        const T gv = gamma->value[per_sample ? nn * c + ch : ch];
                        const T* gp = g + (nn * c + ch) * hw;
                        T* dx = x->grad.data() + (nn * c + ch) * hw;
#pragma omp simd
                        for (int64_t j = 0; j < hw; ++j) dx[j] += gv * gp[j] * inv_sd;
                    }
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------

template <typename T>
NodePtr<T> leaky_relu(Tape<T>& t, NodePtr<T> x, T slope) {
    Tensor<T> y(x->value.dims());
    kernels::map_elements(x->value.data(), y.data(), x->value.size(),
                          [slope](T v) { return v > T(0) ? v : slope * v; });
    NodePtr<T> out = t.make_op(std::move(y), {x}, nullptr);
    if (out->requires_grad) {
        out->backward = [x, out, slope]() {
            x->ensure_grad();
            const int64_t n = x->value.size();
            const T* xv = x->value.data();
            const T* g = out->grad.data();
            T* dx = x->grad.data();
            for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * (xv[i] > T(0) ? T(1) : slope);
        };
    }
    return out;
}

template <typename T>
NodePtr<T> tanh_op(Tape<T>& t, NodePtr<T> x) {
    Tensor<T> y(x->value.dims());
    kernels::map_elements(x->value.data(), y.data(), x->value.size(),
                          [](T v) { return std::tanh(v); });
    NodePtr<T> out = t.make_op(std::move(y), {x}, nullptr);
    if (out->requires_grad) {
        out->backward = [x, out]() {
            x->ensure_grad();
            const int64_t n = x->value.size();
            const T* yv = out->value.data();
            const T* g = out->grad.data();
            T* dx = x->grad.data();
            for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * (T(1) - yv[i] * yv[i]);
        };
    }
    return out;
}

template <typename T>
NodePtr<T> sigmoid(Tape<T>& t, NodePtr<T> x) {
    Tensor<T> y(x->value.dims());
    kernels::map_elements(x->value.data(), y.data(), x->value.size(),
                          [](T v) { return T(1) / (T(1) + std::exp(-v)); });
    NodePtr<T> out = t.make_op(std::move(y), {x}, nullptr);
    if (out->requires_grad) {
        out->backward = [x, out]() {
            x->ensure_grad();
            const int64_t n = x->value.size();
            const T* yv = out->value.data();
            const T* g = out->grad.data();
            T* dx = x->grad.data();
            for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * yv[i] * (T(1) - yv[i]);
        };
    }
    return out;
}

template <typename T>
NodePtr<T> upsample_nearest2x(Tape<T>& t, NodePtr<T> x) {
    const auto& d = x->value.dims();
    Tensor<T> y({d[0], d[1], d[2] * 2, d[3] * 2});
    kernels::upsample_nearest2x_forward(x->value.data(), d[0], d[1], d[2], d[3], y.data());
    NodePtr<T> out = t.make_op(std::move(y), {x}, nullptr);
    if (out->requires_grad) {
        out->backward = [x, out]() {
            x->ensure_grad();
            const auto& d = x->value.dims();
            kernels::upsample_nearest2x_backward(out->grad.data(), d[0], d[1], d[2], d[3],
                                                 x->grad.data());
        };
    }
    return out;
}

template <typename T>
NodePtr<T> global_avg_pool(Tape<T>& t, NodePtr<T> x) {
    const auto& d = x->value.dims();
    const int64_t hw = d[2] * d[3];
    Tensor<T> y({d[0], d[1]});
    kernels::global_avg_pool_forward(x->value.data(), d[0], d[1], hw, y.data());
    NodePtr<T> out = t.make_op(std::move(y), {x}, nullptr);
    if (out->requires_grad) {
        out->backward = [x, out, hw]() {
            x->ensure_grad();
            const auto& d = x->value.dims();
            const T inv = T(1) / static_cast<T>(hw);
            for (int64_t n = 0; n < d[0]; ++n)
                for (int64_t c = 0; c < d[1]; ++c) {
                    const T g = out->grad.at(n, c) * inv;
                    T* dst = x->grad.data() + (n * d[1] + c) * hw;
                    for (int64_t j = 0; j < hw; ++j) dst[j] += g;
                }
        };
    }
    return out;
}

template <typename T>
NodePtr<T> concat_channels(Tape<T>& t, NodePtr<T> a, NodePtr<T> b) {
    const auto& da = a->value.dims();
    const auto& db = b->value.dims();
    if (da[0] != db[0] || da[2] != db[2] || da[3] != db[3])
        throw std::invalid_argument("concat_channels shape mismatch");
    const int64_t n = da[0], ca = da[1], cb = db[1], hw = da[2] * da[3];
    Tensor<T> y({n, ca + cb, da[2], da[3]});
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(a->value.data() + i * ca * hw, ca * hw, y.data() + i * (ca + cb) * hw);
        std::copy_n(b->value.data() + i * cb * hw, cb * hw,
                    y.data() + i * (ca + cb) * hw + ca * hw);
    }
    NodePtr<T> out = t.make_op(std::move(y), {a, b}, nullptr);
    if (out->requires_grad) {
        out->backward = [a, b, out, n, ca, cb, hw]() {
            const T* g = out->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < n; ++i) {
                    const T* src = g + i * (ca + cb) * hw;
                    T* dst = a->grad.data() + i * ca * hw;
                    for (int64_t j = 0; j < ca * hw; ++j) dst[j] += src[j];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < n; ++i) {
                    const T* src = g + i * (ca + cb) * hw + ca * hw;
                    T* dst = b->grad.data() + i * cb * hw;
                    for (int64_t j = 0; j < cb * hw; ++j) dst[j] += src[j];
                }
            }
        };
    }
    return out;
}

template <typename T>
NodePtr<T> concat_cols(Tape<T>& t, NodePtr<T> a, NodePtr<T> b) {
    const int64_t n = a->value.dim(0), da = a->value.dim(1), db = b->value.dim(1);
    if (b->value.dim(0) != n) throw std::invalid_argument("concat_cols batch mismatch");
    Tensor<T> y({n, da + db});
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(a->value.data() + i * da, da, y.data() + i * (da + db));
        std::copy_n(b->value.data() + i * db, db, y.data() + i * (da + db) + da);
    }
    NodePtr<T> out = t.make_op(std::move(y), {a, b}, nullptr);
    if (out->requires_grad) {
        out->backward = [a, b, out, n, da, db]() {
            const T* g = out->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < da; ++j) a->grad[i * da + j] += g[i * (da + db) + j];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < db; ++j)
                        b->grad[i * db + j] += g[i * (da + db) + da + j];
            }
        };
    }
    return out;
}

template <typename T>
NodePtr<T> slice_cols(Tape<T>& t, NodePtr<T> x, int64_t start, int64_t len) {
    const int64_t n = x->value.dim(0), d = x->value.dim(1);
    if (start < 0 || start + len > d) throw std::invalid_argument("slice_cols out of range");
    Tensor<T> y({n, len});
    for (int64_t i = 0; i < n; ++i)
        std::copy_n(x->value.data() + i * d + start, len, y.data() + i * len);
    NodePtr<T> out = t.make_op(std::move(y), {x}, nullptr);
    if (out->requires_grad) {
        out->backward = [x, out, n, d, start, len]() {
            x->ensure_grad();
            const T* g = out->grad.data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < len; ++j) x->grad[i * d + start + j] += g[i * len + j];
        };
    }
    return out;
}

template <typename T>
NodePtr<T> clamp(Tape<T>& t, NodePtr<T> x, T lo, T hi) {
    Tensor<T> y(x->value.dims());
    kernels::map_elements(x->value.data(), y.data(), x->value.size(),
                          [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); });
    NodePtr<T> out = t.make_op(std::move(y), {x}, nullptr);
    if (out->requires_grad) {
        out->backward = [x, out, lo, hi]() {
            x->ensure_grad();
            const int64_t n = x->value.size();
            const T* xv = x->value.data();
            const T* g = out->grad.data();
            for (int64_t i = 0; i < n; ++i)
                if (xv[i] > lo && xv[i] < hi) x->grad[i] += g[i];
        };
    }
    return out;
}

template <typename T>
NodePtr<T> detach(Tape<T>& t, NodePtr<T> x) {
    return t.input(x->value, false);
}

// y = mu + eps .* exp(0.5 * logvar); eps is a fixed noise tensor.
template <typename T>
NodePtr<T> reparam_sample(Tape<T>& t, NodePtr<T> mu, NodePtr<T> logvar, const Tensor<T>& eps) {
    if (!mu->value.same_shape(logvar->value) || !mu->value.same_shape(eps))
        throw std::invalid_argument("reparam_sample shape mismatch");
    const int64_t n = mu->value.size();
    Tensor<T> y(mu->value.dims());
    auto eps_copy = std::make_shared<Tensor<T>>(eps);
    for (int64_t i = 0; i < n; ++i)
        y[i] = mu->value[i] + eps[i] * std::exp(T(0.5) * logvar->value[i]);
    NodePtr<T> out = t.make_op(std::move(y), {mu, logvar}, nullptr);
    if (out->requires_grad) {
        out->backward = [mu, logvar, out, eps_copy, n]() {
            const T* g = out->grad.data();
            if (mu->requires_grad) {
                mu->ensure_grad();
                for (int64_t i = 0; i < n; ++i) mu->grad[i] += g[i];
            }
            if (logvar->requires_grad) {
                logvar->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    logvar->grad[i] +=
                        g[i] * (*eps_copy)[i] * T(0.5) * std::exp(T(0.5) * logvar->value[i]);
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scalar loss heads. All return shape-{1} nodes.
// ---------------------------------------------------------------------------

template <typename T>
NodePtr<T> scalar_node(Tape<T>& t, T v) {
    return t.input(Tensor<T>({1}, {v}), false);
}

inline double softplus_stable(double z) {
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// mean_i log(sigmoid(z_i)), computed stably from logits.
template <typename T>
NodePtr<T> mean_log_sigmoid(Tape<T>& t, NodePtr<T> z) {
    const int64_t n = z->value.size();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc -= softplus_stable(-static_cast<double>(z->value[i]));
    Tensor<T> y({1}, {static_cast<T>(acc / static_cast<double>(n))});
    NodePtr<T> out = t.make_op(std::move(y), {z}, nullptr);
    if (out->requires_grad) {
        out->backward = [z, out, n]() {
            z->ensure_grad();
            const T g = out->grad[0] / static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i) {
                const T s = T(1) / (T(1) + std::exp(-z->value[i]));
                z->grad[i] += g * (T(1) - s);
            }
        };
    }
    return out;
}

// mean_i log(1 - sigmoid(z_i)).
template <typename T>
NodePtr<T> mean_log_one_minus_sigmoid(Tape<T>& t, NodePtr<T> z) {
    const int64_t n = z->value.size();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc -= softplus_stable(static_cast<double>(z->value[i]));
    Tensor<T> y({1}, {static_cast<T>(acc / static_cast<double>(n))});
    NodePtr<T> out = t.make_op(std::move(y), {z}, nullptr);
    if (out->requires_grad) {
        out->backward = [z, out, n]() {
            z->ensure_grad();
            const T g = out->grad[0] / static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i) {
                const T s = T(1) / (T(1) + std::exp(-z->value[i]));
                z->grad[i] -= g * s;
            }
        };
    }
    return out;
}

// Batch-averaged -log softmax(logits)[label].
template <typename T>
NodePtr<T> softmax_cross_entropy(Tape<T>& t, NodePtr<T> logits,
                                 const std::vector<int>& labels) {
    const int64_t n = logits->value.dim(0), c = logits->value.dim(1);
    if (static_cast<int64_t>(labels.size()) != n)
        throw std::invalid_argument("label count mismatch");
    for (int lb : labels)
        if (lb < 0 || lb >= c) throw std::invalid_argument("label out of range");
    auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{n, c});
    double loss = 0;
    for (int64_t i = 0; i < n; ++i) {
        const T* row = logits->value.data() + i * c;
        T mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0;
        for (int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
        const double logz = std::log(denom) + static_cast<double>(mx);
        for (int64_t j = 0; j < c; ++j)
            (*probs)[i * c + j] =
                static_cast<T>(std::exp(static_cast<double>(row[j]) - logz));
        loss += logz - static_cast<double>(row[labels[static_cast<size_t>(i)]]);
    }
    Tensor<T> y({1}, {static_cast<T>(loss / static_cast<double>(n))});
    NodePtr<T> out = t.make_op(std::move(y), {logits}, nullptr);
    if (out->requires_grad) {
        auto labels_copy = std::make_shared<std::vector<int>>(labels);
        out->backward = [logits, out, probs, labels_copy, n, c]() {
            logits->ensure_grad();
            const T g = out->grad[0] / static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i) {
                const int lb = (*labels_copy)[static_cast<size_t>(i)];
                for (int64_t j = 0; j < c; ++j) {
                    T p = (*probs)[i * c + j];
                    logits->grad[i * c + j] += g * (p - (j == lb ? T(1) : T(0)));
                }
            }
        };
    }
    return out;
}

// mean |a - b| over all entries.
template <typename T>
NodePtr<T> l1_mean(Tape<T>& t, NodePtr<T> a, NodePtr<T> b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("l1_mean shape mismatch");
    const int64_t n = a->value.size();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i)
        acc += std::abs(static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]));
    Tensor<T> y({1}, {static_cast<T>(acc / static_cast<double>(n))});
    NodePtr<T> out = t.make_op(std::move(y), {a, b}, nullptr);
    if (out->requires_grad) {
        out->backward = [a, b, out, n]() {
            const T g = out->grad[0] / static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i) {
                const T d = a->value[i] - b->value[i];
                const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                if (a->requires_grad) {
                    a->ensure_grad();
                    a->grad[i] += g * s;
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    b->grad[i] -= g * s;
                }
            }
        };
    }
    return out;
}

// Batch mean of 0.5 * sum_d (mu^2 + exp(logvar) - 1 - logvar).
template <typename T>
NodePtr<T> kl_diag_gaussian(Tape<T>& t, NodePtr<T> mu, NodePtr<T> logvar) {
    const int64_t n = mu->value.dim(0), d = mu->value.dim(1);
    double acc = 0;
    for (int64_t i = 0; i < n * d; ++i) {
        const double m = mu->value[i], lv = logvar->value[i];
        acc += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
    }
    if (!std::isfinite(acc)) throw std::domain_error("non-finite posterior in kl_loss");
    Tensor<T> y({1}, {static_cast<T>(acc / static_cast<double>(n))});
    NodePtr<T> out = t.make_op(std::move(y), {mu, logvar}, nullptr);
    if (out->requires_grad) {
        out->backward = [mu, logvar, out, n, d]() {
            const T g = out->grad[0] / static_cast<T>(n);
            if (mu->requires_grad) {
                mu->ensure_grad();
                for (int64_t i = 0; i < n * d; ++i) mu->grad[i] += g * mu->value[i];
            }
            if (logvar->requires_grad) {
                logvar->ensure_grad();
                for (int64_t i = 0; i < n * d; ++i)
                    logvar->grad[i] += g * T(0.5) * (std::exp(logvar->value[i]) - T(1));
            }
        };
    }
    return out;
}

// Weighted sum of scalar nodes.
template <typename T>
NodePtr<T> weighted_sum(Tape<T>& t, const std::vector<NodePtr<T>>& terms,
                        const std::vector<T>& weights) {
    if (terms.size() != weights.size()) throw std::invalid_argument("weighted_sum arity");
    T acc = T(0);
    for (size_t i = 0; i < terms.size(); ++i) acc += weights[i] * terms[i]->value[0];
    Tensor<T> y({1}, {acc});
    NodePtr<T> out = t.new_node();
    out->value = std::move(y);
    if (t.recording()) {
        for (auto* n : terms) out->requires_grad = out->requires_grad || n->requires_grad;
        if (out->requires_grad) {
            auto terms_copy = std::make_shared<std::vector<NodePtr<T>>>(terms);
            auto w_copy = std::make_shared<std::vector<T>>(weights);
            out->backward = [out, terms_copy, w_copy]() {
                for (size_t i = 0; i < terms_copy->size(); ++i) {
                    NodePtr<T> n = (*terms_copy)[i];
                    if (!n->requires_grad) continue;
                    n->ensure_grad();
                    n->grad[0] += out->grad[0] * (*w_copy)[i];
                }
            };
        }
    }
    return out;
}

template <typename T>
NodePtr<T> negate(Tape<T>& t, NodePtr<T> x) {
    return weighted_sum(t, {x}, {T(-1)});
}

} // namespace sketchgen::ad
