#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sketchgen/autodiff.hpp"
#include "sketchgen/rng.hpp"
#include "sketchgen/tensor.hpp"

namespace sketchgen::nn {

using ad::NodePtr;
using ad::Tape;

template <typename T>
struct Parameter {
    std::string name;
    std::unique_ptr<ad::Node<T>> node;
    Tensor<T>& value() { return node->value; }
    const Tensor<T>& value() const { return node->value; }
};

template <typename T>
struct Buffer {
    std::string name;
    Tensor<T> value;
};

// Base class for anything that owns parameters. Submodules are plain members
// of the derived class registered by address; ownership stays with the parent.
template <typename T>
class Module {
public:
    virtual ~Module() = default;

    void collect_parameters(std::vector<Parameter<T>*>& out) {
        for (auto& p : params_) out.push_back(p.get());
        for (auto* m : children_) m->collect_parameters(out);
    }
    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        collect_parameters(out);
        return out;
    }
    void collect_buffers(std::vector<Buffer<T>*>& out) {
        for (auto& b : buffers_) out.push_back(b.get());
        for (auto* m : children_) m->collect_buffers(out);
    }
    std::vector<Buffer<T>*> buffers() {
        std::vector<Buffer<T>*> out;
        collect_buffers(out);
        return out;
    }

    void set_training(bool training) {
        training_ = training;
        for (auto* m : children_) m->set_training(training);
    }
    bool training() const { return training_; }

    // Freezing removes a network's parameters from gradient flow entirely;
    // the trainer uses this to keep the critics fixed in the generator phase.
    void set_trainable(bool trainable) {
        for (auto& p : params_) p->node->requires_grad = trainable;
        for (auto* m : children_) m->set_trainable(trainable);
    }

    void zero_grad() {
        for (auto& p : params_) p->node->has_grad = false;
        for (auto* m : children_) m->zero_grad();
    }

protected:
    Parameter<T>* register_parameter(std::string name, Tensor<T> value) {
        auto p = std::make_unique<Parameter<T>>();
        p->name = std::move(name);
        p->node = ad::make_leaf(std::move(value), true);
        params_.push_back(std::move(p));
        return params_.back().get();
    }
    Buffer<T>* register_buffer(std::string name, Tensor<T> value) {
        auto b = std::make_unique<Buffer<T>>();
        b->name = std::move(name);
        b->value = std::move(value);
        buffers_.push_back(std::move(b));
        return buffers_.back().get();
    }
    void register_child(const std::string& prefix, Module<T>* m) {
        m->prefix_names(prefix);
        children_.push_back(m);
    }
    void prefix_names(const std::string& prefix) {
        for (auto& p : params_) p->name = prefix + "." + p->name;
        for (auto& b : buffers_) b->name = prefix + "." + b->name;
        for (auto* m : children_) m->prefix_names(prefix);
    }

    bool training_ = true;

private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::vector<std::unique_ptr<Buffer<T>>> buffers_;
    std::vector<Module<T>*> children_;
};

template <typename T>
Tensor<T> gaussian_init(Rng& rng, std::vector<int64_t> dims, double stddev = 0.02) {
    Tensor<T> t(std::move(dims));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

template <typename T>
class Conv2d : public Module<T> {
public:
    Conv2d(Rng& rng, int64_t ci, int64_t co, int64_t k, int64_t stride, int64_t pad)
        : stride_(stride), pad_(pad) {
        w_ = this->register_parameter("w", gaussian_init<T>(rng, {co, ci, k, k}));
        b_ = this->register_parameter("b", Tensor<T>({co}));
    }
    NodePtr<T> forward(Tape<T>& t, NodePtr<T> x) {
        return ad::conv2d(t, x, w_->node.get(), b_->node.get(), stride_, pad_);
    }
    Parameter<T>* weight() { return w_; }
    Parameter<T>* bias() { return b_; }

private:
    Parameter<T>*w_, *b_;
    int64_t stride_, pad_;
};

template <typename T>
class Linear : public Module<T> {
public:
    Linear(Rng& rng, int64_t ci, int64_t co) {
        w_ = this->register_parameter("w", gaussian_init<T>(rng, {co, ci}));
        b_ = this->register_parameter("b", Tensor<T>({co}));
    }
    NodePtr<T> forward(Tape<T>& t, NodePtr<T> x) {
        return ad::linear(t, x, w_->node.get(), b_->node.get());
    }
    Parameter<T>* weight() { return w_; }
    Parameter<T>* bias() { return b_; }

private:
    Parameter<T>*w_, *b_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
public:
    explicit BatchNorm2d(int64_t c) {
        gamma_ = this->register_parameter("gamma", Tensor<T>::full({c}, T(1)));
        beta_ = this->register_parameter("beta", Tensor<T>({c}));
        rm_ = this->register_buffer("running_mean", Tensor<T>({c}));
        rv_ = this->register_buffer("running_var", Tensor<T>::full({c}, T(1)));
    }
    NodePtr<T> forward(Tape<T>& t, NodePtr<T> x) {
        return ad::batch_norm(t, x, gamma_->node.get(), beta_->node.get(), &rm_->value,
                              &rv_->value, this->training(), T(0.1), T(1e-5));
    }

private:
    Parameter<T>*gamma_, *beta_;
    Buffer<T>*rm_, *rv_;
};

// Conditional batch normalization: per-channel scale and shift are learned
// affine maps of a conditioning vector chunk, so every sample in the batch is
// modulated by its own style.
template <typename T>
class CondBatchNorm2d : public Module<T> {
public:
    CondBatchNorm2d(Rng& rng, int64_t c, int64_t cond_dim) : cond_dim_(cond_dim) {
        w_gamma_ = this->register_parameter("w_gamma", gaussian_init<T>(rng, {c, cond_dim}));
        b_gamma_ = this->register_parameter("b_gamma", Tensor<T>::full({c}, T(1)));
        w_beta_ = this->register_parameter("w_beta", gaussian_init<T>(rng, {c, cond_dim}));
        b_beta_ = this->register_parameter("b_beta", Tensor<T>({c}));
        rm_ = this->register_buffer("running_mean", Tensor<T>({c}));
        rv_ = this->register_buffer("running_var", Tensor<T>::full({c}, T(1)));
    }
    NodePtr<T> forward(Tape<T>& t, NodePtr<T> x, NodePtr<T> chunk) {
        if (chunk->value.dim(1) != cond_dim_)
            throw std::invalid_argument("cbn chunk length mismatch: got " +
                                        chunk->value.shape_str());
        NodePtr<T> gamma = ad::linear(t, chunk, w_gamma_->node.get(), b_gamma_->node.get());
        NodePtr<T> beta = ad::linear(t, chunk, w_beta_->node.get(), b_beta_->node.get());
        return ad::batch_norm(t, x, gamma, beta, &rm_->value, &rv_->value, this->training(),
                              T(0.1), T(1e-5));
    }
    // Test hook: zeroing the affine maps makes the modulation the identity.
    void zero_affine_maps() {
        w_gamma_->value().fill(T(0));
        w_beta_->value().fill(T(0));
    }

private:
    Parameter<T>*w_gamma_, *b_gamma_, *w_beta_, *b_beta_;
    Buffer<T>*rm_, *rv_;
    int64_t cond_dim_;
};

} // namespace sketchgen::nn
