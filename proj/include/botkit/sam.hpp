#pragma once

// Sharpness-aware minimization wrapped around decoupled-weight-decay Adam.
//
// One SAM step runs the loss evaluator twice: once at w to obtain the ascent
// direction, once at w + rho * g / ||g||_2 (norm taken jointly over every
// parameter) to obtain the update gradient. Parameters are restored to w from
// saved copies before the base update, so no perturbation residue survives a
// step, including on exceptions.

#include <cmath>
#include <functional>

#include "tensor.hpp"

namespace botkit {

template <class T>
struct AdamConfig {
    T lr = T(3e-5);
    T weight_decay = T(3e-5);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// Joint L2 norm over every parameter gradient. Unpopulated grads count as zero.
template <class T>
T global_grad_norm(const std::vector<Tensor<T>>& params) {
    T acc = T(0);
    for (const auto& p : params)
        if (p.has_grad())
            for (T g : p.grad()) acc += g * g;
    return std::sqrt(acc);
}

// w += factor * grad, in place.
template <class T>
void apply_grad_step(const std::vector<Tensor<T>>& params, T factor) {
    for (const auto& p : params) {
        if (!p.has_grad()) continue;
        auto& data = p.impl()->data;
        const auto& grad = p.impl()->grad;
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += factor * grad[i];
    }
}

template <class T>
class Adam {
  public:
    Adam(std::vector<Tensor<T>> params, AdamConfig<T> cfg = {})
        : cfg_(cfg), params_(std::move(params)), m_(params_.size()), v_(params_.size()) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].numel(), T(0));
            v_[i].assign(params_[i].numel(), T(0));
        }
    }

    const AdamConfig<T>& config() const { return cfg_; }
    std::size_t steps_taken() const { return t_; }

    // Consumes current grads. A non-finite gradient anywhere rejects the whole
    // step: no parameter, moment, or step count changes.
    void step() {
        for (const auto& p : params_)
            if (p.has_grad())
                for (T g : p.grad())
                    if (!std::isfinite(g)) throw std::runtime_error("adam: non-finite gradient, step rejected");
        ++t_;
        T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
        T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& data = params_[i].impl()->data;
            std::size_t n = data.size();
            const T* g = nullptr;
            if (params_[i].has_grad()) g = params_[i].impl()->grad.data();
            if (cfg_.weight_decay != T(0))
                for (std::size_t k = 0; k < n; ++k) data[k] *= T(1) - cfg_.lr * cfg_.weight_decay;
            for (std::size_t k = 0; k < n; ++k) {
                T gk = g ? g[k] : T(0);
                m_[i][k] = cfg_.beta1 * m_[i][k] + (T(1) - cfg_.beta1) * gk;
                v_[i][k] = cfg_.beta2 * v_[i][k] + (T(1) - cfg_.beta2) * gk * gk;
                T mhat = m_[i][k] / bc1;
                T vhat = v_[i][k] / bc2;
                data[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

  private:
    AdamConfig<T> cfg_;
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    std::size_t t_ = 0;
};

template <class T>
struct SamConfig {
    T rho = T(0.05);
};

template <class T>
struct StepReport {
    T loss_w = T(0);           // loss at the unperturbed point
    T loss_w_plus_eps = T(0);  // loss at the perturbed point
    T grad_norm = T(0);        // joint gradient norm at the unperturbed point
    bool perturbation_skipped = false;
};

template <class T>
class SamAdam {
  public:
    SamAdam(std::vector<Tensor<T>> params, AdamConfig<T> adam_cfg = {}, SamConfig<T> sam_cfg = {})
        : params_(std::move(params)), base_(params_, adam_cfg), sam_(sam_cfg) {
        if (sam_.rho < T(0)) throw std::invalid_argument("sam: rho must be non-negative");
    }

    const SamConfig<T>& sam_config() const { return sam_; }
    Adam<T>& base() { return base_; }

    // The evaluator is called exactly twice, with pass 1 then pass 2. It must
    // build and return the scalar loss from the registered parameters; this
    // method runs backward itself. Pass 2 sees perturbed parameter values and
    // should keep any running statistics frozen.
    StepReport<T> step(const std::function<Tensor<T>(int pass)>& evaluator) {
        StepReport<T> report;
        zero_grads(params_);
        Tensor<T> loss1 = evaluator(1);
        backward(loss1);
        report.loss_w = loss1.item();
        report.grad_norm = global_grad_norm(params_);

        // An all-zero gradient has no ascent direction; evaluate pass 2 at the
        // same point so the call contract stays fixed.
        T factor = T(0);
        if (report.grad_norm > T(0))
            factor = sam_.rho / report.grad_norm;
        else
            report.perturbation_skipped = true;

        std::vector<std::vector<T>> saved;
        saved.reserve(params_.size());
        for (const auto& p : params_) saved.push_back(p.impl()->data);
        apply_grad_step(params_, factor);
        try {
            zero_grads(params_);
            Tensor<T> loss2 = evaluator(2);
            backward(loss2);
            report.loss_w_plus_eps = loss2.item();
        } catch (...) {
            restore(saved);
            throw;
        }
        restore(saved);
        base_.step();
        return report;
    }

  private:
    void restore(const std::vector<std::vector<T>>& saved) {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i].impl()->data = saved[i];
    }

    std::vector<Tensor<T>> params_;
    Adam<T> base_;
    SamConfig<T> sam_;
};

}  // namespace botkit
