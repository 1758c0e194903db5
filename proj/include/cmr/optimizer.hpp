#pragma once
// Elementwise optimizers over the model parameter set: decoupled-weight-
// decay Adam with linear learning-rate decay, and plain SGD as a fallback.

#include "cmr/encoders.hpp"
#include "cmr/types.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace cmr {

enum class OptimizerKind { adamw, sgd };

inline OptimizerKind parse_optimizer_kind(const std::string& name) {
    if (name == "adamw") return OptimizerKind::adamw;
    if (name == "sgd") return OptimizerKind::sgd;
    throw ConfigError("unknown optimizer '" + name + "' (expected adamw or sgd)");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adamw;
    double learning_rate = 2e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool linear_decay = true;

    void validate() const {
        if (!(learning_rate > 0)) throw ConfigError("optimizer.learning_rate must be > 0");
        if (weight_decay < 0) throw ConfigError("optimizer.weight_decay must be >= 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("optimizer betas must lie in [0, 1)");
        if (!(eps > 0)) throw ConfigError("optimizer.eps must be > 0");
    }
};

namespace detail {
// Flat views over every tensor, in the fixed visitation order.
template <typename S, typename P>
std::vector<std::pair<S*, std::size_t>> tensor_views(P& params) {
    std::vector<std::pair<S*, std::size_t>> views;
    for_each_tensor(params, [&](const std::string&, auto& t) {
        views.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
    });
    return views;
}
}  // namespace detail

template <typename S>
class Optimizer {
  public:
    // total_steps sets the linear decay horizon; 0 keeps the rate constant.
    Optimizer(OptimizerConfig cfg, const ModelParams<S>& shape, std::size_t total_steps)
        : cfg_(cfg), total_steps_(total_steps) {
        cfg_.validate();
        if (cfg_.kind == OptimizerKind::adamw) {
            m_ = zeros_like(shape);
            v_ = zeros_like(shape);
        }
    }

    double rate_at(std::size_t step) const {  // step is 0-based
        if (!cfg_.linear_decay || total_steps_ == 0) return cfg_.learning_rate;
        const double frac = static_cast<double>(step) / static_cast<double>(total_steps_);
        return cfg_.learning_rate * std::max(0.0, 1.0 - frac);
    }

    void step(ModelParams<S>& params, const ModelParams<S>& grads) {
        const double lr = rate_at(t_);
        ++t_;
        auto p_views = detail::tensor_views<S>(params);
        auto g_views = detail::tensor_views<const S>(grads);
        if (cfg_.kind == OptimizerKind::sgd) {
            for (std::size_t k = 0; k < p_views.size(); ++k) {
                S* p = p_views[k].first;
                const S* g = g_views[k].first;
                for (std::size_t i = 0; i < p_views[k].second; ++i) {
                    p[i] -= static_cast<S>(lr) * (g[i] + static_cast<S>(cfg_.weight_decay) * p[i]);
                }
            }
            return;
        }
        auto m_views = detail::tensor_views<S>(m_);
        auto v_views = detail::tensor_views<S>(v_);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < p_views.size(); ++k) {
            S* p = p_views[k].first;
            const S* g = g_views[k].first;
            S* m = m_views[k].first;
            S* v = v_views[k].first;
            for (std::size_t i = 0; i < p_views[k].second; ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
                const double vi =
                    cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
                m[i] = static_cast<S>(mi);
                v[i] = static_cast<S>(vi);
                const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
                p[i] -= static_cast<S>(lr * update + lr * cfg_.weight_decay * p[i]);
            }
        }
    }

    std::size_t steps_taken() const { return t_; }

  private:
    OptimizerConfig cfg_;
    std::size_t total_steps_;
    std::size_t t_ = 0;
    ModelParams<S> m_, v_;
};

}  // namespace cmr
