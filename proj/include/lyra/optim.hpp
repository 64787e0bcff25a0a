#pragma once

#include <cmath>
#include <vector>

#include "lyra/model.hpp"

namespace lyra {

struct AdamWOptions {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay and per-parameter lr/wd overrides (the
// S4D kernel tensors train at lr=0.001 with no decay). The decay term uses
// the pre-step value: p <- p - lr*(m_hat/(sqrt(v_hat)+eps) + wd*p).
template <class S>
class AdamWT {
public:
    AdamWT(std::vector<NamedParamT<S>> params, AdamWOptions opt = {})
        : params_(std::move(params)), opt_(opt) {
        states_.reserve(params_.size());
        for (auto& np : params_) {
            State st;
            st.m = TensorT<S>(np.param->value->shape);
            st.v = TensorT<S>(np.param->value->shape);
            states_.push_back(std::move(st));
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, double(t_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& np = params_[pi];
            auto& st = states_[pi];
            const S lr = S(np.param->lr_override.value_or(opt_.lr));
            const S wd = S(np.param->weight_decay_override.value_or(opt_.weight_decay));
            const S b1 = S(opt_.beta1), b2 = S(opt_.beta2), eps = S(opt_.eps);
            auto& p = np.param->value->data;
            auto& g = np.param->grad->data;
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (!std::isfinite(double(g[i])))
                    throw NumericError("adamw: non-finite gradient in " + np.name);
                st.m[i] = b1 * st.m[i] + (S(1) - b1) * g[i];
                st.v[i] = b2 * st.v[i] + (S(1) - b2) * g[i] * g[i];
                const S m_hat = st.m[i] / S(bc1);
                const S v_hat = st.v[i] / S(bc2);
                p[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * p[i]);
            }
        }
    }

    std::size_t step_count() const { return t_; }

private:
    struct State {
        TensorT<S> m, v;
    };
    std::vector<NamedParamT<S>> params_;
    std::vector<State> states_;
    AdamWOptions opt_;
    std::size_t t_ = 0;
};

using AdamW = AdamWT<double>;

}  // namespace lyra
