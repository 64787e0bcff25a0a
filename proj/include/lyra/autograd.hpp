#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "lyra/errors.hpp"
#include "lyra/tensor.hpp"

namespace lyra {

// Trainable tensor with a persistent gradient buffer. Gradients accumulate
// additively across backward passes until zero_grad(). Optimizer overrides
// are per-tensor (the S4D kernel parameters carry lr=0.001, wd=0).
template <class S>
struct ParameterT {
    std::shared_ptr<TensorT<S>> value;
    std::shared_ptr<TensorT<S>> grad;
    std::optional<double> lr_override;
    std::optional<double> weight_decay_override;

    ParameterT() = default;

    explicit ParameterT(TensorT<S> v)
        : value(std::make_shared<TensorT<S>>(std::move(v))),
          grad(std::make_shared<TensorT<S>>(value->shape)) {}

    void set_overrides(std::optional<double> lr, std::optional<double> wd) {
        for (const auto& o : {lr, wd}) {
            if (o && !(std::isfinite(*o) && *o >= 0.0 && *o <= 1.0))
                throw ValueError("parameter override outside [0, 1]");
        }
        lr_override = lr;
        weight_decay_override = wd;
    }

    void zero_grad() {
        for (auto& g : grad->data) g = S(0);
    }
};

// A value in the recorded computation. `grad` is null when the value does
// not participate in differentiation (data inputs, or any value produced
// while the tape is not recording).
template <class S>
struct VarT {
    std::shared_ptr<TensorT<S>> val;
    std::shared_ptr<TensorT<S>> grad;

    bool tracked() const { return grad != nullptr; }
    const std::vector<std::size_t>& shape() const { return val->shape; }
};

// Reverse-mode tape. Ops append backward closures in execution order;
// backward() runs them in reverse, which is a valid topological order.
// With recording off, ops compute values only and intermediates are freed
// as their last reference drops; that is the inference path.
template <class S>
class TapeT {
public:
    bool recording = true;

    VarT<S> input(TensorT<S> v) {
        VarT<S> out;
        out.val = std::make_shared<TensorT<S>>(std::move(v));
        return out;
    }

    VarT<S> param(ParameterT<S>& p) {
        VarT<S> out;
        out.val = p.value;
        if (recording) out.grad = p.grad;
        return out;
    }

    // Op-output helper: allocates a zeroed grad buffer iff this value needs one.
    VarT<S> make(TensorT<S>&& v, bool needs_grad) {
        VarT<S> out;
        out.val = std::make_shared<TensorT<S>>(std::move(v));
        if (recording && needs_grad)
            out.grad = std::make_shared<TensorT<S>>(out.val->shape);
        return out;
    }

    void record(std::function<void()> step) {
        if (recording) steps_.push_back(std::move(step));
    }

    std::size_t size() const { return steps_.size(); }

    // Seeds d(loss)/d(loss) = 1 and propagates to every tracked leaf.
    void backward(const VarT<S>& loss) {
        if (loss.val->size() != 1)
            throw ContractError("backward: loss must be a scalar, got shape " +
                                shape_str(loss.val->shape));
        if (!loss.tracked())
            throw ContractError("backward: loss does not depend on any tracked parameter");
        loss.grad->data[0] += S(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
        clear();
    }

    void clear() { steps_.clear(); }

private:
    std::vector<std::function<void()>> steps_;
};

using Var = VarT<double>;
using Tape = TapeT<double>;
using Parameter = ParameterT<double>;

}  // namespace lyra
