#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lyra/autograd.hpp"

namespace lyra {

struct GradCheckRow {
    std::string name;
    double max_abs_diff = 0.0;
    double rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    bool all_pass = true;
};

// Central finite differences against the recorded adjoints. `make_loss`
// must rebuild the forward deterministically on every call (eval mode, or a
// re-seeded rng). Per tensor, the reported error is the largest elementwise
// |fd - analytic| divided by the larger of the two tensors' max magnitudes.
template <class S, class LossFn>
GradCheckReport gradcheck(std::vector<NamedParamT<S>> params, LossFn&& make_loss,
                          double fd_step = 1e-5, double tol = 1e-5) {
    auto eval_loss = [&]() -> double {
        TapeT<S> tape;
        tape.recording = false;
        VarT<S> loss = make_loss(tape);
        return double(loss.val->data[0]);
    };

    // analytic pass
    for (auto& np : params) np.param->zero_grad();
    {
        TapeT<S> tape;
        VarT<S> loss = make_loss(tape);
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& np : params) {
        std::vector<double> g(np.param->grad->size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = double(np.param->grad->data[i]);
        analytic.push_back(std::move(g));
    }

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& values = params[pi].param->value->data;
        GradCheckRow row;
        row.name = params[pi].name;
        double scale = 0.0;
        for (double g : analytic[pi]) scale = std::max(scale, std::abs(g));
        for (std::size_t i = 0; i < values.size(); ++i) {
            const S saved = values[i];
            values[i] = saved + S(fd_step);
            const double f_plus = eval_loss();
            values[i] = saved - S(fd_step);
            const double f_minus = eval_loss();
            values[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * fd_step);
            scale = std::max(scale, std::abs(fd));
            row.max_abs_diff = std::max(row.max_abs_diff, std::abs(fd - analytic[pi][i]));
        }
        row.rel_err = row.max_abs_diff / std::max(scale, 1e-6);
        row.pass = row.rel_err <= tol;
        report.all_pass = report.all_pass && row.pass;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace lyra
