#pragma once

#include <cstddef>

#include "lyra/ops.hpp"

namespace lyra {

// Projected gated convolution block: project d -> 2h, normalize, split into
// a convolution path and a gating path, multiply, project h -> d, normalize.
template <class S>
struct PGCParamsT {
    std::size_t d = 0;  // model width
    std::size_t h = 0;  // hidden width
    ParameterT<S> W_in;       // [2h, d]
    ParameterT<S> b_in;       // [2h]
    ParameterT<S> gamma_in;   // [2h]
    ParameterT<S> W_conv;     // [h, 3]
    ParameterT<S> b_conv;     // [h]
    ParameterT<S> W_out;      // [d, h]
    ParameterT<S> b_out;      // [d]
    ParameterT<S> gamma_out;  // [d]
    double dropout_p = 0.0;   // constructed but unused in forward
};

template <class S>
PGCParamsT<S> init_pgc(std::size_t d, std::size_t h, double dropout, Rng& rng) {
    if (d < 1 || h < 1) throw ConfigError("pgc: widths must be >= 1");
    PGCParamsT<S> p;
    p.d = d;
    p.h = h;
    p.dropout_p = dropout;

    auto in_lin = init_linear<S>(d, 2 * h, rng);
    p.W_in = std::move(in_lin.W);
    p.b_in = std::move(in_lin.b);
    p.gamma_in = ParameterT<S>(TensorT<S>::full({2 * h}, S(1)));

    // depthwise conv default init: fan_in = kernel size
    const double bound = 1.0 / std::sqrt(3.0);
    TensorT<S> Wc({h, 3});
    for (auto& w : Wc.data) w = S(rng.uniform(-bound, bound));
    TensorT<S> bc({h});
    for (auto& v : bc.data) v = S(rng.uniform(-bound, bound));
    p.W_conv = ParameterT<S>(std::move(Wc));
    p.b_conv = ParameterT<S>(std::move(bc));

    auto out_lin = init_linear<S>(h, d, rng);
    p.W_out = std::move(out_lin.W);
    p.b_out = std::move(out_lin.b);
    p.gamma_out = ParameterT<S>(TensorT<S>::full({d}, S(1)));
    return p;
}

// u[B, L, d] -> [B, L, d]. Dropout is part of the block's configuration but
// is not applied inside the forward; regularization happens at model level.
template <class S>
VarT<S> pgc_forward(TapeT<S>& tape, const VarT<S>& u, PGCParamsT<S>& p) {
    if (u.val->rank() != 3) throw ShapeError("pgc_forward: expected [B, L, d]");
    if (u.val->dim(2) != p.d)
        throw ShapeError("pgc_forward: feature dim " + std::to_string(u.val->dim(2)) +
                         " does not match d = " + std::to_string(p.d));
    VarT<S> xv = linear(tape, u, tape.param(p.W_in), tape.param(p.b_in));
    xv = rmsnorm(tape, xv, tape.param(p.gamma_in));
    VarT<S> x = slice_lastdim(tape, xv, 0, p.h);
    VarT<S> v = slice_lastdim(tape, xv, p.h, p.h);
    VarT<S> x_conv = depthwise_conv3(tape, x, tape.param(p.W_conv), tape.param(p.b_conv));
    VarT<S> gate = mul(tape, v, x_conv);
    VarT<S> out = linear(tape, gate, tape.param(p.W_out), tape.param(p.b_out));
    return rmsnorm(tape, out, tape.param(p.gamma_out));
}

// ---------------------------------------------------------------------------
// Standalone gated unit (used by tests to pin down the block's second-order
// interaction structure; forward-only, no tape involvement).
// ---------------------------------------------------------------------------

template <class S>
struct GatedUnitParamsT {
    ParameterT<S> W_conv;  // [3, d]
    ParameterT<S> W_lin;   // [d, d]
    ParameterT<S> b_lin;   // [d]
};

template <class S>
GatedUnitParamsT<S> init_gated_unit(std::size_t d, Rng& rng) {
    GatedUnitParamsT<S> p;
    TensorT<S> Wc({3, d}), Wl({d, d}), bl({d});
    for (auto& w : Wc.data) w = S(rng.normal());
    for (auto& w : Wl.data) w = S(rng.normal());
    for (auto& v : bl.data) v = S(rng.normal());
    p.W_conv = ParameterT<S>(std::move(Wc));
    p.W_lin = ParameterT<S>(std::move(Wl));
    p.b_lin = ParameterT<S>(std::move(bl));
    return p;
}

// u[L, d]: depthwise conv (zero-padded, kernel 3) times a position-wise
// linear pathway, multiplied elementwise.
template <class S>
TensorT<S> gated_unit_forward(const TensorT<S>& u, const GatedUnitParamsT<S>& p) {
    if (u.rank() != 2) throw ShapeError("gated_unit: expected [L, d]");
    const std::size_t L = u.dim(0), d = u.dim(1);
    const auto& Wc = *p.W_conv.value;
    const auto& Wl = *p.W_lin.value;
    const auto& bl = *p.b_lin.value;
    TensorT<S> out({L, d});
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            S conv = 0;
            for (int j = -1; j <= 1; ++j) {
                const long long ii = (long long)i + j;
                if (ii < 0 || ii >= (long long)L) continue;
                conv += Wc.data[std::size_t(j + 1) * d + c] * u.data[std::size_t(ii) * d + c];
            }
            S lin = bl.data[c];
            for (std::size_t cp = 0; cp < d; ++cp) lin += Wl.data[c * d + cp] * u.data[i * d + cp];
            out.data[i * d + c] = conv * lin;
        }
    }
    return out;
}

// The same map written as its explicit expansion: the quadratic cross-term
// sum plus the bias-scaled convolution. Exists as an independent oracle for
// the gating algebra.
template <class S>
TensorT<S> gated_unit_expansion(const TensorT<S>& u, const GatedUnitParamsT<S>& p) {
    if (u.rank() != 2) throw ShapeError("gated_unit: expected [L, d]");
    const std::size_t L = u.dim(0), d = u.dim(1);
    const auto& Wc = *p.W_conv.value;
    const auto& Wl = *p.W_lin.value;
    const auto& bl = *p.b_lin.value;
    TensorT<S> out({L, d});
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            S acc = 0;
            for (int j = -1; j <= 1; ++j) {
                const long long ii = (long long)i + j;
                if (ii < 0 || ii >= (long long)L) continue;
                const S wc = Wc.data[std::size_t(j + 1) * d + c];
                for (std::size_t cp = 0; cp < d; ++cp)
                    acc += wc * Wl.data[c * d + cp] * u.data[std::size_t(ii) * d + c] *
                           u.data[i * d + cp];
                acc += bl.data[c] * wc * u.data[std::size_t(ii) * d + c];
            }
            out.data[i * d + c] = acc;
        }
    }
    return out;
}

}  // namespace lyra
