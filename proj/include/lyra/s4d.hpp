#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "lyra/ops.hpp"

namespace lyra {

// Diagonal state-space kernel parameters. The state matrix is derived as
// A = -exp(log_A_real) + i*A_imag, so its real part stays strictly negative
// and every mode decays. C is stored as (re, im) pairs in the last dim so
// the optimizer sees plain real tensors.
template <class S>
struct S4DKernelParamsT {
    std::size_t H = 0;  // channels
    std::size_t N = 0;  // state size (even); N/2 complex modes per channel
    ParameterT<S> log_dt;      // [H]
    ParameterT<S> C;           // [H, N/2, 2]
    ParameterT<S> log_A_real;  // [H, N/2]
    ParameterT<S> A_imag;      // [H, N/2]
};

// log_dt ~ U[log dt_min, log dt_max]; Re(A) = -1/2 everywhere; the imaginary
// parts ladder through pi*n so mode n of channel h oscillates at pi*n*dt[h]
// radians per step. All four tensors carry lr=0.001 and weight decay 0.
template <class S>
S4DKernelParamsT<S> init_s4d_kernel(std::size_t H, std::size_t N, double dt_min, double dt_max,
                                    Rng& rng) {
    if (H < 1) throw ConfigError("s4d kernel: H must be >= 1");
    if (N < 2 || N % 2 != 0)
        throw ConfigError("s4d kernel: state size N must be even and >= 2, got " + std::to_string(N));
    const std::size_t M = N / 2;

    S4DKernelParamsT<S> p;
    p.H = H;
    p.N = N;

    TensorT<S> log_dt({H});
    const double lo = std::log(dt_min), hi = std::log(dt_max);
    for (auto& v : log_dt.data) v = S(rng.uniform(lo, hi));

    TensorT<S> C({H, M, 2});
    const double cn_sd = std::sqrt(0.5);  // standard complex normal
    for (auto& v : C.data) v = S(rng.normal(0.0, cn_sd));

    TensorT<S> log_A_real = TensorT<S>::full({H, M}, S(std::log(0.5)));
    TensorT<S> A_imag({H, M});
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t n = 0; n < M; ++n)
            A_imag.data[h * M + n] = S(std::numbers::pi * double(n));

    p.log_dt = ParameterT<S>(std::move(log_dt));
    p.C = ParameterT<S>(std::move(C));
    p.log_A_real = ParameterT<S>(std::move(log_A_real));
    p.A_imag = ParameterT<S>(std::move(A_imag));
    for (auto* prm : {&p.log_dt, &p.C, &p.log_A_real, &p.A_imag})
        prm->set_overrides(0.001, 0.0);
    return p;
}

namespace detail {

template <class S>
struct S4DModes {
    std::vector<std::complex<S>> w;       // dt * A per (h, n)
    std::vector<std::complex<S>> A;       // per (h, n)
    std::vector<std::complex<S>> E;       // exp(w)
    std::vector<std::complex<S>> phi;     // (exp(w) - 1) / A
    std::vector<std::complex<S>> C_eff;   // C * phi
    std::vector<S> dt;                    // per h
};

template <class S>
S4DModes<S> s4d_modes(const S4DKernelParamsT<S>& p) {
    const std::size_t H = p.H, M = p.N / 2;
    S4DModes<S> m;
    m.w.resize(H * M);
    m.A.resize(H * M);
    m.E.resize(H * M);
    m.phi.resize(H * M);
    m.C_eff.resize(H * M);
    m.dt.resize(H);
    for (std::size_t h = 0; h < H; ++h) {
        const S dt = std::exp(p.log_dt.value->data[h]);
        m.dt[h] = dt;
        for (std::size_t n = 0; n < M; ++n) {
            const std::size_t i = h * M + n;
            const std::complex<S> A(-std::exp(p.log_A_real.value->data[i]),
                                    p.A_imag.value->data[i]);
            const std::complex<S> w = A * dt;
            const std::complex<S> E = std::exp(w);
            const std::complex<S> phi = (E - S(1)) / A;
            const std::complex<S> C(p.C.value->data[2 * i], p.C.value->data[2 * i + 1]);
            m.A[i] = A;
            m.w[i] = w;
            m.E[i] = E;
            m.phi[i] = phi;
            m.C_eff[i] = C * phi;
        }
    }
    return m;
}

}  // namespace detail

// Materializes the length-L convolution kernel,
//   K[h, t] = 2 * Re( sum_n C_eff[h, n] * exp(dtA[h, n] * t) ),
// evaluating each exponential elementwise (the Vandermonde-oracle below
// reaches the same values by repeated multiplication instead).
template <class S>
TensorT<S> materialize_kernel_values(const S4DKernelParamsT<S>& p, std::size_t L) {
    if (L == 0) throw ValueError("materialize_kernel: invalid length 0");
    const std::size_t H = p.H, M = p.N / 2;
    const auto modes = detail::s4d_modes(p);
    TensorT<S> K({H, L});
    parallel_for(H, std::max<std::size_t>(1, (1u << 16) / std::max<std::size_t>(1, M * L)),
                 [&](std::size_t h0, std::size_t h1) {
        for (std::size_t h = h0; h < h1; ++h) {
            S* row = K.data.data() + h * L;
            for (std::size_t n = 0; n < M; ++n) {
                const std::complex<S> w = modes.w[h * M + n];
                const std::complex<S> c = modes.C_eff[h * M + n];
                for (std::size_t t = 0; t < L; ++t) {
                    const S re = w.real() * S(t);
                    const S im = w.imag() * S(t);
                    const S mag = std::exp(re);
                    const S vr = mag * std::cos(im);
                    const S vi = mag * std::sin(im);
                    row[t] += S(2) * (c.real() * vr - c.imag() * vi);
                }
            }
        }
    });
    return K;
}

// Differentiable kernel materialization. The backward pass propagates the
// real kernel gradient through the complex parameterization using the
// convention g_z = dL/dRe(z) + i*dL/dIm(z), for which a holomorphic step
// w = f(z) contributes g_z = conj(f'(z)) * g_w.
template <class S>
VarT<S> s4d_kernel(TapeT<S>& tape, S4DKernelParamsT<S>& p, std::size_t L) {
    TensorT<S> K = materialize_kernel_values(p, L);
    const bool track = tape.recording;
    VarT<S> log_dt = tape.param(p.log_dt);
    VarT<S> C = tape.param(p.C);
    VarT<S> lar = tape.param(p.log_A_real);
    VarT<S> ai = tape.param(p.A_imag);
    VarT<S> out = tape.make(std::move(K), track);
    if (out.tracked()) {
        auto modes = std::make_shared<detail::S4DModes<S>>(detail::s4d_modes(p));
        const std::size_t H = p.H, M = p.N / 2;
        tape.record([modes, H, M, L, Kg = out.grad, dt_g = log_dt.grad, C_g = C.grad,
                     lar_g = lar.grad, ai_g = ai.grad, C_v = C.val, lar_v = lar.val] {
            for (std::size_t h = 0; h < H; ++h) {
                const S* g = Kg->data.data() + h * L;
                const S dt = modes->dt[h];
                S ddt_total = 0;
                for (std::size_t n = 0; n < M; ++n) {
                    const std::size_t i = h * M + n;
                    const std::complex<S> w = modes->w[i];
                    const std::complex<S> A = modes->A[i];
                    const std::complex<S> E = modes->E[i];
                    const std::complex<S> phi = modes->phi[i];
                    const std::complex<S> c_eff = modes->C_eff[i];
                    const std::complex<S> C_val(C_v->data[2 * i], C_v->data[2 * i + 1]);

                    // S0 = sum_t g[t] exp(w t), S1 = sum_t g[t] t exp(w t)
                    std::complex<S> S0(0, 0), S1(0, 0);
                    for (std::size_t t = 0; t < L; ++t) {
                        const S re = w.real() * S(t);
                        const S im = w.imag() * S(t);
                        const S mag = std::exp(re);
                        const std::complex<S> v(mag * std::cos(im), mag * std::sin(im));
                        S0 += g[t] * v;
                        S1 += g[t] * S(t) * v;
                    }

                    const std::complex<S> gC_eff = S(2) * std::conj(S0);
                    std::complex<S> gw = S(2) * std::conj(c_eff) * std::conj(S1);
                    const std::complex<S> gC = std::conj(phi) * gC_eff;
                    const std::complex<S> gphi = std::conj(C_val) * gC_eff;
                    const std::complex<S> gE = gphi / std::conj(A);
                    std::complex<S> gA = std::conj(-(E - S(1)) / (A * A)) * gphi;
                    gw += std::conj(E) * gE;
                    gA += dt * gw;
                    ddt_total += (std::conj(A) * gw).real();

                    C_g->data[2 * i] += gC.real();
                    C_g->data[2 * i + 1] += gC.imag();
                    lar_g->data[i] += -std::exp(lar_v->data[i]) * gA.real();
                    ai_g->data[i] += gA.imag();
                }
                dt_g->data[h] += dt * ddt_total;
            }
        });
    }
    return out;
}

// Independent check: builds the Vandermonde matrix V[n, t] = exp(dtA)^t by
// repeated multiplication and evaluates 2*Re(C_eff V). Test oracle only.
template <class S>
TensorT<S> kernel_vandermonde_oracle(const S4DKernelParamsT<S>& p, std::size_t L) {
    if (L == 0) throw ValueError("kernel oracle: invalid length 0");
    const std::size_t H = p.H, M = p.N / 2;
    const auto modes = detail::s4d_modes(p);
    TensorT<S> K({H, L});
    std::vector<std::complex<S>> V(M * L);
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t n = 0; n < M; ++n) {
            const std::complex<S> lambda = modes.E[h * M + n];
            std::complex<S> pow(1, 0);
            for (std::size_t t = 0; t < L; ++t) {
                V[n * L + t] = pow;
                pow *= lambda;
            }
        }
        for (std::size_t t = 0; t < L; ++t) {
            std::complex<S> acc(0, 0);
            for (std::size_t n = 0; n < M; ++n) acc += modes.C_eff[h * M + n] * V[n * L + t];
            K.data[h * L + t] = S(2) * acc.real();
        }
    }
    return K;
}

// Truncated generating function H_l(z) = sum_{t<l} h[t] z^{-t} evaluated by
// direct summation at the m-th roots of unity z_k = exp(2*pi*i*k/m).
// Requires m >= l; a shorter evaluation grid would alias the coefficients.
template <class S>
std::vector<std::complex<S>> generating_function_eval(std::span<const S> h, std::size_t m) {
    const std::size_t l = h.size();
    if (m < l)
        throw ValueError("generating function: m = " + std::to_string(m) +
                         " must be >= sequence length " + std::to_string(l));
    if (m == 0) throw ValueError("generating function: invalid length 0");
    std::vector<std::complex<S>> out(m);
    for (std::size_t k = 0; k < m; ++k) {
        std::complex<S> acc(0, 0);
        for (std::size_t t = 0; t < l; ++t) {
            const double ang = -2.0 * std::numbers::pi * double(k) * double(t) / double(m);
            acc += h[t] * std::complex<S>(S(std::cos(ang)), S(std::sin(ang)));
        }
        out[k] = acc;
    }
    return out;
}

// One S4D layer: kernel + skip gain D, then GELU, tied dropout, and a
// position-wise H -> 2H linear gated back down through a GLU.
template <class S>
struct S4DLayerParamsT {
    S4DKernelParamsT<S> kernel;
    ParameterT<S> D;      // [H]
    ParameterT<S> W_out;  // [2H, H]
    ParameterT<S> b_out;  // [2H]
    double dropout_p = 0.0;
};

template <class S>
S4DLayerParamsT<S> init_s4d_layer(std::size_t H, std::size_t N, double dropout, Rng& rng,
                                  double dt_min = 0.001, double dt_max = 0.1) {
    S4DLayerParamsT<S> layer;
    TensorT<S> D({H});
    for (auto& v : D.data) v = S(rng.normal());
    layer.D = ParameterT<S>(std::move(D));
    layer.kernel = init_s4d_kernel<S>(H, N, dt_min, dt_max, rng);
    auto out_lin = init_linear<S>(H, 2 * H, rng);
    layer.W_out = std::move(out_lin.W);
    layer.b_out = std::move(out_lin.b);
    layer.dropout_p = dropout;
    return layer;
}

// u[B, H, L] -> [B, H, L]
template <class S>
VarT<S> s4d_forward(TapeT<S>& tape, const VarT<S>& u, S4DLayerParamsT<S>& layer, Rng& rng,
                    bool training) {
    if (u.val->rank() != 3) throw ShapeError("s4d_forward: expected [B, H, L]");
    const std::size_t H = layer.kernel.H;
    if (u.val->dim(1) != H)
        throw ShapeError("s4d_forward: channel dim " + std::to_string(u.val->dim(1)) +
                         " does not match H = " + std::to_string(H));
    const std::size_t L = u.val->dim(2);
    VarT<S> k = s4d_kernel(tape, layer.kernel, L);
    VarT<S> y = causal_fft_conv(tape, u, k);
    y = add(tape, y, mul_channel(tape, u, tape.param(layer.D)));
    y = gelu(tape, y);
    y = dropout_tied(tape, y, layer.dropout_p, rng, training);
    y = linear_channels(tape, y, tape.param(layer.W_out), tape.param(layer.b_out));
    return glu_dim1(tape, y);
}

// Singular values of the H x L kernel matrix, descending. One-sided Jacobi
// (Hestenes) on the smaller side: rotations orthogonalize row pairs, after
// which the row norms are the singular values. Avoids forming the Gram
// matrix, so small singular values keep full precision.
template <class S>
std::vector<S> kernel_svd_spectrum(const TensorT<S>& K) {
    if (K.rank() != 2) throw ShapeError("kernel_svd_spectrum: expected [H, L]");
    const std::size_t H = K.dim(0), L = K.dim(1);
    if (H == 0 || L == 0) throw ShapeError("kernel_svd_spectrum: empty matrix");
    const std::size_t m = std::min(H, L), n = std::max(H, L);
    std::vector<S> a(m * n);
    if (H <= L) {
        std::copy(K.data.begin(), K.data.end(), a.begin());
    } else {
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t l = 0; l < L; ++l) a[l * n + h] = K.data[h * L + l];
    }

    for (int sweep = 0; sweep < 60; ++sweep) {
        bool converged = true;
        for (std::size_t p = 0; p < m; ++p) {
            for (std::size_t q = p + 1; q < m; ++q) {
                S* rp = a.data() + p * n;
                S* rq = a.data() + q * n;
                S alpha = 0, beta = 0, gamma = 0;
                for (std::size_t k = 0; k < n; ++k) {
                    alpha += rp[k] * rp[k];
                    beta += rq[k] * rq[k];
                    gamma += rp[k] * rq[k];
                }
                if (std::abs(gamma) <= S(1e-15) * std::sqrt(alpha * beta) || gamma == S(0))
                    continue;
                converged = false;
                const S zeta = (beta - alpha) / (S(2) * gamma);
                const S t = (zeta >= S(0) ? S(1) : S(-1)) /
                            (std::abs(zeta) + std::sqrt(S(1) + zeta * zeta));
                const S c = S(1) / std::sqrt(S(1) + t * t);
                const S s = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const S vp = rp[k], vq = rq[k];
                    rp[k] = c * vp - s * vq;
                    rq[k] = s * vp + c * vq;
                }
            }
        }
        if (converged) break;
    }

    std::vector<S> sigma(m);
    for (std::size_t p = 0; p < m; ++p) {
        S acc = 0;
        for (std::size_t k = 0; k < n; ++k) acc += a[p * n + k] * a[p * n + k];
        sigma[p] = std::sqrt(acc);
    }
    std::sort(sigma.begin(), sigma.end(), std::greater<S>());
    return sigma;
}

}  // namespace lyra
