#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lyra/pgc.hpp"
#include "lyra/s4d.hpp"

namespace lyra {

struct LyraConfig {
    std::size_t d_input = 4;
    std::size_t d_model = 64;
    std::vector<std::size_t> pgc_hiddens = {16, 128};
    std::size_t num_s4 = 1;
    std::size_t d_state = 64;
    std::size_t d_output = 2;
    double dropout = 0.0;
    double final_dropout = 0.0;
    bool prenorm = true;

    void validate() const {
        if (d_input < 1) throw ConfigError("config: d_input must be >= 1");
        if (d_model < 1) throw ConfigError("config: d_model must be >= 1");
        if (d_output < 1) throw ConfigError("config: d_output must be >= 1");
        if (num_s4 > 0 && (d_state < 2 || d_state % 2 != 0))
            throw ConfigError("config: d_state must be even and >= 2");
        for (auto h : pgc_hiddens)
            if (h < 1) throw ConfigError("config: pgc_hiddens entries must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must be in [0, 1)");
        if (final_dropout < 0.0 || final_dropout >= 1.0)
            throw ConfigError("config: final_dropout must be in [0, 1)");
    }

    bool operator==(const LyraConfig&) const = default;
};

template <class S>
struct NamedParamT {
    std::string name;
    ParameterT<S>* param;
};

// Encoder -> PGC stack -> prenorm residual S4D blocks -> mean pooling ->
// decoder. Built deterministically from a seed.
template <class S>
struct LyraModelT {
    LyraConfig cfg;
    LinearParamsT<S> encoder;
    std::vector<PGCParamsT<S>> pgc_blocks;
    struct S4Block {
        ParameterT<S> prenorm_gamma;  // [d_model]
        S4DLayerParamsT<S> layer;
    };
    std::vector<S4Block> s4_blocks;
    LinearParamsT<S> decoder;

    std::vector<NamedParamT<S>> parameters() {
        std::vector<NamedParamT<S>> out;
        out.push_back({"encoder.W", &encoder.W});
        out.push_back({"encoder.b", &encoder.b});
        for (std::size_t i = 0; i < pgc_blocks.size(); ++i) {
            const std::string base = "pgc." + std::to_string(i) + ".";
            auto& p = pgc_blocks[i];
            out.push_back({base + "W_in", &p.W_in});
            out.push_back({base + "b_in", &p.b_in});
            out.push_back({base + "gamma_in", &p.gamma_in});
            out.push_back({base + "W_conv", &p.W_conv});
            out.push_back({base + "b_conv", &p.b_conv});
            out.push_back({base + "W_out", &p.W_out});
            out.push_back({base + "b_out", &p.b_out});
            out.push_back({base + "gamma_out", &p.gamma_out});
        }
        for (std::size_t i = 0; i < s4_blocks.size(); ++i) {
            const std::string base = "s4." + std::to_string(i) + ".";
            auto& blk = s4_blocks[i];
            out.push_back({base + "prenorm_gamma", &blk.prenorm_gamma});
            out.push_back({base + "D", &blk.layer.D});
            out.push_back({base + "kernel.log_dt", &blk.layer.kernel.log_dt});
            out.push_back({base + "kernel.C", &blk.layer.kernel.C});
            out.push_back({base + "kernel.log_A_real", &blk.layer.kernel.log_A_real});
            out.push_back({base + "kernel.A_imag", &blk.layer.kernel.A_imag});
            out.push_back({base + "W_out", &blk.layer.W_out});
            out.push_back({base + "b_out", &blk.layer.b_out});
        }
        out.push_back({"decoder.W", &decoder.W});
        out.push_back({"decoder.b", &decoder.b});
        return out;
    }

    void zero_grad() {
        for (auto& np : parameters()) np.param->zero_grad();
    }
};

template <class S>
LyraModelT<S> build(const LyraConfig& cfg, Rng& rng) {
    cfg.validate();
    LyraModelT<S> m;
    m.cfg = cfg;
    m.encoder = init_linear<S>(cfg.d_input, cfg.d_model, rng);
    for (auto h : cfg.pgc_hiddens)
        m.pgc_blocks.push_back(init_pgc<S>(cfg.d_model, h, cfg.dropout, rng));
    for (std::size_t i = 0; i < cfg.num_s4; ++i) {
        typename LyraModelT<S>::S4Block blk;
        blk.prenorm_gamma = ParameterT<S>(TensorT<S>::full({cfg.d_model}, S(1)));
        blk.layer = init_s4d_layer<S>(cfg.d_model, cfg.d_state, cfg.dropout, rng);
        m.s4_blocks.push_back(std::move(blk));
    }
    m.decoder = init_linear<S>(cfg.d_model, cfg.d_output, rng);
    return m;
}

// Counts every trainable scalar; the complex C tensor is stored as (re, im)
// pairs so each complex entry contributes 2.
template <class S>
std::size_t param_count(LyraModelT<S>& model) {
    std::size_t n = 0;
    for (auto& np : model.parameters()) n += np.param->value->size();
    return n;
}

// x[B, L, d_input] -> [B, d_output]; optionally exposes the pre-pooling
// embeddings [B, L, d_model].
template <class S>
VarT<S> lyra_forward(TapeT<S>& tape, LyraModelT<S>& model, const TensorT<S>& x, Rng& rng,
                     bool training, TensorT<S>* embeddings_out = nullptr) {
    if (x.rank() != 3) throw ShapeError("forward: expected input [B, L, d_input]");
    if (x.dim(2) != model.cfg.d_input)
        throw ShapeError("forward: input dim " + std::to_string(x.dim(2)) +
                         " does not match d_input = " + std::to_string(model.cfg.d_input));
    if (x.dim(1) == 0) throw ShapeError("forward: empty sequence");

    VarT<S> h = tape.input(x);
    h = linear(tape, h, model.encoder);                    // [B, L, d]
    for (auto& pgc : model.pgc_blocks) h = pgc_forward(tape, h, pgc);

    h = transpose12(tape, h);                              // [B, d, L]
    for (auto& blk : model.s4_blocks) {
        VarT<S> z = h;
        if (model.cfg.prenorm) {
            z = transpose12(tape, z);
            z = rmsnorm(tape, z, tape.param(blk.prenorm_gamma));
            z = transpose12(tape, z);
        }
        z = s4d_forward(tape, z, blk.layer, rng, training);
        z = dropout_tied(tape, z, model.cfg.dropout, rng, training);
        h = add(tape, h, z);
        if (!model.cfg.prenorm) {
            h = transpose12(tape, h);
            h = rmsnorm(tape, h, tape.param(blk.prenorm_gamma));
            h = transpose12(tape, h);
        }
    }
    h = transpose12(tape, h);                              // [B, L, d]

    if (embeddings_out) *embeddings_out = *h.val;

    VarT<S> pooled = mean_axis1(tape, h);                  // [B, d]
    pooled = dropout_tied(tape, pooled, model.cfg.final_dropout, rng, training);
    return linear(tape, pooled, model.decoder);            // [B, d_output]
}

using LyraModel = LyraModelT<double>;

}  // namespace lyra
