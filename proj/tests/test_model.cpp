#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lyra/checkpoint.hpp"
#include "lyra/gradcheck.hpp"
#include "lyra/model.hpp"
#include "lyra/run.hpp"

using namespace lyra;

namespace {

// Closed-form parameter count, kept independent of the traversal in
// param_count().
std::size_t closed_form_count(const LyraConfig& c) {
    const std::size_t d = c.d_model;
    std::size_t n = c.d_input * d + d;  // encoder
    for (std::size_t h : c.pgc_hiddens)
        n += (d * 2 * h + 2 * h) + 2 * h + (3 * h + h) + (h * d + d) + d;
    const std::size_t H = d, N = c.d_state;
    for (std::size_t i = 0; i < c.num_s4; ++i)
        n += d                          // prenorm gain
             + H                        // log_dt
             + 2 * H * (N / 2)          // C as (re, im)
             + H * (N / 2)              // log_A_real
             + H * (N / 2)              // A_imag
             + H                        // D
             + (H * 2 * H + 2 * H);     // output linear
    n += d * c.d_output + c.d_output;  // decoder
    return n;
}

Tensor random_input(std::size_t B, std::size_t L, std::size_t d, Rng& rng) {
    Tensor x({B, L, d});
    for (auto& v : x.data) v = rng.normal();
    return x;
}

std::string temp_path(const std::string& name) {
    return std::string("/tmp/lyra_test_") + name;
}

}  // namespace

TEST_CASE("the nucleotide benchmark config counts 46210 parameters") {
    LyraConfig cfg;
    cfg.d_input = 4;
    cfg.d_model = 64;
    cfg.pgc_hiddens = {16, 128};
    cfg.num_s4 = 1;
    cfg.d_state = 64;
    cfg.d_output = 2;
    Rng rng(1);
    auto model = build<double>(cfg, rng);
    CHECK(param_count(model) == 46210);
    CHECK(closed_form_count(cfg) == 46210);

    cfg.d_output = 3;
    auto model3 = build<double>(cfg, rng);
    CHECK(param_count(model3) == 46275);  // one extra decoder row
}

TEST_CASE("closed-form count matches param_count across configs") {
    Rng rng(2);
    std::vector<LyraConfig> cfgs;
    {
        LyraConfig c;
        c.d_input = 4;
        c.d_model = 64;
        c.pgc_hiddens = {16, 128};
        c.num_s4 = 1;
        c.d_state = 64;
        c.d_output = 2;
        cfgs.push_back(c);
    }
    {
        LyraConfig c;
        c.d_input = 20;
        c.d_model = 48;
        c.pgc_hiddens = {16};
        c.num_s4 = 1;
        c.d_state = 64;
        c.d_output = 1;
        cfgs.push_back(c);  // the 14k-class configuration
    }
    {
        LyraConfig c;
        c.d_input = 1;
        c.d_model = 4;
        c.pgc_hiddens = {4};
        c.num_s4 = 1;
        c.d_state = 6;
        c.d_output = 1;
        cfgs.push_back(c);  // the ~201-parameter configuration
    }
    {
        LyraConfig c;
        c.d_input = 1;
        c.d_model = 1;
        c.pgc_hiddens = {};
        c.num_s4 = 0;
        c.d_output = 1;
        cfgs.push_back(c);  // encoder + decoder only
    }
    for (const auto& c : cfgs) {
        auto model = build<double>(c, rng);
        CHECK(param_count(model) == closed_form_count(c));
    }
    auto m201 = build<double>(cfgs[2], rng);
    CHECK(param_count(m201) == 201);
    CHECK(closed_form_count(cfgs[3]) == 4);  // 2 per linear layer
}

TEST_CASE("ablation stacks build and run") {
    Rng rng(3);
    LyraConfig s4_only;
    s4_only.d_input = 4;
    s4_only.d_model = 8;
    s4_only.pgc_hiddens = {};
    s4_only.num_s4 = 1;
    s4_only.d_state = 4;
    s4_only.d_output = 2;
    auto m1 = build<double>(s4_only, rng);

    LyraConfig pgc_only;
    pgc_only.d_input = 4;
    pgc_only.d_model = 8;
    pgc_only.pgc_hiddens = {16};
    pgc_only.num_s4 = 0;
    pgc_only.d_output = 2;
    auto m2 = build<double>(pgc_only, rng);

    Rng data(5);
    auto x = random_input(2, 6, 4, data);
    for (auto* m : {&m1, &m2}) {
        Tape tape;
        tape.recording = false;
        Rng fw(1);
        auto y = lyra_forward(tape, *m, x, fw, false);
        CHECK(y.val->shape == std::vector<std::size_t>{2, 2});
        CHECK(y.val->all_finite());
    }
}

TEST_CASE("invalid configs are rejected with the field named") {
    Rng rng(4);
    LyraConfig c;
    c.d_state = 63;  // odd
    CHECK_THROWS_WITH_AS(build<double>(c, rng),
                         doctest::Contains("d_state"), ConfigError);
    c = LyraConfig{};
    c.d_model = 0;
    CHECK_THROWS_WITH_AS(build<double>(c, rng),
                         doctest::Contains("d_model"), ConfigError);
    c = LyraConfig{};
    c.dropout = 1.0;
    CHECK_THROWS_WITH_AS(build<double>(c, rng),
                         doctest::Contains("dropout"), ConfigError);
}

TEST_CASE("eval forward is bit-deterministic and batch-independent") {
    Rng rng(6);
    LyraConfig c;
    c.d_input = 3;
    c.d_model = 8;
    c.pgc_hiddens = {4};
    c.num_s4 = 1;
    c.d_state = 4;
    c.d_output = 2;
    c.dropout = 0.3;        // must be ignored in eval mode
    c.final_dropout = 0.3;
    auto model = build<double>(c, rng);

    Rng data(7);
    auto row = random_input(1, 5, 3, data);
    Tensor batch({2, 5, 3});
    for (std::size_t i = 0; i < row.size(); ++i) {
        batch.data[i] = row.data[i];
        batch.data[row.size() + i] = row.data[i];
    }

    auto run_once = [&]() {
        Tape tape;
        tape.recording = false;
        Rng fw(99);
        auto y = lyra_forward(tape, model, batch, fw, false);
        return y.val->data;
    };
    auto a = run_once(), b = run_once();
    CHECK(a == b);  // bit-identical across calls
    CHECK(a[0] == a[2]);
    CHECK(a[1] == a[3]);  // identical rows -> identical outputs
}

TEST_CASE("embeddings are exposed and pooled output matches them") {
    Rng rng(8);
    LyraConfig c;
    c.d_input = 2;
    c.d_model = 4;
    c.pgc_hiddens = {3};
    c.num_s4 = 1;
    c.d_state = 4;
    c.d_output = 1;
    auto model = build<double>(c, rng);
    Rng data(9);
    auto x = random_input(1, 6, 2, data);
    Tape tape;
    tape.recording = false;
    Rng fw(1);
    Tensor emb;
    auto y = lyra_forward(tape, model, x, fw, false, &emb);
    CHECK(emb.shape == std::vector<std::size_t>{1, 6, 4});

    // decode(mean(embeddings)) reproduces the model output
    Tensor pooled({1, 4});
    for (std::size_t l = 0; l < 6; ++l)
        for (std::size_t d = 0; d < 4; ++d) pooled.data[d] += emb.data[l * 4 + d] / 6.0;
    Tape t2;
    t2.recording = false;
    auto y2 = linear(t2, t2.input(pooled), model.decoder);
    CHECK(y.val->data[0] == doctest::Approx(y2.val->data[0]).epsilon(1e-12));
}

TEST_CASE("mean pooling is permutation-invariant") {
    Rng rng(10);
    Tensor e({1, 5, 3});
    for (auto& v : e.data) v = rng.normal();
    Tensor perm({1, 5, 3});
    const std::size_t order[5] = {3, 0, 4, 2, 1};
    for (std::size_t l = 0; l < 5; ++l)
        for (std::size_t d = 0; d < 3; ++d) perm.data[l * 3 + d] = e.data[order[l] * 3 + d];
    Tape tape;
    tape.recording = false;
    auto a = mean_axis1(tape, tape.input(e));
    auto b = mean_axis1(tape, tape.input(perm));
    for (std::size_t d = 0; d < 3; ++d)
        CHECK(a.val->data[d] == doctest::Approx(b.val->data[d]).epsilon(1e-15));
}

TEST_CASE("a zeroed s4 block is the residual identity") {
    Rng rng(12);
    LyraConfig c;
    c.d_input = 2;
    c.d_model = 4;
    c.pgc_hiddens = {3};
    c.num_s4 = 1;
    c.d_state = 4;
    c.d_output = 1;
    auto model = build<double>(c, rng);
    auto& layer = model.s4_blocks[0].layer;
    for (auto& v : layer.kernel.C.value->data) v = 0.0;
    for (auto& v : layer.D.value->data) v = 0.0;
    for (auto& v : layer.b_out.value->data) v = 0.0;

    Rng data(13);
    auto x = random_input(1, 5, 2, data);

    // embeddings with the zeroed block
    Tape tape;
    tape.recording = false;
    Rng fw(1);
    Tensor emb;
    lyra_forward(tape, model, x, fw, false, &emb);

    // the PGC-stack output, reproduced from the same weights
    Tape t2;
    t2.recording = false;
    auto h = linear(t2, t2.input(x), model.encoder);
    h = pgc_forward(t2, h, model.pgc_blocks[0]);
    for (std::size_t i = 0; i < emb.size(); ++i)
        CHECK(emb.data[i] == doctest::Approx(h.val->data[i]).epsilon(1e-12));

    // with W_out zeroed as well, still the identity
    for (auto& v : layer.W_out.value->data) v = 0.0;
    Tape t3;
    t3.recording = false;
    Rng fw3(1);
    Tensor emb3;
    lyra_forward(t3, model, x, fw3, false, &emb3);
    for (std::size_t i = 0; i < emb3.size(); ++i)
        CHECK(emb3.data[i] == doctest::Approx(h.val->data[i]).epsilon(1e-12));
}

TEST_CASE("every parameter of a tiny model passes gradcheck") {
    Rng rng(14);
    LyraConfig c;
    c.d_input = 2;
    c.d_model = 4;
    c.pgc_hiddens = {3};
    c.num_s4 = 1;
    c.d_state = 4;
    c.d_output = 1;
    auto model = build<double>(c, rng);

    Rng data(15);
    auto x = random_input(2, 8, 2, data);
    Tensor target({2, 1});
    for (auto& v : target.data) v = data.normal();

    auto make_loss = [&](Tape& tape) {
        Rng fw(1);
        auto y = lyra_forward(tape, model, x, fw, false);
        return mse_loss(tape, y, target);
    };
    auto report = gradcheck(model.parameters(), make_loss);
    for (const auto& row : report.rows) {
        INFO("tensor ", row.name, " rel_err ", row.rel_err);
        CHECK(row.pass);
    }
    CHECK(report.all_pass);
}

TEST_CASE("gradcheck through training-mode dropout with a reseeded mask") {
    Rng rng(16);
    LyraConfig c;
    c.d_input = 2;
    c.d_model = 4;
    c.pgc_hiddens = {};
    c.num_s4 = 1;
    c.d_state = 4;
    c.d_output = 1;
    c.dropout = 0.25;
    c.final_dropout = 0.25;
    auto model = build<double>(c, rng);

    Rng data(17);
    auto x = random_input(2, 6, 2, data);
    Tensor target({2, 1});
    for (auto& v : target.data) v = data.normal();

    auto make_loss = [&](Tape& tape) {
        Rng fw(123);  // same mask on every evaluation
        auto y = lyra_forward(tape, model, x, fw, true);
        return mse_loss(tape, y, target);
    };
    auto report = gradcheck(model.parameters(), make_loss);
    CHECK(report.all_pass);
}

TEST_CASE("the corrupt-adjoint hook makes gradcheck fail") {
    Rng rng(18);
    LyraConfig c;
    c.d_input = 2;
    c.d_model = 4;
    c.pgc_hiddens = {3};
    c.num_s4 = 1;
    c.d_state = 4;
    c.d_output = 1;
    auto model = build<double>(c, rng);
    Rng data(19);
    auto x = random_input(1, 6, 2, data);
    Tensor target({1, 1}, {0.3});
    auto make_loss = [&](Tape& tape) {
        Rng fw(1);
        auto y = lyra_forward(tape, model, x, fw, false);
        return mse_loss(tape, y, target);
    };
    lyra::detail::corrupt_adjoint_flag() = true;
    auto report = gradcheck(model.parameters(), make_loss);
    lyra::detail::corrupt_adjoint_flag() = false;
    CHECK_FALSE(report.all_pass);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Rng rng(20);
    LyraConfig c;
    c.d_input = 3;
    c.d_model = 6;
    c.pgc_hiddens = {4};
    c.num_s4 = 1;
    c.d_state = 4;
    c.d_output = 2;
    auto model = build<double>(c, rng);
    const auto path = temp_path("roundtrip.ckpt");
    save_checkpoint(model, path);
    auto loaded = load_checkpoint<double>(path);

    auto pa = model.parameters();
    auto pb = loaded.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i].param->value->data == pb[i].param->value->data);

    Rng data(21);
    auto x = random_input(2, 5, 3, data);
    auto run = [&](LyraModel& m) {
        Tape tape;
        tape.recording = false;
        Rng fw(1);
        return lyra_forward(tape, m, x, fw, false).val->data;
    };
    CHECK(run(model) == run(loaded));  // bit-exact forward
    std::remove(path.c_str());
}

TEST_CASE("kernel dump emits 16 filters of length 96 with a sorted spectrum") {
    RunConfig cfg;
    cfg.model.d_input = 4;
    cfg.model.d_model = 16;
    cfg.model.pgc_hiddens = {};
    cfg.model.num_s4 = 1;
    cfg.model.d_state = 64;
    cfg.model.d_output = 1;
    cfg.output_dir = "/tmp/lyra_test_kernel";
    cfg.seed = 3;
    REQUIRE(run_kernel(cfg, 96, false, "") == 0);

    std::ifstream kf(cfg.output_dir + "/kernel.csv");
    REQUIRE(kf.good());
    std::string line;
    std::getline(kf, line);
    CHECK(line == "channel,t,value");
    std::size_t rows = 0, max_channel = 0, max_t = 0;
    while (std::getline(kf, line)) {
        ++rows;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        max_channel = std::max(max_channel, std::size_t(std::stoul(line.substr(0, c1))));
        max_t = std::max(max_t, std::size_t(std::stoul(line.substr(c1 + 1, c2 - c1 - 1))));
    }
    CHECK(rows == 16 * 96);
    CHECK(max_channel == 15);
    CHECK(max_t == 95);

    std::ifstream sf(cfg.output_dir + "/kernel_svd.csv");
    REQUIRE(sf.good());
    std::getline(sf, line);
    CHECK(line == "index,sigma");
    double prev = std::numeric_limits<double>::infinity();
    std::size_t n_sigma = 0;
    while (std::getline(sf, line)) {
        const double sigma = std::stod(line.substr(line.find(',') + 1));
        CHECK(sigma <= prev);  // non-increasing
        prev = sigma;
        ++n_sigma;
    }
    CHECK(n_sigma == 16);

    // the debug hook zeroes every kernel value
    REQUIRE(run_kernel(cfg, 96, true, "") == 0);
    std::ifstream zf(cfg.output_dir + "/kernel.csv");
    std::getline(zf, line);
    while (std::getline(zf, line))
        CHECK(std::stod(line.substr(line.rfind(',') + 1)) == 0.0);
}

TEST_CASE("checkpoint rejects bad magic, bad manifest, truncation") {
    Rng rng(22);
    LyraConfig c;
    c.d_input = 2;
    c.d_model = 4;
    c.pgc_hiddens = {};
    c.num_s4 = 1;
    c.d_state = 4;
    c.d_output = 1;
    auto model = build<double>(c, rng);
    const auto path = temp_path("negative.ckpt");
    save_checkpoint(model, path);

    auto read_all = [&]() {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    auto write_all = [&](const std::string& p, const std::string& bytes) {
        std::ofstream out(p, std::ios::binary);
        out.write(bytes.data(), std::streamsize(bytes.size()));
    };
    const std::string bytes = read_all();

    // version: clobber the magic
    {
        std::string bad = bytes;
        bad[4] = '9';
        const auto p = temp_path("bad_magic.ckpt");
        write_all(p, bad);
        try {
            load_checkpoint<double>(p);
            FAIL("expected a version error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointError::Kind::VersionMismatch);
        }
        std::remove(p.c_str());
    }

    // manifest: alter one declared shape
    {
        const auto header_end = bytes.find('\0', 6);
        REQUIRE(header_end != std::string::npos);
        auto header = nlohmann::json::parse(bytes.substr(6, header_end - 6));
        header["manifest"][0]["shape"] = {1, 1};
        const std::string bad =
            bytes.substr(0, 6) + header.dump() + std::string(1, '\0') + bytes.substr(header_end + 1);
        const auto p = temp_path("bad_manifest.ckpt");
        write_all(p, bad);
        try {
            load_checkpoint<double>(p);
            FAIL("expected a manifest error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointError::Kind::ManifestMismatch);
        }
        std::remove(p.c_str());
    }

    // truncation: drop the tail of the payload
    {
        const std::string bad = bytes.substr(0, bytes.size() - 16);
        const auto p = temp_path("truncated.ckpt");
        write_all(p, bad);
        try {
            load_checkpoint<double>(p);
            FAIL("expected a truncation error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointError::Kind::Truncated);
        }
        std::remove(p.c_str());
    }
    std::remove(path.c_str());
}
