#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "pmfs/nn.hpp"
#include "pmfs/rng.hpp"
#include "pmfs/tensor.hpp"

using namespace pmfs;
using nn::Activation;
using nn::LayerSpec;
using nn::NetSpec;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor random_seq(std::size_t T, std::size_t d, Rng& rng) {
    Tensor t = Tensor::matrix(T, d);
    for (auto& x : t.values()) x = rng.uniform(-1.0, 1.0);
    return t;
}

double loss_of(const nn::Network& net, const Tensor& in, const Tensor& tgt,
               const nn::LossConfig& cfg, nn::WeightRole role) {
    auto ws = net.weight_matrices();
    std::span<const Tensor* const> all(ws.data(), ws.size());
    std::span<const Tensor* const> none;
    if (role == nn::WeightRole::Encoder)
        return nn::loss_mse_l2(net.forward(in), tgt, all, none, cfg);
    return nn::loss_mse_l2(net.forward(in), tgt, none, all, cfg);
}

/// Largest absolute gap between backprop and central differences, relative to
/// the largest gradient magnitude.
double max_gradient_discrepancy(nn::Network& net, const Tensor& in, const Tensor& tgt,
                                const nn::LossConfig& cfg, nn::WeightRole role) {
    const nn::Gradients grads = nn::network_gradients(net, in, tgt, cfg, role);
    auto params = net.params();
    double gmax = 1e-12;
    for (const auto& t : grads.g)
        for (double v : t.values()) gmax = std::max(gmax, std::abs(v));

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i]->size(); ++j) {
            double& p = (*params[i])[j];
            const double orig = p;
            p = orig + h;
            const double lp = loss_of(net, in, tgt, cfg, role);
            p = orig - h;
            const double lm = loss_of(net, in, tgt, cfg, role);
            p = orig;
            const double fd = (lp - lm) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - grads.g[i][j]) / gmax);
        }
    }
    return worst;
}

void zero_params(nn::Network& net) {
    for (Tensor* p : net.params()) p->fill(0.0);
}

} // namespace

TEST_CASE("spec builders chain dimensions and count parameters") {
    NetSpec dense = NetSpec::dense_stack(2, {8}, 3);
    CHECK(dense.layers.size() == 2);
    CHECK(dense.in_dim() == 2);
    CHECK(dense.out_dim() == 3);
    CHECK(dense.param_count() == (8 * 2 + 8) + (3 * 8 + 3));
    CHECK(dense.layers.back().act == Activation::Identity);

    NetSpec lstm = NetSpec::lstm_stack(3, {5}, 2);
    CHECK(lstm.layers.size() == 2);
    CHECK(lstm.layers[0].kind == LayerSpec::Kind::Lstm);
    CHECK(lstm.param_count() == 4 * (5 * (3 + 5) + 5) + (2 * 5 + 2));

    CHECK_NOTHROW(dense.validate());
    CHECK_NOTHROW(lstm.validate());
}

TEST_CASE("stacked recurrent layers accept matching widths") {
    NetSpec spec = NetSpec::lstm_stack(1, {20, 20}, 1);
    Rng rng(3);
    nn::Network net(spec, rng);
    Tensor out = net.forward(random_seq(7, 1, rng));
    CHECK(out.rows() == 7);
    CHECK(out.cols() == 1);
    out.require_finite("stacked output");
}

TEST_CASE("spec validation rejects broken chains") {
    NetSpec spec;
    spec.layers.push_back({LayerSpec::Kind::Dense, 4, 2, Activation::Tanh});
    spec.layers.push_back({LayerSpec::Kind::Dense, 3, 1, Activation::Identity});
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find('2') != std::string::npos);
        CHECK(msg.find('3') != std::string::npos);
    }

    NetSpec zero;
    zero.layers.push_back({LayerSpec::Kind::Dense, 0, 2, Activation::Tanh});
    CHECK_THROWS_AS(zero.validate(), ConfigError);

    NetSpec empty;
    CHECK_THROWS_AS(empty.in_dim(), ConfigError);
    CHECK_THROWS_AS(empty.validate(), ConfigError);
}

TEST_CASE("initialization respects fan-in bounds and forget bias") {
    NetSpec spec = NetSpec::lstm_stack(2, {3}, 2);
    Rng rng(11);
    nn::Network net(spec, rng);

    const auto& r = std::get<nn::LstmLayer>(net.layers()[0]);
    const double bound = 1.0 / std::sqrt(5.0);
    for (const Tensor* W : {&r.Wi, &r.Wf, &r.Wg, &r.Wo})
        for (double w : W->values()) CHECK(std::abs(w) <= bound);
    for (double b : r.bf.values()) CHECK(b == 1.0);
    for (double b : r.bi.values()) CHECK(b == 0.0);
    for (double b : r.bg.values()) CHECK(b == 0.0);
    for (double b : r.bo.values()) CHECK(b == 0.0);

    const auto& d = std::get<nn::DenseLayer>(net.layers()[1]);
    const double dbound = 1.0 / std::sqrt(3.0);
    for (double w : d.W.values()) CHECK(std::abs(w) <= dbound);
    for (double b : d.b.values()) CHECK(b == 0.0);
}

TEST_CASE("same seed gives identical networks") {
    NetSpec spec = NetSpec::lstm_stack(2, {4}, 3);
    Rng r1(99), r2(99);
    nn::Network a(spec, r1), b(spec, r2);
    auto pa = a.params(), pb = b.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::memcmp(pa[i]->data(), pb[i]->data(), pa[i]->size() * sizeof(double)) == 0);
}

TEST_CASE("dense layer over a sequence matches per-row arithmetic") {
    NetSpec spec;
    spec.layers.push_back({LayerSpec::Kind::Dense, 2, 2, Activation::Identity});
    Rng rng(1);
    nn::Network net(spec, rng);
    auto& d = std::get<nn::DenseLayer>(net.layers()[0]);
    d.W = Tensor({2, 2}, {1, 2, 3, 4});
    d.b = Tensor({2}, {0.5, -0.5});

    Tensor in({3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor out = net.forward(in);
    CHECK(out(0, 0) == 1.5);
    CHECK(out(0, 1) == 2.5);
    CHECK(out(1, 0) == 2.5);
    CHECK(out(1, 1) == 3.5);
    CHECK(out(2, 0) == 3.5);
    CHECK(out(2, 1) == 6.5);

    d.act = Activation::Tanh;
    Tensor out2 = net.forward(in);
    CHECK(out2(2, 1) == std::tanh(6.5));
}

TEST_CASE("recurrent forward matches hand-computed two-step recursion") {
    NetSpec spec;
    spec.layers.push_back({LayerSpec::Kind::Lstm, 1, 1, Activation::Tanh});
    Rng rng(1);
    nn::Network net(spec, rng);
    auto& r = std::get<nn::LstmLayer>(net.layers()[0]);
    for (Tensor* W : {&r.Wi, &r.Wf, &r.Wg, &r.Wo}) W->fill(1.0);
    for (Tensor* b : {&r.bi, &r.bf, &r.bg, &r.bo}) b->fill(1.0);

    Tensor in({2, 1}, {1.0, 0.5});
    Tensor out = net.forward(in);

    // step 1: all gate preactivations are x + h_prev + 1 = 2
    const double i1 = sigmoid(2.0);
    const double c1 = i1 * std::tanh(2.0);
    const double h1 = i1 * std::tanh(c1);
    CHECK(out(0, 0) == doctest::Approx(h1).epsilon(1e-15));

    // step 2: preactivations are 0.5 + h1 + 1
    const double a2 = 0.5 + h1 + 1.0;
    const double i2 = sigmoid(a2);
    const double c2 = i2 * c1 + i2 * std::tanh(a2);
    const double h2 = i2 * std::tanh(c2);
    CHECK(out(1, 0) == doctest::Approx(h2).epsilon(1e-15));
}

TEST_CASE("all-zero parameters map any sequence to zero") {
    NetSpec spec = NetSpec::lstm_stack(2, {3}, 2);
    Rng rng(5);
    nn::Network net(spec, rng);
    zero_params(net);
    Tensor out = net.forward(random_seq(6, 2, rng));
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("wrong input width raises a shape error") {
    NetSpec spec = NetSpec::dense_stack(3, {4}, 2);
    Rng rng(2);
    nn::Network net(spec, rng);
    CHECK_THROWS_AS(net.forward(Tensor::matrix(5, 2)), ShapeError);
}

TEST_CASE("loss on a single unit-error sample") {
    Tensor pred({1, 2}, {1.0, 1.0});
    Tensor target({1, 2}, {0.0, 0.0});
    nn::LossConfig cfg;
    CHECK(nn::loss_mse_l2(pred, target, {}, {}, cfg) == 2.0);
}

TEST_CASE("loss averages over rows and sums over columns") {
    Tensor pred({2, 2}, {1.0, 1.0, 3.0, 0.0});
    Tensor target({2, 2}, {0.0, 0.0, 1.0, 0.0});
    nn::LossConfig cfg;
    // ((1+1) + 4) / 2 = 3
    CHECK(nn::loss_mse_l2(pred, target, {}, {}, cfg) == 3.0);
}

TEST_CASE("loss splits into data and penalty parts") {
    NetSpec spec = NetSpec::lstm_stack(2, {3}, 2);
    Rng rng(13);
    nn::Network net(spec, rng);
    Tensor in = random_seq(5, 2, rng);
    Tensor tgt = random_seq(5, 2, rng);

    nn::LossConfig cfg;
    cfg.lambda_reg = 1e-3;
    cfg.lambda_phi = 0.7;

    auto ws = net.weight_matrices();
    std::span<const Tensor* const> enc(ws.data(), ws.size());
    const double total = nn::loss_mse_l2(net.forward(in), tgt, enc, {}, cfg);

    nn::LossConfig plain;
    const double mse = nn::loss_mse_l2(net.forward(in), tgt, {}, {}, plain);
    double wsq = 0.0;
    for (const Tensor* W : ws)
        for (double w : W->values()) wsq += w * w;
    CHECK(total == doctest::Approx(mse + cfg.lambda_reg * cfg.lambda_phi * wsq).epsilon(1e-12));
}

TEST_CASE("loss rejects negative weights and shape mismatches") {
    nn::LossConfig bad;
    bad.lambda_reg = -1.0;
    Tensor a = Tensor::matrix(1, 1);
    CHECK_THROWS_AS(nn::loss_mse_l2(a, a, {}, {}, bad), ConfigError);
    CHECK_THROWS_AS(nn::loss_mse_l2(Tensor::matrix(2, 2), Tensor::matrix(2, 3), {}, {}, {}),
                    ShapeError);
}

TEST_CASE("backprop matches central differences on a dense stack") {
    NetSpec spec = NetSpec::dense_stack(2, {8}, 3);
    Rng rng(21);
    nn::Network net(spec, rng);
    Tensor in = random_seq(5, 2, rng);
    Tensor tgt = random_seq(5, 3, rng);
    nn::LossConfig cfg;
    CHECK(max_gradient_discrepancy(net, in, tgt, cfg, nn::WeightRole::Encoder) < 1e-6);
}

TEST_CASE("backprop matches central differences on a recurrent stack") {
    NetSpec spec = NetSpec::lstm_stack(3, {5}, 2);
    Rng rng(22);
    nn::Network net(spec, rng);
    Tensor in = random_seq(6, 3, rng);
    Tensor tgt = random_seq(6, 2, rng);
    nn::LossConfig cfg;
    CHECK(max_gradient_discrepancy(net, in, tgt, cfg, nn::WeightRole::Decoder) < 1e-6);
}

TEST_CASE("backprop matches central differences with the penalty active") {
    NetSpec spec = NetSpec::lstm_stack(2, {4}, 2);
    Rng rng(23);
    nn::Network net(spec, rng);
    Tensor in = random_seq(4, 2, rng);
    Tensor tgt = random_seq(4, 2, rng);
    nn::LossConfig cfg;
    cfg.lambda_reg = 1e-2;
    cfg.lambda_phi = 0.5;
    cfg.lambda_psi = 2.0;
    CHECK(max_gradient_discrepancy(net, in, tgt, cfg, nn::WeightRole::Encoder) < 1e-6);
    CHECK(max_gradient_discrepancy(net, in, tgt, cfg, nn::WeightRole::Decoder) < 1e-6);
}

TEST_CASE("backprop matches central differences on a deep mixed stack") {
    NetSpec spec;
    spec.layers.push_back({LayerSpec::Kind::Dense, 3, 4, Activation::Tanh});
    spec.layers.push_back({LayerSpec::Kind::Lstm, 4, 3, Activation::Tanh});
    spec.layers.push_back({LayerSpec::Kind::Lstm, 3, 3, Activation::Tanh});
    spec.layers.push_back({LayerSpec::Kind::Dense, 3, 2, Activation::Identity});
    Rng rng(24);
    nn::Network net(spec, rng);
    Tensor in = random_seq(5, 3, rng);
    Tensor tgt = random_seq(5, 2, rng);
    nn::LossConfig cfg;
    cfg.lambda_reg = 1e-3;
    CHECK(max_gradient_discrepancy(net, in, tgt, cfg, nn::WeightRole::Encoder) < 1e-6);
}

TEST_CASE("at a perfect fit only the penalty gradient remains") {
    NetSpec spec = NetSpec::lstm_stack(2, {3}, 2);
    Rng rng(31);
    nn::Network net(spec, rng);
    Tensor in = random_seq(4, 2, rng);
    Tensor tgt = net.forward(in);

    nn::LossConfig cfg;
    cfg.lambda_reg = 1e-4;
    cfg.lambda_phi = 2.5;
    nn::Gradients grads =
        nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder);

    // weight slots carry exactly 2 * lambda_reg * lambda_phi * w, biases zero
    const double s = 2.0 * cfg.lambda_reg * cfg.lambda_phi;
    const auto& r = std::get<nn::LstmLayer>(net.layers()[0]);
    const Tensor* ws[4] = {&r.Wi, &r.Wf, &r.Wg, &r.Wo};
    for (int k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < ws[k]->size(); ++j)
            CHECK(grads.g[k][j] == s * (*ws[k])[j]);
    for (int k = 4; k < 8; ++k)
        for (double v : grads.g[k].values()) CHECK(v == 0.0);
    const auto& d = std::get<nn::DenseLayer>(net.layers()[1]);
    for (std::size_t j = 0; j < d.W.size(); ++j) CHECK(grads.g[8][j] == s * d.W[j]);
    for (double v : grads.g[9].values()) CHECK(v == 0.0);
}

TEST_CASE("gradients are deterministic") {
    NetSpec spec = NetSpec::lstm_stack(2, {4}, 2);
    Rng rng(41);
    nn::Network net(spec, rng);
    Tensor in = random_seq(5, 2, rng);
    Tensor tgt = random_seq(5, 2, rng);
    nn::LossConfig cfg;
    cfg.lambda_reg = 1e-3;
    auto g1 = nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder);
    auto g2 = nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder);
    for (std::size_t i = 0; i < g1.g.size(); ++i)
        CHECK(std::memcmp(g1.g[i].data(), g2.g[i].data(),
                          g1.g[i].size() * sizeof(double)) == 0);
}

TEST_CASE("window at or beyond the sequence reproduces full backpropagation") {
    NetSpec spec = NetSpec::lstm_stack(2, {4}, 2);
    Rng rng(42);
    nn::Network net(spec, rng);
    Tensor in = random_seq(6, 2, rng);
    Tensor tgt = random_seq(6, 2, rng);
    nn::LossConfig cfg;

    auto full = nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder, 0);
    auto same = nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder, 6);
    auto wide = nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder, 10);
    for (std::size_t i = 0; i < full.g.size(); ++i) {
        CHECK(std::memcmp(full.g[i].data(), same.g[i].data(),
                          full.g[i].size() * sizeof(double)) == 0);
        CHECK(std::memcmp(full.g[i].data(), wide.g[i].data(),
                          full.g[i].size() * sizeof(double)) == 0);
    }

    auto cut = nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder, 1);
    bool differs = false;
    for (std::size_t i = 0; i < full.g.size() && !differs; ++i)
        for (std::size_t j = 0; j < full.g[i].size() && !differs; ++j)
            differs = full.g[i][j] != cut.g[i][j];
    CHECK(differs);
}

TEST_CASE("gradient buffers combine linearly") {
    NetSpec spec = NetSpec::dense_stack(2, {3}, 1);
    Rng rng(43);
    nn::Network net(spec, rng);
    Tensor in = random_seq(3, 2, rng);
    Tensor tgt = random_seq(3, 1, rng);
    nn::LossConfig cfg;

    auto a = nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder);
    auto b = net.zero_gradients();
    b.add_scaled(a, 2.0);
    b.add_scaled(a, -2.0);
    for (const auto& t : b.g)
        for (double v : t.values()) CHECK(v == 0.0);

    a.scale(0.0);
    for (const auto& t : a.g)
        for (double v : t.values()) CHECK(v == 0.0);
}

TEST_CASE("first optimizer step matches the closed form") {
    Tensor p = Tensor::vector(1, 0.0);
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> cparams{&p};
    nn::AdamState adam(cparams);
    nn::Gradients g;
    g.g.emplace_back(std::vector<std::size_t>{1}, std::vector<double>{1.0});

    adam.step(params, g, 0.1);
    CHECK(p[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(adam.t() == 1);
}

TEST_CASE("zero gradient leaves parameters untouched") {
    Tensor p = Tensor::vector(3, 1.25);
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> cparams{&p};
    nn::AdamState adam(cparams);
    nn::Gradients g;
    g.g.emplace_back(std::vector<std::size_t>{3});

    adam.step(params, g, 0.5);
    adam.step(params, g, 0.5);
    for (double v : p.values()) CHECK(v == 1.25);
    CHECK(adam.t() == 2);
}

TEST_CASE("optimizer rejects non-positive learning rates") {
    Tensor p = Tensor::vector(1);
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> cparams{&p};
    nn::AdamState adam(cparams);
    nn::Gradients g;
    g.g.emplace_back(std::vector<std::size_t>{1});
    CHECK_THROWS_AS(adam.step(params, g, 0.0), ConfigError);
    CHECK_THROWS_AS(adam.step(params, g, -1e-3), ConfigError);
}

TEST_CASE("a short optimization run reduces the loss") {
    NetSpec spec = NetSpec::dense_stack(1, {8}, 1);
    Rng rng(55);
    nn::Network net(spec, rng);

    Tensor in = Tensor::matrix(16, 1);
    Tensor tgt = Tensor::matrix(16, 1);
    for (std::size_t i = 0; i < 16; ++i) {
        in(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / 15.0;
        tgt(i, 0) = 0.5 * in(i, 0);
    }

    nn::LossConfig cfg;
    auto cp = net.params();
    std::vector<const Tensor*> cparams(cp.begin(), cp.end());
    nn::AdamState adam(cparams);
    const double before = loss_of(net, in, tgt, cfg, nn::WeightRole::Encoder);
    for (int epoch = 0; epoch < 400; ++epoch) {
        auto g = nn::network_gradients(net, in, tgt, cfg, nn::WeightRole::Encoder);
        adam.step(net.params(), g, 1e-2);
    }
    const double after = loss_of(net, in, tgt, cfg, nn::WeightRole::Encoder);
    CHECK(after < before);
    CHECK(after < 1e-3);
}
