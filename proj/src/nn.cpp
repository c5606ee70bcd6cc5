#include "pmfs/nn.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "pmfs/errors.hpp"
#include "pmfs/kernels.hpp"

namespace pmfs::nn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor init_weight(std::size_t out, std::size_t in, Rng& rng) {
    Tensor W = Tensor::matrix(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : W.values()) w = rng.uniform(-bound, bound);
    return W;
}

std::size_t layer_param_slots(const Layer& layer) {
    return std::holds_alternative<DenseLayer>(layer) ? 2 : 8;
}

void check_lr(double lr) {
    if (!(lr > 0.0)) {
        std::ostringstream os;
        os << "learning rate must be positive, got " << lr;
        throw ConfigError(os.str());
    }
}

} // namespace

std::size_t NetSpec::in_dim() const {
    if (layers.empty()) throw ConfigError("network spec has no layers");
    return layers.front().in;
}

std::size_t NetSpec::out_dim() const {
    if (layers.empty()) throw ConfigError("network spec has no layers");
    return layers.back().out;
}

std::size_t NetSpec::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerSpec::Kind::Dense)
            n += l.out * l.in + l.out;
        else
            n += 4 * (l.out * (l.in + l.out) + l.out);
    }
    return n;
}

void NetSpec::validate() const {
    if (layers.empty()) throw ConfigError("network spec has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].in == 0 || layers[i].out == 0) {
            std::ostringstream os;
            os << "layer " << i << " has zero dimension (" << layers[i].in << " -> "
               << layers[i].out << ")";
            throw ConfigError(os.str());
        }
        if (i + 1 < layers.size() && layers[i].out != layers[i + 1].in) {
            std::ostringstream os;
            os << "layer " << i << " outputs " << layers[i].out << " values but layer "
               << i + 1 << " expects " << layers[i + 1].in;
            throw ConfigError(os.str());
        }
    }
}

NetSpec NetSpec::dense_stack(std::size_t in, const std::vector<std::size_t>& hidden,
                             std::size_t out) {
    NetSpec spec;
    std::size_t cur = in;
    for (std::size_t h : hidden) {
        spec.layers.push_back({LayerSpec::Kind::Dense, cur, h, Activation::Tanh});
        cur = h;
    }
    spec.layers.push_back({LayerSpec::Kind::Dense, cur, out, Activation::Identity});
    return spec;
}

NetSpec NetSpec::lstm_stack(std::size_t in, const std::vector<std::size_t>& hidden,
                            std::size_t out) {
    NetSpec spec;
    std::size_t cur = in;
    for (std::size_t h : hidden) {
        spec.layers.push_back({LayerSpec::Kind::Lstm, cur, h, Activation::Tanh});
        cur = h;
    }
    spec.layers.push_back({LayerSpec::Kind::Dense, cur, out, Activation::Identity});
    return spec;
}

void Gradients::add_scaled(const Gradients& other, double s) {
    if (g.size() != other.g.size()) throw ShapeError("gradient lists differ in length");
    for (std::size_t i = 0; i < g.size(); ++i) {
        require_same_shape(g[i], other.g[i], "gradient accumulate");
        const double* src = other.g[i].data();
        double* dst = g[i].data();
        for (std::size_t j = 0; j < g[i].size(); ++j) dst[j] += s * src[j];
    }
}

void Gradients::scale(double s) {
    for (auto& t : g)
        for (auto& x : t.values()) x *= s;
}

void Gradients::zero() {
    for (auto& t : g) t.fill(0.0);
}

Network::Network(const NetSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    for (const auto& l : spec_.layers) {
        if (l.kind == LayerSpec::Kind::Dense) {
            DenseLayer d;
            d.W = init_weight(l.out, l.in, rng);
            d.b = Tensor::vector(l.out);
            d.act = l.act;
            layers_.emplace_back(std::move(d));
        } else {
            LstmLayer r;
            const std::size_t z = l.in + l.out;
            r.Wi = init_weight(l.out, z, rng);
            r.Wf = init_weight(l.out, z, rng);
            r.Wg = init_weight(l.out, z, rng);
            r.Wo = init_weight(l.out, z, rng);
            r.bi = Tensor::vector(l.out);
            r.bf = Tensor::vector(l.out, 1.0);
            r.bg = Tensor::vector(l.out);
            r.bo = Tensor::vector(l.out);
            layers_.emplace_back(std::move(r));
        }
    }
}

std::size_t Network::param_count() const { return spec_.param_count(); }

Tensor Network::forward(const Tensor& seq) const {
    Cache cache;
    return forward(seq, cache);
}

Tensor Network::forward(const Tensor& seq, Cache& cache) const {
    if (seq.rank() != 2 || seq.cols() != in_dim()) {
        std::ostringstream os;
        os << "network expects T x " << in_dim() << " input, got " << seq.shape_str();
        throw ShapeError(os.str());
    }
    const std::size_t T = seq.rows();
    cache.recs.clear();
    cache.steps = T;

    Tensor cur = seq;
    for (const auto& layer : layers_) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            const std::size_t od = d->out_dim();
            Tensor out = Tensor::matrix(T, od);
            for (std::size_t t = 0; t < T; ++t) {
                double* y = out.row(t);
                std::memcpy(y, d->b.data(), od * sizeof(double));
                kernels::gemv(d->W.data(), cur.row(t), y, od, d->in_dim(), true);
                if (d->act == Activation::Tanh)
                    for (std::size_t j = 0; j < od; ++j) y[j] = std::tanh(y[j]);
            }
            Cache::DenseRec rec;
            rec.input = std::move(cur);
            rec.output = out;
            cache.recs.emplace_back(std::move(rec));
            cur = std::move(out);
        } else {
            const auto& r = std::get<LstmLayer>(layer);
            const std::size_t hd = r.hidden_dim();
            const std::size_t id = r.in_dim();
            Cache::LstmRec rec;
            rec.h = Tensor::matrix(T, hd);
            rec.c = Tensor::matrix(T, hd);
            rec.gi = Tensor::matrix(T, hd);
            rec.gf = Tensor::matrix(T, hd);
            rec.gg = Tensor::matrix(T, hd);
            rec.go = Tensor::matrix(T, hd);
            rec.tc = Tensor::matrix(T, hd);
            std::vector<double> z(id + hd), a(hd);
            for (std::size_t t = 0; t < T; ++t) {
                std::memcpy(z.data(), cur.row(t), id * sizeof(double));
                if (t == 0)
                    std::memset(z.data() + id, 0, hd * sizeof(double));
                else
                    std::memcpy(z.data() + id, rec.h.row(t - 1), hd * sizeof(double));

                auto gate = [&](const Tensor& W, const Tensor& b, double* dst, bool tanh_gate) {
                    std::memcpy(a.data(), b.data(), hd * sizeof(double));
                    kernels::gemv(W.data(), z.data(), a.data(), hd, id + hd, true);
                    for (std::size_t j = 0; j < hd; ++j)
                        dst[j] = tanh_gate ? std::tanh(a[j]) : sigmoid(a[j]);
                };
                gate(r.Wi, r.bi, rec.gi.row(t), false);
                gate(r.Wf, r.bf, rec.gf.row(t), false);
                gate(r.Wg, r.bg, rec.gg.row(t), true);
                gate(r.Wo, r.bo, rec.go.row(t), false);

                const double* cprev = t == 0 ? nullptr : rec.c.row(t - 1);
                for (std::size_t j = 0; j < hd; ++j) {
                    const double cp = cprev ? cprev[j] : 0.0;
                    const double c = rec.gf(t, j) * cp + rec.gi(t, j) * rec.gg(t, j);
                    rec.c(t, j) = c;
                    rec.tc(t, j) = std::tanh(c);
                    rec.h(t, j) = rec.go(t, j) * rec.tc(t, j);
                }
            }
            rec.input = std::move(cur);
            cur = rec.h;
            cache.recs.emplace_back(std::move(rec));
        }
    }
    return cur;
}

Tensor Network::backward(const Cache& cache, const Tensor& dout, Gradients& grads,
                         std::size_t tbptt_window) const {
    if (cache.recs.size() != layers_.size())
        throw ShapeError("cache does not match network layout");
    if (grads.g.size() != params().size())
        throw ShapeError("gradient buffer does not match parameter list");

    std::vector<std::size_t> starts(layers_.size());
    std::size_t idx = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        starts[i] = idx;
        idx += layer_param_slots(layers_[i]);
    }

    const std::size_t T = cache.steps;
    Tensor dcur = dout;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const std::size_t base = starts[li];
        if (const auto* d = std::get_if<DenseLayer>(&layers_[li])) {
            const auto& rec = std::get<Cache::DenseRec>(cache.recs[li]);
            const std::size_t od = d->out_dim();
            const std::size_t id = d->in_dim();
            require_same_shape(dcur, rec.output, "dense layer output gradient");

            Tensor da = dcur;
            if (d->act == Activation::Tanh) {
                for (std::size_t t = 0; t < T; ++t) {
                    const double* y = rec.output.row(t);
                    double* g = da.row(t);
                    for (std::size_t j = 0; j < od; ++j) g[j] *= 1.0 - y[j] * y[j];
                }
            }

            Tensor dW = Tensor::matrix(od, id);
            kernels::matmul_tn(da.data(), rec.input.data(), dW.data(), od, T, id);
            double* gW = grads.g[base].data();
            for (std::size_t j = 0; j < dW.size(); ++j) gW[j] += dW[j];
            double* gb = grads.g[base + 1].data();
            for (std::size_t t = 0; t < T; ++t) {
                const double* g = da.row(t);
                for (std::size_t j = 0; j < od; ++j) gb[j] += g[j];
            }

            Tensor dx = Tensor::matrix(T, id);
            kernels::matmul(da.data(), d->W.data(), dx.data(), T, od, id);
            dcur = std::move(dx);
        } else {
            const auto& r = std::get<LstmLayer>(layers_[li]);
            const auto& rec = std::get<Cache::LstmRec>(cache.recs[li]);
            const std::size_t hd = r.hidden_dim();
            const std::size_t id = r.in_dim();
            require_same_shape(dcur, rec.h, "recurrent layer output gradient");

            Tensor dx = Tensor::matrix(T, id);
            std::vector<double> dh_next(hd, 0.0), dc_next(hd, 0.0);
            std::vector<double> z(id + hd), dz(id + hd);
            std::vector<double> dai(hd), daf(hd), dag(hd), dao(hd);

            for (std::size_t t = T; t-- > 0;) {
                std::memcpy(z.data(), rec.input.row(t), id * sizeof(double));
                if (t == 0)
                    std::memset(z.data() + id, 0, hd * sizeof(double));
                else
                    std::memcpy(z.data() + id, rec.h.row(t - 1), hd * sizeof(double));

                const double* cprev = t == 0 ? nullptr : rec.c.row(t - 1);
                for (std::size_t j = 0; j < hd; ++j) {
                    const double dh = dcur(t, j) + dh_next[j];
                    const double o = rec.go(t, j);
                    const double tc = rec.tc(t, j);
                    dao[j] = dh * tc * o * (1.0 - o);
                    const double dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                    const double gi = rec.gi(t, j);
                    const double gg = rec.gg(t, j);
                    const double gf = rec.gf(t, j);
                    dai[j] = dc * gg * gi * (1.0 - gi);
                    daf[j] = dc * (cprev ? cprev[j] : 0.0) * gf * (1.0 - gf);
                    dag[j] = dc * gi * (1.0 - gg * gg);
                    dc_next[j] = dc * gf;
                }

                kernels::outer_acc(dai.data(), z.data(), grads.g[base + 0].data(), hd, id + hd);
                kernels::outer_acc(daf.data(), z.data(), grads.g[base + 1].data(), hd, id + hd);
                kernels::outer_acc(dag.data(), z.data(), grads.g[base + 2].data(), hd, id + hd);
                kernels::outer_acc(dao.data(), z.data(), grads.g[base + 3].data(), hd, id + hd);
                for (std::size_t j = 0; j < hd; ++j) {
                    grads.g[base + 4][j] += dai[j];
                    grads.g[base + 5][j] += daf[j];
                    grads.g[base + 6][j] += dag[j];
                    grads.g[base + 7][j] += dao[j];
                }

                std::memset(dz.data(), 0, dz.size() * sizeof(double));
                kernels::gemv_t_acc(r.Wi.data(), dai.data(), dz.data(), hd, id + hd);
                kernels::gemv_t_acc(r.Wf.data(), daf.data(), dz.data(), hd, id + hd);
                kernels::gemv_t_acc(r.Wg.data(), dag.data(), dz.data(), hd, id + hd);
                kernels::gemv_t_acc(r.Wo.data(), dao.data(), dz.data(), hd, id + hd);

                std::memcpy(dx.row(t), dz.data(), id * sizeof(double));
                std::memcpy(dh_next.data(), dz.data() + id, hd * sizeof(double));

                if (tbptt_window > 0 && t % tbptt_window == 0) {
                    std::fill(dh_next.begin(), dh_next.end(), 0.0);
                    std::fill(dc_next.begin(), dc_next.end(), 0.0);
                }
            }
            dcur = std::move(dx);
        }
    }
    return dcur;
}

std::vector<Tensor*> Network::params() {
    std::vector<Tensor*> out;
    for (auto& layer : layers_) {
        if (auto* d = std::get_if<DenseLayer>(&layer)) {
            out.push_back(&d->W);
            out.push_back(&d->b);
        } else {
            auto& r = std::get<LstmLayer>(layer);
            out.push_back(&r.Wi);
            out.push_back(&r.Wf);
            out.push_back(&r.Wg);
            out.push_back(&r.Wo);
            out.push_back(&r.bi);
            out.push_back(&r.bf);
            out.push_back(&r.bg);
            out.push_back(&r.bo);
        }
    }
    return out;
}

std::vector<const Tensor*> Network::params() const {
    std::vector<const Tensor*> out;
    for (const auto& layer : layers_) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            out.push_back(&d->W);
            out.push_back(&d->b);
        } else {
            const auto& r = std::get<LstmLayer>(layer);
            out.push_back(&r.Wi);
            out.push_back(&r.Wf);
            out.push_back(&r.Wg);
            out.push_back(&r.Wo);
            out.push_back(&r.bi);
            out.push_back(&r.bf);
            out.push_back(&r.bg);
            out.push_back(&r.bo);
        }
    }
    return out;
}

std::vector<const Tensor*> Network::weight_matrices() const {
    std::vector<const Tensor*> out;
    for (const auto& layer : layers_) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            out.push_back(&d->W);
        } else {
            const auto& r = std::get<LstmLayer>(layer);
            out.push_back(&r.Wi);
            out.push_back(&r.Wf);
            out.push_back(&r.Wg);
            out.push_back(&r.Wo);
        }
    }
    return out;
}

Gradients Network::zero_gradients() const {
    Gradients grads;
    for (const Tensor* p : params()) grads.g.emplace_back(p->shape());
    return grads;
}

void LossConfig::validate() const {
    if (lambda_reg < 0.0 || lambda_phi < 0.0 || lambda_psi < 0.0)
        throw ConfigError("loss weights must be non-negative");
}

double loss_mse_l2(const Tensor& pred, const Tensor& target,
                   std::span<const Tensor* const> encoder_weights,
                   std::span<const Tensor* const> decoder_weights,
                   const LossConfig& cfg) {
    require_same_shape(pred, target, "loss");
    cfg.validate();
    const std::size_t n = pred.rows();
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        mse += d * d;
    }
    mse /= static_cast<double>(n);

    auto sq_norm = [](std::span<const Tensor* const> ws) {
        double s = 0.0;
        for (const Tensor* w : ws)
            for (std::size_t i = 0; i < w->size(); ++i) s += (*w)[i] * (*w)[i];
        return s;
    };
    const double reg = cfg.lambda_reg * (cfg.lambda_phi * sq_norm(encoder_weights) +
                                         cfg.lambda_psi * sq_norm(decoder_weights));
    return mse + reg;
}

Tensor mse_output_gradient(const Tensor& pred, const Tensor& target, std::size_t n_samples) {
    require_same_shape(pred, target, "loss gradient");
    if (n_samples == 0) throw ShapeError("loss gradient needs at least one sample");
    Tensor g(pred.shape());
    const double s = 2.0 / static_cast<double>(n_samples);
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = s * (pred[i] - target[i]);
    return g;
}

void add_l2_gradient(const Network& net, const LossConfig& cfg, WeightRole role,
                     Gradients& grads) {
    const double lam = role == WeightRole::Encoder ? cfg.lambda_phi : cfg.lambda_psi;
    const double s = 2.0 * cfg.lambda_reg * lam;
    if (s == 0.0) return;
    std::size_t gi = 0;
    for (const auto& layer : net.layers()) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            double* g = grads.g[gi].data();
            for (std::size_t j = 0; j < d->W.size(); ++j) g[j] += s * d->W[j];
            gi += 2;
        } else {
            const auto& r = std::get<LstmLayer>(layer);
            const Tensor* ws[4] = {&r.Wi, &r.Wf, &r.Wg, &r.Wo};
            for (std::size_t k = 0; k < 4; ++k) {
                double* g = grads.g[gi + k].data();
                for (std::size_t j = 0; j < ws[k]->size(); ++j) g[j] += s * (*ws[k])[j];
            }
            gi += 8;
        }
    }
}

Gradients network_gradients(const Network& net, const Tensor& input, const Tensor& target,
                            const LossConfig& cfg, WeightRole role,
                            std::size_t tbptt_window) {
    Cache cache;
    const Tensor pred = net.forward(input, cache);
    Gradients grads = net.zero_gradients();
    const Tensor dout = mse_output_gradient(pred, target, input.rows());
    net.backward(cache, dout, grads, tbptt_window);
    add_l2_gradient(net, cfg, role, grads);
    return grads;
}

AdamState::AdamState(const std::vector<const Tensor*>& params, AdamConfig cfg) : cfg_(cfg) {
    for (const Tensor* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void AdamState::step(const std::vector<Tensor*>& params, const Gradients& grads, double lr) {
    check_lr(lr);
    if (params.size() != m_.size() || grads.g.size() != m_.size())
        throw ShapeError("optimizer state does not match parameter list");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(*params[i], m_[i], "optimizer step");
        require_same_shape(grads.g[i], m_[i], "optimizer step");
        double* p = params[i]->data();
        const double* g = grads.g[i].data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (std::size_t j = 0; j < m_[i].size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

} // namespace pmfs::nn
