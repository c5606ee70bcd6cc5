#include "pmfs/progressive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <numeric>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"

#include "pmfs/errors.hpp"
#include "pmfs/kernels.hpp"
#include "pmfs/rng.hpp"

namespace pmfs::progressive {

using nlohmann::json;

std::string encoder_kind_name(EncoderKind k) {
    switch (k) {
        case EncoderKind::DensePerStep: return "dense";
        case EncoderKind::Lstm: return "lstm";
        case EncoderKind::PodThenLstm: return "pod_lstm";
    }
    throw ConfigError("unknown encoder kind");
}

EncoderKind encoder_kind_from_name(const std::string& name) {
    if (name == "dense") return EncoderKind::DensePerStep;
    if (name == "lstm") return EncoderKind::Lstm;
    if (name == "pod_lstm") return EncoderKind::PodThenLstm;
    throw ConfigError("unknown encoder kind '" + name + "' (expected dense, lstm or pod_lstm)");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive and finite");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch == 0) throw ConfigError("batch size must be >= 1");
    loss.validate();
}

namespace {

Tensor hconcat(const Tensor& a, const Tensor& b) {
    if (a.empty()) return b;
    if (a.rows() != b.rows())
        throw ShapeError("cannot concatenate sequences with " + std::to_string(a.rows()) +
                         " and " + std::to_string(b.rows()) + " steps");
    const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor out({n, ca + cb});
    for (std::size_t i = 0; i < n; ++i) {
        std::memcpy(out.data() + i * (ca + cb), a.data() + i * ca, ca * sizeof(double));
        std::memcpy(out.data() + i * (ca + cb) + ca, b.data() + i * cb, cb * sizeof(double));
    }
    return out;
}

Tensor last_cols(const Tensor& t, std::size_t n) {
    const std::size_t rows = t.rows(), cols = t.cols();
    if (n > cols) throw ShapeError("cannot take " + std::to_string(n) + " trailing columns of " + t.shape_str());
    Tensor out({rows, n});
    for (std::size_t i = 0; i < rows; ++i)
        std::memcpy(out.data() + i * n, t.data() + i * cols + (cols - n), n * sizeof(double));
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "elementwise add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "elementwise subtract");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

Tensor head_rows(const Tensor& t, std::size_t n) {
    Tensor out({n, t.cols()});
    std::memcpy(out.data(), t.data(), n * t.cols() * sizeof(double));
    return out;
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = jobs;
    if (const char* env = std::getenv("PMFS_THREADS")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0' || v == 0)
            throw ConfigError("PMFS_THREADS must be a positive integer");
        n = std::min<std::size_t>(n, v);
    }
    return std::max<std::size_t>(n, 1);
}

} // namespace

void ProgressiveModel::fit_output_space(const data::MultiFidelityDataset& ds, bool use_pod,
                                        std::size_t pod_modes, double pod_energy) {
    ds.validate();
    if (!levels_.empty()) throw OrderingError("output space must be fitted before any level is trained");

    std::size_t d = 0, n_rows = 0;
    for (const auto& s : ds.samples) {
        d = s.target.cols();
        for (std::size_t k = 0; k < s.steps(); ++k)
            if (ds.in_train_window(s.times[k])) ++n_rows;
    }
    if (n_rows == 0) throw DataError("dataset has no rows inside the training window");

    Tensor rows({n_rows, d});
    std::size_t r = 0;
    for (const auto& s : ds.samples)
        for (std::size_t k = 0; k < s.steps(); ++k)
            if (ds.in_train_window(s.times[k]))
                std::memcpy(rows.data() + (r++) * d, s.target.data() + k * d, d * sizeof(double));

    d_out_ = d;
    out_pod_active_ = use_pod;
    if (use_pod) {
        const double target = pod_modes > 0 ? 1.0 : pod_energy;
        out_pod_ = pod::pod_fit(rows, pod_modes, target);
        out_scaler_ = data::fit_scaler(out_pod_.project(rows), data::ScalerStats::Mode::Standardize);
    } else {
        out_pod_ = pod::PodBasis{};
        out_scaler_ = data::fit_scaler(rows, data::ScalerStats::Mode::Standardize);
    }
    out_ready_ = true;
}

void ProgressiveModel::restore_output_space(bool use_pod, pod::PodBasis basis,
                                            data::ScalerStats scaler, std::size_t d_out) {
    out_pod_active_ = use_pod;
    out_pod_ = std::move(basis);
    out_scaler_ = std::move(scaler);
    d_out_ = d_out;
    out_ready_ = true;
}

std::size_t ProgressiveModel::model_dim() const {
    if (!out_ready_) throw OrderingError("output space has not been fitted");
    return out_scaler_.channels();
}

const Level& ProgressiveModel::level(std::size_t l) const {
    if (l >= levels_.size())
        throw AvailabilityError("level " + std::to_string(l) + " is not trained (model has " +
                                std::to_string(levels_.size()) + " levels)");
    return levels_[l];
}

Tensor ProgressiveModel::to_model_space(const Tensor& y_rows) const {
    if (!out_ready_) throw OrderingError("output space has not been fitted");
    if (y_rows.cols() != d_out_)
        throw ShapeError("output rows have " + std::to_string(y_rows.cols()) +
                         " channels, expected " + std::to_string(d_out_));
    if (out_pod_active_) return data::apply_scaler(out_scaler_, out_pod_.project(y_rows));
    return data::apply_scaler(out_scaler_, y_rows);
}

Tensor ProgressiveModel::unstandardize(const Tensor& rows) const {
    if (!out_ready_) throw OrderingError("output space has not been fitted");
    return data::invert_scaler(out_scaler_, rows);
}

Tensor ProgressiveModel::coeffs_to_physical(const Tensor& rows) const {
    if (!out_ready_) throw OrderingError("output space has not been fitted");
    if (out_pod_active_) return out_pod_.reconstruct(rows);
    return rows;
}

Tensor ProgressiveModel::encoder_input(std::size_t l, const Tensor& x_raw) const {
    const Level& lv = level(l);
    if (x_raw.cols() != lv.spec.d_in)
        throw ShapeError("level " + std::to_string(l) + " input has " +
                         std::to_string(x_raw.cols()) + " channels but the level expects " +
                         std::to_string(lv.spec.d_in));
    Tensor scaled = data::apply_scaler(lv.input_scaler, x_raw);
    if (lv.spec.kind == EncoderKind::PodThenLstm) return lv.input_pod.project(scaled);
    return scaled;
}

Tensor ProgressiveModel::encode(std::size_t l, const Tensor& x_raw) const {
    return level(l).encoder.forward(encoder_input(l, x_raw));
}

std::vector<Tensor> ProgressiveModel::predict_levels(const std::vector<const Tensor*>& inputs,
                                                     std::size_t lbar) const {
    if (lbar >= levels_.size())
        throw AvailabilityError("level " + std::to_string(lbar) + " is not trained (model has " +
                                std::to_string(levels_.size()) + " levels)");
    for (std::size_t j = 0; j <= lbar; ++j)
        if (j >= inputs.size() || inputs[j] == nullptr)
            throw AvailabilityError("input for level " + std::to_string(j) + " is missing");

    std::vector<Tensor> preds;
    preds.reserve(lbar + 1);
    Tensor htot;
    for (std::size_t l = 0; l <= lbar; ++l) {
        htot = hconcat(htot, encode(l, *inputs[l]));
        Tensor correction = levels_[l].decoder.forward(htot);
        preds.push_back(l == 0 ? std::move(correction) : add(preds.back(), correction));
    }
    return preds;
}

double ProgressiveModel::train_level(const LevelSpec& spec, const data::MultiFidelityDataset& ds,
                                     const TrainConfig& cfg) {
    cfg.validate();
    if (!out_ready_) throw OrderingError("output space must be fitted before training a level");
    if (spec.index != levels_.size())
        throw OrderingError("cannot train level " + std::to_string(spec.index) + ": model has " +
                            std::to_string(levels_.size()) + " trained levels");
    ds.validate();
    const std::size_t l = spec.index;
    if (ds.n_levels <= l)
        throw ConfigError("dataset provides " + std::to_string(ds.n_levels) +
                          " levels, cannot train level " + std::to_string(l));
    if (spec.d_h == 0) throw ConfigError("latent width d_h must be >= 1");

    struct Slice {
        std::vector<Tensor> x; // raw training rows per level 0..l
        Tensor target_model;   // training target in model space
    };
    std::vector<Slice> slices;
    for (const auto& s : ds.samples) {
        std::size_t n_k = 0;
        while (n_k < s.steps() && ds.in_train_window(s.times[n_k])) ++n_k;
        if (n_k == 0) continue;
        Slice sl;
        sl.x.reserve(l + 1);
        for (std::size_t j = 0; j <= l; ++j) sl.x.push_back(head_rows(s.level_inputs[j], n_k));
        if (sl.x[l].cols() != spec.d_in)
            throw ConfigError("level " + std::to_string(l) + " input has " +
                              std::to_string(sl.x[l].cols()) + " channels but the spec declares " +
                              std::to_string(spec.d_in));
        sl.x[l].require_finite("level " + std::to_string(l) + " training input");
        sl.target_model = to_model_space(head_rows(s.target, n_k));
        slices.push_back(std::move(sl));
    }
    if (slices.empty()) throw DataError("dataset has no rows inside the training window");

    Level lv;
    lv.spec = spec;

    {
        std::size_t total = 0;
        for (const auto& sl : slices) total += sl.x[l].rows();
        Tensor stacked({total, spec.d_in});
        std::size_t r = 0;
        for (const auto& sl : slices) {
            std::memcpy(stacked.data() + r * spec.d_in, sl.x[l].data(),
                        sl.x[l].size() * sizeof(double));
            r += sl.x[l].rows();
        }
        lv.input_scaler = data::fit_scaler(stacked, data::ScalerStats::Mode::MinMax);
        if (spec.kind == EncoderKind::PodThenLstm) {
            Tensor scaled = data::apply_scaler(lv.input_scaler, stacked);
            const double target = spec.input_pod_modes > 0 ? 1.0 : spec.input_pod_energy;
            lv.input_pod = pod::pod_fit(scaled, spec.input_pod_modes, target);
        }
    }

    const std::size_t enc_in =
        spec.kind == EncoderKind::PodThenLstm ? lv.input_pod.n_modes() : spec.d_in;
    nn::NetSpec enc_spec;
    if (!spec.encoder_override.layers.empty()) {
        enc_spec = spec.encoder_override;
        enc_spec.validate();
        if (enc_spec.in_dim() != enc_in || enc_spec.out_dim() != spec.d_h)
            throw ConfigError("encoder for level " + std::to_string(l) + " must map " +
                              std::to_string(enc_in) + " -> " + std::to_string(spec.d_h) +
                              " but the given layers map " + std::to_string(enc_spec.in_dim()) +
                              " -> " + std::to_string(enc_spec.out_dim()));
    } else if (spec.kind == EncoderKind::DensePerStep) {
        enc_spec = nn::NetSpec::dense_stack(enc_in, spec.encoder_nodes, spec.d_h);
    } else {
        enc_spec = nn::NetSpec::lstm_stack(enc_in, spec.encoder_nodes, spec.d_h);
    }

    std::size_t d_h_tot = spec.d_h;
    for (const auto& lower : levels_) d_h_tot += lower.spec.d_h;
    const std::size_t d_model = model_dim();
    nn::NetSpec dec_spec;
    if (!spec.decoder_override.layers.empty()) {
        dec_spec = spec.decoder_override;
        dec_spec.validate();
        if (dec_spec.in_dim() != d_h_tot || dec_spec.out_dim() != d_model)
            throw ConfigError("decoder for level " + std::to_string(l) + " must map " +
                              std::to_string(d_h_tot) + " -> " + std::to_string(d_model) +
                              " but the given layers map " + std::to_string(dec_spec.in_dim()) +
                              " -> " + std::to_string(dec_spec.out_dim()));
    } else {
        dec_spec = nn::NetSpec::lstm_stack(d_h_tot, spec.decoder_nodes, d_model);
    }

    Rng root(cfg.seed);
    Rng init_rng = root.fork(2 * l);
    lv.encoder = nn::Network(enc_spec, init_rng);
    lv.decoder = nn::Network(dec_spec, init_rng);

    // Fixed per-sample caches: scaled/projected inputs, frozen latents from the
    // levels below, and the residual left over by the frozen prediction.
    const std::size_t n_s = slices.size();
    std::vector<Tensor> xin(n_s), prefix(n_s), residual(n_s);
    for (std::size_t i = 0; i < n_s; ++i) {
        const Slice& sl = slices[i];
        Tensor scaled = data::apply_scaler(lv.input_scaler, sl.x[l]);
        xin[i] = spec.kind == EncoderKind::PodThenLstm ? lv.input_pod.project(scaled)
                                                       : std::move(scaled);
        if (l == 0) {
            residual[i] = sl.target_model;
            continue;
        }
        Tensor htot, prev;
        for (std::size_t j = 0; j < l; ++j) {
            htot = hconcat(htot, encode(j, sl.x[j]));
            Tensor correction = levels_[j].decoder.forward(htot);
            prev = j == 0 ? std::move(correction) : add(prev, correction);
        }
        prefix[i] = std::move(htot);
        residual[i] = sub(sl.target_model, prev);
    }

    nn::AdamState adam_enc(std::as_const(lv.encoder).params());
    nn::AdamState adam_dec(std::as_const(lv.decoder).params());
    std::vector<nn::Gradients> enc_g(n_s), dec_g(n_s);
    for (std::size_t i = 0; i < n_s; ++i) {
        enc_g[i] = lv.encoder.zero_gradients();
        dec_g[i] = lv.decoder.zero_gradients();
    }

    const std::size_t batch = std::min(cfg.batch, n_s);
    std::vector<std::size_t> order(n_s);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.fork(2 * l + 1);

    bool parallel = kernels::backend() == kernels::Backend::OpenMP && kernels::max_threads() > 1;
#ifdef _OPENMP
    if (omp_in_parallel()) parallel = false;
#endif
    (void)parallel;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < n_s) {
            for (std::size_t i = n_s - 1; i > 0; --i) {
                const auto j = static_cast<std::size_t>(shuffle_rng.uniform() * double(i + 1));
                std::swap(order[i], order[std::min(j, i)]);
            }
        }
        for (std::size_t start = 0; start < n_s; start += batch) {
            const std::size_t stop = std::min(start + batch, n_s);
            std::size_t n_rows = 0;
            for (std::size_t b = start; b < stop; ++b) n_rows += xin[order[b]].rows();

            std::vector<std::exception_ptr> errs(stop - start);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = order[b];
                try {
                    enc_g[i].zero();
                    dec_g[i].zero();
                    nn::Cache ec, dc;
                    Tensor h = lv.encoder.forward(xin[i], ec);
                    Tensor htot = hconcat(prefix[i], h);
                    Tensor p = lv.decoder.forward(htot, dc);
                    if (!p.all_finite())
                        throw NumericError("training diverged at level " + std::to_string(l) +
                                           ", epoch " + std::to_string(epoch));
                    Tensor dout = nn::mse_output_gradient(p, residual[i], n_rows);
                    Tensor dhtot = lv.decoder.backward(dc, dout, dec_g[i], cfg.tbptt_window);
                    Tensor dh = last_cols(dhtot, spec.d_h);
                    lv.encoder.backward(ec, dh, enc_g[i], cfg.tbptt_window);
                } catch (...) {
                    errs[b - start] = std::current_exception();
                }
            }
            for (const auto& e : errs)
                if (e) std::rethrow_exception(e);

            nn::Gradients enc_sum = lv.encoder.zero_gradients();
            nn::Gradients dec_sum = lv.decoder.zero_gradients();
            for (std::size_t b = start; b < stop; ++b) {
                enc_sum.add_scaled(enc_g[order[b]], 1.0);
                dec_sum.add_scaled(dec_g[order[b]], 1.0);
            }
            nn::add_l2_gradient(lv.encoder, cfg.loss, nn::WeightRole::Encoder, enc_sum);
            nn::add_l2_gradient(lv.decoder, cfg.loss, nn::WeightRole::Decoder, dec_sum);
            adam_enc.step(lv.encoder.params(), enc_sum, cfg.lr);
            adam_dec.step(lv.decoder.params(), dec_sum, cfg.lr);
        }
    }

    double sq = 0.0;
    std::size_t all_rows = 0;
    for (std::size_t i = 0; i < n_s; ++i) {
        Tensor p = lv.decoder.forward(hconcat(prefix[i], lv.encoder.forward(xin[i])));
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double e = p.data()[k] - residual[i].data()[k];
            sq += e * e;
        }
        all_rows += p.rows();
    }
    double reg = 0.0;
    for (const Tensor* w : lv.encoder.weight_matrices())
        reg += cfg.loss.lambda_phi * std::inner_product(w->data(), w->data() + w->size(),
                                                        w->data(), 0.0);
    for (const Tensor* w : lv.decoder.weight_matrices())
        reg += cfg.loss.lambda_psi * std::inner_product(w->data(), w->data() + w->size(),
                                                        w->data(), 0.0);
    lv.final_loss = sq / double(all_rows) + cfg.loss.lambda_reg * reg;
    lv.frozen = true;
    levels_.push_back(std::move(lv));
    return levels_.back().final_loss;
}

Ensemble train_ensemble(const ModelBuilder& builder, std::size_t m, std::uint64_t base_seed) {
    if (m == 0) throw ConfigError("ensemble size must be >= 1");
    Ensemble ens;
    ens.members.resize(m);
    ens.seeds.resize(m);
    for (std::size_t i = 0; i < m; ++i) ens.seeds[i] = base_seed + i;

    std::vector<std::exception_ptr> errs(m);
    const std::size_t workers = worker_count(m);
    bool parallel = workers > 1;
#ifdef _OPENMP
    if (omp_in_parallel()) parallel = false;
#endif
    (void)parallel;
    (void)workers;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(int(workers)) if (parallel)
#endif
    for (std::size_t i = 0; i < m; ++i) {
        try {
            ens.members[i] = builder(ens.seeds[i]);
        } catch (...) {
            errs[i] = std::current_exception();
        }
    }

    std::string failed, first_msg;
    for (std::size_t i = 0; i < m; ++i) {
        if (!errs[i]) continue;
        if (!failed.empty()) failed += ", ";
        failed += std::to_string(ens.seeds[i]);
        if (first_msg.empty()) {
            try {
                std::rethrow_exception(errs[i]);
            } catch (const std::exception& ex) {
                first_msg = ex.what();
            } catch (...) {
                first_msg = "unknown error";
            }
        }
    }
    if (!failed.empty())
        throw Error("ensemble training failed for seeds " + failed + ": " + first_msg);
    return ens;
}

EnsembleStats ensemble_stats(const Ensemble& ens, const std::vector<const Tensor*>& inputs,
                             std::size_t lbar) {
    if (ens.members.empty()) throw ConfigError("ensemble has no members");
    const std::size_t m = ens.members.size();
    std::vector<Tensor> outs;
    outs.reserve(m);
    for (const auto& member : ens.members) {
        Tensor u = member.unstandardize(member.predict_levels(inputs, lbar).back());
        if (!outs.empty()) require_same_shape(outs.front(), u, "ensemble member predictions");
        outs.push_back(std::move(u));
    }

    EnsembleStats stats;
    stats.mean = Tensor(outs.front().shape(), 0.0);
    stats.std = Tensor(outs.front().shape(), 0.0);
    for (const Tensor& u : outs)
        for (std::size_t k = 0; k < u.size(); ++k) stats.mean.data()[k] += u.data()[k];
    for (std::size_t k = 0; k < stats.mean.size(); ++k) stats.mean.data()[k] /= double(m);
    if (m > 1) {
        for (const Tensor& u : outs)
            for (std::size_t k = 0; k < u.size(); ++k) {
                const double d = u.data()[k] - stats.mean.data()[k];
                stats.std.data()[k] += d * d;
            }
        for (std::size_t k = 0; k < stats.std.size(); ++k)
            stats.std.data()[k] = std::sqrt(stats.std.data()[k] / double(m - 1));
    }
    return stats;
}

namespace {

json layers_to_json(const nn::NetSpec& spec) {
    json arr = json::array();
    for (const auto& ls : spec.layers) {
        arr.push_back({{"type", ls.kind == nn::LayerSpec::Kind::Lstm ? "lstm" : "dense"},
                       {"in", ls.in},
                       {"out", ls.out},
                       {"act", ls.act == nn::Activation::Tanh ? "tanh" : "identity"}});
    }
    return arr;
}

nn::NetSpec layers_from_json(const json& arr) {
    nn::NetSpec spec;
    for (const auto& e : arr) {
        nn::LayerSpec ls;
        const std::string type = e.at("type").get<std::string>();
        if (type == "lstm") ls.kind = nn::LayerSpec::Kind::Lstm;
        else if (type == "dense") ls.kind = nn::LayerSpec::Kind::Dense;
        else throw FormatError("unknown layer type '" + type + "' in model archive");
        ls.in = e.at("in").get<std::size_t>();
        ls.out = e.at("out").get<std::size_t>();
        const std::string act = e.at("act").get<std::string>();
        if (act == "tanh") ls.act = nn::Activation::Tanh;
        else if (act == "identity") ls.act = nn::Activation::Identity;
        else throw FormatError("unknown activation '" + act + "' in model archive");
        spec.layers.push_back(ls);
    }
    spec.validate();
    return spec;
}

Tensor scaler_deg_tensor(const data::ScalerStats& s) {
    Tensor t({s.degenerate.size()});
    for (std::size_t i = 0; i < s.degenerate.size(); ++i) t[i] = double(s.degenerate[i]);
    return t;
}

void add_scaler(data::ArchiveWriter& w, const std::string& prefix, const data::ScalerStats& s) {
    w.add_tensor(prefix + "/lo", s.lo);
    w.add_tensor(prefix + "/span", s.span);
    w.add_tensor(prefix + "/deg", scaler_deg_tensor(s));
}

data::ScalerStats read_scaler(const data::ArchiveReader& r, const std::string& prefix,
                              data::ScalerStats::Mode mode) {
    data::ScalerStats s;
    s.mode = mode;
    s.lo = r.tensor(prefix + "/lo");
    s.span = r.tensor(prefix + "/span");
    Tensor deg = r.tensor(prefix + "/deg");
    s.degenerate.resize(deg.size());
    for (std::size_t i = 0; i < deg.size(); ++i) s.degenerate[i] = deg[i] != 0.0;
    return s;
}

void add_pod(data::ArchiveWriter& w, const std::string& prefix, const pod::PodBasis& b) {
    w.add_tensor(prefix + "/mean", b.mean);
    w.add_tensor(prefix + "/modes", b.modes);
    w.add_tensor(prefix + "/sv", b.singular_values);
    w.add_tensor(prefix + "/energy", Tensor({1}, std::vector<double>{b.total_energy}));
}

pod::PodBasis read_pod(const data::ArchiveReader& r, const std::string& prefix) {
    pod::PodBasis b;
    b.mean = r.tensor(prefix + "/mean");
    b.modes = r.tensor(prefix + "/modes");
    b.singular_values = r.tensor(prefix + "/sv");
    b.total_energy = r.tensor(prefix + "/energy")[0];
    return b;
}

json model_structure_json(const ProgressiveModel& m) {
    json levels = json::array();
    for (std::size_t l = 0; l < m.n_levels(); ++l) {
        const Level& lv = m.level(l);
        levels.push_back({{"index", lv.spec.index},
                          {"kind", encoder_kind_name(lv.spec.kind)},
                          {"d_in", lv.spec.d_in},
                          {"d_h", lv.spec.d_h},
                          {"encoder_nodes", lv.spec.encoder_nodes},
                          {"decoder_nodes", lv.spec.decoder_nodes},
                          {"input_pod_modes", lv.spec.input_pod_modes},
                          {"input_pod_energy", lv.spec.input_pod_energy},
                          {"encoder", layers_to_json(lv.encoder.spec())},
                          {"decoder", layers_to_json(lv.decoder.spec())},
                          {"final_loss", lv.final_loss}});
    }
    return json{{"d_out", m.physical_dim()},
                {"output_pod", m.output_pod_active()},
                {"levels", levels}};
}

void write_shared_blocks(data::ArchiveWriter& w, const ProgressiveModel& m) {
    add_scaler(w, "out/scaler", m.output_scaler());
    if (m.output_pod_active()) add_pod(w, "out/pod", m.output_pod());
    for (std::size_t l = 0; l < m.n_levels(); ++l) {
        const Level& lv = m.level(l);
        const std::string p = "l" + std::to_string(l);
        add_scaler(w, p + "/in_scaler", lv.input_scaler);
        if (lv.spec.kind == EncoderKind::PodThenLstm) add_pod(w, p + "/in_pod", lv.input_pod);
    }
}

void write_member_params(data::ArchiveWriter& w, const ProgressiveModel& m,
                         const std::string& prefix) {
    for (std::size_t l = 0; l < m.n_levels(); ++l) {
        const Level& lv = m.level(l);
        const std::string p = prefix + "l" + std::to_string(l);
        auto enc = std::as_const(lv.encoder).params();
        for (std::size_t j = 0; j < enc.size(); ++j)
            w.add_tensor(p + "/enc/p" + std::to_string(j), *enc[j]);
        auto dec = std::as_const(lv.decoder).params();
        for (std::size_t j = 0; j < dec.size(); ++j)
            w.add_tensor(p + "/dec/p" + std::to_string(j), *dec[j]);
    }
}

void load_params(const data::ArchiveReader& r, nn::Network& net, const std::string& prefix) {
    auto params = net.params();
    for (std::size_t j = 0; j < params.size(); ++j) {
        Tensor t = r.tensor(prefix + "/p" + std::to_string(j));
        if (t.shape() != params[j]->shape())
            throw FormatError("parameter block " + prefix + "/p" + std::to_string(j) +
                              " has shape " + t.shape_str() + ", expected " +
                              params[j]->shape_str());
        *params[j] = std::move(t);
    }
}

ProgressiveModel read_model(const data::ArchiveReader& r, const json& meta,
                            const std::string& param_prefix) {
    ProgressiveModel m;
    const bool use_pod = meta.at("output_pod").get<bool>();
    pod::PodBasis out_pod;
    if (use_pod) out_pod = read_pod(r, "out/pod");
    m.restore_output_space(use_pod, std::move(out_pod),
                           read_scaler(r, "out/scaler", data::ScalerStats::Mode::Standardize),
                           meta.at("d_out").get<std::size_t>());

    for (const auto& lj : meta.at("levels")) {
        Level lv;
        lv.spec.index = lj.at("index").get<std::size_t>();
        lv.spec.kind = encoder_kind_from_name(lj.at("kind").get<std::string>());
        lv.spec.d_in = lj.at("d_in").get<std::size_t>();
        lv.spec.d_h = lj.at("d_h").get<std::size_t>();
        lv.spec.encoder_nodes = lj.at("encoder_nodes").get<std::vector<std::size_t>>();
        lv.spec.decoder_nodes = lj.at("decoder_nodes").get<std::vector<std::size_t>>();
        lv.spec.input_pod_modes = lj.at("input_pod_modes").get<std::size_t>();
        lv.spec.input_pod_energy = lj.at("input_pod_energy").get<double>();
        lv.final_loss = lj.at("final_loss").get<double>();
        lv.frozen = true;

        const std::string p = "l" + std::to_string(lv.spec.index);
        lv.input_scaler = read_scaler(r, p + "/in_scaler", data::ScalerStats::Mode::MinMax);
        if (lv.spec.kind == EncoderKind::PodThenLstm) lv.input_pod = read_pod(r, p + "/in_pod");

        Rng dummy(0);
        lv.encoder = nn::Network(layers_from_json(lj.at("encoder")), dummy);
        lv.decoder = nn::Network(layers_from_json(lj.at("decoder")), dummy);
        load_params(r, lv.encoder, param_prefix + p + "/enc");
        load_params(r, lv.decoder, param_prefix + p + "/dec");
        m.append_level(std::move(lv));
    }
    return m;
}

json parse_meta(const data::ArchiveReader& r, const std::string& expected_format) {
    json meta;
    try {
        meta = json::parse(r.json("meta"));
    } catch (const json::exception& ex) {
        throw FormatError(std::string("model archive meta block is not valid JSON: ") + ex.what());
    }
    const std::string format = meta.value("format", "");
    if (format != expected_format)
        throw FormatError("archive format is '" + format + "', expected '" + expected_format + "'");
    return meta;
}

} // namespace

void save_model(const std::string& path, const ProgressiveModel& model) {
    if (!model.output_space_ready()) throw OrderingError("cannot save a model without a fitted output space");
    data::ArchiveWriter w(data::ArchiveKind::Model);
    json meta = model_structure_json(model);
    meta["format"] = "progressive-model";
    meta["version"] = 1;
    w.add_json("meta", meta.dump(2));
    write_shared_blocks(w, model);
    write_member_params(w, model, "");
    w.write(path);
}

ProgressiveModel load_model(const std::string& path) {
    data::ArchiveReader r(path);
    if (r.kind() != data::ArchiveKind::Model)
        throw FormatError("archive at " + path + " does not hold a model");
    json meta = parse_meta(r, "progressive-model");
    try {
        return read_model(r, meta, "");
    } catch (const json::exception& ex) {
        throw FormatError(std::string("model archive meta block is malformed: ") + ex.what());
    }
}

void save_ensemble(const std::string& path, const Ensemble& ens) {
    if (ens.members.empty()) throw ConfigError("cannot save an empty ensemble");
    if (ens.seeds.size() != ens.members.size())
        throw ConfigError("ensemble seed list does not match the member count");
    for (const auto& m : ens.members)
        if (m.n_levels() != ens.members.front().n_levels())
            throw ConfigError("ensemble members disagree on the level count");

    data::ArchiveWriter w(data::ArchiveKind::Ensemble);
    json meta = model_structure_json(ens.members.front());
    meta["format"] = "progressive-ensemble";
    meta["version"] = 1;
    meta["members"] = ens.members.size();
    meta["seeds"] = ens.seeds;
    w.add_json("meta", meta.dump(2));
    write_shared_blocks(w, ens.members.front());
    for (std::size_t k = 0; k < ens.members.size(); ++k)
        write_member_params(w, ens.members[k], "m" + std::to_string(k) + "/");
    w.write(path);
}

Ensemble load_ensemble(const std::string& path) {
    data::ArchiveReader r(path);
    if (r.kind() != data::ArchiveKind::Ensemble)
        throw FormatError("archive at " + path + " does not hold an ensemble");
    json meta = parse_meta(r, "progressive-ensemble");
    try {
        Ensemble ens;
        const auto m = meta.at("members").get<std::size_t>();
        ens.seeds = meta.at("seeds").get<std::vector<std::uint64_t>>();
        if (ens.seeds.size() != m)
            throw FormatError("ensemble archive seed list does not match the member count");
        ens.members.reserve(m);
        for (std::size_t k = 0; k < m; ++k)
            ens.members.push_back(read_model(r, meta, "m" + std::to_string(k) + "/"));
        return ens;
    } catch (const json::exception& ex) {
        throw FormatError(std::string("ensemble archive meta block is malformed: ") + ex.what());
    }
}

} // namespace pmfs::progressive
