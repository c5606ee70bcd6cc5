#ifndef PMFS_NN_HPP
#define PMFS_NN_HPP

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pmfs/rng.hpp"
#include "pmfs/tensor.hpp"

namespace pmfs::nn {

enum class Activation { Tanh, Identity };

/// Fully connected layer applied independently to every row of a sequence.
struct DenseLayer {
    Tensor W; // out x in
    Tensor b; // out
    Activation act = Activation::Tanh;

    std::size_t in_dim() const { return W.cols(); }
    std::size_t out_dim() const { return W.rows(); }
};

/// Single LSTM layer. Gate weights act on [x_t ; h_{t-1}]; gate order is
/// input, forget, cell candidate, output. Initial hidden/cell state is zero.
struct LstmLayer {
    Tensor Wi, Wf, Wg, Wo; // each hidden x (in + hidden)
    Tensor bi, bf, bg, bo; // each hidden

    std::size_t hidden_dim() const { return Wi.rows(); }
    std::size_t in_dim() const { return Wi.cols() - Wi.rows(); }
};

using Layer = std::variant<DenseLayer, LstmLayer>;

struct LayerSpec {
    enum class Kind { Dense, Lstm };
    Kind kind = Kind::Dense;
    std::size_t in = 0;
    std::size_t out = 0; // hidden size for LSTM
    Activation act = Activation::Tanh;
};

/// Ordered layer descriptors; adjacent dimensions must chain.
struct NetSpec {
    std::vector<LayerSpec> layers;

    std::size_t in_dim() const;
    std::size_t out_dim() const;
    std::size_t param_count() const;
    void validate() const;

    static NetSpec dense_stack(std::size_t in, const std::vector<std::size_t>& hidden,
                               std::size_t out);
    static NetSpec lstm_stack(std::size_t in, const std::vector<std::size_t>& hidden,
                              std::size_t out);
};

/// Per-layer forward records needed for backpropagation.
struct Cache;

/// Parameter-shaped gradient buffers, aligned with Network::params() order.
struct Gradients {
    std::vector<Tensor> g;

    void add_scaled(const Gradients& other, double s);
    void scale(double s);
    void zero();
};

class Network {
public:
    Network() = default;
    /// Builds the network with seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)]
    /// weights; biases zero except LSTM forget-gate biases at 1.
    Network(const NetSpec& spec, Rng& rng);

    const NetSpec& spec() const { return spec_; }
    std::size_t in_dim() const { return spec_.in_dim(); }
    std::size_t out_dim() const { return spec_.out_dim(); }
    std::size_t param_count() const;

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    /// Maps a T x in sequence to a T x out sequence. Dense layers act on each
    /// row independently; LSTM layers run their recurrence from zero state.
    Tensor forward(const Tensor& seq) const;
    Tensor forward(const Tensor& seq, Cache& cache) const;

    /// Given dL/d(output sequence), accumulates parameter gradients and
    /// returns dL/d(input sequence). When tbptt_window > 0, recurrent state
    /// gradients are cut at window boundaries (truncated BPTT).
    Tensor backward(const Cache& cache, const Tensor& dout, Gradients& grads,
                    std::size_t tbptt_window = 0) const;

    /// Parameters in fixed order (per layer: dense W, b; LSTM Wi,Wf,Wg,Wo,bi,bf,bg,bo).
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    /// Weight matrices only (biases excluded); the L2 penalty acts on these.
    std::vector<const Tensor*> weight_matrices() const;

    Gradients zero_gradients() const;

private:
    NetSpec spec_;
    std::vector<Layer> layers_;
};

struct Cache {
    struct DenseRec {
        Tensor input;  // T x in
        Tensor output; // T x out (post-activation)
    };
    struct LstmRec {
        Tensor input;          // T x in
        Tensor h, c;           // T x hidden
        Tensor gi, gf, gg, go; // T x hidden (post-nonlinearity gate values)
        Tensor tc;             // T x hidden, tanh(c_t)
    };
    std::vector<std::variant<DenseRec, LstmRec>> recs;
    std::size_t steps = 0;
};

/// Loss weights: total = MSE + lambda_reg * (lambda_phi |W_enc|^2 + lambda_psi |W_dec|^2).
struct LossConfig {
    double lambda_reg = 0.0;
    double lambda_phi = 1.0;
    double lambda_psi = 1.0;
    void validate() const;
};

enum class WeightRole { Encoder, Decoder };

/// Mean over rows of the squared residual norm, plus the L2 penalty over the
/// given weight matrices.
double loss_mse_l2(const Tensor& pred, const Tensor& target,
                   std::span<const Tensor* const> encoder_weights,
                   std::span<const Tensor* const> decoder_weights,
                   const LossConfig& cfg);

/// dL/dpred for the MSE part with normalization constant n_samples.
Tensor mse_output_gradient(const Tensor& pred, const Tensor& target, std::size_t n_samples);

/// Adds 2 * lambda_reg * lambda_role * W to the gradient of every weight
/// matrix of the network (biases untouched).
void add_l2_gradient(const Network& net, const LossConfig& cfg, WeightRole role,
                     Gradients& grads);

/// Exact gradient of loss_mse_l2(net(input), target) w.r.t. the network
/// parameters, by backpropagation (through time for LSTM layers).
Gradients network_gradients(const Network& net, const Tensor& input, const Tensor& target,
                            const LossConfig& cfg, WeightRole role,
                            std::size_t tbptt_window = 0);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers mirror the parameter list.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const std::vector<const Tensor*>& params, AdamConfig cfg = {});

    void step(const std::vector<Tensor*>& params, const Gradients& grads, double lr);

    std::int64_t t() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<Tensor>& first_moment() const { return m_; }
    const std::vector<Tensor>& second_moment() const { return v_; }

private:
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
    AdamConfig cfg_;
};

} // namespace pmfs::nn

#endif
