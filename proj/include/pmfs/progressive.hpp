#ifndef PMFS_PROGRESSIVE_HPP
#define PMFS_PROGRESSIVE_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pmfs/dataio.hpp"
#include "pmfs/nn.hpp"
#include "pmfs/pod.hpp"
#include "pmfs/tensor.hpp"

namespace pmfs::progressive {

enum class EncoderKind { DensePerStep, Lstm, PodThenLstm };

std::string encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& name);

/// Declares one fidelity level before training. Network shapes may be given
/// as hidden-node lists (a final linear readout is appended) or as explicit
/// layer chains via the override specs.
struct LevelSpec {
    std::size_t index = 0;
    EncoderKind kind = EncoderKind::Lstm;
    std::size_t d_in = 0;
    std::size_t d_h = 0;
    std::vector<std::size_t> encoder_nodes;
    std::vector<std::size_t> decoder_nodes;
    std::size_t input_pod_modes = 0;  // PodThenLstm: fixed mode count, 0 = energy rule
    double input_pod_energy = 0.9;
    nn::NetSpec encoder_override;
    nn::NetSpec decoder_override;
};

/// One trained fidelity level. Frozen after training; lower levels are never
/// touched again.
struct Level {
    LevelSpec spec;
    nn::Network encoder;
    nn::Network decoder;
    data::ScalerStats input_scaler;
    pod::PodBasis input_pod; // PodThenLstm only
    bool frozen = false;
    double final_loss = 0.0;
};

struct TrainConfig {
    double lr = 1e-3;
    nn::LossConfig loss;
    std::size_t epochs = 3000;
    // trajectories per optimizer step; the default means all of them
    std::size_t batch = std::numeric_limits<std::size_t>::max();
    std::uint64_t seed = 0;
    std::size_t tbptt_window = 0;

    void validate() const;
};

/// Additive multi-fidelity surrogate. Levels are trained strictly in order;
/// each new level learns a correction on top of the frozen sum below it. All
/// decoders predict in "model space": standardized output channels, which are
/// POD coefficients of the target fields when the output basis is active.
class ProgressiveModel {
public:
    /// Builds the output representation from the training window of the
    /// dataset: optional POD over target rows, then per-channel
    /// standardization. Must run before the first level is trained.
    void fit_output_space(const data::MultiFidelityDataset& ds, bool use_pod,
                          std::size_t pod_modes = 0, double pod_energy = 1.0);

    bool output_space_ready() const { return out_ready_; }
    bool output_pod_active() const { return out_pod_active_; }
    const pod::PodBasis& output_pod() const { return out_pod_; }
    const data::ScalerStats& output_scaler() const { return out_scaler_; }
    /// Width of the decoder target: coefficient count or channel count.
    std::size_t model_dim() const;
    /// Width of the physical output rows.
    std::size_t physical_dim() const { return d_out_; }

    std::size_t n_levels() const { return levels_.size(); }
    const Level& level(std::size_t l) const;
    Level& mutable_level(std::size_t l) { return levels_[l]; }
    void append_level(Level level) { levels_.push_back(std::move(level)); }

    /// Physical target rows -> model space (POD projection + standardize).
    Tensor to_model_space(const Tensor& y_rows) const;
    /// Model space -> output units (inverse standardize; POD coefficients
    /// when the output basis is active, physical channels otherwise).
    Tensor unstandardize(const Tensor& rows) const;
    /// Output units -> physical rows (POD reconstruction when active).
    Tensor coeffs_to_physical(const Tensor& rows) const;
    Tensor to_physical(const Tensor& rows) const { return coeffs_to_physical(unstandardize(rows)); }

    /// Scaled-and-projected encoder input for level l (raw rows in, net input out).
    Tensor encoder_input(std::size_t l, const Tensor& x_raw) const;
    /// Latent sequence h^(l) for raw input rows.
    Tensor encode(std::size_t l, const Tensor& x_raw) const;

    /// Model-space predictions [y^(0), ..., y^(lbar)]. inputs[j] must be
    /// non-null for j <= lbar; higher entries (or a shorter vector) are
    /// ignored entirely.
    std::vector<Tensor> predict_levels(const std::vector<const Tensor*>& inputs,
                                       std::size_t lbar) const;

    /// Trains the next level (spec.index must equal n_levels()) on the
    /// dataset's training window and appends it frozen. Lower levels provide
    /// cached latents and the cached previous prediction; their parameters
    /// are never written. Returns the final epoch's loss.
    double train_level(const LevelSpec& spec, const data::MultiFidelityDataset& ds,
                       const TrainConfig& cfg);

    /// Deserialization hook: installs a previously fitted output space.
    void restore_output_space(bool use_pod, pod::PodBasis basis, data::ScalerStats scaler,
                              std::size_t d_out);

private:
    std::vector<Level> levels_;
    bool out_ready_ = false;
    bool out_pod_active_ = false;
    pod::PodBasis out_pod_;
    data::ScalerStats out_scaler_;
    std::size_t d_out_ = 0;
};

struct Ensemble {
    std::vector<ProgressiveModel> members;
    std::vector<std::uint64_t> seeds;

    std::size_t size() const { return members.size(); }
};

/// Pointwise mean and sample standard deviation (m-1 normalization; zero for
/// a single member) in output units.
struct EnsembleStats {
    Tensor mean;
    Tensor std;
};

using ModelBuilder = std::function<ProgressiveModel(std::uint64_t seed)>;

/// Runs the builder for seeds base_seed + 0..m-1. Members may train in
/// parallel (PMFS_THREADS caps the worker count); failures are collected and
/// reported together with their seeds.
Ensemble train_ensemble(const ModelBuilder& builder, std::size_t m, std::uint64_t base_seed);

/// Member predictions at level lbar, reduced pointwise. Predictions are
/// un-standardized before the moments are taken.
EnsembleStats ensemble_stats(const Ensemble& ens, const std::vector<const Tensor*>& inputs,
                             std::size_t lbar);

void save_model(const std::string& path, const ProgressiveModel& model);
ProgressiveModel load_model(const std::string& path);
void save_ensemble(const std::string& path, const Ensemble& ens);
Ensemble load_ensemble(const std::string& path);

} // namespace pmfs::progressive

#endif
