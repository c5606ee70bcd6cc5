#ifndef PMFS_DATAIO_HPP
#define PMFS_DATAIO_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pmfs/tensor.hpp"

namespace pmfs::data {

struct SampleMeta {
    std::string id;
    double mu = 0.0;
    std::size_t segment = 0;
};

/// One trajectory: aligned input sequences for every fidelity level plus the
/// high-fidelity target. Optional 0/1 masks mark cells that were filled in by
/// interpolation during ingestion.
struct MfSample {
    std::vector<Tensor> level_inputs; // per level: K x d_l
    Tensor target;                    // K x d_out
    Tensor times;                     // K
    SampleMeta meta;
    std::vector<Tensor> input_imputed; // empty, or one mask per level
    Tensor target_imputed;             // empty, or K x d_out

    std::size_t steps() const { return times.extent(0); }
};

struct MultiFidelityDataset {
    std::size_t n_levels = 0;
    std::vector<MfSample> samples;
    double t_train = 0.0; // rows with time <= t_train (+1e-9) are the training split
    std::map<std::string, std::string> meta;

    void validate() const;
    bool in_train_window(double t) const { return t <= t_train + 1e-9; }
};

struct ScalerStats {
    enum class Mode { MinMax, Standardize };
    Mode mode = Mode::MinMax;
    Tensor lo;   // per channel: min (MinMax) or mean (Standardize)
    Tensor span; // per channel: max-min or std
    std::vector<std::uint8_t> degenerate; // channels with no spread map to 0

    std::size_t channels() const { return lo.extent(0); }
};

/// Per-channel statistics over the rows of a N x d matrix. Channels without
/// spread are flagged and a warning is printed; they scale to zero and invert
/// back to the constant.
ScalerStats fit_scaler(const Tensor& rows, ScalerStats::Mode mode);
Tensor apply_scaler(const ScalerStats& stats, const Tensor& rows);
Tensor invert_scaler(const ScalerStats& stats, const Tensor& rows);

/// Container file layout: magic "PMFS", format version, a named-block table
/// and raw little-endian payloads. Tensors carry their shape; "json" blocks
/// hold UTF-8 text. Writes go to a temp file renamed into place.
enum class ArchiveKind : std::uint32_t { Dataset = 1, Model = 2, Ensemble = 3 };

class ArchiveWriter {
public:
    explicit ArchiveWriter(ArchiveKind kind) : kind_(kind) {}

    void add_tensor(const std::string& name, const Tensor& t);
    void add_json(const std::string& name, const std::string& text);

    void write(const std::string& path) const;

private:
    struct Block {
        std::string name;
        std::uint8_t dtype; // 0 = text, 1 = f64 tensor
        std::vector<unsigned char> payload;
    };
    ArchiveKind kind_;
    std::vector<Block> blocks_;
};

class ArchiveReader {
public:
    explicit ArchiveReader(const std::string& path);

    ArchiveKind kind() const { return kind_; }
    bool has(const std::string& name) const;
    std::vector<std::string> names() const;
    Tensor tensor(const std::string& name) const;
    std::string json(const std::string& name) const;

private:
    struct Entry {
        std::uint8_t dtype;
        std::uint64_t offset;
        std::uint64_t length;
    };
    const Entry& find(const std::string& name) const;

    std::string path_;
    ArchiveKind kind_;
    std::map<std::string, Entry> entries_;
    std::vector<unsigned char> bytes_;
};

void save_dataset(const std::string& path, const MultiFidelityDataset& ds);
MultiFidelityDataset load_dataset(const std::string& path);

} // namespace pmfs::data

#endif
