#include "pmfs/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "pmfs/errors.hpp"

namespace pmfs::data {

namespace {

using nlohmann::json;

void append_bytes(std::vector<unsigned char>& out, const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out.insert(out.end(), b, b + n);
}

template <typename T>
void append_scalar(std::vector<unsigned char>& out, T v) {
    append_bytes(out, &v, sizeof(T));
}

class ByteCursor {
public:
    ByteCursor(const std::vector<unsigned char>& bytes, std::size_t pos = 0)
        : bytes_(bytes), pos_(pos) {}

    template <typename T>
    T scalar() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }

    void raw(void* dst, std::size_t n) {
        if (pos_ + n > bytes_.size()) throw IntegrityError("archive truncated");
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::string str(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw IntegrityError("archive truncated");
        std::string s(reinterpret_cast<const char*>(bytes_.data()) + pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_;
};

constexpr std::uint32_t kFormatVersion = 1;

} // namespace

void MultiFidelityDataset::validate() const {
    if (samples.empty()) throw DataError("dataset has no samples");
    double tmin = samples.front().times[0];
    double tmax = tmin;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const MfSample& smp = samples[s];
        std::ostringstream where;
        where << "sample " << s << " (" << smp.meta.id << ")";
        if (smp.level_inputs.size() != n_levels)
            throw DataError(where.str() + " carries the wrong number of levels");
        const std::size_t K = smp.steps();
        if (K == 0) throw DataError(where.str() + " is empty");
        if (smp.target.rank() != 2 || smp.target.rows() != K)
            throw ShapeError(where.str() + " target does not match the time axis");
        for (std::size_t l = 0; l < n_levels; ++l) {
            const Tensor& x = smp.level_inputs[l];
            if (x.rank() != 2 || x.rows() != K)
                throw ShapeError(where.str() + " level input does not match the time axis");
        }
        for (std::size_t t = 1; t < K; ++t)
            if (!(smp.times[t] > smp.times[t - 1]))
                throw DataError(where.str() + " has non-increasing times");
        if (!smp.input_imputed.empty()) {
            if (smp.input_imputed.size() != n_levels)
                throw ShapeError(where.str() + " mask count differs from level count");
            for (std::size_t l = 0; l < n_levels; ++l)
                require_same_shape(smp.input_imputed[l], smp.level_inputs[l],
                                   where.str() + " input mask");
        }
        if (!smp.target_imputed.empty())
            require_same_shape(smp.target_imputed, smp.target, where.str() + " target mask");
        tmin = std::min(tmin, smp.times[0]);
        tmax = std::max(tmax, smp.times[K - 1]);
    }
    if (t_train < tmin - 1e-9 || t_train > tmax + 1e-9) {
        std::ostringstream os;
        os << "split time " << t_train << " lies outside the data range [" << tmin << ", "
           << tmax << "]";
        throw DataError(os.str());
    }
}

ScalerStats fit_scaler(const Tensor& rows, ScalerStats::Mode mode) {
    if (rows.rank() != 2 || rows.rows() == 0)
        throw ShapeError("scaler fit expects a nonempty N x d matrix, got " + rows.shape_str());
    rows.require_finite("scaler fit input");
    const std::size_t n = rows.rows();
    const std::size_t d = rows.cols();

    ScalerStats stats;
    stats.mode = mode;
    stats.lo = Tensor::vector(d);
    stats.span = Tensor::vector(d);
    stats.degenerate.assign(d, 0);

    for (std::size_t j = 0; j < d; ++j) {
        if (mode == ScalerStats::Mode::MinMax) {
            double lo = rows(0, j), hi = rows(0, j);
            for (std::size_t i = 1; i < n; ++i) {
                lo = std::min(lo, rows(i, j));
                hi = std::max(hi, rows(i, j));
            }
            stats.lo[j] = lo;
            stats.span[j] = hi - lo;
        } else {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += rows(i, j);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dev = rows(i, j) - mean;
                var += dev * dev;
            }
            stats.lo[j] = mean;
            stats.span[j] = std::sqrt(var / static_cast<double>(n));
        }
        if (stats.span[j] <= 0.0) {
            stats.degenerate[j] = 1;
            std::cerr << "warning: channel " << j << " has no spread; scaling it to zero\n";
        }
    }
    return stats;
}

Tensor apply_scaler(const ScalerStats& stats, const Tensor& rows) {
    if (rows.rank() != 2 || rows.cols() != stats.channels())
        throw ShapeError("scaler expects N x " + std::to_string(stats.channels()) +
                         " input, got " + rows.shape_str());
    Tensor out = rows;
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t j = 0; j < rows.cols(); ++j)
            out(i, j) = stats.degenerate[j] ? 0.0 : (rows(i, j) - stats.lo[j]) / stats.span[j];
    return out;
}

Tensor invert_scaler(const ScalerStats& stats, const Tensor& rows) {
    if (rows.rank() != 2 || rows.cols() != stats.channels())
        throw ShapeError("scaler expects N x " + std::to_string(stats.channels()) +
                         " input, got " + rows.shape_str());
    Tensor out = rows;
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t j = 0; j < rows.cols(); ++j)
            out(i, j) = stats.degenerate[j] ? stats.lo[j] : rows(i, j) * stats.span[j] + stats.lo[j];
    return out;
}

void ArchiveWriter::add_tensor(const std::string& name, const Tensor& t) {
    Block b;
    b.name = name;
    b.dtype = 1;
    append_scalar<std::uint32_t>(b.payload, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t a = 0; a < t.rank(); ++a)
        append_scalar<std::uint64_t>(b.payload, t.extent(a));
    append_bytes(b.payload, t.data(), t.size() * sizeof(double));
    blocks_.push_back(std::move(b));
}

void ArchiveWriter::add_json(const std::string& name, const std::string& text) {
    Block b;
    b.name = name;
    b.dtype = 0;
    append_bytes(b.payload, text.data(), text.size());
    blocks_.push_back(std::move(b));
}

void ArchiveWriter::write(const std::string& path) const {
    std::size_t header = 4 + 4 + 4 + 8;
    for (const Block& b : blocks_) header += 4 + b.name.size() + 1 + 8 + 8;

    std::vector<unsigned char> table;
    std::uint64_t offset = header;
    for (const Block& b : blocks_) {
        append_scalar<std::uint32_t>(table, static_cast<std::uint32_t>(b.name.size()));
        append_bytes(table, b.name.data(), b.name.size());
        append_scalar<std::uint8_t>(table, b.dtype);
        append_scalar<std::uint64_t>(table, offset);
        append_scalar<std::uint64_t>(table, b.payload.size());
        offset += b.payload.size();
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open '" + tmp + "' for writing");
        out.write("PMFS", 4);
        const std::uint32_t version = kFormatVersion;
        const std::uint32_t kind = static_cast<std::uint32_t>(kind_);
        const std::uint64_t n = blocks_.size();
        out.write(reinterpret_cast<const char*>(&version), 4);
        out.write(reinterpret_cast<const char*>(&kind), 4);
        out.write(reinterpret_cast<const char*>(&n), 8);
        out.write(reinterpret_cast<const char*>(table.data()),
                  static_cast<std::streamsize>(table.size()));
        for (const Block& b : blocks_)
            out.write(reinterpret_cast<const char*>(b.payload.data()),
                      static_cast<std::streamsize>(b.payload.size()));
        if (!out) throw FormatError("write to '" + tmp + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw FormatError("cannot move archive into place at '" + path + "': " + ec.message());
}

ArchiveReader::ArchiveReader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open archive '" + path + "'");
    in.seekg(0, std::ios::end);
    const std::streamsize size = in.tellg();
    in.seekg(0, std::ios::beg);
    bytes_.resize(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes_.data()), size);
    if (!in) throw IntegrityError("failed to read archive '" + path + "'");

    ByteCursor cur(bytes_);
    if (cur.str(4) != "PMFS") throw FormatError("'" + path + "' is not a PMFS archive");
    const auto version = cur.scalar<std::uint32_t>();
    if (version != kFormatVersion) {
        std::ostringstream os;
        os << "archive '" << path << "' has format version " << version << ", expected "
           << kFormatVersion;
        throw VersionError(os.str());
    }
    const auto kind = cur.scalar<std::uint32_t>();
    if (kind < 1 || kind > 3) throw FormatError("archive '" + path + "' has an unknown kind");
    kind_ = static_cast<ArchiveKind>(kind);

    const auto n_blocks = cur.scalar<std::uint64_t>();
    for (std::uint64_t i = 0; i < n_blocks; ++i) {
        const auto name_len = cur.scalar<std::uint32_t>();
        std::string name = cur.str(name_len);
        Entry e;
        e.dtype = cur.scalar<std::uint8_t>();
        e.offset = cur.scalar<std::uint64_t>();
        e.length = cur.scalar<std::uint64_t>();
        if (e.offset + e.length > bytes_.size()) throw IntegrityError("archive truncated");
        entries_.emplace(std::move(name), e);
    }
}

bool ArchiveReader::has(const std::string& name) const { return entries_.count(name) != 0; }

std::vector<std::string> ArchiveReader::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
}

const ArchiveReader::Entry& ArchiveReader::find(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw FormatError("archive '" + path_ + "' has no block '" + name + "'");
    return it->second;
}

Tensor ArchiveReader::tensor(const std::string& name) const {
    const Entry& e = find(name);
    if (e.dtype != 1) throw FormatError("block '" + name + "' is not a tensor");
    ByteCursor cur(bytes_, e.offset);
    const auto ndim = cur.scalar<std::uint32_t>();
    if (ndim == 0 || ndim > 8) throw IntegrityError("block '" + name + "' has a bad rank");
    std::vector<std::size_t> shape(ndim);
    std::size_t total = 1;
    for (auto& s : shape) {
        s = static_cast<std::size_t>(cur.scalar<std::uint64_t>());
        total *= s;
    }
    if (e.length != 4 + 8 * ndim + 8 * total)
        throw IntegrityError("block '" + name + "' has a bad length");
    std::vector<double> vals(total);
    cur.raw(vals.data(), total * sizeof(double));
    return Tensor(std::move(shape), std::move(vals));
}

std::string ArchiveReader::json(const std::string& name) const {
    const Entry& e = find(name);
    if (e.dtype != 0) throw FormatError("block '" + name + "' is not text");
    ByteCursor cur(bytes_, e.offset);
    return cur.str(e.length);
}

void save_dataset(const std::string& path, const MultiFidelityDataset& ds) {
    ds.validate();
    ArchiveWriter w(ArchiveKind::Dataset);

    json meta;
    meta["n_levels"] = ds.n_levels;
    meta["t_train"] = ds.t_train;
    meta["extra"] = ds.meta;
    json samples = json::array();
    for (const MfSample& s : ds.samples) {
        json js;
        js["id"] = s.meta.id;
        js["mu"] = s.meta.mu;
        js["segment"] = s.meta.segment;
        js["masks"] = !s.input_imputed.empty();
        samples.push_back(js);
    }
    meta["samples"] = samples;
    w.add_json("meta", meta.dump());

    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const MfSample& s = ds.samples[i];
        const std::string p = "s" + std::to_string(i) + "/";
        for (std::size_t l = 0; l < ds.n_levels; ++l)
            w.add_tensor(p + "in" + std::to_string(l), s.level_inputs[l]);
        w.add_tensor(p + "y", s.target);
        w.add_tensor(p + "t", s.times);
        if (!s.input_imputed.empty()) {
            for (std::size_t l = 0; l < ds.n_levels; ++l)
                w.add_tensor(p + "in" + std::to_string(l) + "_mask", s.input_imputed[l]);
            w.add_tensor(p + "y_mask", s.target_imputed);
        }
    }
    w.write(path);
}

MultiFidelityDataset load_dataset(const std::string& path) {
    ArchiveReader r(path);
    if (r.kind() != ArchiveKind::Dataset)
        throw FormatError("'" + path + "' is not a dataset archive");

    json meta;
    try {
        meta = json::parse(r.json("meta"));
    } catch (const json::parse_error& e) {
        throw IntegrityError("dataset meta block is not valid JSON: " + std::string(e.what()));
    }

    MultiFidelityDataset ds;
    ds.n_levels = meta.at("n_levels").get<std::size_t>();
    ds.t_train = meta.at("t_train").get<double>();
    ds.meta = meta.at("extra").get<std::map<std::string, std::string>>();

    const json& samples = meta.at("samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        MfSample s;
        s.meta.id = samples[i].at("id").get<std::string>();
        s.meta.mu = samples[i].at("mu").get<double>();
        s.meta.segment = samples[i].at("segment").get<std::size_t>();
        const std::string p = "s" + std::to_string(i) + "/";
        for (std::size_t l = 0; l < ds.n_levels; ++l)
            s.level_inputs.push_back(r.tensor(p + "in" + std::to_string(l)));
        s.target = r.tensor(p + "y");
        s.times = r.tensor(p + "t");
        if (samples[i].at("masks").get<bool>()) {
            for (std::size_t l = 0; l < ds.n_levels; ++l)
                s.input_imputed.push_back(r.tensor(p + "in" + std::to_string(l) + "_mask"));
            s.target_imputed = r.tensor(p + "y_mask");
        }
        ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

} // namespace pmfs::data
