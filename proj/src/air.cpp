#include "pmfs/air.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "pmfs/errors.hpp"

namespace pmfs::air {

namespace {

constexpr std::size_t kChannels = 5; // four inputs then the target

struct HourRow {
    std::array<double, kChannels> value{};
    std::array<bool, kChannels> valid{};

    bool complete() const {
        for (bool v : valid)
            if (!v) return false;
        return true;
    }
};

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) out.push_back(cell);
    return out;
}

std::string trimmed(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_int(const std::string& s, int& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size()) return false;
    out = static_cast<int>(v);
    return true;
}

// DD/MM/YYYY
bool parse_date(const std::string& s, AirDate& d) {
    auto parts = split_line(trimmed(s), '/');
    return parts.size() == 3 && parse_int(parts[0], d.day) && parse_int(parts[1], d.month) &&
           parse_int(parts[2], d.year) && d.month >= 1 && d.month <= 12 && d.day >= 1 &&
           d.day <= 31;
}

// HH.MM.SS
bool parse_hour(const std::string& s, int& hour) {
    auto parts = split_line(trimmed(s), '.');
    int mi = 0, se = 0;
    return parts.size() == 3 && parse_int(parts[0], hour) && parse_int(parts[1], mi) &&
           parse_int(parts[2], se) && hour >= 0 && hour <= 23;
}

} // namespace

long days_from_civil(int year, int month, int day) {
    year -= month <= 2;
    const long era = (year >= 0 ? year : year - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(year - era * 400);
    const unsigned doy =
        static_cast<unsigned>((153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

void AirIngestConfig::validate() const {
    if (columns.inputs.size() != 4)
        throw ConfigError("air ingestion expects exactly 4 input columns, got " +
                          std::to_string(columns.inputs.size()));
    const long a = days_from_civil(window_start.year, window_start.month, window_start.day);
    const long b = days_from_civil(window_end.year, window_end.month, window_end.day);
    const long t = days_from_civil(train_end.year, train_end.month, train_end.day);
    if (a > b) throw ConfigError("air window start lies after the window end");
    if (t < a || t > b) throw ConfigError("air training split day lies outside the window");
}

data::MultiFidelityDataset ingest_air_quality(const std::string& csv_path,
                                              const AirIngestConfig& cfg) {
    cfg.validate();
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open " + csv_path);

    std::string header_line;
    while (std::getline(in, header_line) && trimmed(header_line).empty()) {}
    if (trimmed(header_line).empty()) throw DataError(csv_path + " holds no data");

    const char delim = header_line.find(';') != std::string::npos ? ';' : ',';
    const auto header = split_line(header_line, delim);
    auto column_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trimmed(header[i]) == name) return i;
        throw SchemaError(csv_path + " is missing the column '" + name + "'");
    };
    const std::size_t date_col = column_of(cfg.columns.date);
    const std::size_t time_col = column_of(cfg.columns.time);
    std::array<std::size_t, kChannels> value_cols{};
    for (std::size_t c = 0; c < 4; ++c) value_cols[c] = column_of(cfg.columns.inputs[c]);
    value_cols[4] = column_of(cfg.columns.target);

    const long start_day =
        days_from_civil(cfg.window_start.year, cfg.window_start.month, cfg.window_start.day);
    const long end_day =
        days_from_civil(cfg.window_end.year, cfg.window_end.month, cfg.window_end.day);
    const long first_hour = start_day * 24;
    const long last_hour = end_day * 24 + 23;

    const std::size_t need = std::max(
        {date_col, time_col, *std::max_element(value_cols.begin(), value_cols.end())});
    std::map<long, HourRow> rows;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trimmed(line).empty()) continue;
        auto cells = split_line(line, delim);
        if (cells.size() <= need)
            throw DataError(csv_path + " line " + std::to_string(line_no) + " has only " +
                            std::to_string(cells.size()) + " cells");

        AirDate d;
        int hour = 0;
        if (!parse_date(cells[date_col], d) || !parse_hour(cells[time_col], hour))
            throw DataError(csv_path + " line " + std::to_string(line_no) +
                            " has a malformed timestamp");
        const long h = days_from_civil(d.year, d.month, d.day) * 24 + hour;
        if (h < first_hour || h > last_hour) continue;
        if (rows.count(h))
            throw DataError(csv_path + " line " + std::to_string(line_no) +
                            " repeats an hour already seen");

        HourRow row;
        for (std::size_t c = 0; c < kChannels; ++c) {
            std::string cell = trimmed(cells[value_cols[c]]);
            std::replace(cell.begin(), cell.end(), ',', '.');
            if (cell.empty()) continue;
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size() || !std::isfinite(v))
                throw DataError(csv_path + " line " + std::to_string(line_no) +
                                " holds a non-numeric value '" + cell + "'");
            if (v == cfg.missing_marker) continue;
            row.value[c] = v;
            row.valid[c] = true;
        }
        rows[h] = row;
    }
    if (rows.empty()) throw DataError(csv_path + " holds no rows inside the ingestion window");

    // Continuous hour grid between the first and last observed hours; absent
    // hours count as fully missing rows.
    const long grid_start = rows.begin()->first;
    const long grid_end = rows.rbegin()->first;
    const std::size_t n_hours = static_cast<std::size_t>(grid_end - grid_start + 1);
    std::vector<HourRow> grid(n_hours);
    std::vector<bool> is_gap(n_hours, true);
    for (const auto& [h, row] : rows) {
        grid[static_cast<std::size_t>(h - grid_start)] = row;
        is_gap[static_cast<std::size_t>(h - grid_start)] = !row.complete();
    }

    // Split points: maximal gap runs longer than the interpolation limit, or
    // runs touching either end of the grid.
    std::vector<bool> keep(n_hours, true);
    for (std::size_t i = 0; i < n_hours;) {
        if (!is_gap[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n_hours && is_gap[j]) ++j;
        const bool at_edge = i == 0 || j == n_hours;
        if (at_edge || j - i > cfg.max_gap_hours)
            for (std::size_t k = i; k < j; ++k) keep[k] = false;
        i = j;
    }

    data::MultiFidelityDataset ds;
    ds.n_levels = 4;
    std::size_t imputed_cells = 0;

    std::size_t seg_index = 0;
    for (std::size_t i = 0; i < n_hours;) {
        if (!keep[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n_hours && keep[j]) ++j;
        const std::size_t K = j - i;

        data::MfSample s;
        s.meta.id = "seg" + std::to_string(seg_index);
        s.meta.segment = seg_index;
        s.times = Tensor({K});
        for (std::size_t k = 0; k < K; ++k)
            s.times[k] = double(grid_start - first_hour) + double(i + k);

        std::array<Tensor, kChannels> series;
        std::array<Tensor, kChannels> masks;
        for (std::size_t c = 0; c < kChannels; ++c) {
            series[c] = Tensor::matrix(K, 1);
            masks[c] = Tensor({K, 1}, 0.0);
            std::size_t k = 0;
            while (k < K) {
                if (grid[i + k].valid[c]) {
                    series[c](k, 0) = grid[i + k].value[c];
                    ++k;
                    continue;
                }
                std::size_t r = k;
                while (r < K && !grid[i + r].valid[c]) ++r;
                // Segment boundaries are valid rows, so both anchors exist.
                const double va = grid[i + k - 1].value[c];
                const double vb = grid[i + r].value[c];
                for (std::size_t g = k; g < r; ++g) {
                    const double w = double(g - k + 1) / double(r - k + 1);
                    series[c](g, 0) = va + w * (vb - va);
                    masks[c](g, 0) = 1.0;
                    ++imputed_cells;
                }
                k = r;
            }
        }
        for (std::size_t c = 0; c < 4; ++c) {
            s.level_inputs.push_back(std::move(series[c]));
            s.input_imputed.push_back(std::move(masks[c]));
        }
        s.target = std::move(series[4]);
        s.target_imputed = std::move(masks[4]);
        ds.samples.push_back(std::move(s));
        ++seg_index;
        i = j;
    }
    if (ds.samples.empty())
        throw DataError(csv_path + " holds no usable rows after gap handling");

    const long train_day = days_from_civil(cfg.train_end.year, cfg.train_end.month,
                                           cfg.train_end.day);
    ds.t_train = double((train_day - start_day) * 24 + 23);

    auto date_str = [](const AirDate& d) {
        std::ostringstream os;
        os << d.year << "-" << (d.month < 10 ? "0" : "") << d.month << "-"
           << (d.day < 10 ? "0" : "") << d.day;
        return os.str();
    };
    ds.meta["experiment"] = "air";
    ds.meta["source"] = csv_path;
    ds.meta["window_start"] = date_str(cfg.window_start);
    ds.meta["window_end"] = date_str(cfg.window_end);
    ds.meta["train_end"] = date_str(cfg.train_end);
    ds.meta["segments"] = std::to_string(ds.samples.size());
    ds.meta["imputed_cells"] = std::to_string(imputed_cells);

    ds.validate();
    return ds;
}

} // namespace pmfs::air
