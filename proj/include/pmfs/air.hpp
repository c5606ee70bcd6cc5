#ifndef PMFS_AIR_HPP
#define PMFS_AIR_HPP

#include <string>
#include <vector>

#include "pmfs/dataio.hpp"

namespace pmfs::air {

/// CSV header names for the hourly air-quality export. The four input
/// columns become fidelity levels 0..3 in the listed order.
struct AirColumnMap {
    std::string date = "Date";
    std::string time = "Time";
    std::vector<std::string> inputs = {"T", "RH", "PT08.S1(CO)", "PT08.S5(O3)"};
    std::string target = "C6H6(GT)";
};

struct AirDate {
    int year = 0;
    int month = 0;
    int day = 0;
};

struct AirIngestConfig {
    AirColumnMap columns;
    double missing_marker = -200.0;
    AirDate window_start{2004, 10, 3};
    AirDate window_end{2005, 4, 4};
    // last calendar day whose hours count as training data
    AirDate train_end{2005, 1, 16};
    std::size_t max_gap_hours = 3;

    void validate() const;
};

/// Days since 1970-01-01 for a proleptic Gregorian date.
long days_from_civil(int year, int month, int day);

/// Reads the hourly CSV (semicolon or comma delimited, decimal commas
/// tolerated, DD/MM/YYYY dates and HH.MM.SS times) and builds a one-channel-
/// per-level dataset on an hourly time axis counted from the window start.
/// Rows with the missing marker (or an empty cell) in any mapped column are
/// gap rows; runs of up to max_gap_hours are kept and their missing cells
/// linearly interpolated (flagged in the imputation masks), longer runs split
/// the series into separate segments.
data::MultiFidelityDataset ingest_air_quality(const std::string& csv_path,
                                              const AirIngestConfig& cfg = {});

} // namespace pmfs::air

#endif
