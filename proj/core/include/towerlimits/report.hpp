#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "towerlimits/limit_lab.hpp"

namespace towerlimits {

// Output files for one run. Every file carries the config hash: CSV in a leading "# ..." line,
// JSON under "meta".
struct WrittenReport {
    std::filesystem::path csv, json, svg;  // svg empty without plotting
};

// Re-execution record: the config (by path and hash) and seed fully determine the MC statistics.
struct RunManifest {
    std::string command;
    std::filesystem::path config_path;
    std::string config_hash;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string started, finished;  // UTC, ISO 8601
    std::vector<std::filesystem::path> outputs;
};
void write_manifest(const RunManifest& m, const std::filesystem::path& file);
std::string utc_timestamp();

// CSV is long format: n,statistic,value,stderr (t is folded into the statistic name for charfn).
WrittenReport write_report(const CltReport& r, const std::filesystem::path& dir, bool plot);
WrittenReport write_report(const BeReport& r, const std::filesystem::path& dir, bool plot);
WrittenReport write_report(const LltReport& r, const std::filesystem::path& dir, bool plot);
WrittenReport write_report(const LatticeReport& r, const std::filesystem::path& dir, bool plot);
WrittenReport write_report(const CharfnReport& r, const std::filesystem::path& dir, bool plot);

std::string to_json_text(const CltReport& r);
std::string to_json_text(const BeReport& r);
std::string to_json_text(const LltReport& r);
std::string to_json_text(const LatticeReport& r);
std::string to_json_text(const CharfnReport& r);

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
    bool line = false;  // polyline instead of markers
};

// Minimal log-log chart; non-positive points are dropped.
std::string loglog_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<PlotSeries>& series);

}  // namespace towerlimits
