#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

namespace kvslim {

/// RFC-4180 quoting: fields containing commas, quotes, or newlines are
/// wrapped in double quotes with embedded quotes doubled.
std::string csv_escape(const std::string& field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// One decode step of one run.
struct ReportRow {
    std::size_t step = 0;
    std::size_t cache_len = 0;
    std::string algorithm;
    double l2_error = 0.0;
    double cos_error = 0.0;
    std::size_t merges = 0;
    std::size_t fallbacks = 0;
};

inline const std::vector<std::string> kReportHeader = {
    "step", "cache_len", "algorithm", "l2_error", "cos_error", "merges", "fallbacks"};

void write_report_row(std::ostream& out, const ReportRow& row);

std::string format_double(double v);

}  // namespace kvslim
