#include "kvslim/report.hpp"

#include <cstdio>

namespace kvslim {

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << csv_escape(fields[i]);
    }
    out << "\r\n";
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_report_row(std::ostream& out, const ReportRow& row) {
    write_csv_row(out, {std::to_string(row.step), std::to_string(row.cache_len),
                        row.algorithm, format_double(row.l2_error),
                        format_double(row.cos_error), std::to_string(row.merges),
                        std::to_string(row.fallbacks)});
}

}  // namespace kvslim
