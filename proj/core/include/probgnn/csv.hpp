#pragma once

#include <span>
#include <string>
#include <vector>

namespace probgnn {

/// Shortest round-trip decimal rendering of a double (stable across runs, so
/// repeated runs produce byte-identical CSV files).
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
};

/// Strict comma-separated reader: no quoting, one header row, uniform column
/// counts. Raises SchemaError with row diagnostics on any violation.
CsvTable read_csv(const std::string& path);

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    void row(const std::vector<std::string>& cells);

private:
    struct Impl;
    Impl* impl_;
};

double parse_double(const std::string& cell, const std::string& context);
long parse_long(const std::string& cell, const std::string& context);

void write_matrix_csv(const std::string& path, std::span<const double> matrix, int rows,
                      int cols, const std::vector<std::string>& labels);

}  // namespace probgnn
