#include "probgnn/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "probgnn/errors.hpp"

namespace probgnn {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    require(ec == std::errc(), "DomainError", "double formatting failed");
    return std::string(buf, ptr);
}

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {
std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}
}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "SchemaError", "cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() && in.eof()) break;
        auto cells = split_line(line);
        if (lineno == 1) {
            table.header = std::move(cells);
            continue;
        }
        require(cells.size() == table.header.size(), "SchemaError",
                path + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(table.header.size()) + " columns, found " +
                    std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
    }
    require(!table.header.empty(), "SchemaError", path + ": empty file");
    return table;
}

struct CsvWriter::Impl {
    std::ofstream out;
    std::size_t columns = 0;
    std::string path;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : impl_(new Impl) {
    impl_->out.open(path);
    impl_->path = path;
    require(impl_->out.good(), "SchemaError", "cannot write '" + path + "'");
    impl_->columns = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        impl_->out << (i ? "," : "") << header[i];
    impl_->out << "\n";
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
    require(cells.size() == impl_->columns, "SchemaError",
            impl_->path + ": row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i)
        impl_->out << (i ? "," : "") << cells[i];
    impl_->out << "\n";
}

double parse_double(const std::string& cell, const std::string& context) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    require(ec == std::errc() && ptr == cell.data() + cell.size(), "SchemaError",
            context + ": '" + cell + "' is not a number");
    return v;
}

long parse_long(const std::string& cell, const std::string& context) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    require(ec == std::errc() && ptr == cell.data() + cell.size(), "SchemaError",
            context + ": '" + cell + "' is not an integer");
    return v;
}

void write_matrix_csv(const std::string& path, std::span<const double> matrix, int rows,
                      int cols, const std::vector<std::string>& labels) {
    require(labels.size() == static_cast<std::size_t>(cols), "SchemaError",
            "matrix labels do not match column count");
    std::vector<std::string> header{"row"};
    header.insert(header.end(), labels.begin(), labels.end());
    CsvWriter w(path, header);
    for (int i = 0; i < rows; ++i) {
        std::vector<std::string> cells{static_cast<std::size_t>(i) < labels.size()
                                           ? labels[static_cast<std::size_t>(i)]
                                           : std::to_string(i)};
        for (int j = 0; j < cols; ++j)
            cells.push_back(format_double(
                matrix[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) +
                       static_cast<std::size_t>(j)]));
        w.row(cells);
    }
}

}  // namespace probgnn
