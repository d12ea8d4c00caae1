#pragma once

#include <string>
#include <vector>

namespace hc {

// Minimal CSV with mandatory header, UTF-8, no quoting (none of the
// serialized schemas contain commas), missing = empty field.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const;  // -1 if absent
    int col_required(const std::string& name) const;  // throws LoadError
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

std::string format_double(double v);  // shortest round-trippable representation

}  // namespace hc
