#pragma once

#include <string>
#include <vector>

namespace dpace {

// shortest decimal representation that parses back to the same double
std::string format_double(double v);

// one CSV cell back to a double; full-string parse required
double parse_double(const std::string& s);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const; // missing -> std::invalid_argument
};

// cells must not contain commas or newlines (all outputs here are numeric or
// simple identifiers)
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace dpace
