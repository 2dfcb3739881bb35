#pragma once

#include <string>
#include <vector>

namespace textmatch::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

// RFC 4180-style parsing: quoted fields, escaped quotes, CRLF tolerant.
Table read_file(const std::string& path);
Table parse(const std::string& text);

std::string escape(const std::string& field);
void write_row(std::string& out, const std::vector<std::string>& fields);

std::string format_double(double v);

}  // namespace textmatch::csv
