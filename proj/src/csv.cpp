#include "textmatch/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "textmatch/errors.hpp"

namespace textmatch::csv {

int Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

Table parse(const std::string& text) {
    Table table;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_data = false;
    std::size_t i = 0;
    const std::size_t n = text.size();

    auto end_field = [&]() {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&]() {
        end_field();
        if (table.header.empty())
            table.header = std::move(row);
        else
            table.rows.push_back(std::move(row));
        row.clear();
        row_has_data = false;
    };

    while (i < n) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < n && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
            row_has_data = true;
        } else if (c == ',') {
            end_field();
            row_has_data = true;
        } else if (c == '\r') {
            // swallow; \n handles the row break
        } else if (c == '\n') {
            if (row_has_data || !field.empty() || !row.empty()) end_row();
        } else {
            field += c;
            row_has_data = true;
        }
        ++i;
    }
    if (in_quotes) throw FormatError("unterminated quoted field");
    if (row_has_data || !field.empty() || !row.empty()) end_row();
    return table;
}

std::string escape(const std::string& field) {
    bool needs_quotes = false;
    for (char c : field)
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            needs_quotes = true;
            break;
        }
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_row(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += escape(fields[i]);
    }
    out += '\n';
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace textmatch::csv
