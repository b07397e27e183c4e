// Minimal CSV reader for the TSD release format: quoted fields, embedded
// commas, doubled quotes, and newlines inside quoted text are all legal.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "toxspan/util.hpp"

namespace toxspan::csv {

using Row = std::vector<std::string>;

struct Table {
    Row header;
    std::vector<Row> rows;

    /// Column position by header name, -1 when absent.
    int column(std::string_view name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<Row> parse_rows(std::string_view data) {
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool in_quotes = false;
    bool row_started = false;
    size_t i = 0;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        row_started = false;
    };

    while (i < data.size()) {
        char c = data[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < data.size() && data[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else {
            switch (c) {
                case '"':
                    in_quotes = true;
                    row_started = true;
                    break;
                case ',':
                    end_field();
                    row_started = true;
                    break;
                case '\r':
                    if (i + 1 < data.size() && data[i + 1] == '\n') ++i;
                    [[fallthrough]];
                case '\n':
                    // blank lines between records are skipped, not records
                    if (row_started || !field.empty() || !row.empty()) end_row();
                    break;
                default:
                    field.push_back(c);
                    row_started = true;
            }
        }
        ++i;
    }
    if (in_quotes) throw ParseError("csv: unterminated quoted field at end of input");
    if (row_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

/// Parses CSV text whose first record is the header.
inline Table parse(std::string_view data) {
    auto rows = parse_rows(data);
    Table t;
    if (rows.empty()) return t;
    t.header = std::move(rows.front());
    t.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
    return t;
}

inline Table read_file(const std::string& path) { return parse(read_text_file(path)); }

}  // namespace toxspan::csv
