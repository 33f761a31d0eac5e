#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fairsel::csv {

struct Row {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

// Parses RFC-4180 text: quoted fields, doubled quotes, embedded newlines,
// LF or CRLF line endings. A UTF-8 byte-order mark is skipped. Throws
// ValidationError on an unterminated quote or stray quote character.
std::vector<Row> parse(std::string_view text, std::string_view source_name);

std::vector<Row> read_file(const std::string& path);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace fairsel::csv
