#pragma once

#include <string>
#include <vector>

namespace tiervc {

// Whole-file and line-oriented text helpers with uniform error reporting.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Splits into lines on '\n', dropping a trailing '\r' per line and a final
// empty line caused by a terminating newline.
std::vector<std::string> split_lines(const std::string& text);

// Splits on a single-character delimiter, keeping empty fields.
std::vector<std::string> split(const std::string& s, char delim);

// Numeric parsing that consumes the whole token; `where` ends up in the
// error message (typically "file:line").
double parse_double(const std::string& token, const std::string& where);
long parse_long(const std::string& token, const std::string& where);

// Shortest round-trippable decimal representation.
std::string format_double(double v);

} // namespace tiervc
