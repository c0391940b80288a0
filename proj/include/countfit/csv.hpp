#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace countfit::csv {

using Row = std::vector<std::string>;

/// Parses RFC-4180 CSV: comma delimiter, double-quote quoting with "" escapes,
/// quoted fields may span lines, LF or CRLF record terminators. A trailing
/// empty line is not a record. Throws ParseError on an unterminated quote.
std::vector<Row> parse(std::istream& in);
std::vector<Row> parse(std::string_view text);

/// Quotes a field only when it contains a delimiter, quote, or line break.
std::string quote(std::string_view field);

/// Writes one record terminated by '\n'.
void write_row(std::ostream& out, const Row& row);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

}  // namespace countfit::csv
