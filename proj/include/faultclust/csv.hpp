#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace faultclust::csv {

using Row = std::vector<std::string>;

struct Table {
    Row header;
    std::vector<Row> rows;

    /// Column index for `name`, or throws IoError.
    std::size_t column(std::string_view name) const;
};

/// Parses RFC 4180 text: quoted fields may contain commas, quotes ("") and newlines.
Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

/// Quotes a field only when needed.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

} // namespace faultclust::csv
