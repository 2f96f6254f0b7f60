#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gruscope {

// Shortest decimal form that reads back to the identical double.
std::string format_double(double value);

// Strict parse: the whole field must be a decimal floating literal.
bool parse_double(std::string_view text, double& out);
bool parse_size(std::string_view text, std::size_t& out);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

// CSV field quoting for fields containing separators or quotes.
std::string csv_field(std::string_view text);
// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> parse_csv_line(std::string_view line);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace gruscope
