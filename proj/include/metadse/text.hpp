#pragma once

// Small string and file helpers shared by the text formats.

#include <map>
#include <string>
#include <vector>

namespace metadse {

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

// Strict parse: the whole string must be a finite number.
bool parse_double(const std::string& s, double& out);
bool parse_u64(const std::string& s, unsigned long long& out);

// 17 significant digits, so the value round-trips exactly.
std::string format_double(double v);
// Fixed notation with `digits` decimals, for human-facing summaries.
std::string format_fixed(double v, int digits);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

// `key = value` lines; '#' starts a comment line. Later keys override earlier ones.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

}  // namespace metadse
