#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace firescar {

/// Flat key=value text: one pair per line, '#' starts a comment, blank lines ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text, std::string_view source = "<string>");
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv, std::string_view header_comment = {});
std::string format_key_values(const KeyValues& kv);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

double kv_double(const KeyValues& kv, const std::string& key);
long long kv_int(const KeyValues& kv, const std::string& key);
const std::string& kv_string(const KeyValues& kv, const std::string& key);

}  // namespace firescar
