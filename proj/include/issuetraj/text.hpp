#pragma once

// Small string helpers shared across modules.

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace issuetraj {

using Timestamp = std::chrono::sys_seconds;

/// Replace invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view in);

/// Longest prefix of `in` that is at most `max_bytes` long and does not split
/// a UTF-8 sequence.
std::string_view utf8_prefix(std::string_view in, std::size_t max_bytes);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Collapse whitespace runs to one space and trim.
std::string collapse_whitespace(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

/// Parse ISO-8601 date-times such as `2024-03-01T12:00:00Z`,
/// `2024-03-01T12:00:00.123+02:00` or `2024-03-01 12:00:00`. Result is UTC
/// at second resolution. Throws MalformedInput.
Timestamp parse_iso8601(std::string_view text);

/// `YYYY-MM-DDTHH:MM:SSZ`
std::string format_iso8601(Timestamp t);

std::string base64_encode(std::string_view bytes);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Substitute `{{name}}` placeholders. Unknown placeholders are left as-is.
std::string render_template(
    std::string_view tmpl,
    const std::vector<std::pair<std::string, std::string>> &values);

/// Write `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::string &path, std::string_view contents);

std::string read_file(const std::string &path);

}  // namespace issuetraj
