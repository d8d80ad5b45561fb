#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace issuetraj {

/// Half-open byte range in a comment body.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool contains(std::size_t pos) const { return pos >= begin && pos < end; }
  bool operator==(const ByteSpan &) const = default;
};

enum class SnippetKind { fenced, inline_code };

std::string_view to_string(SnippetKind kind);

struct CodeSnippet {
  SnippetKind snippet_kind = SnippetKind::inline_code;
  std::optional<std::string> language_hint;
  std::string text;
  std::string source_comment_id;

  bool operator==(const CodeSnippet &) const = default;
};

/// Regions covered by ``` or ~~~ fences, delimiter lines included. An
/// unterminated fence runs to the end of the body.
std::vector<ByteSpan> fenced_regions(std::string_view body);

/// Fenced blocks and backtick code spans in order of appearance.
std::vector<CodeSnippet> extract_code_snippets(std::string_view body,
                                               std::string_view comment_id = {});

}  // namespace issuetraj
