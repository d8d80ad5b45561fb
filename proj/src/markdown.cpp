#include "issuetraj/markdown.hpp"

#include "issuetraj/text.hpp"

namespace issuetraj {

namespace {

struct Fence {
  char ch = 0;
  std::size_t len = 0;
  std::size_t indent = 0;
};

// Opening or closing fence at the start of `line` (up to three spaces indent).
std::optional<Fence> fence_at(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && i < 3 && line[i] == ' ') ++i;
  if (i >= line.size() || (line[i] != '`' && line[i] != '~')) return std::nullopt;
  const char ch = line[i];
  std::size_t n = 0;
  while (i + n < line.size() && line[i + n] == ch) ++n;
  if (n < 3) return std::nullopt;
  // A backtick info string may not itself contain backticks.
  if (ch == '`' && line.find('`', i + n) != std::string_view::npos) return std::nullopt;
  return Fence{ch, n, i};
}

bool closes(const Fence &open, std::string_view line) {
  const auto f = fence_at(line);
  if (!f || f->ch != open.ch || f->len < open.len) return false;
  return trim(line.substr(f->indent + f->len)).empty();
}

struct Line {
  std::size_t begin;
  std::size_t end;      // excluding newline
  std::size_t next;     // start of following line
};

std::vector<Line> lines_of(std::string_view body) {
  std::vector<Line> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.push_back({pos, body.size(), body.size()});
      break;
    }
    std::size_t end = nl;
    if (end > pos && body[end - 1] == '\r') --end;
    out.push_back({pos, end, nl + 1});
    pos = nl + 1;
  }
  return out;
}

struct FencedBlock {
  ByteSpan span;
  std::optional<std::string> info;
  std::string text;
};

std::vector<FencedBlock> fenced_blocks(std::string_view body) {
  std::vector<FencedBlock> blocks;
  const auto lines = lines_of(body);
  std::size_t i = 0;
  while (i < lines.size()) {
    const std::string_view line = body.substr(lines[i].begin, lines[i].end - lines[i].begin);
    const auto open = fence_at(line);
    if (!open) {
      ++i;
      continue;
    }
    FencedBlock block;
    block.span.begin = lines[i].begin;
    const std::string info = trim(line.substr(open->indent + open->len));
    if (!info.empty()) {
      const auto ws = info.find_first_of(" \t");
      block.info = info.substr(0, ws);
    }
    std::size_t j = i + 1;
    std::string text;
    bool closed = false;
    for (; j < lines.size(); ++j) {
      const std::string_view l = body.substr(lines[j].begin, lines[j].end - lines[j].begin);
      if (closes(*open, l)) {
        closed = true;
        break;
      }
      if (!text.empty() || j > i + 1) text += '\n';
      text.append(l);
    }
    block.text = std::move(text);
    block.span.end = closed ? lines[j].next : body.size();
    blocks.push_back(std::move(block));
    i = closed ? j + 1 : lines.size();
  }
  return blocks;
}

// Backtick code spans in `segment`, which contains no fenced code.
void inline_spans(std::string_view segment, std::string_view comment_id,
                  std::vector<CodeSnippet> &out) {
  std::size_t i = 0;
  while (i < segment.size()) {
    if (segment[i] != '`') {
      ++i;
      continue;
    }
    std::size_t n = 0;
    while (i + n < segment.size() && segment[i + n] == '`') ++n;
    const std::size_t content_begin = i + n;
    std::size_t j = content_begin;
    std::optional<std::size_t> close;
    while (j < segment.size()) {
      if (segment[j] != '`') {
        ++j;
        continue;
      }
      std::size_t m = 0;
      while (j + m < segment.size() && segment[j + m] == '`') ++m;
      if (m == n) {
        close = j;
        break;
      }
      j += m;
    }
    if (!close) {
      i = content_begin;
      continue;
    }
    std::string text(segment.substr(content_begin, *close - content_begin));
    for (char &c : text) {
      if (c == '\n' || c == '\r') c = ' ';
    }
    if (text.size() >= 2 && text.front() == ' ' && text.back() == ' ' &&
        !trim(text).empty()) {
      text = text.substr(1, text.size() - 2);
    }
    if (!text.empty()) {
      out.push_back(CodeSnippet{SnippetKind::inline_code, std::nullopt, std::move(text),
                                std::string(comment_id)});
    }
    i = *close + n;
  }
}

}  // namespace

std::string_view to_string(SnippetKind kind) {
  return kind == SnippetKind::fenced ? "fenced" : "inline";
}

std::vector<ByteSpan> fenced_regions(std::string_view body) {
  std::vector<ByteSpan> spans;
  for (const auto &b : fenced_blocks(body)) spans.push_back(b.span);
  return spans;
}

std::vector<CodeSnippet> extract_code_snippets(std::string_view body,
                                               std::string_view comment_id) {
  std::vector<CodeSnippet> out;
  std::size_t pos = 0;
  for (auto &block : fenced_blocks(body)) {
    inline_spans(body.substr(pos, block.span.begin - pos), comment_id, out);
    out.push_back(CodeSnippet{SnippetKind::fenced, std::move(block.info), std::move(block.text),
                              std::string(comment_id)});
    pos = block.span.end;
  }
  inline_spans(body.substr(pos), comment_id, out);
  return out;
}

}  // namespace issuetraj
