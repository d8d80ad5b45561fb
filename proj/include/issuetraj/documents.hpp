#pragma once

// Text extraction for the document formats an issue thread can link to.
// Every extractor throws ParseFailure on input it cannot make sense of.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace issuetraj {

/// Read-only view of a zip archive held in memory (stored and deflate
/// members; no zip64).
class ZipArchive {
 public:
  explicit ZipArchive(std::string bytes);

  std::vector<std::string> names() const;
  bool contains(const std::string &name) const;
  /// Throws ParseFailure when the member is missing or corrupt.
  std::string read(const std::string &name) const;

 private:
  struct Entry {
    std::size_t local_header_offset = 0;
    std::size_t compressed_size = 0;
    std::size_t uncompressed_size = 0;
    int method = 0;
  };
  std::string bytes_;
  std::map<std::string, Entry> entries_;
};

/// Page texts in page order.
std::vector<std::string> pdf_page_texts(std::string_view bytes);

/// Pages joined with `--- page N ---` separators.
std::string pdf_text(std::string_view bytes);

/// Paragraph text and table rows (cells tab-separated), in document order.
std::string docx_text(std::string_view bytes);

/// `# Sheet: name` headers followed by tab-separated rows, row-major.
std::string xlsx_text(std::string_view bytes);

struct HtmlText {
  std::string title;
  std::string text;
};

/// Main readable text of an HTML page with navigation, scripts, forms and
/// other layout boilerplate removed. Prefers `<main>` / `<article>` content.
HtmlText html_main_text(std::string_view html);

/// Decode HTML character references.
std::string decode_html_entities(std::string_view s);

/// Run an external converter (`{file}` is replaced with a temp file path
/// holding `bytes`). Returns stdout, or nullopt when the command is missing
/// or fails.
std::optional<std::string> run_converter(const std::string &command_template,
                                         std::string_view bytes,
                                         std::string_view suffix);

}  // namespace issuetraj
