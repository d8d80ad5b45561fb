#include "issuetraj/documents.hpp"

#include <expat.h>
#include <sys/wait.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <set>

#include <fmt/format.h>

#include "issuetraj/error.hpp"
#include "issuetraj/text.hpp"

namespace issuetraj {

namespace {

std::uint32_t le16(std::string_view b, std::size_t pos) {
  if (pos + 2 > b.size()) throw ParseFailure("zip: truncated record");
  return static_cast<unsigned char>(b[pos]) | (static_cast<unsigned char>(b[pos + 1]) << 8);
}

std::uint32_t le32(std::string_view b, std::size_t pos) {
  if (pos + 4 > b.size()) throw ParseFailure("zip: truncated record");
  return le16(b, pos) | (le16(b, pos + 2) << 16);
}

void append_utf8(std::string &out, std::uint32_t cp) {
  if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Inflate zlib (window_bits 15) or raw deflate (-15) data. Returns what could
// be decoded; `complete` reports whether the stream ended cleanly.
std::string inflate_bytes(std::string_view in, int window_bits, bool *complete = nullptr) {
  z_stream zs{};
  if (inflateInit2(&zs, window_bits) != Z_OK) throw ParseFailure("inflate init failed");
  zs.next_in = reinterpret_cast<Bytef *>(const_cast<char *>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::string out;
  std::array<char, 64 * 1024> buf{};
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = reinterpret_cast<Bytef *>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf.data(), buf.size() - zs.avail_out);
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;
  }
  inflateEnd(&zs);
  if (complete) *complete = rc == Z_STREAM_END;
  return out;
}

// Local element name, dropping any namespace prefix.
std::string_view local_name(const char *name) {
  std::string_view n(name);
  const auto colon = n.rfind(':');
  return colon == std::string_view::npos ? n : n.substr(colon + 1);
}

const char *attr(const char **atts, std::string_view want) {
  for (int i = 0; atts[i] != nullptr; i += 2) {
    if (local_name(atts[i]) == want) return atts[i + 1];
  }
  return nullptr;
}

// Thin RAII wrapper over an expat parser that forwards to std::functions.
class XmlReader {
 public:
  std::function<void(std::string_view, const char **)> on_start;
  std::function<void(std::string_view)> on_end;
  std::function<void(std::string_view)> on_text;

  void parse(std::string_view xml, std::string_view what) {
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> p(
        XML_ParserCreate(nullptr), &XML_ParserFree);
    if (!p) throw ParseFailure("cannot create XML parser");
    XML_SetUserData(p.get(), this);
    XML_SetElementHandler(
        p.get(),
        [](void *ud, const char *name, const char **atts) {
          auto *self = static_cast<XmlReader *>(ud);
          if (self->on_start) self->on_start(local_name(name), atts);
        },
        [](void *ud, const char *name) {
          auto *self = static_cast<XmlReader *>(ud);
          if (self->on_end) self->on_end(local_name(name));
        });
    XML_SetCharacterDataHandler(p.get(), [](void *ud, const char *s, int len) {
      auto *self = static_cast<XmlReader *>(ud);
      if (self->on_text) self->on_text(std::string_view(s, static_cast<std::size_t>(len)));
    });
    if (XML_Parse(p.get(), xml.data(), static_cast<int>(xml.size()), 1) == XML_STATUS_ERROR) {
      throw ParseFailure(fmt::format("{}: XML error at line {}: {}", what,
                                     XML_GetCurrentLineNumber(p.get()),
                                     XML_ErrorString(XML_GetErrorCode(p.get()))));
    }
  }
};

std::string join_lines(const std::vector<std::string> &lines) {
  std::string out;
  for (const auto &l : lines) {
    if (!out.empty()) out += '\n';
    out += l;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- zip

ZipArchive::ZipArchive(std::string bytes) : bytes_(std::move(bytes)) {
  const std::string_view b(bytes_);
  if (b.size() < 22) throw ParseFailure("zip: too small");
  const std::size_t lower = b.size() > 22 + 0xFFFF ? b.size() - 22 - 0xFFFF : 0;
  std::optional<std::size_t> eocd;
  for (std::size_t pos = b.size() - 22 + 1; pos-- > lower;) {
    if (le32(b, pos) == 0x06054b50) {
      eocd = pos;
      break;
    }
  }
  if (!eocd) throw ParseFailure("zip: end of central directory not found");
  const std::size_t count = le16(b, *eocd + 10);
  std::size_t pos = le32(b, *eocd + 16);
  for (std::size_t i = 0; i < count; ++i) {
    if (le32(b, pos) != 0x02014b50) throw ParseFailure("zip: bad central directory entry");
    Entry e;
    e.method = static_cast<int>(le16(b, pos + 10));
    e.compressed_size = le32(b, pos + 20);
    e.uncompressed_size = le32(b, pos + 24);
    const std::size_t name_len = le16(b, pos + 28);
    const std::size_t extra_len = le16(b, pos + 30);
    const std::size_t comment_len = le16(b, pos + 32);
    e.local_header_offset = le32(b, pos + 42);
    if (pos + 46 + name_len > b.size()) throw ParseFailure("zip: truncated entry name");
    entries_[std::string(b.substr(pos + 46, name_len))] = e;
    pos += 46 + name_len + extra_len + comment_len;
  }
}

std::vector<std::string> ZipArchive::names() const {
  std::vector<std::string> out;
  for (const auto &[n, e] : entries_) out.push_back(n);
  return out;
}

bool ZipArchive::contains(const std::string &name) const { return entries_.contains(name); }

std::string ZipArchive::read(const std::string &name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ParseFailure(fmt::format("zip: no member '{}'", name));
  const Entry &e = it->second;
  const std::string_view b(bytes_);
  const std::size_t h = e.local_header_offset;
  if (le32(b, h) != 0x04034b50) throw ParseFailure(fmt::format("zip: bad local header for '{}'", name));
  const std::size_t data = h + 30 + le16(b, h + 26) + le16(b, h + 28);
  if (data + e.compressed_size > b.size()) throw ParseFailure(fmt::format("zip: '{}' truncated", name));
  const std::string_view raw = b.substr(data, e.compressed_size);
  if (e.method == 0) return std::string(raw);
  if (e.method != 8) throw ParseFailure(fmt::format("zip: unsupported method {} for '{}'", e.method, name));
  bool complete = false;
  std::string out = inflate_bytes(raw, -15, &complete);
  if (!complete) throw ParseFailure(fmt::format("zip: corrupt deflate data in '{}'", name));
  return out;
}

// ---------------------------------------------------------------- PDF

namespace {

struct PdfObj {
  enum class Type { null, boolean, number, string, name, array, dict, ref, stream, keyword };
  Type type = Type::null;
  bool boolean = false;
  double number = 0;
  std::string str;  // string bytes, name, keyword, or decoded-later stream bytes
  std::vector<PdfObj> items;
  std::vector<std::string> keys;  // dict keys; values in `items`
  int ref_num = 0;

  const PdfObj *get(std::string_view key) const {
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i] == key) return &items[i];
    }
    return nullptr;
  }
  bool is_dict() const { return type == Type::dict || type == Type::stream; }
};

bool pdf_space(char c) {
  return c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '\f' || c == '\0';
}

bool pdf_delim(char c) {
  return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' ||
         c == '}' || c == '/' || c == '%';
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

class PdfLexer {
 public:
  explicit PdfLexer(std::string_view data, std::size_t pos = 0) : d_(data), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  bool eof() { skip_space(); return pos_ >= d_.size(); }

  void skip_space() {
    while (pos_ < d_.size()) {
      if (pdf_space(d_[pos_])) {
        ++pos_;
      } else if (d_[pos_] == '%') {
        while (pos_ < d_.size() && d_[pos_] != '\n' && d_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  // Parse one object. Keywords (operators, "R", "obj"...) come back as
  // Type::keyword. `>>` and `]` also come back as keywords.
  PdfObj next(int depth = 0) {
    if (depth > 64) throw ParseFailure("pdf: nesting too deep");
    skip_space();
    if (pos_ >= d_.size()) throw ParseFailure("pdf: unexpected end of data");
    const char c = d_[pos_];
    PdfObj o;
    if (c == '/') {
      ++pos_;
      o.type = PdfObj::Type::name;
      while (pos_ < d_.size() && !pdf_space(d_[pos_]) && !pdf_delim(d_[pos_])) {
        if (d_[pos_] == '#' && pos_ + 2 < d_.size() && hex_value(d_[pos_ + 1]) >= 0 &&
            hex_value(d_[pos_ + 2]) >= 0) {
          o.str += static_cast<char>(hex_value(d_[pos_ + 1]) * 16 + hex_value(d_[pos_ + 2]));
          pos_ += 3;
        } else {
          o.str += d_[pos_++];
        }
      }
      return o;
    }
    if (c == '(') {
      o.type = PdfObj::Type::string;
      o.str = literal_string();
      return o;
    }
    if (c == '<') {
      if (pos_ + 1 < d_.size() && d_[pos_ + 1] == '<') {
        pos_ += 2;
        o.type = PdfObj::Type::dict;
        while (true) {
          PdfObj k = next(depth + 1);
          if (k.type == PdfObj::Type::keyword && k.str == ">>") break;
          if (k.type != PdfObj::Type::name) throw ParseFailure("pdf: dictionary key is not a name");
          PdfObj v = value(depth + 1);
          o.keys.push_back(std::move(k.str));
          o.items.push_back(std::move(v));
        }
        return o;
      }
      ++pos_;
      o.type = PdfObj::Type::string;
      int hi = -1;
      while (pos_ < d_.size() && d_[pos_] != '>') {
        const int v = hex_value(d_[pos_++]);
        if (v < 0) continue;
        if (hi < 0) {
          hi = v;
        } else {
          o.str += static_cast<char>(hi * 16 + v);
          hi = -1;
        }
      }
      if (hi >= 0) o.str += static_cast<char>(hi * 16);
      ++pos_;
      return o;
    }
    if (c == '>' && pos_ + 1 < d_.size() && d_[pos_ + 1] == '>') {
      pos_ += 2;
      o.type = PdfObj::Type::keyword;
      o.str = ">>";
      return o;
    }
    if (c == '[') {
      ++pos_;
      o.type = PdfObj::Type::array;
      while (true) {
        skip_space();
        if (pos_ < d_.size() && d_[pos_] == ']') {
          ++pos_;
          break;
        }
        o.items.push_back(value(depth + 1));
      }
      return o;
    }
    if (c == ']' || c == '{' || c == '}' || c == ')' || c == '>') {
      ++pos_;
      o.type = PdfObj::Type::keyword;
      o.str = std::string(1, c);
      return o;
    }
    const std::size_t start = pos_;
    while (pos_ < d_.size() && !pdf_space(d_[pos_]) && !pdf_delim(d_[pos_])) ++pos_;
    const std::string_view tok = d_.substr(start, pos_ - start);
    if (is_number(tok)) {
      o.type = PdfObj::Type::number;
      o.number = std::strtod(std::string(tok).c_str(), nullptr);
      return o;
    }
    if (tok == "true" || tok == "false") {
      o.type = PdfObj::Type::boolean;
      o.boolean = tok == "true";
      return o;
    }
    if (tok == "null") return o;
    o.type = PdfObj::Type::keyword;
    o.str = std::string(tok);
    return o;
  }

  // Like next(), but folds "num gen R" into a reference.
  PdfObj value(int depth = 0) {
    PdfObj o = next(depth);
    if (o.type != PdfObj::Type::number) return o;
    const std::size_t save = pos_;
    try {
      PdfObj gen = next(depth);
      if (gen.type == PdfObj::Type::number) {
        PdfObj r = next(depth);
        if (r.type == PdfObj::Type::keyword && r.str == "R") {
          PdfObj ref;
          ref.type = PdfObj::Type::ref;
          ref.ref_num = static_cast<int>(o.number);
          return ref;
        }
      }
    } catch (const ParseFailure &) {
    }
    pos_ = save;
    return o;
  }

  // Raw bytes between ID and EI of an inline image.
  void skip_inline_image() {
    while (pos_ + 2 < d_.size()) {
      if (d_[pos_] == 'E' && d_[pos_ + 1] == 'I' && pdf_space(d_[pos_ - 1]) &&
          (pos_ + 2 == d_.size() || pdf_space(d_[pos_ + 2]))) {
        pos_ += 2;
        return;
      }
      ++pos_;
    }
    pos_ = d_.size();
  }

  std::string_view data() const { return d_; }

 private:
  static bool is_number(std::string_view t) {
    if (t.empty()) return false;
    bool digit = false;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const char c = t[i];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        digit = true;
      } else if (!(c == '.' || ((c == '-' || c == '+') && i == 0))) {
        return false;
      }
    }
    return digit;
  }

  std::string literal_string() {
    ++pos_;  // (
    std::string out;
    int nesting = 1;
    while (pos_ < d_.size()) {
      const char c = d_[pos_++];
      if (c == '\\') {
        if (pos_ >= d_.size()) break;
        const char e = d_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 'r': out += '\r'; break;
          case 't': out += '\t'; break;
          case 'b': out += '\b'; break;
          case 'f': out += '\f'; break;
          case '\r':
            if (pos_ < d_.size() && d_[pos_] == '\n') ++pos_;
            break;
          case '\n': break;
          default:
            if (e >= '0' && e <= '7') {
              int v = e - '0';
              for (int k = 0; k < 2 && pos_ < d_.size() && d_[pos_] >= '0' && d_[pos_] <= '7'; ++k) {
                v = v * 8 + (d_[pos_++] - '0');
              }
              out += static_cast<char>(v & 0xFF);
            } else {
              out += e;
            }
        }
      } else if (c == '(') {
        ++nesting;
        out += c;
      } else if (c == ')') {
        if (--nesting == 0) break;
        out += c;
      } else {
        out += c;
      }
    }
    return out;
  }

  std::string_view d_;
  std::size_t pos_;
};

std::string ascii_hex_decode(std::string_view in) {
  std::string out;
  int hi = -1;
  for (char c : in) {
    if (c == '>') break;
    const int v = hex_value(c);
    if (v < 0) continue;
    if (hi < 0) {
      hi = v;
    } else {
      out += static_cast<char>(hi * 16 + v);
      hi = -1;
    }
  }
  if (hi >= 0) out += static_cast<char>(hi * 16);
  return out;
}

std::string ascii85_decode(std::string_view in) {
  std::string out;
  std::uint32_t tuple = 0;
  int count = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const char c = in[i];
    if (c == '~') break;
    if (pdf_space(c)) continue;
    if (c == 'z' && count == 0) {
      out.append(4, '\0');
      continue;
    }
    if (c < '!' || c > 'u') throw ParseFailure("pdf: bad ASCII85 data");
    tuple = tuple * 85 + static_cast<std::uint32_t>(c - '!');
    if (++count == 5) {
      for (int k = 3; k >= 0; --k) out += static_cast<char>((tuple >> (k * 8)) & 0xFF);
      tuple = 0;
      count = 0;
    }
  }
  if (count > 1) {
    for (int k = count; k < 5; ++k) tuple = tuple * 85 + 84;
    for (int k = 0; k < count - 1; ++k) out += static_cast<char>((tuple >> ((3 - k) * 8)) & 0xFF);
  }
  return out;
}

std::string png_unpredict(const std::string &in, int columns, int colors, int bpc) {
  const int bpp = std::max(1, colors * bpc / 8);
  const std::size_t row_len = static_cast<std::size_t>((columns * colors * bpc + 7) / 8);
  std::string out;
  std::string prev(row_len, '\0');
  std::size_t pos = 0;
  while (pos + 1 + row_len <= in.size()) {
    const int filter = static_cast<unsigned char>(in[pos]);
    std::string row = in.substr(pos + 1, row_len);
    for (std::size_t i = 0; i < row_len; ++i) {
      const int a = i >= static_cast<std::size_t>(bpp) ? static_cast<unsigned char>(row[i - bpp]) : 0;
      const int b = static_cast<unsigned char>(prev[i]);
      const int c = i >= static_cast<std::size_t>(bpp) ? static_cast<unsigned char>(prev[i - bpp]) : 0;
      int x = static_cast<unsigned char>(row[i]);
      switch (filter) {
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: {
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          x += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default: break;
      }
      row[i] = static_cast<char>(x & 0xFF);
    }
    out += row;
    prev = std::move(row);
    pos += 1 + row_len;
  }
  return out;
}

class PdfDocument {
 public:
  explicit PdfDocument(std::string_view data) : d_(data) { index(); }

  const PdfObj &resolve(const PdfObj &o, int depth = 0) {
    if (o.type != PdfObj::Type::ref) return o;
    if (depth > 32) return null_;
    return resolve(object(o.ref_num), depth + 1);
  }

  const PdfObj *lookup(const PdfObj &dict, std::string_view key) {
    const PdfObj &d = resolve(dict);
    if (!d.is_dict()) return nullptr;
    const PdfObj *v = d.get(key);
    if (!v) return nullptr;
    const PdfObj &r = resolve(*v);
    return r.type == PdfObj::Type::null ? nullptr : &r;
  }

  const PdfObj &object(int num) {
    if (const auto it = cache_.find(num); it != cache_.end()) return it->second;
    if (!busy_.insert(num).second) return null_;
    PdfObj obj;
    try {
      obj = load(num);
    } catch (const ParseFailure &) {
    }
    busy_.erase(num);
    return cache_.emplace(num, std::move(obj)).first->second;
  }

  // Decoded stream bytes.
  std::string stream_bytes(const PdfObj &stream) {
    const PdfObj &s = resolve(stream);
    if (s.type != PdfObj::Type::stream) return {};
    std::string data = s.str;
    std::vector<std::string> filters;
    std::vector<const PdfObj *> parms;
    if (const PdfObj *f = lookup(s, "Filter")) {
      if (f->type == PdfObj::Type::name) {
        filters.push_back(f->str);
      } else if (f->type == PdfObj::Type::array) {
        for (const auto &x : f->items) filters.push_back(resolve(x).str);
      }
    }
    if (const PdfObj *p = lookup(s, "DecodeParms")) {
      if (p->type == PdfObj::Type::array) {
        for (const auto &x : p->items) parms.push_back(&resolve(x));
      } else {
        parms.push_back(p);
      }
    }
    for (std::size_t i = 0; i < filters.size(); ++i) {
      const std::string &f = filters[i];
      if (f == "FlateDecode" || f == "Fl") {
        data = inflate_bytes(data, 15);
        const PdfObj *parm = i < parms.size() ? parms[i] : nullptr;
        if (parm && parm->is_dict()) {
          const PdfObj *pred = lookup(*parm, "Predictor");
          if (pred && pred->number >= 10) {
            const PdfObj *cols = lookup(*parm, "Columns");
            const PdfObj *colors = lookup(*parm, "Colors");
            const PdfObj *bpc = lookup(*parm, "BitsPerComponent");
            data = png_unpredict(data, cols ? static_cast<int>(cols->number) : 1,
                                 colors ? static_cast<int>(colors->number) : 1,
                                 bpc ? static_cast<int>(bpc->number) : 8);
          }
        }
      } else if (f == "ASCIIHexDecode" || f == "AHx") {
        data = ascii_hex_decode(data);
      } else if (f == "ASCII85Decode" || f == "A85") {
        data = ascii85_decode(data);
      } else {
        return {};  // image codecs and LZW carry no text we can use
      }
    }
    return data;
  }

  std::vector<const PdfObj *> pages() {
    std::vector<const PdfObj *> out;
    const PdfObj *catalog = nullptr;
    if (root_ref_) catalog = &resolve(object(*root_ref_));
    if (!catalog || !catalog->is_dict()) {
      for (const auto &[num, off] : offsets_) {
        const PdfObj &o = object(num);
        const PdfObj *t = o.is_dict() ? o.get("Type") : nullptr;
        if (t && t->str == "Catalog") catalog = &o;
      }
    }
    if (catalog && catalog->is_dict()) {
      if (const PdfObj *tree = lookup(*catalog, "Pages")) {
        std::set<const PdfObj *> seen;
        walk_pages(*tree, out, seen, 0);
      }
    }
    if (out.empty()) {
      for (const auto &[num, off] : offsets_) {
        const PdfObj &o = object(num);
        const PdfObj *t = o.is_dict() ? o.get("Type") : nullptr;
        if (t && t->type == PdfObj::Type::name && t->str == "Page") out.push_back(&o);
      }
    }
    return out;
  }

  // Inheritable page attribute lookup through /Parent links.
  const PdfObj *inherited(const PdfObj &page, std::string_view key) {
    const PdfObj *node = &page;
    for (int depth = 0; node && depth < 32; ++depth) {
      if (const PdfObj *v = lookup(*node, key)) return v;
      node = lookup(*node, "Parent");
    }
    return nullptr;
  }

 private:
  void walk_pages(const PdfObj &node_ref, std::vector<const PdfObj *> &out,
                  std::set<const PdfObj *> &seen, int depth) {
    const PdfObj &node = resolve(node_ref);
    if (!node.is_dict() || depth > 64 || !seen.insert(&node).second) return;
    const PdfObj *type = node.get("Type");
    const PdfObj *kids = lookup(node, "Kids");
    if (kids && kids->type == PdfObj::Type::array && (!type || type->str != "Page")) {
      for (const auto &k : kids->items) walk_pages(k, out, seen, depth + 1);
    } else {
      out.push_back(&node);
    }
  }

  // Locate every "N G obj" in file order; later definitions win.
  void index() {
    std::size_t pos = 0;
    while ((pos = d_.find("obj", pos)) != std::string_view::npos) {
      const std::size_t kw = pos;
      pos += 3;
      if (pos < d_.size() && !pdf_space(d_[pos]) && !pdf_delim(d_[pos])) continue;
      std::size_t p = kw;
      auto skip_back_space = [&] {
        std::size_t n = 0;
        while (p > 0 && pdf_space(d_[p - 1])) --p, ++n;
        return n;
      };
      auto back_digits = [&] {
        const std::size_t end = p;
        while (p > 0 && std::isdigit(static_cast<unsigned char>(d_[p - 1]))) --p;
        return end - p;
      };
      if (skip_back_space() == 0 || back_digits() == 0 || skip_back_space() == 0 ||
          back_digits() == 0) {
        continue;
      }
      if (p > 0 && !pdf_space(d_[p - 1]) && !pdf_delim(d_[p - 1]) && d_[p - 1] != '>') continue;
      const int num = std::atoi(std::string(d_.substr(p, 12)).c_str());
      offsets_[num] = kw + 3;
    }
    // Trailer dictionaries and cross-reference streams name the catalog.
    std::size_t t = d_.rfind("trailer");
    if (t != std::string_view::npos) {
      try {
        PdfLexer lx(d_, t + 7);
        PdfObj trailer = lx.value();
        if (const PdfObj *root = trailer.get("Root"); root && root->type == PdfObj::Type::ref) {
          root_ref_ = root->ref_num;
        }
      } catch (const ParseFailure &) {
      }
    }
    for (const auto &[num, off] : offsets_) {
      const PdfObj &o = object(num);
      if (!o.is_dict()) continue;
      const PdfObj *type = o.get("Type");
      if (!type) continue;
      if (type->str == "ObjStm") {
        objstm_.push_back(num);
      } else if (type->str == "XRef" && !root_ref_) {
        if (const PdfObj *root = o.get("Root"); root && root->type == PdfObj::Type::ref) {
          root_ref_ = root->ref_num;
        }
      }
    }
    for (int num : objstm_) expand_object_stream(num);
  }

  void expand_object_stream(int num) {
    const PdfObj &s = object(num);
    const PdfObj *n = s.get("N");
    const PdfObj *first = s.get("First");
    if (!n || !first) return;
    const std::string data = stream_bytes(s);
    PdfLexer header(data);
    std::vector<std::pair<int, std::size_t>> members;
    try {
      for (int i = 0; i < static_cast<int>(resolve(*n).number); ++i) {
        const PdfObj a = header.next();
        const PdfObj b = header.next();
        members.emplace_back(static_cast<int>(a.number),
                             static_cast<std::size_t>(resolve(*first).number + b.number));
      }
    } catch (const ParseFailure &) {
    }
    for (const auto &[obj_num, off] : members) {
      if (offsets_.contains(obj_num) || off >= data.size()) continue;
      if (const auto it = cache_.find(obj_num);
          it != cache_.end() && it->second.type != PdfObj::Type::null) {
        continue;
      }
      try {
        PdfLexer lx(data, off);
        cache_[obj_num] = lx.value();
      } catch (const ParseFailure &) {
      }
    }
  }

  PdfObj load(int num) {
    const auto it = offsets_.find(num);
    if (it == offsets_.end()) return {};
    PdfLexer lx(d_, it->second);
    PdfObj o = lx.value();
    if (o.type != PdfObj::Type::dict) return o;
    const std::size_t after_dict = lx.pos();
    lx.skip_space();
    if (d_.substr(lx.pos(), 6) != "stream") {
      lx.seek(after_dict);
      return o;
    }
    std::size_t start = lx.pos() + 6;
    if (start < d_.size() && d_[start] == '\r') ++start;
    if (start < d_.size() && d_[start] == '\n') ++start;
    std::optional<std::size_t> length;
    if (const PdfObj *len = o.get("Length")) {
      const PdfObj &l = resolve(*len);
      if (l.type == PdfObj::Type::number && l.number >= 0) length = static_cast<std::size_t>(l.number);
    }
    if (!length || start + *length > d_.size() ||
        d_.substr(start + *length, 32).find("endstream") == std::string_view::npos) {
      const auto end = d_.find("endstream", start);
      std::size_t e = end == std::string_view::npos ? d_.size() : end;
      if (e > start && d_[e - 1] == '\n') --e;
      if (e > start && d_[e - 1] == '\r') --e;
      length = e - start;
    }
    o.type = PdfObj::Type::stream;
    o.str = std::string(d_.substr(start, *length));
    return o;
  }

  std::string_view d_;
  std::map<int, std::size_t> offsets_;
  std::map<int, PdfObj> cache_;
  std::set<int> busy_;
  std::vector<int> objstm_;
  std::optional<int> root_ref_;
  PdfObj null_;
};

// Windows-1252 code points for 0x80..0x9F; the rest of the byte range maps
// straight to Latin-1.
constexpr std::array<std::uint16_t, 32> kWinAnsiHigh = {
    0x20AC, 0xFFFD, 0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021, 0x02C6, 0x2030, 0x0160,
    0x2039, 0x0152, 0xFFFD, 0x017D, 0xFFFD, 0xFFFD, 0x2018, 0x2019, 0x201C, 0x201D, 0x2022,
    0x2013, 0x2014, 0x02DC, 0x2122, 0x0161, 0x203A, 0x0153, 0xFFFD, 0x017E, 0x0178};

struct FontDecoder {
  std::map<std::uint32_t, std::string> to_unicode;
  std::size_t code_bytes = 1;
  bool identity = false;  // CID font without a ToUnicode map

  std::string decode(std::string_view bytes) const {
    std::string out;
    if (to_unicode.empty()) {
      if (identity) {
        for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) {
          append_utf8(out, (static_cast<unsigned char>(bytes[i]) << 8) |
                               static_cast<unsigned char>(bytes[i + 1]));
        }
        return out;
      }
      for (unsigned char c : bytes) {
        if (c >= 0x80 && c <= 0x9F) {
          append_utf8(out, kWinAnsiHigh[c - 0x80]);
        } else {
          append_utf8(out, c);
        }
      }
      return out;
    }
    for (std::size_t i = 0; i < bytes.size();) {
      const std::size_t n = std::min(code_bytes, bytes.size() - i);
      std::uint32_t code = 0;
      for (std::size_t k = 0; k < n; ++k) code = (code << 8) | static_cast<unsigned char>(bytes[i + k]);
      if (const auto it = to_unicode.find(code); it != to_unicode.end()) {
        out += it->second;
      } else if (code_bytes == 1) {
        append_utf8(out, code);
      }
      i += n;
    }
    return out;
  }
};

std::string utf16be_to_utf8(std::string_view b) {
  std::string out;
  for (std::size_t i = 0; i + 1 < b.size(); i += 2) {
    std::uint32_t u = (static_cast<unsigned char>(b[i]) << 8) | static_cast<unsigned char>(b[i + 1]);
    if (u >= 0xD800 && u <= 0xDBFF && i + 3 < b.size()) {
      const std::uint32_t lo =
          (static_cast<unsigned char>(b[i + 2]) << 8) | static_cast<unsigned char>(b[i + 3]);
      if (lo >= 0xDC00 && lo <= 0xDFFF) {
        u = 0x10000 + ((u - 0xD800) << 10) + (lo - 0xDC00);
        i += 2;
      }
    }
    append_utf8(out, u);
  }
  return out;
}

std::uint32_t code_of(std::string_view b) {
  std::uint32_t v = 0;
  for (unsigned char c : b) v = (v << 8) | c;
  return v;
}

void parse_cmap(const std::string &cmap, FontDecoder &font) {
  PdfLexer lx(cmap);
  std::vector<PdfObj> operands;
  std::size_t max_len = 0;
  try {
    while (!lx.eof()) {
      PdfObj o = lx.next();
      if (o.type != PdfObj::Type::keyword) {
        operands.push_back(std::move(o));
        continue;
      }
      if (o.str == "endcodespacerange") {
        for (std::size_t i = 0; i + 1 < operands.size(); i += 2) {
          max_len = std::max(max_len, operands[i].str.size());
        }
      } else if (o.str == "endbfchar") {
        for (std::size_t i = 0; i + 1 < operands.size(); i += 2) {
          max_len = std::max(max_len, operands[i].str.size());
          font.to_unicode[code_of(operands[i].str)] = utf16be_to_utf8(operands[i + 1].str);
        }
      } else if (o.str == "endbfrange") {
        for (std::size_t i = 0; i + 2 < operands.size(); i += 3) {
          const std::uint32_t lo = code_of(operands[i].str);
          const std::uint32_t hi = code_of(operands[i + 1].str);
          max_len = std::max(max_len, operands[i].str.size());
          const PdfObj &dst = operands[i + 2];
          if (hi < lo || hi - lo > 0xFFFF) continue;
          if (dst.type == PdfObj::Type::array) {
            for (std::uint32_t c = lo; c <= hi && c - lo < dst.items.size(); ++c) {
              font.to_unicode[c] = utf16be_to_utf8(dst.items[c - lo].str);
            }
          } else {
            std::string base = dst.str;
            for (std::uint32_t c = lo; c <= hi; ++c) {
              font.to_unicode[c] = utf16be_to_utf8(base);
              // Increment the last UTF-16 unit.
              if (!base.empty()) {
                for (std::size_t k = base.size(); k-- > 0;) {
                  if (static_cast<unsigned char>(base[k]) != 0xFF) {
                    base[k] = static_cast<char>(static_cast<unsigned char>(base[k]) + 1);
                    break;
                  }
                  base[k] = 0;
                }
              }
            }
          }
        }
      }
      if (o.str.starts_with("end") || o.str == "def" || o.str == "begincmap") operands.clear();
      if (o.str.starts_with("begin")) operands.clear();
    }
  } catch (const ParseFailure &) {
  }
  if (max_len > 0) font.code_bytes = max_len;
}

class PageTextExtractor {
 public:
  explicit PageTextExtractor(PdfDocument &doc) : doc_(doc) {}

  std::string page_text(const PdfObj &page) {
    out_.clear();
    const PdfObj *resources = doc_.inherited(page, "Resources");
    std::string content;
    if (const PdfObj *c = doc_.lookup(page, "Contents")) {
      if (c->type == PdfObj::Type::array) {
        for (const auto &part : c->items) {
          content += doc_.stream_bytes(part);
          content += '\n';
        }
      } else {
        content = doc_.stream_bytes(*c);
      }
    }
    run(content, resources, 0);
    return tidy(out_);
  }

 private:
  const FontDecoder &font(const PdfObj *resources, const std::string &name) {
    static const FontDecoder kDefault;
    if (!resources) return kDefault;
    const PdfObj *fonts = doc_.lookup(*resources, "Font");
    if (!fonts) return kDefault;
    const PdfObj *f = doc_.lookup(*fonts, name);
    if (!f) return kDefault;
    if (const auto it = fonts_.find(f); it != fonts_.end()) return it->second;
    FontDecoder dec;
    if (const PdfObj *tu = doc_.lookup(*f, "ToUnicode"); tu && tu->type == PdfObj::Type::stream) {
      parse_cmap(doc_.stream_bytes(*tu), dec);
    } else if (const PdfObj *st = doc_.lookup(*f, "Subtype"); st && st->str == "Type0") {
      dec.identity = true;
      dec.code_bytes = 2;
    }
    return fonts_.emplace(f, std::move(dec)).first->second;
  }

  void newline() {
    if (!out_.empty() && out_.back() != '\n') out_ += '\n';
  }

  void show(const FontDecoder &f, std::string_view bytes) { out_ += f.decode(bytes); }

  void run(const std::string &content, const PdfObj *resources, int depth) {
    if (depth > 8) return;
    PdfLexer lx(content);
    std::vector<PdfObj> ops;
    const FontDecoder *cur = &font(nullptr, "");
    std::optional<double> line_y;
    try {
      while (!lx.eof()) {
        PdfObj o = lx.next();
        if (o.type != PdfObj::Type::keyword) {
          ops.push_back(std::move(o));
          continue;
        }
        const std::string &op = o.str;
        if (op == "Tf" && ops.size() >= 2 && ops[ops.size() - 2].type == PdfObj::Type::name) {
          cur = &font(resources, ops[ops.size() - 2].str);
        } else if (op == "Tj" && !ops.empty()) {
          show(*cur, ops.back().str);
        } else if ((op == "'" || op == "\"") && !ops.empty()) {
          newline();
          show(*cur, ops.back().str);
        } else if (op == "TJ" && !ops.empty() && ops.back().type == PdfObj::Type::array) {
          for (const auto &item : ops.back().items) {
            if (item.type == PdfObj::Type::string) {
              show(*cur, item.str);
            } else if (item.type == PdfObj::Type::number && item.number < -250 &&
                       !out_.empty() && out_.back() != ' ' && out_.back() != '\n') {
              out_ += ' ';
            }
          }
        } else if ((op == "Td" || op == "TD") && ops.size() >= 2) {
          if (ops[ops.size() - 1].number != 0) {
            newline();
          } else if (ops[ops.size() - 2].number > 0 && !out_.empty() && out_.back() != ' ' &&
                     out_.back() != '\n') {
            out_ += ' ';
          }
        } else if (op == "T*") {
          newline();
        } else if (op == "Tm" && ops.size() >= 6) {
          const double y = ops[ops.size() - 1].number;
          if (line_y && *line_y != y) newline();
          line_y = y;
        } else if (op == "BT") {
          line_y.reset();
        } else if (op == "ET") {
          newline();
        } else if (op == "ID") {
          lx.skip_inline_image();
        } else if (op == "Do" && !ops.empty() && resources) {
          if (const PdfObj *xobjs = doc_.lookup(*resources, "XObject")) {
            const PdfObj *x = doc_.lookup(*xobjs, ops.back().str);
            const PdfObj *st = x ? doc_.lookup(*x, "Subtype") : nullptr;
            if (x && st && st->str == "Form") {
              const PdfObj *inner = doc_.lookup(*x, "Resources");
              run(doc_.stream_bytes(*x), inner ? inner : resources, depth + 1);
            }
          }
        }
        ops.clear();
      }
    } catch (const ParseFailure &) {
      // Keep whatever text came before the damaged operator.
    }
  }

  static std::string tidy(const std::string &raw) {
    std::vector<std::string> lines;
    for (const auto &l : split(raw, '\n')) {
      std::string t = collapse_whitespace(l);
      if (!t.empty()) lines.push_back(std::move(t));
    }
    return join_lines(lines);
  }

  PdfDocument &doc_;
  std::map<const PdfObj *, FontDecoder> fonts_;
  std::string out_;
};

}  // namespace

std::vector<std::string> pdf_page_texts(std::string_view bytes) {
  const auto header = bytes.substr(0, 1024).find("%PDF-");
  if (header == std::string_view::npos) throw ParseFailure("pdf: missing %PDF header");
  try {
    PdfDocument doc(bytes);
    const auto pages = doc.pages();
    if (pages.empty()) throw ParseFailure("pdf: no pages found");
    PageTextExtractor extractor(doc);
    std::vector<std::string> out;
    out.reserve(pages.size());
    for (const PdfObj *p : pages) out.push_back(sanitize_utf8(extractor.page_text(*p)));
    return out;
  } catch (const ParseFailure &) {
    throw;
  } catch (const std::exception &e) {
    throw ParseFailure(fmt::format("pdf: {}", e.what()));
  }
}

std::string pdf_text(std::string_view bytes) {
  const auto pages = pdf_page_texts(bytes);
  std::string out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (i > 0) out += '\n';
    out += fmt::format("--- page {} ---\n", i + 1);
    out += pages[i];
    if (!pages[i].empty()) out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- docx

std::string docx_text(std::string_view bytes) {
  const ZipArchive zip{std::string(bytes)};
  if (!zip.contains("word/document.xml")) throw ParseFailure("docx: word/document.xml missing");
  const std::string xml = zip.read("word/document.xml");

  struct Table {
    std::vector<std::string> row;
    std::string cell;
    bool in_cell = false;
  };
  std::vector<std::string> lines;
  std::vector<Table> tables;
  std::string para;
  bool in_text = false;

  auto flush_para = [&] {
    if (!tables.empty() && tables.back().in_cell) {
      std::string &cell = tables.back().cell;
      const std::string p = trim(para);
      if (!p.empty()) {
        if (!cell.empty()) cell += ' ';
        cell += p;
      }
    } else {
      const std::string p = trim(para);
      if (!p.empty()) lines.push_back(p);
    }
    para.clear();
  };

  XmlReader r;
  r.on_start = [&](std::string_view name, const char **) {
    if (name == "t") {
      in_text = true;
    } else if (name == "tab") {
      para += '\t';
    } else if (name == "br" || name == "cr") {
      para += ' ';
    } else if (name == "tbl") {
      flush_para();
      tables.emplace_back();
    } else if (name == "tr" && !tables.empty()) {
      tables.back().row.clear();
    } else if (name == "tc" && !tables.empty()) {
      tables.back().cell.clear();
      tables.back().in_cell = true;
    }
  };
  r.on_end = [&](std::string_view name) {
    if (name == "t") {
      in_text = false;
    } else if (name == "p") {
      flush_para();
    } else if (name == "tc" && !tables.empty()) {
      flush_para();
      tables.back().in_cell = false;
      std::string cell = tables.back().cell;
      std::replace(cell.begin(), cell.end(), '\t', ' ');
      tables.back().row.push_back(std::move(cell));
    } else if (name == "tr" && !tables.empty()) {
      std::string line;
      for (std::size_t i = 0; i < tables.back().row.size(); ++i) {
        if (i > 0) line += '\t';
        line += tables.back().row[i];
      }
      tables.back().row.clear();
      if (!trim(line).empty()) {
        if (tables.size() > 1 && tables[tables.size() - 2].in_cell) {
          std::string &outer = tables[tables.size() - 2].cell;
          if (!outer.empty()) outer += ' ';
          outer += collapse_whitespace(line);
        } else {
          lines.push_back(line);
        }
      }
    } else if (name == "tbl" && !tables.empty()) {
      tables.pop_back();
    }
  };
  r.on_text = [&](std::string_view text) {
    if (in_text) para.append(text);
  };
  r.parse(xml, "docx");
  flush_para();
  return join_lines(lines);
}

// ---------------------------------------------------------------- xlsx

namespace {

std::size_t column_index(std::string_view cell_ref) {
  std::size_t col = 0;
  for (char c : cell_ref) {
    if (c >= 'A' && c <= 'Z') {
      col = col * 26 + static_cast<std::size_t>(c - 'A' + 1);
    } else if (c >= 'a' && c <= 'z') {
      col = col * 26 + static_cast<std::size_t>(c - 'a' + 1);
    } else {
      break;
    }
  }
  return col == 0 ? 0 : col - 1;
}

std::string resolve_part(std::string_view base_dir, std::string_view target) {
  if (target.starts_with('/')) return std::string(target.substr(1));
  std::vector<std::string> parts;
  for (auto &p : split(base_dir, '/')) {
    if (!p.empty()) parts.push_back(std::move(p));
  }
  for (auto &p : split(target, '/')) {
    if (p.empty() || p == ".") continue;
    if (p == "..") {
      if (!parts.empty()) parts.pop_back();
    } else {
      parts.push_back(std::move(p));
    }
  }
  std::string out;
  for (const auto &p : parts) {
    if (!out.empty()) out += '/';
    out += p;
  }
  return out;
}

}  // namespace

std::string xlsx_text(std::string_view bytes) {
  const ZipArchive zip{std::string(bytes)};
  if (!zip.contains("xl/workbook.xml")) throw ParseFailure("xlsx: xl/workbook.xml missing");

  std::vector<std::string> shared;
  if (zip.contains("xl/sharedStrings.xml")) {
    std::string cur;
    bool in_si = false, in_t = false;
    int phonetic = 0;
    XmlReader r;
    r.on_start = [&](std::string_view n, const char **) {
      if (n == "si") {
        in_si = true;
        cur.clear();
      } else if (n == "rPh") {
        ++phonetic;
      } else if (n == "t") {
        in_t = true;
      }
    };
    r.on_end = [&](std::string_view n) {
      if (n == "si") {
        shared.push_back(cur);
        in_si = false;
      } else if (n == "rPh") {
        --phonetic;
      } else if (n == "t") {
        in_t = false;
      }
    };
    r.on_text = [&](std::string_view t) {
      if (in_si && in_t && phonetic == 0) cur.append(t);
    };
    r.parse(zip.read("xl/sharedStrings.xml"), "xlsx shared strings");
  }

  std::map<std::string, std::string> rels;
  if (zip.contains("xl/_rels/workbook.xml.rels")) {
    XmlReader r;
    r.on_start = [&](std::string_view n, const char **atts) {
      if (n != "Relationship") return;
      const char *id = attr(atts, "Id");
      const char *target = attr(atts, "Target");
      if (id && target) rels[id] = resolve_part("xl", target);
    };
    r.parse(zip.read("xl/_rels/workbook.xml.rels"), "xlsx relationships");
  }

  std::vector<std::pair<std::string, std::string>> sheets;  // name, part
  {
    XmlReader r;
    r.on_start = [&](std::string_view n, const char **atts) {
      if (n != "sheet") return;
      const char *name = attr(atts, "name");
      const char *rid = attr(atts, "id");
      std::string part;
      if (rid && rels.contains(rid)) {
        part = rels[rid];
      } else {
        part = fmt::format("xl/worksheets/sheet{}.xml", sheets.size() + 1);
      }
      sheets.emplace_back(name ? name : fmt::format("Sheet{}", sheets.size() + 1), part);
    };
    r.parse(zip.read("xl/workbook.xml"), "xlsx workbook");
  }

  std::string out;
  for (const auto &[name, part] : sheets) {
    if (!zip.contains(part)) continue;
    std::vector<std::string> rows;
    std::vector<std::string> row;
    std::string value, type;
    std::size_t col = 0, next_col = 0;
    bool in_v = false, in_is_t = false, in_is = false;

    XmlReader r;
    r.on_start = [&](std::string_view n, const char **atts) {
      if (n == "row") {
        row.clear();
        next_col = 0;
      } else if (n == "c") {
        const char *ref = attr(atts, "r");
        col = ref ? column_index(ref) : next_col;
        const char *t = attr(atts, "t");
        type = t ? t : "n";
        value.clear();
      } else if (n == "v") {
        in_v = true;
      } else if (n == "is") {
        in_is = true;
      } else if (n == "t" && in_is) {
        in_is_t = true;
      }
    };
    r.on_end = [&](std::string_view n) {
      if (n == "v") {
        in_v = false;
      } else if (n == "is") {
        in_is = false;
      } else if (n == "t") {
        in_is_t = false;
      } else if (n == "c") {
        std::string text = value;
        if (type == "s") {
          const std::size_t idx = static_cast<std::size_t>(std::strtoul(value.c_str(), nullptr, 10));
          text = idx < shared.size() ? shared[idx] : std::string{};
        } else if (type == "b") {
          text = value == "1" ? "TRUE" : "FALSE";
        }
        for (char &ch : text) {
          if (ch == '\t' || ch == '\n' || ch == '\r') ch = ' ';
        }
        if (row.size() <= col) row.resize(col + 1);
        row[col] = std::move(text);
        next_col = col + 1;
      } else if (n == "row") {
        while (!row.empty() && row.back().empty()) row.pop_back();
        if (row.empty()) return;
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
          if (i > 0) line += '\t';
          line += row[i];
        }
        rows.push_back(std::move(line));
      }
    };
    r.on_text = [&](std::string_view t) {
      if (in_v || in_is_t) value.append(t);
    };
    r.parse(zip.read(part), "xlsx sheet");

    if (!out.empty()) out += "\n\n";
    out += "# Sheet: " + name;
    for (const auto &l : rows) out += "\n" + l;
  }
  return out;
}

// ---------------------------------------------------------------- HTML

namespace {

struct HtmlNode {
  std::string tag;  // empty for text nodes
  std::map<std::string, std::string> attrs;
  std::string text;
  std::vector<std::unique_ptr<HtmlNode>> children;
  HtmlNode *parent = nullptr;

  std::string attr(const std::string &k) const {
    const auto it = attrs.find(k);
    return it == attrs.end() ? std::string{} : it->second;
  }
};

bool is_void(std::string_view t) {
  static const std::set<std::string_view> kVoid = {"area", "base", "br",   "col",  "embed",
                                                   "hr",   "img",  "input", "link", "meta",
                                                   "param", "source", "track", "wbr"};
  return kVoid.contains(t);
}

bool is_raw_text(std::string_view t) {
  return t == "script" || t == "style" || t == "textarea" || t == "title" || t == "noscript" ||
         t == "template";
}

bool is_block(std::string_view t) {
  static const std::set<std::string_view> kBlock = {
      "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "details",
      "div", "dl", "dt", "fieldset", "figcaption", "figure", "footer", "h1", "h2", "h3", "h4",
      "h5", "h6", "header", "hr", "li", "main", "nav", "ol", "p", "pre", "section", "summary",
      "table", "tbody", "thead", "tfoot", "tr", "ul", "html"};
  return kBlock.contains(t);
}

bool is_boilerplate_tag(std::string_view t) {
  static const std::set<std::string_view> kDrop = {
      "script", "style", "noscript", "nav", "header", "footer", "aside", "form", "iframe",
      "svg", "button", "select", "template", "head", "menu", "dialog", "input", "textarea",
      "object", "canvas", "label", "title"};
  return kDrop.contains(t);
}

bool is_boilerplate_marker(const HtmlNode &n) {
  const std::string role = to_lower(n.attr("role"));
  if (role == "navigation" || role == "banner" || role == "contentinfo" ||
      role == "complementary" || role == "search" || role == "menu" || role == "menubar" ||
      role == "dialog") {
    return true;
  }
  if (to_lower(n.attr("aria-hidden")) == "true" || n.attrs.contains("hidden")) return true;
  static const std::array<std::string_view, 14> kMarkers = {
      "nav", "menu", "sidebar", "footer", "breadcrumb", "cookie", "advert", "share",
      "social", "banner", "popup", "modal", "subscribe", "skip-link"};
  for (const std::string &a : {n.attr("class"), n.attr("id")}) {
    for (const auto &tok : split(to_lower(a), ' ')) {
      if (tok.empty()) continue;
      if (tok == "header" || tok == "site-header" || tok == "masthead") return true;
      for (auto m : kMarkers) {
        if (tok.find(m) != std::string::npos) return true;
      }
    }
  }
  return false;
}

class HtmlParser {
 public:
  explicit HtmlParser(std::string_view html) : h_(html) {
    root_.tag = "#root";
    stack_.push_back(&root_);
  }

  HtmlNode &parse() {
    while (pos_ < h_.size()) {
      if (h_[pos_] == '<') {
        if (h_.substr(pos_, 4) == "<!--") {
          const auto end = h_.find("-->", pos_ + 4);
          pos_ = end == std::string_view::npos ? h_.size() : end + 3;
        } else if (pos_ + 1 < h_.size() && (h_[pos_ + 1] == '!' || h_[pos_ + 1] == '?')) {
          const auto end = h_.find('>', pos_);
          pos_ = end == std::string_view::npos ? h_.size() : end + 1;
        } else if (pos_ + 1 < h_.size() && h_[pos_ + 1] == '/') {
          end_tag();
        } else if (pos_ + 1 < h_.size() && std::isalpha(static_cast<unsigned char>(h_[pos_ + 1]))) {
          start_tag();
        } else {
          add_text("<");
          ++pos_;
        }
      } else {
        const auto next = h_.find('<', pos_);
        const std::size_t end = next == std::string_view::npos ? h_.size() : next;
        add_text(h_.substr(pos_, end - pos_));
        pos_ = end;
      }
    }
    return root_;
  }

 private:
  void add_text(std::string_view t) {
    if (t.empty()) return;
    HtmlNode *top = stack_.back();
    if (!top->children.empty() && top->children.back()->tag.empty()) {
      top->children.back()->text.append(t);
      return;
    }
    auto node = std::make_unique<HtmlNode>();
    node->text = std::string(t);
    node->parent = top;
    top->children.push_back(std::move(node));
  }

  void end_tag() {
    const auto end = h_.find('>', pos_);
    const std::string name =
        to_lower(trim(h_.substr(pos_ + 2, (end == std::string_view::npos ? h_.size() : end) - pos_ - 2)));
    pos_ = end == std::string_view::npos ? h_.size() : end + 1;
    for (std::size_t i = stack_.size(); i-- > 1;) {
      if (stack_[i]->tag == name) {
        stack_.resize(i);
        return;
      }
    }
  }

  void close_implied(const std::string &tag) {
    static const std::map<std::string, std::set<std::string>> kCloses = {
        {"p", {"p"}},       {"li", {"li", "p"}}, {"dt", {"dt", "dd", "p"}},
        {"dd", {"dt", "dd", "p"}}, {"tr", {"tr", "td", "th"}}, {"td", {"td", "th"}},
        {"th", {"td", "th"}}, {"option", {"option"}}};
    static const std::set<std::string> kBlockClosesP = {
        "div", "ul", "ol", "table", "h1", "h2", "h3", "h4", "h5", "h6", "pre", "blockquote",
        "section", "article", "header", "footer", "nav", "aside", "form", "hr", "main"};
    std::set<std::string> closes;
    if (const auto it = kCloses.find(tag); it != kCloses.end()) closes = it->second;
    if (kBlockClosesP.contains(tag)) closes.insert("p");
    while (stack_.size() > 1 && closes.contains(stack_.back()->tag)) stack_.pop_back();
  }

  void start_tag() {
    std::size_t p = pos_ + 1;
    const std::size_t name_start = p;
    while (p < h_.size() && !std::isspace(static_cast<unsigned char>(h_[p])) && h_[p] != '>' &&
           h_[p] != '/') {
      ++p;
    }
    auto node = std::make_unique<HtmlNode>();
    node->tag = to_lower(h_.substr(name_start, p - name_start));
    bool self_closing = false;
    while (p < h_.size() && h_[p] != '>') {
      if (std::isspace(static_cast<unsigned char>(h_[p]))) {
        ++p;
        continue;
      }
      if (h_[p] == '/') {
        self_closing = true;
        ++p;
        continue;
      }
      const std::size_t ks = p;
      while (p < h_.size() && !std::isspace(static_cast<unsigned char>(h_[p])) && h_[p] != '=' &&
             h_[p] != '>' && h_[p] != '/') {
        ++p;
      }
      std::string key = to_lower(h_.substr(ks, p - ks));
      while (p < h_.size() && std::isspace(static_cast<unsigned char>(h_[p]))) ++p;
      std::string val;
      if (p < h_.size() && h_[p] == '=') {
        ++p;
        while (p < h_.size() && std::isspace(static_cast<unsigned char>(h_[p]))) ++p;
        if (p < h_.size() && (h_[p] == '"' || h_[p] == '\'')) {
          const char q = h_[p++];
          const auto close = h_.find(q, p);
          const std::size_t e = close == std::string_view::npos ? h_.size() : close;
          val = std::string(h_.substr(p, e - p));
          p = e + 1;
        } else {
          const std::size_t vs = p;
          while (p < h_.size() && !std::isspace(static_cast<unsigned char>(h_[p])) && h_[p] != '>') ++p;
          val = std::string(h_.substr(vs, p - vs));
        }
      }
      if (!key.empty()) node->attrs.emplace(std::move(key), decode_html_entities(val));
      self_closing = false;
    }
    pos_ = std::min(p + 1, h_.size());

    const std::string tag = node->tag;
    close_implied(tag);
    HtmlNode *parent = stack_.back();
    node->parent = parent;
    HtmlNode *raw = node.get();
    parent->children.push_back(std::move(node));

    if (is_raw_text(tag)) {
      const std::string close = "</" + tag;
      std::size_t e = pos_;
      while (true) {
        e = h_.find('<', e);
        if (e == std::string_view::npos || starts_with_icase(h_.substr(e), close)) break;
        ++e;
      }
      const std::size_t stop = e == std::string_view::npos ? h_.size() : e;
      auto text = std::make_unique<HtmlNode>();
      text->text = std::string(h_.substr(pos_, stop - pos_));
      text->parent = raw;
      raw->children.push_back(std::move(text));
      const auto gt = e == std::string_view::npos ? std::string_view::npos : h_.find('>', e);
      pos_ = gt == std::string_view::npos ? h_.size() : gt + 1;
      return;
    }
    if (!is_void(tag) && !self_closing) stack_.push_back(raw);
  }

  std::string_view h_;
  std::size_t pos_ = 0;
  HtmlNode root_;
  std::vector<HtmlNode *> stack_;
};

const HtmlNode *find_first(const HtmlNode &n, std::string_view tag) {
  if (n.tag == tag) return &n;
  for (const auto &c : n.children) {
    if (const HtmlNode *f = find_first(*c, tag)) return f;
  }
  return nullptr;
}

void collect_main(const HtmlNode &n, std::vector<const HtmlNode *> &out) {
  if (n.tag == "main" || n.tag == "article" || to_lower(n.attr("role")) == "main") {
    out.push_back(&n);
    return;
  }
  for (const auto &c : n.children) collect_main(*c, out);
}

class TextRenderer {
 public:
  std::string render(const HtmlNode &root) {
    walk(root, false);
    std::vector<std::string> lines;
    for (const auto &l : split(buf_, '\n')) {
      std::string t = trim(l);
      if (!t.empty()) lines.push_back(std::move(t));
    }
    return join_lines(lines);
  }

 private:
  void walk(const HtmlNode &n, bool pre) {
    if (n.tag.empty()) {
      std::string t = decode_html_entities(n.text);
      replace_nbsp(t);
      if (pre) {
        buf_ += t;
      } else {
        const bool lead = !t.empty() && std::isspace(static_cast<unsigned char>(t.front()));
        const bool trail = !t.empty() && std::isspace(static_cast<unsigned char>(t.back()));
        const std::string c = collapse_whitespace(t);
        if (lead && !buf_.empty() && buf_.back() != ' ' && buf_.back() != '\n') buf_ += ' ';
        buf_ += c;
        if (trail && !c.empty()) buf_ += ' ';
      }
      return;
    }
    if (n.tag != "#root" && n.tag != "html" && n.tag != "body" &&
        (is_boilerplate_tag(n.tag) || is_boilerplate_marker(n))) {
      return;
    }
    if (n.tag == "img" || n.tag == "style" || n.tag == "script") return;
    const bool block = is_block(n.tag);
    if (block) buf_ += '\n';
    if (n.tag == "td" || n.tag == "th") buf_ += '\t';
    for (const auto &c : n.children) walk(*c, pre || n.tag == "pre");
    if (block) buf_ += '\n';
  }

  static void replace_nbsp(std::string &s) {
    std::size_t p = 0;
    while ((p = s.find("\xC2\xA0", p)) != std::string::npos) s.replace(p, 2, " ");
  }

  std::string buf_;
};

std::size_t text_weight(const HtmlNode &n) {
  if (n.tag.empty()) return collapse_whitespace(n.text).size();
  if (is_boilerplate_tag(n.tag)) return 0;
  std::size_t w = 0;
  for (const auto &c : n.children) w += text_weight(*c);
  return w;
}

}  // namespace

HtmlText html_main_text(std::string_view html) {
  HtmlParser parser(html);
  const HtmlNode &root = parser.parse();
  HtmlText out;
  if (const HtmlNode *title = find_first(root, "title"); title && !title->children.empty()) {
    out.title = collapse_whitespace(decode_html_entities(title->children.front()->text));
  }
  std::vector<const HtmlNode *> candidates;
  collect_main(root, candidates);
  const HtmlNode *chosen = nullptr;
  std::size_t best = 0;
  for (const HtmlNode *c : candidates) {
    const std::size_t w = text_weight(*c);
    if (!chosen || w > best) {
      chosen = c;
      best = w;
    }
  }
  if (!chosen || best == 0) {
    chosen = find_first(root, "body");
    if (!chosen) chosen = &root;
  }
  TextRenderer r;
  out.text = r.render(*chosen);
  return out;
}

std::string decode_html_entities(std::string_view s) {
  static const std::map<std::string_view, std::uint32_t> kNamed = {
      {"amp", '&'},       {"lt", '<'},        {"gt", '>'},        {"quot", '"'},
      {"apos", '\''},     {"nbsp", 0xA0},     {"copy", 0xA9},     {"reg", 0xAE},
      {"trade", 0x2122},  {"hellip", 0x2026}, {"mdash", 0x2014},  {"ndash", 0x2013},
      {"lsquo", 0x2018},  {"rsquo", 0x2019},  {"ldquo", 0x201C},  {"rdquo", 0x201D},
      {"bull", 0x2022},   {"middot", 0xB7},   {"laquo", 0xAB},    {"raquo", 0xBB},
      {"euro", 0x20AC},   {"times", 0xD7},    {"deg", 0xB0},      {"para", 0xB6},
      {"sect", 0xA7},     {"shy", 0xAD},      {"larr", 0x2190},   {"rarr", 0x2192},
      {"uarr", 0x2191},   {"darr", 0x2193},   {"hearts", 0x2665}, {"check", 0x2713},
      {"zwj", 0x200D},    {"zwnj", 0x200C},   {"thinsp", 0x2009}, {"ensp", 0x2002},
      {"emsp", 0x2003},   {"pound", 0xA3},    {"yen", 0xA5},      {"cent", 0xA2},
  };
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '&') {
      out += s[i++];
      continue;
    }
    const auto semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out += s[i++];
      continue;
    }
    const std::string_view ent = s.substr(i + 1, semi - i - 1);
    std::optional<std::uint32_t> cp;
    if (ent.size() > 1 && ent[0] == '#') {
      const bool hex = ent[1] == 'x' || ent[1] == 'X';
      const std::string digits(ent.substr(hex ? 2 : 1));
      if (!digits.empty() &&
          std::all_of(digits.begin(), digits.end(), [hex](unsigned char c) {
            return hex ? std::isxdigit(c) != 0 : std::isdigit(c) != 0;
          })) {
        cp = static_cast<std::uint32_t>(std::strtoul(digits.c_str(), nullptr, hex ? 16 : 10));
        if (*cp == 0) cp = 0xFFFD;
      }
    } else if (const auto it = kNamed.find(ent); it != kNamed.end()) {
      cp = it->second;
    }
    if (!cp) {
      out += s[i++];
      continue;
    }
    append_utf8(out, *cp);
    i = semi + 1;
  }
  return out;
}

// ---------------------------------------------------------------- converters

std::optional<std::string> run_converter(const std::string &command_template,
                                         std::string_view bytes, std::string_view suffix) {
  std::string path = fmt::format("/tmp/issuetraj-doc-XXXXXX{}", suffix);
  const int fd = ::mkstemps(path.data(), static_cast<int>(suffix.size()));
  if (fd < 0) return std::nullopt;
  struct Cleanup {
    std::string p;
    ~Cleanup() { std::remove(p.c_str()); }
  } cleanup{path};
  std::size_t written = 0;
  while (written < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n <= 0) {
      ::close(fd);
      return std::nullopt;
    }
    written += static_cast<std::size_t>(n);
  }
  ::close(fd);

  std::string command = command_template;
  const std::string quoted = "'" + path + "'";
  for (std::size_t p = command.find("{file}"); p != std::string::npos; p = command.find("{file}", p)) {
    command.replace(p, 6, quoted);
    p += quoted.size();
  }
  command += " 2>/dev/null";

  FILE *pipe = ::popen(command.c_str(), "r");
  if (!pipe) return std::nullopt;
  std::string out;
  std::array<char, 8192> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) return std::nullopt;
  if (trim(out).empty()) return std::nullopt;
  return sanitize_utf8(out);
}

}  // namespace issuetraj
