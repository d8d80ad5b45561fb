#include <doctest.h>

#include "fixtures.hpp"
#include "issuetraj/documents.hpp"
#include "issuetraj/error.hpp"

using namespace issuetraj;

TEST_CASE("zip members") {
  const std::string plain = fixtures::zip_archive({{"a.txt", "alpha"}, {"dir/b.txt", "beta beta beta"}});
  ZipArchive z(plain);
  CHECK(z.names() == std::vector<std::string>{"a.txt", "dir/b.txt"});
  CHECK(z.read("dir/b.txt") == "beta beta beta");
  CHECK_THROWS_AS(z.read("nope"), ParseFailure);

  const std::string packed = fixtures::zip_archive({{"x.xml", std::string(5000, 'x')}}, true);
  CHECK(ZipArchive(packed).read("x.xml") == std::string(5000, 'x'));
  CHECK_THROWS_AS(ZipArchive("definitely not a zip"), ParseFailure);
}

TEST_CASE("pdf pages in order") {
  for (bool compress : {false, true}) {
    CAPTURE(compress);
    const std::string pdf = fixtures::pdf_bytes({"First page (one)", "Second page", "Third page"}, compress);
    const auto pages = pdf_page_texts(pdf);
    REQUIRE(pages.size() == 3);
    CHECK(pages[0].find("First page (one)") != std::string::npos);
    CHECK(pages[1].find("Second page") != std::string::npos);
    CHECK(pages[2].find("Third page") != std::string::npos);
    const std::string text = pdf_text(pdf);
    const auto a = text.find("First page");
    const auto b = text.find("Second page");
    const auto c = text.find("Third page");
    CHECK(a < b);
    CHECK(b < c);
    CHECK(c != std::string::npos);
  }
  CHECK_THROWS_AS(pdf_text("%PDF-1.4 garbage"), ParseFailure);
}

TEST_CASE("docx paragraphs and table cells") {
  const std::vector<std::vector<std::string>> table = {{"Name", "Value"}, {"timeout", "30s"}, {"retries", "3"}};
  const std::string doc = fixtures::docx_bytes({"Release notes", "Fixes & changes"}, table);
  const std::string text = docx_text(doc);
  CHECK(text.find("Release notes") != std::string::npos);
  CHECK(text.find("Fixes & changes") != std::string::npos);
  for (const auto &row : table) {
    for (const auto &cell : row) CHECK(text.find(cell) != std::string::npos);
  }
  CHECK(text.find("timeout\t30s") != std::string::npos);
  CHECK_THROWS_AS(docx_text(fixtures::zip_archive({{"other.xml", "<x/>"}})), ParseFailure);
}

TEST_CASE("xlsx sheets row-major") {
  const std::string book =
      fixtures::xlsx_bytes({{"Results", {{"case", "ms"}, {"cold", "120"}, {"warm", "15"}}}, {"Notes", {{"ok"}}}});
  const std::string text = xlsx_text(book);
  CHECK(text.find("# Sheet: Results") != std::string::npos);
  CHECK(text.find("case\tms") != std::string::npos);
  CHECK(text.find("cold\t120") != std::string::npos);
  CHECK(text.find("# Sheet: Notes") > text.find("warm\t15"));
}

TEST_CASE("html main text drops navigation") {
  const std::string html = R"(<!doctype html><html><head><title>Bug &amp; fix</title>
    <script>var navLinks = 1;</script><style>.x{}</style></head><body>
    <nav><a href="/">Home</a> <a href="/blog">Blog Index</a></nav>
    <header class="site-header">Site Banner</header>
    <article><h1>Pager drops the last byte</h1><p>The pager loop exits one byte early.</p>
    <p>Fixed&nbsp;in 2.1 &mdash; see <code>pager.c</code>.</p>
    <table><tr><td>a</td><td>b</td></tr></table></article>
    <footer>Copyright footer</footer></body></html>)";
  const HtmlText t = html_main_text(html);
  CHECK(t.title == "Bug & fix");
  CHECK(t.text.find("Pager drops the last byte") != std::string::npos);
  CHECK(t.text.find("The pager loop exits one byte early.") != std::string::npos);
  CHECK(t.text.find("Fixed in 2.1") != std::string::npos);
  CHECK(t.text.find("a\tb") != std::string::npos);
  for (const char *gone : {"Home", "Blog Index", "Site Banner", "Copyright footer", "navLinks"}) {
    CAPTURE(gone);
    CHECK(t.text.find(gone) == std::string::npos);
  }
}

TEST_CASE("html entities") {
  CHECK(decode_html_entities("&lt;a&gt; &amp;amp; &#65;&#x42; &copy; &bogus;") == "<a> &amp; AB \xC2\xA9 &bogus;");
}

TEST_CASE("external converters") {
  CHECK(run_converter("cat {file}", "converted text", ".doc") == std::optional<std::string>("converted text"));
  CHECK_FALSE(run_converter("definitely-not-a-real-tool-xyz {file}", "x", ".doc"));
  CHECK_FALSE(run_converter("false {file}", "x", ".doc"));
}
