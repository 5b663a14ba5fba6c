#include "fvx/toml.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>

#include "fvx/common.hpp"

namespace fvx::toml {

namespace {

using json = nlohmann::json;

class Parser {
 public:
  Parser(std::string_view text, std::string origin) : s_(text), origin_(std::move(origin)) {}

  json run() {
    json root = json::object();
    json* table = &root;
    for (;;) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        table = header(root);
      } else {
        key_value(*table);
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("config", origin_ + ":" + std::to_string(line_) + ": " + what);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }
  char take() {
    const char c = s_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }
  void skip_blank_lines() {
    for (;;) {
      skip_ws();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        take();
        continue;
      }
      return;
    }
  }
  // Whitespace, comments and newlines inside arrays and inline tables.
  void skip_space_and_newlines() { skip_blank_lines(); }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail(std::string("unexpected '") + peek() + "' after value");
    take();
  }

  static bool bare_char(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  }

  std::string key_part() {
    skip_ws();
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    std::string k;
    while (!eof() && bare_char(peek())) k += take();
    if (k.empty()) fail("expected a key");
    return k;
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> path{key_part()};
    skip_ws();
    while (peek() == '.') {
      ++pos_;
      path.push_back(key_part());
      skip_ws();
    }
    return path;
  }

  json* descend(json& root, const std::vector<std::string>& path, std::size_t count) {
    json* t = &root;
    for (std::size_t i = 0; i < count; ++i) {
      json& next = (*t)[path[i]];
      if (next.is_null()) next = json::object();
      if (next.is_array() && !next.empty() && next.back().is_object()) {
        t = &next.back();
        continue;
      }
      if (!next.is_object()) fail("key '" + path[i] + "' is not a table");
      t = &next;
    }
    return t;
  }

  json* header(json& root) {
    ++pos_;
    const bool array_table = peek() == '[';
    if (array_table) ++pos_;
    const auto path = key_path();
    if (peek() != ']') fail("expected ']' after table name");
    ++pos_;
    if (array_table) {
      if (peek() != ']') fail("expected ']]' after table name");
      ++pos_;
    }
    json* parent = descend(root, path, path.size() - 1);
    json& slot = (*parent)[path.back()];
    if (array_table) {
      if (slot.is_null()) slot = json::array();
      if (!slot.is_array()) fail("'" + path.back() + "' is not an array of tables");
      slot.push_back(json::object());
      return &slot.back();
    }
    if (slot.is_null()) slot = json::object();
    if (!slot.is_object()) fail("'" + path.back() + "' is not a table");
    if (defined_tables_.count(joined(path))) fail("table '" + joined(path) + "' defined twice");
    defined_tables_.insert(joined(path));
    return &slot;
  }

  static std::string joined(const std::vector<std::string>& path) {
    std::string out;
    for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
    return out;
  }

  void key_value(json& table) {
    const auto path = key_path();
    skip_ws();
    if (peek() != '=') fail("expected '=' after key '" + joined(path) + "'");
    ++pos_;
    skip_ws();
    json* t = descend(table, path, path.size() - 1);
    if (t->contains(path.back())) fail("duplicate key '" + joined(path) + "'");
    (*t)[path.back()] = value();
  }

  json value() {
    const char c = peek();
    if (c == '"') {
      if (peek(1) == '"' && peek(2) == '"') fail("multi-line strings are not supported");
      return basic_string();
    }
    if (c == '\'') {
      if (peek(1) == '\'' && peek(2) == '\'') fail("multi-line strings are not supported");
      return literal_string();
    }
    if (c == '[') return array();
    if (c == '{') return inline_table();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

  std::string basic_string() {
    ++pos_;
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = take();
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated escape");
      c = take();
      switch (c) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u':
        case 'U': {
          const std::size_t n = c == 'u' ? 4 : 8;
          if (pos_ + n > s_.size()) fail("short unicode escape");
          const std::string hex(s_.substr(pos_, n));
          pos_ += n;
          char* end = nullptr;
          const unsigned long cp = std::strtoul(hex.c_str(), &end, 16);
          if (*end != '\0') fail("bad unicode escape");
          append_utf8(out, cp);
          break;
        }
        default: fail(std::string("unknown escape \\") + c);
      }
    }
  }

  static void append_utf8(std::string& out, unsigned long cp) {
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

  std::string literal_string() {
    ++pos_;
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = take();
      if (c == '\'') return out;
      out += c;
    }
  }

  json array() {
    ++pos_;
    json out = json::array();
    for (;;) {
      skip_space_and_newlines();
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      skip_space_and_newlines();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json inline_table() {
    ++pos_;
    json out = json::object();
    skip_ws();
    if (peek() == '}') {
      ++pos_;
      return out;
    }
    for (;;) {
      key_value(out);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == '}') {
        ++pos_;
        return out;
      }
      fail("expected ',' or '}' in inline table");
    }
  }

  json number() {
    std::string tok;
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == ',' || c == ']' || c == '}' || c == '#') break;
      tok += take();
    }
    if (tok.empty()) fail("expected a value");
    std::string clean;
    for (std::size_t i = 0; i < tok.size(); ++i) {
      if (tok[i] == '_') {
        const bool ok = i > 0 && i + 1 < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i - 1])) &&
                        std::isdigit(static_cast<unsigned char>(tok[i + 1]));
        if (!ok) fail("misplaced '_' in number '" + tok + "'");
        continue;
      }
      clean += tok[i];
    }
    std::string body = clean;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) body = body.substr(1);
    if (body == "inf") return clean[0] == '-' ? -std::numeric_limits<double>::infinity()
                                              : std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    bool date_like = body.find_first_of(":T") != std::string::npos;
    for (std::size_t i = 0; i < body.size(); ++i)
      if (body[i] == '-' && (i == 0 || (body[i - 1] != 'e' && body[i - 1] != 'E'))) date_like = true;
    if (date_like) fail("dates and times are not supported ('" + tok + "')");
    const bool is_float = body.find_first_of(".eE") != std::string::npos;
    if (body.empty() || !std::isdigit(static_cast<unsigned char>(body[0]))) fail("invalid value '" + tok + "'");
    char* end = nullptr;
    if (is_float) {
      const double v = std::strtod(clean.c_str(), &end);
      if (*end != '\0') fail("invalid float '" + tok + "'");
      return v;
    }
    if (body.size() > 1 && body[0] == '0') fail("leading zeros in integer '" + tok + "'");
    errno = 0;
    const long long v = std::strtoll(clean.c_str(), &end, 10);
    if (*end != '\0' || errno == ERANGE) fail("invalid integer '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::string origin_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::set<std::string> defined_tables_;
};

}  // namespace

nlohmann::json parse(std::string_view text, const std::string& origin) { return Parser(text, origin).run(); }

}  // namespace fvx::toml
