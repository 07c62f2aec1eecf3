#include "finqa/numeric.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace finqa {
namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// UTF-8 for U+2212 MINUS SIGN, which shows up in copied financial tables.
constexpr std::string_view kUnicodeMinus = "\xE2\x88\x92";

struct MagnitudeWord {
  std::string_view word;
  double factor;
};
constexpr std::array<MagnitudeWord, 3> kMagnitudes = {{
    {"thousand", 1e3},
    {"million", 1e6},
    {"billion", 1e9},
}};

std::optional<double> from_chars_double(std::string_view digits) {
  if (digits.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = digits.data();
  const char* last = digits.data() + digits.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return value;
}

// Case-insensitive match of `word` at text[pos..], requiring a word boundary
// after it.
bool word_at(std::string_view text, std::size_t pos, std::string_view word) {
  if (pos + word.size() > text.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) != word[i]) return false;
  }
  const std::size_t after = pos + word.size();
  return after == text.size() || !is_alpha(text[after]);
}

// Attaches "%" / "percent" / magnitude words that directly follow a number
// ending at `pos`. Returns the new end.
std::size_t read_suffix(std::string_view text, std::size_t pos, NumberToken& token) {
  std::size_t p = pos;
  while (p < text.size() && text[p] == ' ') ++p;
  if (p < text.size() && text[p] == '%') {
    token.hint.percent = true;
    return p + 1;
  }
  if (word_at(text, p, "percent")) {
    token.hint.percent = true;
    return p + 7;
  }
  for (const auto& m : kMagnitudes) {
    if (word_at(text, p, m.word)) {
      token.hint.magnitude = m.factor;
      token.value *= m.factor;
      return p + m.word.size();
    }
  }
  return pos;
}

// Tries to read a number starting exactly at `pos` (sign and "$" included).
std::optional<NumberToken> read_number_at(std::string_view text, std::size_t pos) {
  std::size_t p = pos;
  bool negative = false;
  auto take_sign = [&] {
    if (p < text.size() && (text[p] == '-' || text[p] == '+')) {
      negative = text[p] == '-';
      ++p;
      return true;
    }
    if (text.substr(p, kUnicodeMinus.size()) == kUnicodeMinus) {
      negative = true;
      p += kUnicodeMinus.size();
      return true;
    }
    return false;
  };
  bool signed_already = take_sign();
  if (p < text.size() && text[p] == '$') {
    ++p;
    while (p < text.size() && text[p] == ' ') ++p;
    if (!signed_already) take_sign();
  }

  std::string digits;
  const std::size_t int_begin = p;
  while (p < text.size() && is_digit(text[p])) digits += text[p++];
  // thousands groups: ",ddd" not followed by another digit
  while (!digits.empty() && p + 3 < text.size() && text[p] == ',' && is_digit(text[p + 1]) &&
         is_digit(text[p + 2]) && is_digit(text[p + 3]) &&
         (p + 4 >= text.size() || !is_digit(text[p + 4]))) {
    digits.append(text.substr(p + 1, 3));
    p += 4;
  }
  if (p < text.size() && text[p] == '.' && p + 1 < text.size() && is_digit(text[p + 1])) {
    digits += '.';
    ++p;
    while (p < text.size() && is_digit(text[p])) digits += text[p++];
  }
  if (digits.empty() || digits == ".") return std::nullopt;
  if (p == int_begin) return std::nullopt;
  // exponent part, as in "4.3e-05"
  if (p < text.size() && (text[p] == 'e' || text[p] == 'E')) {
    std::size_t q = p + 1;
    if (q < text.size() && (text[q] == '-' || text[q] == '+')) ++q;
    if (q < text.size() && is_digit(text[q])) {
      digits.append(text.substr(p, q - p));
      p = q;
      while (p < text.size() && is_digit(text[p])) digits += text[p++];
    }
  }

  auto value = from_chars_double(digits);
  if (!value) return std::nullopt;
  NumberToken token;
  token.value = negative ? -*value : *value;
  token.begin = pos;
  token.end = read_suffix(text, p, token);
  return token;
}

}  // namespace

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string strip_number_decorations(std::string_view text) {
  std::string out;
  for (char c : trim(text)) {
    if (c == ',' || c == '$') continue;
    out += c;
  }
  out = trim(out);
  if (!out.empty() && out.back() == '%') out = trim(out.substr(0, out.size() - 1));
  return out;
}

std::optional<NumberToken> parse_quantity(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  auto token = read_number_at(t, 0);
  if (!token) {
    // plain forms with irregular comma placement ("1,23,456") still count
    const std::string stripped = strip_number_decorations(t);
    auto v = from_chars_double(stripped);
    if (!v || stripped.empty() || !(is_digit(stripped[0]) || stripped[0] == '-' ||
                                     stripped[0] == '+' || stripped[0] == '.')) {
      return std::nullopt;
    }
    NumberToken plain;
    plain.value = *v;
    plain.hint.percent = t.back() == '%';
    plain.end = t.size();
    return plain;
  }
  if (token->end != t.size()) return std::nullopt;
  return token;
}

std::optional<double> parse_number(std::string_view text) {
  auto q = parse_quantity(text);
  if (!q || q->hint.magnitude != 1.0) return std::nullopt;
  return q->value;
}

std::optional<NumberToken> find_first_number(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool starts = is_digit(c) || c == '$' || c == '-' || c == '+' ||
                        text.substr(i, kUnicodeMinus.size()) == kUnicodeMinus;
    if (!starts) continue;
    // "FY2015", "Q1", "2015-2016": a token glued to a preceding word or digit
    // is not a standalone number.
    if (i > 0 && (is_alpha(text[i - 1]) || (c != '$' && is_digit(text[i - 1])))) continue;
    if ((c == '-' || c == '+') && i > 0 && is_digit(text[i - 1])) continue;
    if (auto token = read_number_at(text, i)) return token;
  }
  return std::nullopt;
}

std::optional<bool> parse_boolean_word(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "yes" || t == "true") return true;
  if (t == "no" || t == "false") return false;
  return std::nullopt;
}

std::string format_shortest(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), ptr);
}

std::string format_fixed(double value, int decimals) {
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%.*f", decimals, value);
  std::string out(buf.data());
  if (!out.empty() && out[0] == '-' &&
      out.find_first_not_of("0.", 1) == std::string::npos) {
    out.erase(0, 1);
  }
  return out;
}

}  // namespace finqa
