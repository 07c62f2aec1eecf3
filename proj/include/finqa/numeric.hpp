#pragma once

// Number and boolean token handling shared by dataset ingest, the answer
// extractor and the evaluator. Financial text writes numbers as "$1,334",
// "3.9%", "7 million"; these helpers turn them into doubles and keep the
// decoration as a unit hint instead of silently rescaling.

#include <optional>
#include <string>
#include <string_view>

namespace finqa {

struct UnitHint {
  bool percent = false;
  // 1, 1e3, 1e6 or 1e9 when a magnitude word followed the number.
  double magnitude = 1.0;

  bool operator==(const UnitHint&) const = default;
};

struct NumberToken {
  double value = 0.0;  // already multiplied by hint.magnitude
  UnitHint hint;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Removes thousands commas, "$" and a trailing "%" plus surrounding
/// whitespace. Does not validate.
std::string strip_number_decorations(std::string_view text);

/// Parses a whole string as one number ("1,334", "-$2.5", "39.2%").
/// Returns nullopt unless the entire (trimmed) string is a number.
std::optional<double> parse_number(std::string_view text);

/// Like parse_number, but also accepts a trailing magnitude word
/// ("7 million") and reports the hint.
std::optional<NumberToken> parse_quantity(std::string_view text);

/// First number-like token in free text, with "%" and magnitude words
/// attached when they directly follow it.
std::optional<NumberToken> find_first_number(std::string_view text);

/// yes/no/true/false, case-insensitive, whole string after trimming.
std::optional<bool> parse_boolean_word(std::string_view text);

/// Shortest decimal string that round-trips to the same double.
std::string format_shortest(double value);

/// Fixed-point with the given number of decimals; "-0.00000" prints as "0.00000".
std::string format_fixed(double value, int decimals);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);

}  // namespace finqa
