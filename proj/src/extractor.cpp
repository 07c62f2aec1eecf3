#include "finqa/extractor.hpp"

#include <algorithm>
#include <cctype>
#include <memory>
#include <regex>
#include <sstream>
#include <utility>
#include <vector>

namespace finqa::extract {
namespace {

// ---------------------------------------------------------------------------
// Tolerant reader for the JSON-like "Program" block. LLM output routinely
// leaves keys unquoted (operation:"divide"), drops the final closing brace and
// mixes quoted and bare values, so a strict JSON parser rejects most of it.

struct Node;
using Members = std::vector<std::pair<std::string, Node>>;

struct Node {
  std::string text;                  // scalar value, already unquoted
  std::shared_ptr<Members> members;  // set for objects
  bool is_object() const { return members != nullptr; }
};

class LooseReader {
 public:
  explicit LooseReader(std::string_view text) : text_(text) {}

  Node read_object_at(std::size_t pos) {
    pos_ = pos;
    return read_value();
  }

  // Members starting at pos without an opening brace.
  Node read_members_at(std::size_t pos) {
    pos_ = pos;
    Node node;
    node.members = std::make_shared<Members>();
    read_members(*node.members);
    return node;
  }

 private:
  Node read_value() {
    skip_ws();
    Node node;
    if (at_end()) return node;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      node.members = std::make_shared<Members>();
      read_members(*node.members);
      skip_ws();
      if (!at_end() && text_[pos_] == '}') ++pos_;
      return node;
    }
    if (c == '"' || c == '\'') {
      node.text = read_quoted();
      return node;
    }
    const std::size_t start = pos_;
    while (!at_end() && text_[pos_] != ',' && text_[pos_] != '}' && text_[pos_] != '\n') ++pos_;
    node.text = trim(text_.substr(start, pos_ - start));
    return node;
  }

  void read_members(Members& out) {
    for (;;) {
      skip_separators();
      if (at_end() || text_[pos_] == '}') return;
      if (text_.substr(pos_, 3) == "...") {
        pos_ += 3;
        continue;
      }
      std::string key = read_key();
      skip_ws();
      if (at_end() || text_[pos_] != ':') {
        // not a member; skip to the next separator so one bad token does not
        // sink the whole block
        while (!at_end() && text_[pos_] != ',' && text_[pos_] != '}') ++pos_;
        continue;
      }
      ++pos_;
      out.emplace_back(std::move(key), read_value());
    }
  }

  std::string read_key() {
    skip_ws();
    if (!at_end() && (text_[pos_] == '"' || text_[pos_] == '\'')) return read_quoted();
    const std::size_t start = pos_;
    while (!at_end() && text_[pos_] != ':' && text_[pos_] != ',' && text_[pos_] != '}' &&
           text_[pos_] != '{') {
      ++pos_;
    }
    return trim(text_.substr(start, pos_ - start));
  }

  std::string read_quoted() {
    const char quote = text_[pos_++];
    std::string out;
    while (!at_end() && text_[pos_] != quote) {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
      out += text_[pos_++];
    }
    if (!at_end()) ++pos_;
    return out;
  }

  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  void skip_separators() {
    while (!at_end() && (std::isspace(static_cast<unsigned char>(text_[pos_])) ||
                         text_[pos_] == ',')) {
      ++pos_;
    }
  }
  bool at_end() const { return pos_ >= text_.size(); }

  std::string_view text_;
  std::size_t pos_ = 0;
};

bool iequals(std::string_view a, std::string_view b) { return to_lower(a) == to_lower(b); }

const Node* find_member(const Node& object, std::initializer_list<std::string_view> names) {
  if (!object.is_object()) return nullptr;
  for (const auto& [key, value] : *object.members) {
    for (auto name : names) {
      if (iequals(key, name)) return &value;
    }
  }
  return nullptr;
}

// Positions of every "Program" key (quoted or bare, followed by ':').
std::vector<std::size_t> program_key_positions(std::string_view text) {
  static const std::regex key_re(R"(["']?program["']?\s*:)", std::regex::icase);
  std::vector<std::size_t> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), key_re); it != std::sregex_iterator();
       ++it) {
    out.push_back(static_cast<std::size_t>(it->position()));
  }
  return out;
}

// Innermost '{' still open at `target`, or npos. Quotes are only tracked inside
// braces so apostrophes in prose cannot desynchronize the scan.
std::size_t enclosing_brace(std::string_view text, std::size_t target) {
  std::vector<std::size_t> open;
  char quote = 0;
  for (std::size_t i = 0; i < target && i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' && !open.empty()) quote = c;
    else if (c == '{') open.push_back(i);
    else if (c == '}' && !open.empty()) open.pop_back();
  }
  return open.empty() ? std::string_view::npos : open.back();
}

std::optional<int> step_key_index(std::string_view key) {
  const std::string k = trim(key);
  if (k.size() < 2 || k[0] != '#') return std::nullopt;
  if (!std::all_of(k.begin() + 1, k.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  if (k.size() > 10) return std::nullopt;
  return std::stoi(k.substr(1));
}

std::optional<std::string> normalize_arg(const Node* node) {
  if (!node || node->is_object()) return std::nullopt;
  const std::string t = trim(node->text);
  if (!t.empty() && t[0] == '#') return t;
  return strip_number_decorations(t);
}

Outcome fail(Kind kind, Failure failure, std::string diagnostic) {
  Outcome out;
  out.kind = kind;
  out.failure = failure;
  out.diagnostic = std::move(diagnostic);
  return out;
}

bool is_blank_or_comment(const std::string& line) {
  const std::string t = trim(line);
  return t.empty() || t[0] == '#';
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (;;) {
    const std::size_t nl = text.find('\n', start);
    std::string line(text.substr(start, nl == std::string_view::npos ? text.npos : nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out += '\n';
    out += lines[i];
  }
  return out;
}

bool is_python_marker(const std::string& line) { return iequals(trim(line), "#python"); }

bool is_assignment(const std::string& line) {
  static const std::regex assign_re(R"(^\s*[A-Za-z_][A-Za-z0-9_]*\s*([-+*/%]|\*\*|//)?=[^=])");
  return std::regex_search(line + " ", assign_re);
}

}  // namespace

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::python_source: return "python_source";
    case Kind::dsl_structure: return "dsl_structure";
    case Kind::scalar_answer: return "scalar_answer";
    case Kind::boolean_answer: return "boolean_answer";
  }
  return "?";
}

std::string_view failure_name(Failure failure) {
  switch (failure) {
    case Failure::no_code_found: return "no_code_found";
    case Failure::no_program_found: return "no_program_found";
    case Failure::unparseable_answer: return "unparseable_answer";
  }
  return "?";
}

Outcome extract_python(std::string_view text) {
  std::vector<std::string> lines = split_lines(text);
  std::size_t begin = 0, end = lines.size();

  auto fence = std::find_if(lines.begin(), lines.end(),
                            [](const std::string& l) { return trim(l).rfind("```", 0) == 0; });
  if (fence != lines.end()) {
    begin = static_cast<std::size_t>(fence - lines.begin()) + 1;
    auto close = std::find_if(lines.begin() + static_cast<std::ptrdiff_t>(begin), lines.end(),
                              [](const std::string& l) { return trim(l).rfind("```", 0) == 0; });
    end = static_cast<std::size_t>(close - lines.begin());
  } else {
    auto marker = std::find_if(lines.begin(), lines.end(), is_python_marker);
    if (marker != lines.end()) {
      begin = static_cast<std::size_t>(marker - lines.begin());
    } else {
      auto first_assign = std::find_if(lines.begin(), lines.end(), is_assignment);
      if (first_assign == lines.end()) {
        return fail(Kind::python_source, Failure::no_code_found, "no assignment statement found");
      }
      begin = static_cast<std::size_t>(first_assign - lines.begin());
    }
  }

  // leading blank lines, then one "#Python" marker line
  while (begin < end && trim(lines[begin]).empty()) ++begin;
  if (begin < end && is_python_marker(lines[begin])) ++begin;
  while (begin < end && trim(lines[begin]).empty()) ++begin;
  while (end > begin && trim(lines[end - 1]).empty()) --end;

  const bool has_code = std::any_of(lines.begin() + static_cast<std::ptrdiff_t>(begin),
                                    lines.begin() + static_cast<std::ptrdiff_t>(end),
                                    [](const std::string& l) { return !is_blank_or_comment(l); });
  if (!has_code) return fail(Kind::python_source, Failure::no_code_found, "code region is empty");

  std::string source = join_lines(lines, begin, end);
  while (!source.empty() && std::isspace(static_cast<unsigned char>(source.back()))) {
    source.pop_back();
  }
  Outcome out;
  out.kind = Kind::python_source;
  out.payload = std::move(source);
  return out;
}

Outcome extract_dsl(std::string_view text) {
  const auto keys = program_key_positions(text);
  if (keys.empty()) {
    return fail(Kind::dsl_structure, Failure::no_program_found, "no \"Program\" key in response");
  }
  const std::size_t key_pos = keys.back();
  const std::size_t brace = enclosing_brace(text, key_pos);

  LooseReader reader(text);
  const Node root =
      brace == std::string_view::npos ? reader.read_members_at(key_pos) : reader.read_object_at(brace);

  const Node* program = find_member(root, {"Program"});
  if (!program || !program->is_object()) {
    return fail(Kind::dsl_structure, Failure::no_program_found,
                "\"Program\" is not followed by an object");
  }

  dsl::RawProgram raw;
  for (const auto& [key, value] : *program->members) {
    if (auto index = step_key_index(key)) {
      dsl::RawStep step;
      step.key = *index;
      if (value.is_object()) {
        if (const Node* op = find_member(value, {"operation", "op"}); op && !op->is_object()) {
          step.operation = trim(op->text);
        }
        step.arg1 = normalize_arg(find_member(value, {"arg1"}));
        step.arg2 = normalize_arg(find_member(value, {"arg2"}));
      }
      raw.steps.push_back(std::move(step));
    } else if (iequals(trim(key), "Answer") && !value.is_object()) {
      raw.declared_answer = trim(value.text);
    }
  }
  if (!raw.declared_answer) {
    if (const Node* answer = find_member(root, {"Answer"}); answer && !answer->is_object()) {
      raw.declared_answer = trim(answer->text);
    }
  }
  if (raw.steps.empty()) {
    return fail(Kind::dsl_structure, Failure::no_program_found,
                "\"Program\" object has no \"#k\" steps");
  }
  std::stable_sort(raw.steps.begin(), raw.steps.end(),
                   [](const dsl::RawStep& a, const dsl::RawStep& b) { return a.key < b.key; });

  Outcome out;
  out.kind = Kind::dsl_structure;
  out.payload = std::move(raw);
  return out;
}

Outcome extract_final_answer(std::string_view text) {
  static const std::regex bool_re(R"(\b(yes|no|true|false)\b)", std::regex::icase);
  const std::string s(text);

  std::optional<std::pair<std::size_t, bool>> boolean;
  std::smatch m;
  if (std::regex_search(s, m, bool_re)) {
    boolean = {static_cast<std::size_t>(m.position(0)), *parse_boolean_word(m.str(1))};
  }
  const auto number = find_first_number(text);

  Outcome out;
  if (boolean && (!number || boolean->first < number->begin)) {
    out.kind = Kind::boolean_answer;
    out.payload = boolean->second;
    return out;
  }
  if (number) {
    out.kind = Kind::scalar_answer;
    out.payload = ScalarAnswer{number->value, number->hint};
    return out;
  }
  const std::string excerpt = trim(text).substr(0, 60);
  return fail(Kind::scalar_answer, Failure::unparseable_answer,
              "no number or yes/no token in '" + excerpt + "'");
}

std::string to_program_block(const dsl::Program& program,
                             const std::optional<std::string>& declared_answer) {
  auto arg_text = [](const dsl::Arg& arg) {
    if (const auto* ref = std::get_if<dsl::Ref>(&arg)) return "#" + std::to_string(ref->index);
    return format_shortest(std::get<double>(arg));
  };
  std::ostringstream out;
  out << "{\"Program\": {";
  for (std::size_t i = 0; i < program.steps.size(); ++i) {
    const auto& step = program.steps[i];
    if (i > 0) out << ", ";
    out << "\"#" << i << "\": {\"operation\": \"" << dsl::op_name(step.op) << "\", \"arg1\": \""
        << arg_text(step.arg1) << "\", \"arg2\": \"" << arg_text(step.arg2) << "\"}";
  }
  out << "}";
  if (declared_answer) out << ", \"Answer\": \"" << *declared_answer << "\"";
  out << "}";
  return out.str();
}

}  // namespace finqa::extract
