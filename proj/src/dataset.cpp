#include "finqa/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace finqa::dataset {
namespace {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open dataset file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IngestError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

[[noreturn]] void entry_error(std::size_t index, const std::string& what) {
  throw IngestError("entry " + std::to_string(index) + ": " + what);
}

const json& require(const json& obj, const char* field, std::size_t index) {
  if (!obj.is_object() || !obj.contains(field) || obj.at(field).is_null()) {
    entry_error(index, std::string("missing field '") + field + "'");
  }
  return obj.at(field);
}

std::string scalar_to_string(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_boolean()) return value.get<bool>() ? "yes" : "no";
  if (value.is_number()) return format_shortest(value.get<double>());
  if (value.is_array()) {
    std::string out;
    for (const auto& v : value) {
      if (!out.empty()) out += ", ";
      out += scalar_to_string(v);
    }
    return out;
  }
  return value.dump();
}

std::vector<std::string> string_list(const json& value, const char* field, std::size_t index) {
  if (!value.is_array()) entry_error(index, std::string("field '") + field + "' is not a list");
  std::vector<std::string> out;
  for (const auto& v : value) out.push_back(scalar_to_string(v));
  return out;
}

Table read_table(const json& value, std::size_t index) {
  if (!value.is_array()) entry_error(index, "field 'table' is not a list of rows");
  Table table;
  for (const auto& row : value) {
    if (!row.is_array()) entry_error(index, "table row is not a list of cells");
    std::vector<std::string> cells;
    for (const auto& cell : row) cells.push_back(cell.is_null() ? "" : scalar_to_string(cell));
    table.push_back(std::move(cells));
  }
  pad_table(table);
  return table;
}

GoldAnswer gold_from_json(const json& value) {
  if (value.is_number()) {
    GoldAnswer gold;
    gold.number = value.get<double>();
    gold.text = format_shortest(*gold.number);
    return gold;
  }
  if (value.is_array() && value.size() == 1) return gold_from_json(value.front());
  return parse_gold_answer(scalar_to_string(value));
}

// gold_inds is {"table_3": "...", "text_1": "..."} upstream.
FactsLocation facts_from_gold_inds(const std::vector<const json*>& sources) {
  bool table = false, text = false;
  for (const json* inds : sources) {
    if (!inds || !inds->is_object()) continue;
    for (const auto& [key, _] : inds->items()) {
      if (key.rfind("table", 0) == 0) table = true;
      else if (key.rfind("text", 0) == 0) text = true;
    }
  }
  if (table && text) return FactsLocation::table_text;
  if (table) return FactsLocation::table_only;
  if (text) return FactsLocation::text_only;
  return FactsLocation::unknown;
}

void attach_gold_program(QARecord& record, std::string text) {
  record.gold_program_text = trim(text);
  if (record.gold_program_text.empty()) return;
  try {
    record.gold_program = dsl::parse_program(record.gold_program_text);
  } catch (const dsl::ParseError&) {
    // outside the DSL (table_* ops, const_* args): kept as text for step counting only
  }
}

void finish_record(QARecord& record) {
  record.question_kind =
      record.gold_answer.truth ? QuestionKind::boolean : QuestionKind::numerical;
}

// Runs one entry's conversion, turning JSON type errors into ingest errors that
// name the entry.
template <typename Fn>
void guarded(std::size_t index, Fn&& fn) {
  try {
    fn();
  } catch (const json::exception& e) {
    entry_error(index, e.what());
  }
}

std::vector<QARecord> check_unique_ids(std::vector<QARecord> records) {
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = seen.emplace(records[i].id, i);
    if (!inserted) {
      throw IngestError("duplicate record id '" + records[i].id + "' (records " +
                        std::to_string(it->second) + " and " + std::to_string(i) + ")");
    }
  }
  return records;
}

const json& require_array_root(const json& root, const std::filesystem::path& path) {
  if (!root.is_array()) throw IngestError(path.string() + ": expected a JSON array of entries");
  return root;
}

}  // namespace

std::string_view kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::finqa: return "finqa";
    case DatasetKind::convfinqa: return "convfinqa";
    case DatasetKind::tatqa: return "tatqa";
  }
  return "?";
}

std::optional<DatasetKind> kind_from_name(std::string_view name) {
  for (auto k : {DatasetKind::finqa, DatasetKind::convfinqa, DatasetKind::tatqa}) {
    if (kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view facts_location_name(FactsLocation location) {
  switch (location) {
    case FactsLocation::table_only: return "table_only";
    case FactsLocation::text_only: return "text_only";
    case FactsLocation::table_text: return "table_text";
    case FactsLocation::unknown: return "unknown";
  }
  return "?";
}

std::optional<FactsLocation> facts_location_from_name(std::string_view name) {
  for (auto f : {FactsLocation::table_only, FactsLocation::text_only, FactsLocation::table_text,
                 FactsLocation::unknown}) {
    if (facts_location_name(f) == name) return f;
  }
  return std::nullopt;
}

std::string_view question_kind_name(QuestionKind kind) {
  return kind == QuestionKind::boolean ? "boolean" : "numerical";
}

GoldAnswer parse_gold_answer(std::string_view text) {
  GoldAnswer gold;
  gold.text = trim(text);
  if (auto truth = parse_boolean_word(gold.text)) {
    gold.truth = truth;
    return gold;
  }
  if (auto quantity = parse_quantity(gold.text)) {
    gold.number = quantity->value;
    gold.hint = quantity->hint;
  }
  return gold;
}

bool pad_table(Table& table) {
  std::size_t width = 0;
  for (const auto& row : table) width = std::max(width, row.size());
  bool padded = false;
  for (auto& row : table) {
    if (row.size() < width) {
      row.resize(width);
      padded = true;
    }
  }
  return padded;
}

std::string serialize_table(const Table& table) {
  Table grid = table;
  pad_table(grid);
  std::string out;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    if (r > 0) out += '\n';
    for (std::size_t c = 0; c < grid[r].size(); ++c) {
      if (c > 0) out += " | ";
      const std::string& cell = grid[r][c];
      out += trim(cell).empty() ? std::string("-") : cell;
    }
  }
  return out;
}

std::string assemble_passage(const QARecord& record) {
  auto join = [](const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
      const std::string t = trim(p);
      if (t.empty()) continue;
      if (!out.empty()) out += ' ';
      out += t;
    }
    return out;
  };
  std::string passage;
  for (const std::string& part : {join(record.pre_text), serialize_table(record.table),
                                  join(record.post_text)}) {
    if (part.empty()) continue;
    if (!passage.empty()) passage += '\n';
    passage += part;
  }
  return passage;
}

std::vector<QARecord> load_finqa(const std::filesystem::path& path) {
  const json root = read_json_file(path);
  std::vector<QARecord> records;
  std::size_t index = 0;
  for (const auto& entry : require_array_root(root, path)) guarded(index, [&] {
    QARecord record;
    record.kind = DatasetKind::finqa;
    record.id = require(entry, "id", index).get<std::string>();
    if (record.id.empty()) entry_error(index, "empty id");
    record.pre_text = string_list(require(entry, "pre_text", index), "pre_text", index);
    record.post_text = string_list(require(entry, "post_text", index), "post_text", index);
    record.table = read_table(require(entry, "table", index), index);

    const json& qa = require(entry, "qa", index);
    record.questions.push_back(scalar_to_string(require(qa, "question", index)));
    if (qa.contains("exe_ans") && !qa["exe_ans"].is_null()) {
      record.gold_answer = gold_from_json(qa["exe_ans"]);
    } else {
      record.gold_answer = gold_from_json(require(qa, "answer", index));
    }
    if (qa.contains("program") && qa["program"].is_string()) {
      attach_gold_program(record, qa["program"].get<std::string>());
    }
    record.facts_location =
        facts_from_gold_inds({qa.contains("gold_inds") ? &qa["gold_inds"] : nullptr});
    finish_record(record);
    records.push_back(std::move(record));
    ++index;
  });
  return check_unique_ids(std::move(records));
}

std::vector<QARecord> load_convfinqa(const std::filesystem::path& path) {
  const json root = read_json_file(path);
  std::vector<QARecord> records;
  std::size_t index = 0;
  for (const auto& entry : require_array_root(root, path)) guarded(index, [&] {
    QARecord record;
    record.kind = DatasetKind::convfinqa;
    record.id = require(entry, "id", index).get<std::string>();
    if (record.id.empty()) entry_error(index, "empty id");
    record.pre_text = string_list(require(entry, "pre_text", index), "pre_text", index);
    record.post_text = string_list(require(entry, "post_text", index), "post_text", index);
    record.table = read_table(require(entry, "table", index), index);

    const json& annotation = require(entry, "annotation", index);
    record.questions =
        string_list(require(annotation, "dialogue_break", index), "dialogue_break", index);
    if (record.questions.empty()) entry_error(index, "conversation has no turns");

    if (annotation.contains("exe_ans_list") && annotation["exe_ans_list"].is_array() &&
        !annotation["exe_ans_list"].empty()) {
      record.gold_answer = gold_from_json(annotation["exe_ans_list"].back());
    } else if (entry.contains("qa") && entry["qa"].contains("exe_ans")) {
      record.gold_answer = gold_from_json(entry["qa"]["exe_ans"]);
    } else {
      entry_error(index, "missing field 'exe_ans_list'");
    }
    if (annotation.contains("turn_program") && annotation["turn_program"].is_array() &&
        !annotation["turn_program"].empty()) {
      attach_gold_program(record, scalar_to_string(annotation["turn_program"].back()));
    }

    std::vector<const json*> inds;
    for (const char* key : {"qa", "qa_0", "qa_1"}) {
      if (entry.contains(key) && entry[key].contains("gold_inds")) {
        inds.push_back(&entry[key]["gold_inds"]);
      }
    }
    record.facts_location = facts_from_gold_inds(inds);
    finish_record(record);
    records.push_back(std::move(record));
    ++index;
  });
  return check_unique_ids(std::move(records));
}

std::vector<QARecord> load_tatqa(const std::filesystem::path& path, bool arithmetic_only) {
  const json root = read_json_file(path);
  std::vector<QARecord> records;
  std::size_t index = 0;
  for (const auto& doc : require_array_root(root, path)) guarded(index, [&] {
    const json& table_obj = require(doc, "table", index);
    const Table table =
        read_table(table_obj.is_object() ? require(table_obj, "table", index) : table_obj, index);

    std::vector<std::pair<int, std::string>> paragraphs;
    for (const auto& p : require(doc, "paragraphs", index)) {
      paragraphs.emplace_back(p.value("order", 0), scalar_to_string(require(p, "text", index)));
    }
    std::stable_sort(paragraphs.begin(), paragraphs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& q : require(doc, "questions", index)) {
      if (arithmetic_only && q.value("answer_type", std::string{}) != "arithmetic") continue;
      QARecord record;
      record.kind = DatasetKind::tatqa;
      record.id = scalar_to_string(require(q, "uid", index));
      if (record.id.empty()) entry_error(index, "empty uid");
      record.table = table;
      for (const auto& p : paragraphs) record.pre_text.push_back(p.second);
      record.questions.push_back(scalar_to_string(require(q, "question", index)));
      record.gold_answer = gold_from_json(require(q, "answer", index));

      const std::string scale = q.value("scale", std::string{});
      if (scale == "percent") record.gold_answer.hint.percent = true;
      else if (scale == "thousand") record.gold_answer.hint.magnitude = 1e3;
      else if (scale == "million") record.gold_answer.hint.magnitude = 1e6;
      else if (scale == "billion") record.gold_answer.hint.magnitude = 1e9;

      const std::string from = q.value("answer_from", std::string{});
      record.facts_location = from == "table"        ? FactsLocation::table_only
                              : from == "text"       ? FactsLocation::text_only
                              : from == "table-text" ? FactsLocation::table_text
                                                     : FactsLocation::unknown;
      finish_record(record);
      records.push_back(std::move(record));
    }
    ++index;
  });
  return check_unique_ids(std::move(records));
}

std::vector<QARecord> load(const std::filesystem::path& path, DatasetKind kind) {
  switch (kind) {
    case DatasetKind::finqa: return load_finqa(path);
    case DatasetKind::convfinqa: return load_convfinqa(path);
    case DatasetKind::tatqa: return load_tatqa(path, true);
  }
  return {};
}

int count_gold_steps(const QARecord& record) {
  if (record.gold_program) return static_cast<int>(record.gold_program->steps.size());
  if (auto n = dsl::count_steps_lenient(record.gold_program_text)) return *n;
  throw MetadataUnavailable("record " + record.id + " has no usable gold program");
}

std::optional<int> gold_steps(const QARecord& record) {
  try {
    return count_gold_steps(record);
  } catch (const MetadataUnavailable&) {
    return std::nullopt;
  }
}

}  // namespace finqa::dataset
