#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "finqa/dsl.hpp"
#include "finqa/numeric.hpp"

namespace finqa::dataset {

enum class DatasetKind { finqa, convfinqa, tatqa };
enum class FactsLocation { table_only, text_only, table_text, unknown };
enum class QuestionKind { numerical, boolean };

std::string_view kind_name(DatasetKind kind);
std::optional<DatasetKind> kind_from_name(std::string_view name);
std::string_view facts_location_name(FactsLocation location);
std::optional<FactsLocation> facts_location_from_name(std::string_view name);
std::string_view question_kind_name(QuestionKind kind);

using Table = std::vector<std::vector<std::string>>;

struct GoldAnswer {
  std::string text;
  std::optional<double> number;
  std::optional<bool> truth;
  UnitHint hint;
};

/// Parses a gold answer string ("282.0", "5.7%", "no", "7 million").
GoldAnswer parse_gold_answer(std::string_view text);

struct QARecord {
  std::string id;
  DatasetKind kind = DatasetKind::finqa;
  std::vector<std::string> pre_text;
  std::vector<std::string> post_text;
  Table table;  // rectangular: short rows are right-padded on load
  std::vector<std::string> questions;  // last one is the answer target
  GoldAnswer gold_answer;
  std::string gold_program_text;            // as annotated upstream, may be empty
  std::optional<dsl::Program> gold_program;  // set only when the text is in the DSL
  FactsLocation facts_location = FactsLocation::unknown;
  QuestionKind question_kind = QuestionKind::numerical;

  const std::string& target_question() const { return questions.back(); }
};

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<QARecord> load_finqa(const std::filesystem::path& path);
std::vector<QARecord> load_convfinqa(const std::filesystem::path& path);
std::vector<QARecord> load_tatqa(const std::filesystem::path& path, bool arithmetic_only);
std::vector<QARecord> load(const std::filesystem::path& path, DatasetKind kind);

/// Right-pads short rows with empty cells; returns true if any row was short.
bool pad_table(Table& table);

/// " | " between cells, "\n" between rows, blank cells as "-".
std::string serialize_table(const Table& table);

/// pre_text, serialized table and post_text in document order.
std::string assemble_passage(const QARecord& record);

class MetadataUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Step count of the gold program; lenient about operators outside the DSL.
/// Throws MetadataUnavailable when there is no usable gold program.
int count_gold_steps(const QARecord& record);

/// count_gold_steps without the exception.
std::optional<int> gold_steps(const QARecord& record);

}  // namespace finqa::dataset
