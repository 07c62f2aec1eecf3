#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "finqa/dataset.hpp"
#include "test_support.hpp"

using namespace finqa;
using namespace finqa::dataset;
using finqa::testing::fixture;
using finqa::testing::TempDir;

namespace {

std::filesystem::path write_file(const TempDir& dir, const std::string& name, const std::string& text) {
  const auto path = dir.path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(LoadFinqa, EmptyArray) {
  TempDir dir("ds");
  EXPECT_TRUE(load_finqa(write_file(dir, "e.json", "[]")).empty());
}

TEST(LoadFinqa, FactsLocationAndKinds) {
  const auto records = load_finqa(fixture("finqa_two.json"));
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].facts_location, FactsLocation::table_only);
  EXPECT_EQ(records[1].facts_location, FactsLocation::text_only);
  EXPECT_EQ(records[0].question_kind, QuestionKind::numerical);
  EXPECT_EQ(records[1].question_kind, QuestionKind::boolean);
  EXPECT_EQ(records[1].gold_answer.truth, false);
  // short second row padded
  EXPECT_EQ(records[1].table[1].size(), 2u);
  EXPECT_EQ(records[1].table[1][1], "");
}

TEST(LoadFinqa, SampleFixtureHandLabels) {
  const auto records = load_finqa(fixture("sample_finqa.json"));
  ASSERT_EQ(records.size(), 8u);
  int table_only = 0, text_only = 0, boolean = 0;
  for (const auto& r : records) {
    table_only += r.facts_location == FactsLocation::table_only;
    text_only += r.facts_location == FactsLocation::text_only;
    boolean += r.question_kind == QuestionKind::boolean;
    EXPECT_TRUE(r.gold_program.has_value()) << r.id;
  }
  EXPECT_EQ(table_only, 5);
  EXPECT_EQ(text_only, 3);
  EXPECT_EQ(boolean, 1);
  EXPECT_EQ(records[0].id, "UPS/2010/page_52.pdf-1");
  EXPECT_DOUBLE_EQ(*records[0].gold_answer.number, 0.05663);
}

TEST(LoadFinqa, Deterministic) {
  const auto a = load_finqa(fixture("sample_finqa.json"));
  const auto b = load_finqa(fixture("sample_finqa.json"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(assemble_passage(a[i]), assemble_passage(b[i]));
    EXPECT_EQ(a[i].gold_program, b[i].gold_program);
  }
}

TEST(LoadFinqa, ErrorsNameTheEntry) {
  TempDir dir("ds");
  try {
    load_finqa(write_file(dir, "bad.json",
                          R"([{"id":"a","pre_text":[],"post_text":[],"table":[],"qa":{"question":"q","answer":"1"}},
                              {"id":"b","pre_text":[],"post_text":[],"table":[]}])"));
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("entry 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("qa"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_finqa(write_file(dir, "notjson.json", "{oops")), IngestError);
  EXPECT_THROW(load_finqa(write_file(dir, "obj.json", "{}")), IngestError);
  EXPECT_THROW(load_finqa(dir.path() / "missing.json"), IngestError);
}

TEST(LoadFinqa, DuplicateIdsRejected) {
  TempDir dir("ds");
  const std::string entry = R"({"id":"a","pre_text":[],"post_text":[],"table":[],"qa":{"question":"q","answer":"1"}})";
  EXPECT_THROW(load_finqa(write_file(dir, "dup.json", "[" + entry + "," + entry + "]")), IngestError);
}

TEST(LoadConvfinqa, TurnsInOrder) {
  const auto records = load_convfinqa(fixture("convfinqa_three_turn.json"));
  ASSERT_EQ(records.size(), 2u);
  ASSERT_EQ(records[0].questions.size(), 3u);
  EXPECT_EQ(records[0].target_question(), "what was the change?");
  EXPECT_EQ(records[0].gold_program_text, "subtract(103.1, 104.2)");
  EXPECT_DOUBLE_EQ(*records[0].gold_answer.number, -1.1);
  EXPECT_EQ(records[0].facts_location, FactsLocation::table_only);
  EXPECT_EQ(records[1].questions.size(), 1u);
  EXPECT_EQ(records[1].facts_location, FactsLocation::text_only);
}

TEST(LoadTatqa, ArithmeticFilter) {
  EXPECT_EQ(load_tatqa(fixture("tatqa_mixed.json"), false).size(), 2u);
  const auto arith = load_tatqa(fixture("tatqa_mixed.json"), true);
  ASSERT_EQ(arith.size(), 1u);
  EXPECT_EQ(arith[0].id, "q-arith");
  EXPECT_EQ(arith[0].facts_location, FactsLocation::table_only);
  EXPECT_EQ(arith[0].gold_answer.hint.magnitude, 1e3);
  ASSERT_EQ(arith[0].pre_text.size(), 2u);
  EXPECT_EQ(arith[0].pre_text[0], "First paragraph.");
  EXPECT_EQ(arith[0].table[2].size(), 3u);
}

TEST(SerializeTable, Rules) {
  EXPECT_EQ(serialize_table({}), "");
  EXPECT_EQ(serialize_table({{""}}), "-");
  EXPECT_EQ(serialize_table({{"A", "B"}, {"1", ""}}), "A | B\n1 | -");
  EXPECT_EQ(serialize_table({{"Capital Leases", "$18", "$19"}}), "Capital Leases | $18 | $19");
  EXPECT_EQ(serialize_table({{"  "}}), "-");
}

TEST(SerializeTable, CapitalLeasesRowAndNewlineCount) {
  const auto records = load_finqa(fixture("sample_finqa.json"));
  const std::string ups = serialize_table(records[0].table);
  EXPECT_NE(ups.find("Capital Leases | $18 | $19 | $19 | $20 | $21 | $112 | $209"), std::string::npos);
  for (const auto& r : records) {
    const std::string s = serialize_table(r.table);
    EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), r.table.size() - 1);
  }
}

TEST(PadTable, ReportsRaggedRows) {
  Table t = {{"a", "b", "c"}, {"1"}};
  EXPECT_TRUE(pad_table(t));
  EXPECT_EQ(t[1], (std::vector<std::string>{"1", "", ""}));
  EXPECT_FALSE(pad_table(t));
}

TEST(AssemblePassage, DocumentOrder) {
  const auto records = load_finqa(fixture("finqa_two.json"));
  EXPECT_EQ(assemble_passage(records[1]), "costs were $ 4 million .\na | b\n1 | -\nend .");
}

TEST(GoldSteps, Counts) {
  const auto records = load_finqa(fixture("sample_finqa.json"));
  EXPECT_EQ(count_gold_steps(records[0]), 1);
  EXPECT_EQ(count_gold_steps(records[1]), 2);

  QARecord empty;
  empty.id = "x";
  EXPECT_THROW(count_gold_steps(empty), MetadataUnavailable);
  EXPECT_FALSE(gold_steps(empty));

  QARecord upstream;
  upstream.gold_program_text = "table_sum(revenue, none), divide(#0, const_100)";
  EXPECT_EQ(count_gold_steps(upstream), 2);
}

TEST(GoldAnswer, Parsing) {
  auto pct = parse_gold_answer("5.7%");
  EXPECT_DOUBLE_EQ(*pct.number, 5.7);
  EXPECT_TRUE(pct.hint.percent);
  auto mil = parse_gold_answer("7 million");
  EXPECT_DOUBLE_EQ(*mil.number, 7e6);
  EXPECT_EQ(parse_gold_answer("Yes").truth, true);
  auto text = parse_gold_answer("N/A");
  EXPECT_FALSE(text.number);
  EXPECT_FALSE(text.truth);
}
