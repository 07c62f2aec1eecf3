#pragma once

// End-to-end runs: render -> complete -> extract -> execute -> evaluate, with
// the run artifacts (manifest.json, traces.jsonl, report.json, report.txt)
// written under one output directory.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finqa/codeexec.hpp"
#include "finqa/dataset.hpp"
#include "finqa/evaluator.hpp"
#include "finqa/llm_gateway.hpp"
#include "finqa/prompt.hpp"

namespace finqa::pipeline {

struct RunOptions {
  std::filesystem::path dataset;
  dataset::DatasetKind kind = dataset::DatasetKind::finqa;
  prompt::PromptMode mode;
  llm::GenerationParams params;
  llm::GatewayConfig gateway;
  codeexec::RunnerConfig runner;
  std::chrono::milliseconds exec_timeout{10'000};
  int workers = 4;
  std::filesystem::path out_dir = "run";
  nlohmann::json config_snapshot = nlohmann::json::object();
};

/// ZS_STD and ZS_COT are judged relaxed, program modes exact.
eval::MatchMode match_mode_for(prompt::Mode mode);

/// ZS_FINPYT on ConvFinQA without an explicit variant runs dual-prompt.
prompt::PromptMode effective_mode(prompt::PromptMode mode, dataset::DatasetKind kind);

struct RecordResult {
  nlohmann::json trace;
  eval::ScoredItem scored;
};

/// One record through the whole chain. Per-record problems (extraction,
/// conversion, execution) end up in the trace; backend failures throw
/// (llm::GatewayError, llm::ReplayMiss).
RecordResult process_record(const dataset::QARecord& record, const prompt::PromptMode& mode,
                            const llm::GenerationParams& params, llm::Gateway& gateway,
                            codeexec::CodeExecutor* executor,
                            std::chrono::milliseconds exec_timeout = std::chrono::seconds(10));

struct RunSummary {
  std::string run_id;
  std::size_t records = 0;  // in the dataset
  std::size_t traced = 0;   // trace lines written
  eval::RunReport report;
  bool aborted = false;
  std::string abort_reason;
};

/// Processes every record with a bounded worker pool. Trace lines are
/// written in dataset order regardless of worker count. A backend failure
/// stops dispatch; traces of records already finished are kept and the
/// manifest is finalized as aborted.
RunSummary run(const RunOptions& options);

struct LoadedTraces {
  std::vector<eval::ScoredItem> items;
  int skipped = 0;  // corrupt or incomplete lines
};

/// Reads one or more traces.jsonl files (concatenated in order).
LoadedTraces load_traces(const std::vector<std::filesystem::path>& paths);

/// Writes report.json and report.txt into dir; returns the text form.
std::string write_report(const eval::RunReport& report, const std::filesystem::path& dir);

}  // namespace finqa::pipeline
