#include "finqa/pipeline.hpp"

#include <atomic>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <unistd.h>

#include "finqa/extractor.hpp"

namespace finqa::pipeline {
namespace {

using nlohmann::json;
using eval::FailureCategory;
using eval::Prediction;

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json value_json(const dsl::Value& value) {
  if (const bool* b = std::get_if<bool>(&value)) return *b;
  return std::get<double>(value);
}

json hint_json(const UnitHint& hint) {
  return {{"percent", hint.percent}, {"magnitude", hint.magnitude}};
}

json params_json(const llm::GenerationParams& p) {
  return {{"model", p.model}, {"temperature", p.temperature}, {"top_p", p.top_p},
          {"max_tokens", p.max_tokens}};
}

json meta_json(const eval::RecordMeta& meta) {
  return {{"facts_location", dataset::facts_location_name(meta.facts_location)},
          {"gold_steps", meta.gold_steps ? json(*meta.gold_steps) : json(nullptr)},
          {"question_kind", dataset::question_kind_name(meta.question_kind)}};
}

eval::RecordMeta meta_from_json(const std::string& id, const json& j) {
  eval::RecordMeta meta;
  meta.id = id;
  const auto location = dataset::facts_location_from_name(j.at("facts_location").get<std::string>());
  if (!location) throw std::runtime_error("unknown facts_location");
  meta.facts_location = *location;
  if (j.contains("gold_steps") && j["gold_steps"].is_number_integer()) {
    meta.gold_steps = j["gold_steps"].get<int>();
  }
  const std::string kind = j.at("question_kind").get<std::string>();
  if (kind == dataset::question_kind_name(dataset::QuestionKind::boolean)) {
    meta.question_kind = dataset::QuestionKind::boolean;
  } else if (kind == dataset::question_kind_name(dataset::QuestionKind::numerical)) {
    meta.question_kind = dataset::QuestionKind::numerical;
  } else {
    throw std::runtime_error("unknown question_kind");
  }
  return meta;
}

Prediction run_dsl(const std::string& text, json& trace) {
  const extract::Outcome outcome = extract::extract_dsl(text);
  trace["extraction"] = {{"kind", extract::kind_name(outcome.kind)}, {"ok", outcome.ok()}};
  if (!outcome.ok()) {
    trace["extraction"]["failure"] = extract::failure_name(*outcome.failure);
    trace["extraction"]["diagnostic"] = outcome.diagnostic;
    return Prediction::failed(FailureCategory::extraction, outcome.diagnostic);
  }
  const auto& raw = outcome.raw_program();
  if (raw.declared_answer) trace["extraction"]["declared_answer"] = *raw.declared_answer;

  dsl::Program program;
  try {
    program = dsl::from_extraction(raw);
  } catch (const dsl::ConversionError& e) {
    trace["extraction"]["diagnostic"] = e.what();
    return Prediction::failed(FailureCategory::parse, e.what());
  }
  trace["program"] = dsl::to_canonical_string(program);
  try {
    const dsl::Value value = dsl::execute(program);
    trace["execution"] = {{"status", "ok"}, {"value", value_json(value)}};
    return Prediction::of(value);
  } catch (const dsl::ExecutionError& e) {
    trace["execution"] = {{"status", "error"}, {"detail", e.what()}};
    return Prediction::failed(FailureCategory::execution, e.what());
  }
}

Prediction run_python(const std::string& text, json& trace, codeexec::CodeExecutor* executor,
                      std::chrono::milliseconds timeout) {
  const extract::Outcome outcome = extract::extract_python(text);
  trace["extraction"] = {{"kind", extract::kind_name(outcome.kind)}, {"ok", outcome.ok()}};
  if (!outcome.ok()) {
    trace["extraction"]["failure"] = extract::failure_name(*outcome.failure);
    trace["extraction"]["diagnostic"] = outcome.diagnostic;
    return Prediction::failed(FailureCategory::extraction, outcome.diagnostic);
  }
  trace["source"] = outcome.source();
  if (!executor) {
    trace["execution"] = {{"status", "launcher_error"}, {"detail", "no code runner configured"}};
    return Prediction::failed(FailureCategory::execution, "no code runner configured");
  }
  codeexec::ExecRequest request;
  request.source = outcome.source();
  request.timeout = timeout;
  const codeexec::ExecutionResult result = executor->run_code(request);
  trace["execution"] = {{"status", codeexec::status_name(result.status)}};
  if (result.status == codeexec::Status::ok) {
    trace["execution"]["value"] = value_json(*result.value);
    return Prediction::of(*result.value);
  }
  trace["execution"]["detail"] = result.stderr_excerpt;
  return Prediction::failed(FailureCategory::execution,
                            std::string(codeexec::status_name(result.status)) + ": " +
                                result.stderr_excerpt);
}

Prediction read_answer(const std::string& text, json& trace) {
  const extract::Outcome outcome = extract::extract_final_answer(text);
  trace["extraction"] = {{"kind", extract::kind_name(outcome.kind)}, {"ok", outcome.ok()}};
  if (!outcome.ok()) {
    trace["extraction"]["failure"] = extract::failure_name(*outcome.failure);
    trace["extraction"]["diagnostic"] = outcome.diagnostic;
    return Prediction::failed(FailureCategory::extraction, outcome.diagnostic);
  }
  if (outcome.kind == extract::Kind::boolean_answer) {
    trace["extraction"]["value"] = outcome.truth();
    return Prediction::of(outcome.truth());
  }
  const auto& scalar = outcome.scalar();
  trace["extraction"]["value"] = scalar.value;
  trace["extraction"]["hint"] = hint_json(scalar.hint);
  return Prediction::of(scalar.value, scalar.hint);
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

// Hands finished records to the trace file strictly in dataset order.
class OrderedAppender {
 public:
  OrderedAppender(std::ofstream& out, std::size_t n) : out_(out), pending_(n) {}

  void deliver(std::size_t index, RecordResult result) {
    std::lock_guard lock(mutex_);
    pending_[index] = std::move(result);
    while (next_ < pending_.size() && pending_[next_]) {
      emit(*pending_[next_]);
      pending_[next_].reset();
      ++next_;
    }
  }

  // After an abort: whatever finished out of order is still written, in order.
  void drain() {
    std::lock_guard lock(mutex_);
    for (; next_ < pending_.size(); ++next_) {
      if (pending_[next_]) emit(*pending_[next_]);
      pending_[next_].reset();
    }
  }

  std::vector<eval::ScoredItem> take_scored() { return std::move(scored_); }

 private:
  void emit(const RecordResult& result) {
    out_ << result.trace.dump() << "\n";
    out_.flush();
    scored_.push_back(result.scored);
  }

  std::ofstream& out_;
  std::mutex mutex_;
  std::vector<std::optional<RecordResult>> pending_;
  std::size_t next_ = 0;
  std::vector<eval::ScoredItem> scored_;
};

}  // namespace

eval::MatchMode match_mode_for(prompt::Mode mode) {
  return mode == prompt::Mode::std_dual || mode == prompt::Mode::cot ? eval::MatchMode::relaxed
                                                                     : eval::MatchMode::exact;
}

prompt::PromptMode effective_mode(prompt::PromptMode mode, dataset::DatasetKind kind) {
  if (kind == dataset::DatasetKind::convfinqa && mode.mode == prompt::Mode::finpyt &&
      mode.conv_variant == prompt::ConvVariant::none) {
    mode.conv_variant = prompt::ConvVariant::dual_prompt;
  }
  return mode;
}

RecordResult process_record(const dataset::QARecord& record, const prompt::PromptMode& mode,
                            const llm::GenerationParams& params, llm::Gateway& gateway,
                            codeexec::CodeExecutor* executor, std::chrono::milliseconds exec_timeout) {
  const prompt::PromptBundle bundle = prompt::render(record, mode);
  json trace = {{"record_id", record.id},
                {"dataset", dataset::kind_name(record.kind)},
                {"mode", prompt::mode_name(mode.mode)},
                {"conv_variant", prompt::conv_variant_name(mode.conv_variant)},
                {"stages", json::array()}};

  std::string last_text;
  for (std::size_t i = 0; i < bundle.stages.size(); ++i) {
    const auto& stage = bundle.stages[i];
    const std::string prompt_text =
        i == 0 ? stage.template_text : prompt::render_followup(record, mode, last_text);
    const llm::RequestContext ctx{record.id, static_cast<int>(i + 1), stage.stage_name};
    const llm::LLMResponse response = gateway.complete(prompt_text, params, ctx);
    trace["stages"].push_back({{"stage", i + 1},
                               {"name", stage.stage_name},
                               {"prompt", prompt_text},
                               {"response", response.text},
                               {"backend", llm::backend_name(response.backend)},
                               {"fingerprint", response.request_fingerprint}});
    last_text = response.text;
  }

  Prediction prediction;
  switch (bundle.stages.back().expects) {
    case prompt::Expects::dsl_json: prediction = run_dsl(last_text, trace); break;
    case prompt::Expects::python_code:
      prediction = run_python(last_text, trace, executor, exec_timeout);
      break;
    case prompt::Expects::final_answer: prediction = read_answer(last_text, trace); break;
    case prompt::Expects::free_text:
      prediction = Prediction::failed(FailureCategory::extraction, "final stage yields free text");
      break;
  }

  const eval::EvalOutcome outcome =
      eval::match(prediction, record.gold_answer, match_mode_for(mode.mode));
  const eval::RecordMeta meta = eval::meta_of(record);
  trace["gold"] = {{"answer", record.gold_answer.text},
                   {"program", record.gold_program_text},
                   {"program_in_dsl", record.gold_program.has_value()}};
  trace["meta"] = meta_json(meta);
  trace["eval"] = eval::outcome_to_json(outcome);
  return {std::move(trace), {meta, outcome}};
}

RunSummary run(const RunOptions& options) {
  RunSummary summary;
  const prompt::PromptMode mode = effective_mode(options.mode, options.kind);
  prompt::validate(mode, options.kind);
  options.params.validate();

  const std::vector<dataset::QARecord> records = dataset::load(options.dataset, options.kind);
  summary.records = records.size();
  std::filesystem::create_directories(options.out_dir);

  summary.run_id = std::string(prompt::mode_flag(mode.mode)) + "-" +
                   std::string(dataset::kind_name(options.kind)) + "-" + utc_now() + "-" +
                   std::to_string(::getpid());
  json manifest = {
      {"run_id", summary.run_id},
      {"dataset", {{"path", options.dataset.string()},
                   {"kind", dataset::kind_name(options.kind)},
                   {"records", records.size()}}},
      {"mode", {{"mode", prompt::mode_name(mode.mode)},
                {"conv_variant", prompt::conv_variant_name(mode.conv_variant)},
                {"match", eval::match_mode_name(match_mode_for(mode.mode))}}},
      {"params", params_json(options.params)},
      {"backend", llm::backend_mode_name(options.gateway.mode)},
      {"workers", options.workers},
      {"started", utc_now()},
      {"finished", nullptr},
      {"status", "running"},
      {"config", options.config_snapshot},
  };
  const auto manifest_path = options.out_dir / "manifest.json";
  write_json_file(manifest_path, manifest);

  llm::Gateway gateway(options.gateway);
  std::optional<codeexec::CodeExecutor> executor;
  if (mode.mode == prompt::Mode::finpyt) {
    codeexec::RunnerConfig runner = options.runner;
    runner.max_workers = std::max(1, options.workers);
    executor.emplace(std::move(runner));
  }

  std::ofstream traces(options.out_dir / "traces.jsonl", std::ios::trunc);
  if (!traces) throw std::runtime_error("cannot write " + (options.out_dir / "traces.jsonl").string());
  OrderedAppender appender(traces, records.size());

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex abort_mutex;
  auto worker = [&] {
    while (!stop) {
      const std::size_t i = next.fetch_add(1);
      if (i >= records.size()) return;
      try {
        appender.deliver(i, process_record(records[i], mode, options.params, gateway,
                                           executor ? &*executor : nullptr, options.exec_timeout));
      } catch (const std::exception& e) {
        std::lock_guard lock(abort_mutex);
        if (!summary.aborted) {
          summary.aborted = true;
          summary.abort_reason = "record " + records[i].id + ": " + e.what();
        }
        stop = true;
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(options.workers, static_cast<int>(records.size())));
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  appender.drain();
  traces.close();

  const std::vector<eval::ScoredItem> scored = appender.take_scored();
  summary.traced = scored.size();
  summary.report = eval::score_run(scored);
  write_report(summary.report, options.out_dir);

  int correct = 0, incorrect = 0, failed = 0;
  for (const auto& item : scored) {
    switch (item.outcome.verdict) {
      case eval::Verdict::correct: ++correct; break;
      case eval::Verdict::incorrect: ++incorrect; break;
      case eval::Verdict::failed: ++failed; break;
    }
  }
  manifest["finished"] = utc_now();
  manifest["status"] = summary.aborted ? "aborted" : "completed";
  manifest["counts"] = {{"records", records.size()}, {"traced", scored.size()},
                        {"correct", correct}, {"incorrect", incorrect}, {"failed", failed}};
  manifest["accuracy"] = eval::format_accuracy(summary.report.overall);
  if (summary.aborted) manifest["abort_reason"] = summary.abort_reason;
  write_json_file(manifest_path, manifest);
  return summary;
}

LoadedTraces load_traces(const std::vector<std::filesystem::path>& paths) {
  LoadedTraces loaded;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const json j = json::parse(line);
        eval::ScoredItem item;
        item.meta = meta_from_json(j.at("record_id").get<std::string>(), j.at("meta"));
        item.outcome = eval::outcome_from_json(j.at("eval"));
        loaded.items.push_back(std::move(item));
      } catch (const std::exception&) {
        ++loaded.skipped;
      }
    }
  }
  return loaded;
}

std::string write_report(const eval::RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "report.json", eval::report_to_json(report));
  const std::string text = eval::report_to_text(report);
  std::ofstream out(dir / "report.txt", std::ios::trunc);
  out << text;
  return text;
}

}  // namespace finqa::pipeline
