// finqa: run zero-shot financial QA experiments and the utility subcommands
// around them (report, exec-dsl, exec-py, serialize-table, templates).

#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "finqa/codeexec.hpp"
#include "finqa/dataset.hpp"
#include "finqa/dsl.hpp"
#include "finqa/evaluator.hpp"
#include "finqa/llm_gateway.hpp"
#include "finqa/pipeline.hpp"
#include "finqa/prompt.hpp"

namespace {

using nlohmann::json;
using namespace finqa;

std::string read_input(const std::string& path) {
  if (path == "-") {
    return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream in(command);
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

struct RunFlags {
  std::string dataset;
  std::string kind = "finqa";
  std::string mode = "findsl";
  std::string backend = "replay";
  std::string replay_file;
  std::string config_file;
  std::string cache_dir;
  std::string endpoint;
  std::string framing;
  std::string runner;
  std::string conv_variant;
  std::string out = "run";
  std::optional<std::string> model;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> max_tokens;
  int workers = 4;
  double exec_timeout = 10.0;
};

// Config file first, then flags on top.
pipeline::RunOptions build_options(const RunFlags& f) {
  pipeline::RunOptions o;
  json config = json::object();
  if (!f.config_file.empty()) {
    config = json::parse(read_input(f.config_file));
    if (!config.is_object()) throw std::runtime_error("config file must hold a JSON object");
    o.config_snapshot = config;
    if (config.contains("endpoint")) o.gateway.live.endpoint = config["endpoint"].get<std::string>();
    if (config.contains("model")) o.params.model = config["model"].get<std::string>();
    if (config.contains("cache_dir")) o.gateway.cache_dir = config["cache_dir"].get<std::string>();
    if (config.contains("framing")) {
      o.gateway.live.framing = config["framing"].get<std::string>() == "completion"
                                   ? llm::Framing::completion
                                   : llm::Framing::chat;
    }
    if (config.contains("params")) {
      const json& p = config["params"];
      o.params.temperature = p.value("temperature", o.params.temperature);
      o.params.top_p = p.value("top_p", o.params.top_p);
      o.params.max_tokens = p.value("max_tokens", o.params.max_tokens);
    }
  }

  const auto kind = dataset::kind_from_name(f.kind);
  if (!kind) throw CLI::ValidationError("--kind", "unknown dataset kind " + f.kind);
  o.kind = *kind;
  o.dataset = f.dataset;

  const auto mode = prompt::mode_from_flag(f.mode);
  if (!mode) throw CLI::ValidationError("--mode", "unknown mode " + f.mode);
  o.mode.mode = *mode;
  if (f.conv_variant == "single") o.mode.conv_variant = prompt::ConvVariant::single_prompt_last_question;
  else if (f.conv_variant == "dual") o.mode.conv_variant = prompt::ConvVariant::dual_prompt;

  const auto backend = llm::backend_mode_from_name(f.backend);
  if (!backend) throw CLI::ValidationError("--backend", "unknown backend " + f.backend);
  o.gateway.mode = *backend;
  if (!f.replay_file.empty()) o.gateway.replay_file = f.replay_file;
  if (!f.cache_dir.empty()) o.gateway.cache_dir = f.cache_dir;
  if (!f.endpoint.empty()) o.gateway.live.endpoint = f.endpoint;
  if (f.framing == "completion") o.gateway.live.framing = llm::Framing::completion;
  else if (f.framing == "chat") o.gateway.live.framing = llm::Framing::chat;
  o.gateway.max_in_flight = f.workers;

  if (f.model) o.params.model = *f.model;
  if (f.temperature) o.params.temperature = *f.temperature;
  if (f.top_p) o.params.top_p = *f.top_p;
  if (f.max_tokens) o.params.max_tokens = *f.max_tokens;

  if (!f.runner.empty()) o.runner.command = split_command(f.runner);
  o.exec_timeout = std::chrono::milliseconds(static_cast<long long>(f.exec_timeout * 1000));
  o.workers = f.workers;
  o.out_dir = f.out;

  o.config_snapshot["effective"] = {
      {"endpoint", o.gateway.live.endpoint},
      {"framing", llm::framing_name(o.gateway.live.framing)},
      {"cache_dir", o.gateway.cache_dir ? json(o.gateway.cache_dir->string()) : json(nullptr)},
      {"replay_file", o.gateway.replay_file ? json(o.gateway.replay_file->string()) : json(nullptr)},
      {"runner", o.runner.command},
  };
  return o;
}

int cmd_run(const RunFlags& flags) {
  const pipeline::RunSummary summary = pipeline::run(build_options(flags));
  std::cout << eval::report_to_text(summary.report);
  std::cout << "\n" << summary.traced << " of " << summary.records << " records traced -> "
            << flags.out << "\n";
  if (summary.aborted) {
    std::cerr << "run aborted: " << summary.abort_reason << "\n";
    return 2;
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<std::filesystem::path> paths;
  for (const auto& in : inputs) {
    std::filesystem::path p = in;
    if (std::filesystem::is_directory(p)) p /= "traces.jsonl";
    paths.push_back(p);
  }
  const pipeline::LoadedTraces loaded = pipeline::load_traces(paths);
  const eval::RunReport report = eval::score_run(loaded.items);
  if (loaded.skipped > 0) std::cerr << "warning: skipped " << loaded.skipped << " corrupt trace line(s)\n";
  std::cout << (out.empty() ? eval::report_to_text(report) : pipeline::write_report(report, out));
  return 0;
}

int cmd_exec_dsl(const std::string& program_text, const std::optional<std::string>& gold) {
  try {
    const dsl::Program program = dsl::parse_program(program_text);
    const dsl::Value value = dsl::execute(program);
    std::cout << dsl::value_to_string(value) << "\n";
    if (gold) {
      const auto outcome = eval::match(eval::Prediction::of(value), dataset::parse_gold_answer(*gold),
                                       eval::MatchMode::exact);
      std::cout << eval::verdict_name(outcome.verdict);
      if (outcome.matched_scale) std::cout << " (" << eval::scale_label_name(outcome.matched_scale->label) << ")";
      std::cout << "\n";
    }
    return 0;
  } catch (const dsl::ParseError& e) {
    std::cerr << "parse error at " << e.position() << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}

int cmd_exec_py(const std::string& file, const std::string& runner, double timeout) {
  codeexec::RunnerConfig config;
  if (!runner.empty()) config.command = split_command(runner);
  codeexec::CodeExecutor executor(config);
  codeexec::ExecRequest request;
  request.source = read_input(file);
  request.timeout = std::chrono::milliseconds(static_cast<long long>(timeout * 1000));
  const auto result = executor.run_code(request);
  if (result.status == codeexec::Status::ok) {
    std::cout << dsl::value_to_string(*result.value) << "\n";
    return 0;
  }
  std::cerr << codeexec::status_name(result.status) << ": " << result.stderr_excerpt << "\n";
  return 1;
}

int cmd_serialize_table(const std::string& file) {
  const json grid = json::parse(read_input(file));
  if (!grid.is_array()) throw std::runtime_error("table input must be a JSON array of rows");
  dataset::Table table;
  for (const auto& row : grid) {
    if (!row.is_array()) throw std::runtime_error("every table row must be an array");
    std::vector<std::string> cells;
    for (const auto& cell : row) {
      if (cell.is_string()) cells.push_back(cell.get<std::string>());
      else if (cell.is_null()) cells.emplace_back();
      else cells.push_back(cell.dump());
    }
    table.push_back(std::move(cells));
  }
  if (dataset::pad_table(table)) std::cerr << "warning: ragged table, short rows padded\n";
  const std::string text = dataset::serialize_table(table);
  std::cout << text;
  if (!text.empty()) std::cout << "\n";
  return 0;
}

int cmd_templates(bool as_json) {
  const auto catalog = prompt::template_catalog();
  if (as_json) {
    json out = json::array();
    for (const auto& e : catalog) {
      json modes = json::array();
      for (auto m : e.modes) modes.push_back(prompt::mode_name(m));
      out.push_back({{"asset", e.asset}, {"modes", modes}, {"dataset", e.dataset},
                     {"conv_variant", prompt::conv_variant_name(e.conv_variant)},
                     {"stage", e.stage}, {"text", e.template_text}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  }
  for (const auto& e : catalog) {
    std::cout << "=== " << e.asset << "  [";
    for (std::size_t i = 0; i < e.modes.size(); ++i) std::cout << (i ? ", " : "") << prompt::mode_name(e.modes[i]);
    std::cout << "; " << e.dataset << "; variant " << prompt::conv_variant_name(e.conv_variant)
              << "; stage " << e.stage << "]\n"
              << e.template_text << "\n\n";
  }
  std::cout << catalog.size() << " templates\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot financial QA runner"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "Run a prompt mode over a dataset");
  run_cmd->add_option("--dataset", run.dataset, "Dataset JSON file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--kind", run.kind, "finqa, convfinqa or tatqa")
      ->check(CLI::IsMember({"finqa", "convfinqa", "tatqa"}));
  run_cmd->add_option("--mode", run.mode, "finpyt, findsl, std or cot")
      ->check(CLI::IsMember({"finpyt", "findsl", "std", "cot"}));
  run_cmd->add_option("--backend", run.backend, "live, replay or cache-only")
      ->check(CLI::IsMember({"live", "replay", "cache-only"}));
  run_cmd->add_option("--replay-file", run.replay_file, "Canned completions (JSONL)");
  run_cmd->add_option("--config", run.config_file, "JSON config: endpoint, model, params, cache_dir");
  run_cmd->add_option("--cache-dir", run.cache_dir, "Response cache directory");
  run_cmd->add_option("--endpoint", run.endpoint, "OpenAI-compatible base URL");
  run_cmd->add_option("--framing", run.framing, "chat or completion")->check(CLI::IsMember({"chat", "completion"}));
  run_cmd->add_option("--model", run.model);
  run_cmd->add_option("--temperature", run.temperature);
  run_cmd->add_option("--top-p", run.top_p);
  run_cmd->add_option("--max-tokens", run.max_tokens);
  run_cmd->add_option("--workers", run.workers, "Records processed in parallel")->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_option("--conv-variant", run.conv_variant, "single or dual (ConvFinQA)")
      ->check(CLI::IsMember({"single", "dual"}));
  run_cmd->add_option("--runner", run.runner, "Python runner command line");
  run_cmd->add_option("--exec-timeout", run.exec_timeout, "Seconds per generated program");

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Score one or more trace files");
  report_cmd->add_option("traces", report_inputs, "traces.jsonl files or run directories")->required();
  report_cmd->add_option("--out", report_out, "Write report.json/report.txt here");

  std::string program_text;
  std::optional<std::string> gold;
  auto* dsl_cmd = app.add_subcommand("exec-dsl", "Execute a DSL program");
  dsl_cmd->add_option("program", program_text)->required();
  dsl_cmd->add_option("--gold", gold, "Gold answer to match against");

  std::string py_file = "-";
  std::string py_runner;
  double py_timeout = 10.0;
  auto* py_cmd = app.add_subcommand("exec-py", "Run Python source through the sandbox runner");
  py_cmd->add_option("file", py_file, "Source file, - for stdin");
  py_cmd->add_option("--runner", py_runner, "Runner command line");
  py_cmd->add_option("--timeout", py_timeout, "Seconds");

  std::string table_file = "-";
  auto* table_cmd = app.add_subcommand("serialize-table", "Serialize a JSON cell grid");
  table_cmd->add_option("file", table_file, "Grid file, - for stdin");

  bool templates_json = false;
  auto* templates_cmd = app.add_subcommand("templates", "Dump the prompt template catalog");
  templates_cmd->add_flag("--json", templates_json);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*report_cmd) return cmd_report(report_inputs, report_out);
    if (*dsl_cmd) return cmd_exec_dsl(program_text, gold);
    if (*py_cmd) return cmd_exec_py(py_file, py_runner, py_timeout);
    if (*table_cmd) return cmd_serialize_table(table_file);
    if (*templates_cmd) return cmd_templates(templates_json);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
