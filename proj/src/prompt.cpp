#include "finqa/prompt.hpp"

#include <map>

namespace finqa::prompt {
namespace {

using dataset::DatasetKind;
using dataset::QARecord;

struct StageSpec {
  std::string_view stage_name;
  std::string_view asset;
  Expects expects;
};

struct Layout {
  std::vector<StageSpec> stages;
};

std::string_view asset_text(std::string_view name) {
  for (const auto& asset : detail::embedded_templates()) {
    if (asset.name == name) return asset.text;
  }
  throw std::logic_error("template asset '" + std::string(name) + "' is not embedded");
}

Layout layout_for(const PromptMode& mode, DatasetKind kind) {
  validate(mode, kind);
  const bool conv = kind == DatasetKind::convfinqa;
  switch (mode.mode) {
    case Mode::finpyt:
      if (!conv) return {{{"python_generation", "finqa_finpyt", Expects::python_code}}};
      if (mode.conv_variant == ConvVariant::single_prompt_last_question) {
        return {{{"python_generation", "conv_finpyt_single", Expects::python_code}}};
      }
      return {{{"reasoning_extraction", "conv_reasoning", Expects::free_text},
               {"program_generation", "conv_finpyt_program", Expects::python_code}}};
    case Mode::findsl:
      if (!conv) {
        return {{{"reasoning_extraction", "finqa_findsl_reasoning", Expects::free_text},
                 {"program_extraction", "finqa_findsl_program", Expects::dsl_json}}};
      }
      return {{{"reasoning_extraction", "conv_reasoning", Expects::free_text},
               {"program_extraction", "conv_findsl_program", Expects::dsl_json}}};
    case Mode::std_dual:
      return {{{"llm_answering", conv ? "conv_std_answering" : "finqa_std_answering",
                Expects::free_text},
               {"answer_extraction", conv ? "conv_answer_extraction" : "finqa_answer_extraction",
                Expects::final_answer}}};
    case Mode::cot:
      return {{{"reasoning_extraction", conv ? "conv_cot_reasoning" : "finqa_cot_reasoning",
                Expects::free_text},
               {"answer_extraction", conv ? "conv_answer_extraction" : "finqa_answer_extraction",
                Expects::final_answer}}};
  }
  throw ConfigurationError("unknown prompt mode");
}

// Single left-to-right pass: substituted values are never rescanned, so a
// passage that happens to contain "{{" cannot inject slots. Unknown slots are
// left as written.
std::string fill_slots(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    if (auto it = values.find(name); it != values.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::map<std::string, std::string> record_slots(const QARecord& record) {
  return {
      {"passage", dataset::assemble_passage(record)},
      {"question", record.target_question()},
      {"questions", format_turns(record.questions)},
      {"last_question", record.target_question()},
  };
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::finpyt: return "ZS_FINPYT";
    case Mode::findsl: return "ZS_FINDSL";
    case Mode::std_dual: return "ZS_STD";
    case Mode::cot: return "ZS_COT";
  }
  return "?";
}

std::string_view mode_flag(Mode mode) {
  switch (mode) {
    case Mode::finpyt: return "finpyt";
    case Mode::findsl: return "findsl";
    case Mode::std_dual: return "std";
    case Mode::cot: return "cot";
  }
  return "?";
}

std::optional<Mode> mode_from_flag(std::string_view flag) {
  for (auto m : {Mode::finpyt, Mode::findsl, Mode::std_dual, Mode::cot}) {
    if (mode_flag(m) == flag || mode_name(m) == flag) return m;
  }
  return std::nullopt;
}

std::string_view conv_variant_name(ConvVariant variant) {
  switch (variant) {
    case ConvVariant::none: return "none";
    case ConvVariant::single_prompt_last_question: return "single";
    case ConvVariant::dual_prompt: return "dual";
  }
  return "?";
}

std::string_view expects_name(Expects expects) {
  switch (expects) {
    case Expects::free_text: return "free_text";
    case Expects::python_code: return "python_code";
    case Expects::dsl_json: return "dsl_json";
    case Expects::final_answer: return "final_answer";
  }
  return "?";
}

void validate(const PromptMode& mode, DatasetKind kind) {
  const bool conv = kind == DatasetKind::convfinqa;
  if (!conv && mode.conv_variant != ConvVariant::none) {
    throw ConfigurationError(std::string(mode_name(mode.mode)) + " on " +
                             std::string(dataset::kind_name(kind)) +
                             " takes no conversational variant");
  }
  if (conv && mode.mode == Mode::finpyt && mode.conv_variant == ConvVariant::none) {
    throw ConfigurationError("ZS_FINPYT on convfinqa needs the single or dual variant");
  }
  if (conv && mode.mode != Mode::finpyt &&
      mode.conv_variant == ConvVariant::single_prompt_last_question) {
    throw ConfigurationError(std::string(mode_name(mode.mode)) +
                             " has no single-prompt convfinqa variant");
  }
}

bool has_followup(const PromptMode& mode, DatasetKind kind) {
  return layout_for(mode, kind).stages.size() == 2;
}

PromptBundle render(const QARecord& record, const PromptMode& mode) {
  const Layout layout = layout_for(mode, record.kind);
  const auto slots = record_slots(record);
  PromptBundle bundle;
  for (const auto& spec : layout.stages) {
    bundle.stages.push_back(
        Stage{std::string(spec.stage_name), fill_slots(asset_text(spec.asset), slots), spec.expects});
  }
  return bundle;
}

std::string render_followup(const QARecord& record, const PromptMode& mode,
                            std::string_view stage1_output) {
  const Layout layout = layout_for(mode, record.kind);
  if (layout.stages.size() < 2) {
    throw UsageError(std::string(mode_name(mode.mode)) + " has a single stage; no follow-up prompt");
  }
  auto slots = record_slots(record);
  slots["stage1_answer"] = std::string(stage1_output);
  return fill_slots(asset_text(layout.stages[1].asset), slots);
}

std::string format_turns(const std::vector<std::string>& turns) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Q" + std::to_string(i + 1) + ": " + turns[i];
  }
  return out;
}

std::vector<CatalogEntry> template_catalog() {
  using CV = ConvVariant;
  struct Meta {
    std::string_view asset;
    std::vector<Mode> modes;
    std::string_view dataset;
    CV variant;
    int stage;
  };
  const std::vector<Meta> metas = {
      {"finqa_finpyt", {Mode::finpyt}, "finqa", CV::none, 1},
      {"finqa_findsl_reasoning", {Mode::findsl}, "finqa", CV::none, 1},
      {"finqa_findsl_program", {Mode::findsl}, "finqa", CV::none, 2},
      {"finqa_std_answering", {Mode::std_dual}, "finqa", CV::none, 1},
      {"finqa_cot_reasoning", {Mode::cot}, "finqa", CV::none, 1},
      {"finqa_answer_extraction", {Mode::std_dual, Mode::cot}, "finqa", CV::none, 2},
      {"conv_finpyt_single", {Mode::finpyt}, "convfinqa", CV::single_prompt_last_question, 1},
      {"conv_reasoning", {Mode::finpyt, Mode::findsl}, "convfinqa", CV::dual_prompt, 1},
      {"conv_finpyt_program", {Mode::finpyt}, "convfinqa", CV::dual_prompt, 2},
      {"conv_findsl_program", {Mode::findsl}, "convfinqa", CV::dual_prompt, 2},
      {"conv_std_answering", {Mode::std_dual}, "convfinqa", CV::none, 1},
      {"conv_cot_reasoning", {Mode::cot}, "convfinqa", CV::none, 1},
      {"conv_answer_extraction", {Mode::std_dual, Mode::cot}, "convfinqa", CV::none, 2},
  };
  std::vector<CatalogEntry> out;
  for (const auto& m : metas) {
    out.push_back(CatalogEntry{std::string(m.asset), m.modes, std::string(m.dataset), m.variant,
                               m.stage, std::string(asset_text(m.asset))});
  }
  return out;
}

}  // namespace finqa::prompt
