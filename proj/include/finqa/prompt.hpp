#pragma once

// Prompt rendering for the four zero-shot modes. Template text lives in
// templates/*.txt (embedded at build time) with {{slot}} markers; this module
// only selects templates and fills slots.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "finqa/dataset.hpp"

namespace finqa::prompt {

enum class Mode { finpyt, findsl, std_dual, cot };
enum class ConvVariant { none, single_prompt_last_question, dual_prompt };
enum class Expects { free_text, python_code, dsl_json, final_answer };

std::string_view mode_name(Mode mode);  // "ZS_FINPYT", ...
std::string_view mode_flag(Mode mode);  // "finpyt", ...
std::optional<Mode> mode_from_flag(std::string_view flag);
std::string_view conv_variant_name(ConvVariant variant);
std::string_view expects_name(Expects expects);

struct PromptMode {
  Mode mode = Mode::findsl;
  ConvVariant conv_variant = ConvVariant::none;
};

struct Stage {
  std::string stage_name;
  std::string template_text;  // slots filled; stage 2 keeps {{stage1_answer}} open
  Expects expects = Expects::free_text;
};

struct PromptBundle {
  std::vector<Stage> stages;
};

class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Validates the (mode, dataset) pairing; throws ConfigurationError.
void validate(const PromptMode& mode, dataset::DatasetKind kind);

bool has_followup(const PromptMode& mode, dataset::DatasetKind kind);

/// Stage 1 is fully rendered. For two-stage modes the bundle also carries
/// stage 2 with every slot filled except the stage-1 answer.
PromptBundle render(const dataset::QARecord& record, const PromptMode& mode);

/// Stage-2 prompt with stage1_output embedded verbatim after "Answer:".
std::string render_followup(const dataset::QARecord& record, const PromptMode& mode,
                            std::string_view stage1_output);

/// "Q1: ...\nQ2: ..." for the conversational "Questions:" slot.
std::string format_turns(const std::vector<std::string>& turns);

struct CatalogEntry {
  std::string asset;           // templates/<asset>.txt
  std::vector<Mode> modes;     // several when a template is shared
  std::string dataset;         // "finqa" (also used for tatqa) or "convfinqa"
  ConvVariant conv_variant = ConvVariant::none;
  int stage = 1;
  std::string template_text;   // verbatim, slot markers intact
};

/// Every distinct template, in a fixed order.
std::vector<CatalogEntry> template_catalog();

namespace detail {
struct TemplateAsset {
  std::string_view name;
  std::string_view text;
};
const std::vector<TemplateAsset>& embedded_templates();
}  // namespace detail

}  // namespace finqa::prompt
