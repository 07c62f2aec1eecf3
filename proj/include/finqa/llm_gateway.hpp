#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace finqa::llm {

/// Defaults are the settings used for every reported run: greedy decoding,
/// top_p 0.95, up to 1000 completion tokens.
struct GenerationParams {
  double temperature = 0.0;
  double top_p = 0.95;
  int max_tokens = 1000;
  std::string model = "gpt-4";

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

enum class Backend { live, replay, cache };
std::string_view backend_name(Backend backend);

struct LLMResponse {
  std::string text;
  Backend backend = Backend::live;
  std::string request_fingerprint;
};

/// Optional key for replay stores indexed by record instead of fingerprint.
struct RequestContext {
  std::string record_id;
  int stage = 0;  // 1-based, 0 when unknown
  std::string stage_name;
};

/// SHA-256 (hex) of a canonical JSON serialization of model, params and prompt.
std::string fingerprint(std::string_view prompt, const GenerationParams& params);

class GatewayError : public std::runtime_error {
 public:
  GatewayError(const std::string& what, int status) : std::runtime_error(what), status_(status) {}
  /// HTTP status of the last attempt; 0 for transport failures.
  int status() const { return status_; }

 private:
  int status_;
};

class ReplayMiss : public std::runtime_error {
 public:
  ReplayMiss(const std::string& what, std::string fp)
      : std::runtime_error(what), fingerprint_(std::move(fp)) {}
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  std::string fingerprint_;
};

/// Directory of <fingerprint>.txt files. Writes go through a temporary file
/// and rename(2), so readers never see partial text.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<std::string> load(const std::string& fp) const;
  void store(const std::string& fp, std::string_view text) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// JSONL of {"fingerprint", "text"} or {"record_id", "stage", "text"} lines.
class ReplayStore {
 public:
  static ReplayStore from_jsonl(const std::filesystem::path& path);
  void add_by_fingerprint(std::string fp, std::string text);
  void add_by_record(std::string record_id, std::string stage, std::string text);
  std::optional<std::string> find(const std::string& fp, const RequestContext& ctx) const;
  std::size_t size() const { return by_fingerprint_.size() + by_record_.size(); }

 private:
  std::map<std::string, std::string> by_fingerprint_;
  std::map<std::pair<std::string, std::string>, std::string> by_record_;
};

struct RetryPolicy {
  int max_attempts = 4;  // total tries, including the first
  std::chrono::milliseconds base_delay{500};
  double jitter = 0.25;  // each delay is scaled by 1 + jitter * u, u in [0, 1)
  std::uint64_t seed = 0;

  /// Delays before attempts 2..max_attempts; a pure function of the fields.
  std::vector<std::chrono::milliseconds> schedule() const;
};

enum class Framing { chat, completion };
std::string_view framing_name(Framing framing);

struct LiveConfig {
  std::string endpoint = "https://api.openai.com/v1";
  Framing framing = Framing::chat;
  std::string api_key;  // from LLM_API_KEY when empty
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
};

enum class BackendMode { live, replay, cache_only };
std::string_view backend_mode_name(BackendMode mode);
std::optional<BackendMode> backend_mode_from_name(std::string_view name);

struct GatewayConfig {
  BackendMode mode = BackendMode::replay;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> replay_file;
  LiveConfig live;
  int max_in_flight = 4;
};

class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  Gateway(GatewayConfig config, ReplayStore replay);

  /// Thread-safe. Cache is consulted first; successful live completions are
  /// written back to it.
  LLMResponse complete(std::string_view prompt, const GenerationParams& params,
                       const RequestContext& ctx = {});

  const GatewayConfig& config() const { return config_; }
  /// Number of HTTP requests issued so far (retries included).
  int live_attempts() const;

 private:
  std::string call_live(std::string_view prompt, const GenerationParams& params);

  GatewayConfig config_;
  std::optional<ResponseCache> cache_;
  ReplayStore replay_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  std::shared_ptr<std::atomic<int>> attempts_;
};

}  // namespace finqa::llm
