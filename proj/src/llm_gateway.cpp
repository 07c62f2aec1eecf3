#include "finqa/llm_gateway.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace finqa::llm {
namespace {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

struct Endpoint {
  std::string origin;     // scheme://host[:port]
  std::string base_path;  // e.g. "/v1", no trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const std::size_t scheme = url.find("://");
  const std::size_t path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  e.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
  return e;
}

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

std::string stage_key(const RequestContext& ctx, bool by_name) {
  return by_name ? ctx.stage_name : std::to_string(ctx.stage);
}

}  // namespace

void GenerationParams::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be > 0");
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::live: return "live";
    case Backend::replay: return "replay";
    case Backend::cache: return "cache";
  }
  return "?";
}

std::string_view framing_name(Framing framing) {
  return framing == Framing::chat ? "chat" : "completion";
}

std::string_view backend_mode_name(BackendMode mode) {
  switch (mode) {
    case BackendMode::live: return "live";
    case BackendMode::replay: return "replay";
    case BackendMode::cache_only: return "cache-only";
  }
  return "?";
}

std::optional<BackendMode> backend_mode_from_name(std::string_view name) {
  for (auto m : {BackendMode::live, BackendMode::replay, BackendMode::cache_only}) {
    if (backend_mode_name(m) == name) return m;
  }
  return std::nullopt;
}

std::string fingerprint(std::string_view prompt, const GenerationParams& params) {
  // nlohmann::json objects serialize with sorted keys and shortest round-trip
  // doubles, which makes this byte-stable across runs and platforms.
  const json canonical = {
      {"schema", "finqa-request-v1"},
      {"model", params.model},
      {"temperature", params.temperature},
      {"top_p", params.top_p},
      {"max_tokens", params.max_tokens},
      {"prompt", std::string(prompt)},
  };
  return sha256_hex(canonical.dump());
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<std::string> ResponseCache::load(const std::string& fp) const {
  std::ifstream in(dir_ / (fp + ".txt"), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void ResponseCache::store(const std::string& fp, std::string_view text) const {
  static std::atomic<unsigned> counter{0};
  const auto final_path = dir_ / (fp + ".txt");
  const auto tmp_path = dir_ / (fp + ".txt.tmp." + std::to_string(::getpid()) + "." +
                                std::to_string(counter.fetch_add(1)));
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache file " + tmp_path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("short write to cache file " + tmp_path.string());
  }
  std::filesystem::rename(tmp_path, final_path);
}

ReplayStore ReplayStore::from_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay file " + path.string());
  ReplayStore store;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const json::parse_error&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": not JSON");
    }
    if (!entry.contains("text") || !entry["text"].is_string()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": missing string field 'text'");
    }
    std::string text = entry["text"].get<std::string>();
    if (entry.contains("fingerprint")) {
      store.add_by_fingerprint(entry["fingerprint"].get<std::string>(), std::move(text));
    } else if (entry.contains("record_id") && entry.contains("stage")) {
      const json& stage = entry["stage"];
      store.add_by_record(entry["record_id"].get<std::string>(),
                          stage.is_string() ? stage.get<std::string>()
                                            : std::to_string(stage.get<int>()),
                          std::move(text));
    } else {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": needs 'fingerprint' or 'record_id' + 'stage'");
    }
  }
  return store;
}

void ReplayStore::add_by_fingerprint(std::string fp, std::string text) {
  by_fingerprint_[std::move(fp)] = std::move(text);
}

void ReplayStore::add_by_record(std::string record_id, std::string stage, std::string text) {
  by_record_[{std::move(record_id), std::move(stage)}] = std::move(text);
}

std::optional<std::string> ReplayStore::find(const std::string& fp,
                                             const RequestContext& ctx) const {
  if (auto it = by_fingerprint_.find(fp); it != by_fingerprint_.end()) return it->second;
  if (ctx.record_id.empty()) return std::nullopt;
  for (bool by_name : {false, true}) {
    const std::string key = stage_key(ctx, by_name);
    if (key.empty()) continue;
    if (auto it = by_record_.find({ctx.record_id, key}); it != by_record_.end()) return it->second;
  }
  return std::nullopt;
}

std::vector<std::chrono::milliseconds> RetryPolicy::schedule() const {
  std::mt19937_64 rng(seed);
  std::vector<std::chrono::milliseconds> delays;
  for (int attempt = 1; attempt < max_attempts; ++attempt) {
    // 53 random bits to [0, 1) by hand: std::uniform_real_distribution is not
    // guaranteed to produce the same sequence across standard libraries.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double scale = std::ldexp(1.0, attempt - 1) * (1.0 + jitter * u);
    delays.emplace_back(static_cast<std::int64_t>(std::llround(base_delay.count() * scale)));
  }
  return delays;
}

Gateway::Gateway(GatewayConfig config) : Gateway(config, ReplayStore{}) {
  if (config_.mode == BackendMode::replay) {
    if (!config_.replay_file) throw std::invalid_argument("replay backend needs a replay file");
    replay_ = ReplayStore::from_jsonl(*config_.replay_file);
  }
}

Gateway::Gateway(GatewayConfig config, ReplayStore replay)
    : config_(std::move(config)),
      replay_(std::move(replay)),
      in_flight_(std::make_unique<std::counting_semaphore<>>(std::max(1, config_.max_in_flight))),
      attempts_(std::make_shared<std::atomic<int>>(0)) {
  if (config_.cache_dir) cache_.emplace(*config_.cache_dir);
  if (config_.live.api_key.empty()) {
    if (const char* key = std::getenv("LLM_API_KEY")) config_.live.api_key = key;
  }
}

int Gateway::live_attempts() const { return attempts_->load(); }

LLMResponse Gateway::complete(std::string_view prompt, const GenerationParams& params,
                              const RequestContext& ctx) {
  params.validate();
  const std::string fp = fingerprint(prompt, params);

  if (config_.mode == BackendMode::replay) {
    if (auto text = replay_.find(fp, ctx)) return {*text, Backend::replay, fp};
    std::string where = ctx.record_id.empty()
                            ? std::string()
                            : " (record " + ctx.record_id + ", stage " + std::to_string(ctx.stage) + ")";
    throw ReplayMiss("replay miss for fingerprint " + fp + where, fp);
  }

  if (cache_) {
    if (auto text = cache_->load(fp)) return {*text, Backend::cache, fp};
  }
  if (config_.mode == BackendMode::cache_only) {
    throw ReplayMiss("cache miss for fingerprint " + fp, fp);
  }

  in_flight_->acquire();
  std::string text;
  try {
    text = call_live(prompt, params);
  } catch (...) {
    in_flight_->release();
    throw;
  }
  in_flight_->release();
  if (cache_) cache_->store(fp, text);
  return {std::move(text), Backend::live, fp};
}

std::string Gateway::call_live(std::string_view prompt, const GenerationParams& params) {
  const LiveConfig& live = config_.live;
  if (live.api_key.empty()) throw GatewayError("live backend needs LLM_API_KEY", 0);

  const Endpoint endpoint = split_endpoint(live.endpoint);
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(live.timeout));
  client.set_read_timeout(live.timeout);
  client.set_bearer_token_auth(live.api_key);

  json body = {{"model", params.model},
               {"temperature", params.temperature},
               {"top_p", params.top_p},
               {"max_tokens", params.max_tokens}};
  std::string path = endpoint.base_path;
  if (live.framing == Framing::chat) {
    body["messages"] = json::array({{{"role", "user"}, {"content", std::string(prompt)}}});
    path += "/chat/completions";
  } else {
    body["prompt"] = std::string(prompt);
    path += "/completions";
  }
  const std::string payload = body.dump();
  const auto delays = live.retry.schedule();

  int last_status = 0;
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, live.retry.max_attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(delays[static_cast<std::size_t>(attempt - 1)]);
    attempts_->fetch_add(1);
    auto result = client.Post(path, payload, "application/json");
    if (!result) {
      last_status = 0;
      last_error = httplib::to_string(result.error());
      continue;
    }
    last_status = result->status;
    if (result->status == 200) {
      try {
        const json reply = json::parse(result->body);
        const json& choice = reply.at("choices").at(0);
        if (live.framing == Framing::chat) return choice.at("message").at("content").get<std::string>();
        return choice.at("text").get<std::string>();
      } catch (const json::exception& e) {
        throw GatewayError(std::string("malformed completion response: ") + e.what(), 200);
      }
    }
    last_error = "HTTP " + std::to_string(result->status);
    if (!retryable(result->status)) break;
  }
  throw GatewayError("completion request failed: " + last_error, last_status);
}

}  // namespace finqa::llm
